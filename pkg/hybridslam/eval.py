"""
Accuracy metrics, object map reconstruction and per-run reports.

Rotation errors are the angle of the error rotation in degrees, translation errors the norm
of the error translation in meters; every metric is an RMSE over frames. Camera trajectories
are compared without any alignment.
"""
import math
import os
from typing import NamedTuple

import numpy as np
from twisted.logger import Logger

from .exceptions import FrameMismatchError, UnknownObjectError
from .formulations import recover_frame_motion
from .geometry import body_velocity, log as se3_log, point_to_world, rotation_angle
from .records import write_stats, write_table
from .utils import ensure_dir, format_table

log = Logger()

METRIC_FIELDS = ('sequence', 'method', 'status', 'ate_trans', 'rpe_rot', 'rpe_trans', 'me_rot', 'me_trans',
                 'max_clique', 'avg_clique', 'max_reelim', 'frames', 'message')
PER_OBJECT_FIELDS = ('object_id', 'frame', 'me_rot', 'me_trans', 'rx', 'ry', 'rz', 'tx', 'ty', 'tz',
                     'wx', 'wy', 'wz', 'vx', 'vy', 'vz', 'map_size')

OK = 'ok'
FAILED = 'failed'

REPORT_HEADER = 'ATE is computed without trajectory alignment; ME compares world-frame per-frame motions.'


def pose_error(gt, est):
    """Angle (degrees) and translation norm (meters) of gt^-1 est."""
    error = gt.inverse().compose(est)
    return math.degrees(rotation_angle(error.R)), float(np.linalg.norm(error.t))


def rmse(values):
    values = np.asarray(list(values), dtype=float)
    if not values.size:
        return 0.0
    return float(np.sqrt(np.mean(values * values)))


def _matched_frames(est, gt):
    if set(est) != set(gt):
        missing = sorted(set(gt) - set(est))
        extra = sorted(set(est) - set(gt))
        raise FrameMismatchError('Trajectory frames differ: missing %r, unexpected %r' % (missing, extra))
    if not gt:
        raise FrameMismatchError('Empty trajectory')
    return sorted(gt)


def ate(est, gt):
    """Camera trajectories as frame -> Pose."""
    frames = _matched_frames(est, gt)
    return rmse(pose_error(gt[k], est[k])[1] for k in frames)


def rpe(est, gt):
    frames = _matched_frames(est, gt)
    if len(frames) < 2:
        raise FrameMismatchError('RPE needs at least 2 frames, got %d' % len(frames))
    rot, trans = [], []
    for a, b in zip(frames, frames[1:]):
        gt_rel = gt[a].inverse().compose(gt[b])
        est_rel = est[a].inverse().compose(est[b])
        r, t = pose_error(gt_rel, est_rel)
        rot.append(r)
        trans.append(t)
    return rmse(rot), rmse(trans)


class ObjectMotionError(NamedTuple):
    object_id: int
    rot: float
    trans: float
    frames: int
    skipped: int
    per_frame: dict


def motion_error(est, gt):
    """
    Per-object motion error between object_id -> {frame: world Motion k-1 -> k} mappings.
    Reference frames missing from the estimate are skipped and counted.
    """
    out = {}
    for j in sorted(gt):
        estimated = est.get(j, {})
        per_frame = {}
        skipped = 0
        for k in sorted(gt[j]):
            if k not in estimated:
                skipped += 1
                continue
            per_frame[k] = pose_error(gt[j][k], estimated[k])
        if skipped:
            log.warn('object {object_id}: {skipped} frames without an estimated motion',
                     object_id=j, skipped=skipped)
        out[j] = ObjectMotionError(
            j, rmse(r for r, _ in per_frame.values()), rmse(t for _, t in per_frame.values()),
            len(per_frame), skipped, per_frame)
    return out


def frame_motions_from_cumulative(cumulative):
    """object_id -> {frame: H_ek} to per-frame motions over consecutive frames."""
    out = {}
    for j, motions in cumulative.items():
        frames = sorted(motions)
        out[j] = dict((b, recover_frame_motion(motions[a], motions[b]))
                      for a, b in zip(frames, frames[1:]) if b - a == 1)
    return out


class MetricReport(object):

    def __init__(self, ate_trans, rpe_rot, rpe_trans, objects=None):
        self.ate_trans = ate_trans
        self.rpe_rot = rpe_rot
        self.rpe_trans = rpe_trans
        self.objects = dict(objects or {})

    def _scored(self):
        return [o for o in self.objects.values() if o.frames]

    @property
    def me_rot(self):
        scored = self._scored()
        return float(np.mean([o.rot for o in scored])) if scored else 0.0

    @property
    def me_trans(self):
        scored = self._scored()
        return float(np.mean([o.trans for o in scored])) if scored else 0.0

    def as_dict(self):
        return dict(ate_trans=self.ate_trans, rpe_rot=self.rpe_rot, rpe_trans=self.rpe_trans,
                    me_rot=self.me_rot, me_trans=self.me_trans)

    def __repr__(self):
        return 'MetricReport(ate=%.4g m, rpe=%.4g deg/%.4g m, me=%.4g deg/%.4g m)' % (
            self.ate_trans, self.rpe_rot, self.rpe_trans, self.me_rot, self.me_trans)


def evaluate(camera_est, camera_gt, motions_est, motions_gt):
    r, t = rpe(camera_est, camera_gt)
    return MetricReport(ate(camera_est, camera_gt), r, t, motion_error(motions_est, motions_gt))


def reconstruct_object_map(estimate, formulation, object_id, frame):
    """
    World positions at ``frame`` of every point of the object created up to that frame, as
    track_id -> point. Needs a formulation that stores points in an embedded frame.
    """
    registry = formulation.registry
    if object_id not in registry:
        raise UnknownObjectError('Unknown object %r' % (object_id,))
    state = registry[object_id]
    if frame not in state.frames:
        raise FrameMismatchError('Object %r not observed at frame %r' % (object_id, frame))
    h = formulation.motion(state, frame, estimate)
    out = {}
    for track, key in sorted(state.tracks.items()):
        if state.track_frames.get(track, frame) <= frame and key in estimate:
            out[track] = point_to_world(h, state.l_e, estimate.at(key))
    return out


def map_growth(estimate, formulation):
    """object_id -> {frame: number of points in the object map at that frame}."""
    return dict((j, dict((k, len(reconstruct_object_map(estimate, formulation, j, k))) for k in state.frames))
                for j, state in formulation.registry.objects.items())


def object_trajectory_rows(formulation, estimate, errors=None, growth=None):
    """Recovered object poses with body-frame velocities, one row per object and frame."""
    rows = []
    poses = formulation.object_poses(estimate)
    for j in sorted(poses):
        previous = None
        per_frame = errors[j].per_frame if errors and j in errors else {}
        for k in sorted(poses[j]):
            pose = poses[j][k]
            xi = se3_log(pose)
            row = dict(object_id=j, frame=k, rx=xi[0], ry=xi[1], rz=xi[2],
                       tx=pose.t[0], ty=pose.t[1], tz=pose.t[2])
            if previous is not None and k - previous[0] == 1:
                w, v = body_velocity(previous[1], pose)
                row.update(wx=w[0], wy=w[1], wz=w[2], vx=v[0], vy=v[1], vz=v[2])
            if k in per_frame:
                row.update(me_rot=per_frame[k][0], me_trans=per_frame[k][1])
            if growth and j in growth and k in growth[j]:
                row['map_size'] = growth[j][k]
            rows.append(dict((f, float(x) if isinstance(x, np.floating) else x) for f, x in row.items()))
            previous = (k, pose)
    return rows


def motion_error_rows(errors):
    rows = []
    for j in sorted(errors):
        for k, (r, t) in sorted(errors[j].per_frame.items()):
            rows.append(dict(object_id=j, frame=k, me_rot=r, me_trans=t))
    return rows


def frame_times(stats):
    """Total smoother time per frame; several graphs may report the same frame."""
    totals = {}
    for s in stats:
        totals[s.frame] = totals.get(s.frame, 0.0) + s.wall_ms
    return [totals[k] for k in sorted(totals)]


class RunReport(object):
    """One method on one sequence: metrics, per-frame smoother stats and per-object rows."""

    def __init__(self, sequence, method, metrics=None, stats=(), timing=None, status=OK, message='',
                 per_object=()):
        self.sequence = sequence
        self.method = method
        self.metrics = metrics
        self.stats = list(stats)
        self.timing = list(timing) if timing is not None else frame_times(self.stats)
        self.status = status
        self.message = message
        self.per_object = list(per_object)

    @property
    def failed(self):
        return self.status != OK

    @property
    def avg_update_ms(self):
        return float(np.mean(self.timing)) if self.timing else 0.0

    def structure(self):
        if not self.stats:
            return {}
        return dict(
            max_clique=max(s.max_clique_vars for s in self.stats),
            avg_clique=float(np.mean([s.avg_clique_vars for s in self.stats])),
            max_reelim=max(s.reelim_vars for s in self.stats),
        )

    def as_row(self):
        row = dict(sequence=self.sequence, method=self.method, status=self.status, message=self.message,
                   frames=len(set(s.frame for s in self.stats)))
        if self.metrics is not None:
            row.update(self.metrics.as_dict())
        if self.timing:
            row['avg_update_ms'] = self.avg_update_ms
        row.update(self.structure())
        return row

    def render(self):
        lines = ['%s / %s: %s' % (self.sequence, self.method, self.status.upper()), REPORT_HEADER]
        if self.message:
            lines.append(self.message)
        text = '\n'.join(lines) + '\n\n'
        return text + format_table([self.as_row()], METRIC_FIELDS[3:-1] + ('avg_update_ms',))

    def write(self, out_dir):
        ensure_dir(out_dir)
        with open(os.path.join(out_dir, 'stats_%s.csv' % self.method), 'w') as f:
            write_stats(self.stats, f, tagged=True)
        with open(os.path.join(out_dir, 'per_object_%s.csv' % self.method), 'w') as f:
            write_table(self.per_object, PER_OBJECT_FIELDS, f)
        with open(os.path.join(out_dir, 'report_%s.txt' % self.method), 'w') as f:
            f.write(self.render())
        log.info('wrote {method} report to {out}', method=self.method, out=out_dir)


def assemble_report(metrics, stats=(), timing=None, sequence='', method='', status=OK, message='',
                    per_object=()):
    return RunReport(sequence, method, metrics, stats, timing, status, message, per_object)


def write_metrics(reports, stream):
    write_table([r.as_row() for r in reports], METRIC_FIELDS, stream)
