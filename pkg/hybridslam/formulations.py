"""
Per-frame graph construction for the object-centric Hybrid formulation and the world-centric
Baseline.

Hybrid stores every object point once, in a frame ``L_e`` fixed to the world when the object
is first seen, and explains each observation through the cumulative motion ``H_ek``. Baseline
creates a world point per track per frame and links consecutive copies with a per-frame
motion.
"""
from collections import defaultdict

import numpy as np
from twisted.logger import Logger
from zope.interface import implementer

from .factors import (
    BaselineMotionFactor, BaselineSmoothingFactor, BetweenPoseFactor, FactorParams, HybridMotionFactor,
    ObjectSmoothingFactor, PosePriorFactor, StaticPointFactor, init_object_point)
from .geometry import Motion, Pose, recover_object_pose
from .interfaces import IFormulation
from .keys import Key, KeyKind
from .values import Values

log = Logger()

_IDENTITY = Motion()


def recover_frame_motion(h_prev, h_curr):
    """Per-frame world motion from two cumulative motions sharing the same embedded frame."""
    return h_curr.compose(h_prev.inverse()).as_kind(Motion)


class ObjectState(object):
    """Bookkeeping for one object. ``l_e`` and ``first_seen`` never change once set."""

    def __init__(self, object_id, first_seen, l_e=None):
        self.object_id = object_id
        self.first_seen = first_seen
        self._l_e = l_e
        self.frames = []
        self.tracks = {}
        self.track_frames = {}

    @property
    def l_e(self):
        return self._l_e

    def last_frame(self):
        return self.frames[-1] if self.frames else None


class ObjectRegistry(object):

    def __init__(self, min_points=3):
        self.min_points = min_points
        self.objects = {}
        self.deferred = defaultdict(list)

    def __contains__(self, object_id):
        return object_id in self.objects

    def __getitem__(self, object_id):
        return self.objects[object_id]

    def create(self, object_id, frame, l_e=None):
        state = ObjectState(object_id, frame, l_e)
        self.objects[object_id] = state
        return state

    def defer(self, object_id, frame):
        self.deferred[object_id].append(frame)
        log.warn('object {object_id} deferred at frame {frame}: fewer than {n} observations',
                 object_id=object_id, frame=frame, n=self.min_points)

    def object_ids(self):
        return sorted(self.objects)


class FrameDelta(object):
    """New factors and initial values produced for one frame."""

    def __init__(self, frame, formulation):
        self.frame = frame
        self.formulation = formulation
        self.new_factors = []
        self.new_values = Values()
        self.constrained_keys = set()

    def add(self, factor):
        self.new_factors.append(factor)

    def insert(self, key, value):
        self.new_values.insert(key, value)

    def has(self, key, estimate):
        return key in self.new_values or key in estimate

    def value(self, key, estimate):
        return self.new_values.get(key) if key in self.new_values else estimate.at(key)

    def missing_keys(self, estimate):
        """Factor keys that exist neither in ``estimate`` nor in this delta."""
        missing = set()
        for factor in self.new_factors:
            missing.update(k for k in factor.keys if not self.has(k, estimate))
        return sorted(missing)

    def summary(self):
        keys = defaultdict(int)
        for key in self.new_values:
            keys[KeyKind(key.kind).name] += 1
        factors = defaultdict(int)
        for factor in self.new_factors:
            factors[factor.kind] += 1
        return {
            'frame': self.frame,
            'formulation': self.formulation,
            'new_keys_by_kind': dict(keys),
            'new_factors_by_kind': dict(factors),
        }

    def __repr__(self):
        return 'FrameDelta(frame=%d, %d factors, %d values)' % (
            self.frame, len(self.new_factors), len(self.new_values))


class Formulation(object):
    """
    Shared static backbone: camera poses with a prior on the first frame, optional odometry
    between consecutive frames and static point observations.

    ``camera_owner`` namespaces camera keys for per-object graphs; with ``camera_factors``
    off the caller supplies the camera pose and its prior.
    """
    name = None

    def __init__(self, params=None, min_points=3, initial_pose=None, use_odometry=True,
                 include_static=True, camera_owner=0, camera_factors=True):
        self.params = params or FactorParams()
        self.registry = ObjectRegistry(min_points)
        self.initial_pose = initial_pose or Pose()
        self.use_odometry = use_odometry
        self.include_static = include_static
        self.camera_owner = camera_owner
        self.camera_factors = camera_factors
        self.static_tracks = set()
        self.last_camera = None
        self._point_noise = self.params.point_noise()
        self._smoothing_noise = self.params.smoothing_noise()

    def camera_key(self, frame):
        return Key.camera(frame, owner=self.camera_owner)

    def _camera(self, delta, estimate, z, camera_pose):
        key = self.camera_key(z.frame)
        if not self.camera_factors:
            delta.insert(key, camera_pose)
        elif self.last_camera is None:
            delta.insert(key, self.initial_pose if camera_pose is None else camera_pose)
            delta.add(PosePriorFactor(key, self.initial_pose, self.params.prior_noise()))
        else:
            previous = estimate.at(self.last_camera)
            odometry = z.odometry
            if odometry is None:
                delta.insert(key, previous if camera_pose is None else camera_pose)
            else:
                delta.insert(key, previous.compose(odometry) if camera_pose is None else camera_pose)
                if self.use_odometry:
                    delta.add(BetweenPoseFactor(self.last_camera, key, odometry, self.params.odometry_noise()))
        delta.constrained_keys.add(key)
        self.last_camera = key
        return key

    def _static(self, delta, camera_key, x_k, z):
        for track, obs in z.static_obs:
            key = Key.static_point(track)
            if track not in self.static_tracks:
                self.static_tracks.add(track)
                delta.insert(key, x_k.transform_point(obs))
            delta.add(StaticPointFactor(camera_key, key, obs, self._point_noise))

    def process_frame(self, estimate, measurements, camera_pose=None):
        delta = FrameDelta(measurements.frame, self.name)
        camera_key = self._camera(delta, estimate, measurements, camera_pose)
        x_k = delta.value(camera_key, estimate)
        if self.include_static:
            self._static(delta, camera_key, x_k, measurements)
        for j in sorted(measurements.dynamic_obs):
            obs = measurements.dynamic_obs[j]
            if obs:
                self._object(delta, estimate, camera_key, x_k, j, obs, measurements.frame)
        log.debug('{name} frame {frame}: {summary}', name=self.name, frame=measurements.frame,
                  summary=delta.summary())
        return delta

    def _object(self, delta, estimate, camera_key, x_k, j, obs, k):
        raise NotImplementedError

    def camera_trajectory(self, estimate):
        out = {}
        for key, pose in estimate.of_kind(KeyKind.CAMERA_POSE, self.camera_owner).items():
            out[key.frame] = pose
        return out

    def frame_motions(self, estimate):
        raise NotImplementedError

    def object_map(self, estimate):
        """object_id -> {frame: {track_id: world point}} for every observed frame."""
        raise NotImplementedError


@implementer(IFormulation)
class HybridFormulation(Formulation):
    name = 'hybrid'

    def __init__(self, params=None, min_points=3, embedded_offset=None, **kwargs):
        super(HybridFormulation, self).__init__(params, min_points, **kwargs)
        self.embedded_offset = embedded_offset

    def motion(self, state, frame, estimate):
        """Cumulative motion estimate at ``frame``; the identity constant at the embedding frame."""
        if frame == state.first_seen:
            return _IDENTITY
        return estimate.at(Key.motion(state.object_id, frame))

    def _predict(self, state, estimate):
        frames = state.frames
        last = self.motion(state, frames[-1], estimate)
        if len(frames) >= 2 and frames[-1] - frames[-2] == 1:
            previous = self.motion(state, frames[-2], estimate)
            return recover_frame_motion(previous, last).compose(last)
        return last

    def _embed(self, j, x_k, obs):
        world = np.array([x_k.transform_point(z) for _, z in obs])
        l_e = Pose(np.eye(3), world.mean(axis=0))
        if self.embedded_offset is not None:
            l_e = l_e.compose(self.embedded_offset(j)).as_kind(Pose)
        return l_e

    def _object(self, delta, estimate, camera_key, x_k, j, obs, k):
        registry = self.registry
        if j not in registry:
            if len(obs) < registry.min_points:
                registry.defer(j, k)
                return
            state = registry.create(j, k, self._embed(j, x_k, obs))
            motion_key, h = None, _IDENTITY
        else:
            state = registry[j]
            # new tracks are initialised from the predicted motion, so they count towards the minimum;
            # at least one carried-over track must tie the motion to the existing map
            known = sum(1 for track, _ in obs if track in state.tracks)
            if not known or len(obs) < registry.min_points:
                log.debug('object {j} skipped at frame {k}: {n} known of {total} tracks',
                          j=j, k=k, n=known, total=len(obs))
                return
            motion_key = Key.motion(j, k)
            h = self._predict(state, estimate)
            delta.insert(motion_key, h)
            delta.constrained_keys.add(motion_key)

        l_e = state.l_e
        l_k = recover_object_pose(h, l_e)
        for track, z in obs:
            point_key = state.tracks.get(track)
            if point_key is None:
                point_key = Key.object_point(j, track)
                state.tracks[track] = point_key
                state.track_frames[track] = k
                delta.insert(point_key, init_object_point(x_k, h, l_e, l_k, z))
            delta.add(HybridMotionFactor(camera_key, motion_key, point_key, l_e, z, self._point_noise))

        frames = state.frames
        if len(frames) >= 2 and frames[-1] == k - 1 and frames[-2] == k - 2:
            slots = [None if f == state.first_seen else Key.motion(j, f) for f in (k - 2, k - 1)]
            delta.add(ObjectSmoothingFactor(slots[0], slots[1], motion_key, l_e, self._smoothing_noise,
                                            numerical=self.params.numerical_smoothing))
        frames.append(k)

    def frame_motions(self, estimate):
        out = {}
        for j, state in self.registry.objects.items():
            motions = {}
            for prev, curr in zip(state.frames, state.frames[1:]):
                if curr - prev == 1:
                    motions[curr] = recover_frame_motion(self.motion(state, prev, estimate),
                                                         self.motion(state, curr, estimate))
            out[j] = motions
        return out

    def object_poses(self, estimate):
        """object_id -> {frame: L_k} recovered from the cumulative motions."""
        return dict((j, dict((k, recover_object_pose(self.motion(s, k, estimate), s.l_e)) for k in s.frames))
                    for j, s in self.registry.objects.items())

    def object_points(self, estimate):
        """object_id -> {track_id: point in the embedded frame}."""
        return dict((j, dict((t, estimate.at(key)) for t, key in s.tracks.items() if key in estimate))
                    for j, s in self.registry.objects.items())

    def object_map(self, estimate):
        out = {}
        points = self.object_points(estimate)
        for j, state in self.registry.objects.items():
            frames = {}
            for k in state.frames:
                h = self.motion(state, k, estimate)
                frames[k] = dict((t, h.transform_point(state.l_e.transform_point(m)))
                                 for t, m in points[j].items())
            out[j] = frames
        return out


@implementer(IFormulation)
class BaselineFormulation(Formulation):
    name = 'baseline'

    def _object(self, delta, estimate, camera_key, x_k, j, obs, k):
        registry = self.registry
        if j not in registry:
            if len(obs) < registry.min_points:
                registry.defer(j, k)
                return
            registry.create(j, k)
        state = registry[j]
        observed = {}
        for track, z in obs:
            key = Key.object_point(j, track, frame=k)
            delta.insert(key, x_k.transform_point(z))
            delta.add(StaticPointFactor(camera_key, key, z, self._point_noise))
            observed[track] = key

        previous = state.tracks if state.last_frame() == k - 1 else {}
        shared = sorted(t for t in observed if t in previous)
        if len(shared) >= registry.min_points:
            motion_key = Key.motion(j, k)
            prev_motion = Key.motion(j, k - 1)
            has_prev = prev_motion in estimate
            delta.insert(motion_key, estimate.at(prev_motion) if has_prev else _IDENTITY)
            delta.constrained_keys.add(motion_key)
            for track in shared:
                delta.add(BaselineMotionFactor(previous[track], observed[track], motion_key, self._point_noise))
            if has_prev:
                delta.add(BaselineSmoothingFactor(prev_motion, motion_key, self._smoothing_noise))
        elif previous:
            log.debug('object {j} frame {k}: {n} shared tracks, no motion', j=j, k=k, n=len(shared))
        state.tracks = observed
        state.frames.append(k)

    def frame_motions(self, estimate):
        return dict((j, dict((k, estimate.at(Key.motion(j, k))) for k in s.frames if Key.motion(j, k) in estimate))
                    for j, s in self.registry.objects.items())

    def object_map(self, estimate):
        out = {}
        for key, point in estimate.of_kind(KeyKind.OBJECT_POINT).items():
            out.setdefault(key.object_id, {}).setdefault(key.frame, {})[key.track_id] = point
        return out


FORMULATIONS = {
    HybridFormulation.name: HybridFormulation,
    BaselineFormulation.name: BaselineFormulation,
}

