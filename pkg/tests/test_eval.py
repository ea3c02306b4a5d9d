#!/usr/bin/env python
# -*- coding: utf-8 -*-
import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from hybridslam.app import BatchRunner
from hybridslam.eval import (
    FAILED, METRIC_FIELDS, OK, MetricReport, ObjectMotionError, assemble_report, ate, evaluate,
    frame_motions_from_cumulative, map_growth, motion_error, motion_error_rows, object_trajectory_rows, pose_error,
    reconstruct_object_map, rpe, write_metrics)
from hybridslam.exceptions import FrameMismatchError, UnknownObjectError
from hybridslam.factors import FactorParams
from hybridslam.formulations import HybridFormulation
from hybridslam.geometry import Motion, Pose, body_velocity, exp
from hybridslam.sim import FrameMeasurements, SceneConfig, generate_scene
from hybridslam.solvers import SmootherStats
from hybridslam.values import Values

SQUARE = [(0, (1.0, 0.0, 0.0)), (1, (3.0, 0.0, 0.0)), (2, (2.0, 1.0, 0.0)), (3, (2.0, -1.0, 0.0))]


def straight_trajectory(n=5):
    return dict((k, Pose(np.eye(3), (0.0, 0.0, float(k)))) for k in range(n))


def stats(frame, reelim=3, max_clique=4, avg_clique=2.0):
    return SmootherStats(frame=frame, wall_ms=1.5, reelim_vars=reelim, max_clique=6 * max_clique,
                         avg_clique=6 * avg_clique, relinearized=0, total_vars=10, max_clique_vars=max_clique,
                         avg_clique_vars=avg_clique, num_cliques=3)


class TestTrajectoryMetrics(object):

    def test_identical(self):
        gt = straight_trajectory()
        assert ate(gt, gt) == 0.0
        assert rpe(gt, gt) == (0.0, 0.0)

    def test_global_offset(self):
        gt = straight_trajectory()
        shift = Pose(np.eye(3), (1.0, 0.0, 0.0))
        est = dict((k, shift.compose(p)) for k, p in gt.items())
        assert ate(est, gt) == pytest.approx(1.0)
        # a rigid offset of the whole trajectory leaves relative motion untouched
        r, t = rpe(est, gt)
        assert r == pytest.approx(0.0, abs=1e-6)
        assert t == pytest.approx(0.0, abs=1e-9)

    def test_single_frame(self):
        gt = {0: Pose.from_rotvec((0.1, 0.2, 0.3), (1.0, 2.0, 3.0))}
        est = {0: gt[0].compose(Pose(np.eye(3), (0.0, 3.0, 4.0)))}
        assert ate(est, gt) == pytest.approx(5.0)
        with pytest.raises(FrameMismatchError):
            rpe(est, gt)

    def test_rotation_drift(self):
        gt = straight_trajectory()
        est = dict((k, p.compose(exp([0.0, 0.0, 0.01 * k, 0.0, 0.0, 0.0], kind=Pose))) for k, p in gt.items())
        r, t = rpe(est, gt)
        assert r == pytest.approx(math.degrees(0.01), rel=1e-6)
        assert t == pytest.approx(0.0, abs=1e-12)

    def test_frame_mismatch(self):
        gt = straight_trajectory()
        est = dict(gt)
        del est[2]
        with pytest.raises(FrameMismatchError):
            ate(est, gt)
        with pytest.raises(FrameMismatchError):
            ate({}, {})

    def test_pose_error(self):
        r, t = pose_error(Pose(), Pose.from_rotvec((0.0, 0.0, math.pi / 2.0), (3.0, 4.0, 0.0)))
        assert r == pytest.approx(90.0)
        assert t == pytest.approx(5.0)


class TestMotionMetrics(object):

    def setup_method(self, method):
        step = Motion.from_rotvec((0.0, 0.05, 0.0), (0.2, 0.0, 0.4))
        self.gt = {1: dict((k, step) for k in range(1, 6))}

    def test_translation_offset(self):
        bias = Motion(np.eye(3), (0.1, 0.0, 0.0))
        est = {1: dict((k, h.compose(bias)) for k, h in self.gt[1].items())}
        errors = motion_error(est, self.gt)
        assert errors[1].trans == pytest.approx(0.1)
        assert errors[1].rot == pytest.approx(0.0, abs=1e-6)
        assert errors[1].frames == 5 and errors[1].skipped == 0

    def test_missing_frames_skipped(self):
        est = {1: dict((k, h) for k, h in self.gt[1].items() if k != 3)}
        errors = motion_error(est, self.gt)
        assert errors[1].frames == 4
        assert errors[1].skipped == 1
        assert sorted(errors[1].per_frame) == [1, 2, 4, 5]
        assert [row['frame'] for row in motion_error_rows(errors)] == [1, 2, 4, 5]

    def test_unestimated_object(self):
        errors = motion_error({}, self.gt)
        assert errors[1].frames == 0
        assert errors[1].skipped == 5

    def test_report_averages_scored_objects(self):
        objects = {
            1: ObjectMotionError(1, 2.0, 0.2, 4, 0, {}),
            2: ObjectMotionError(2, 4.0, 0.4, 4, 0, {}),
            3: ObjectMotionError(3, 0.0, 0.0, 0, 5, {}),
        }
        report = MetricReport(0.5, 1.0, 0.1, objects)
        assert report.me_rot == pytest.approx(3.0)
        assert report.me_trans == pytest.approx(0.3)
        assert MetricReport(0.5, 1.0, 0.1).me_trans == 0.0

    def test_frame_motions_from_cumulative(self):
        step = Motion.from_rotvec((0.0, 0.1, 0.0), (1.0, 0.0, 0.0))
        cumulative = {1: {2: Motion(), 3: step, 4: step.compose(step), 6: step}}
        motions = frame_motions_from_cumulative(cumulative)
        assert sorted(motions[1]) == [3, 4]
        for h in motions[1].values():
            assert h.equals(step, tol=1e-12)


class TestObjectMap(object):

    @classmethod
    def setup_class(cls):
        spec = {
            'num_frames': 8,
            'camera': {'twist': [0.0, 0.005, 0.0, 0.0, 0.0, 0.2]},
            'static_points': {'count': 15, 'bounds': [[-8.0, -3.0, 6.0], [8.0, 3.0, 25.0]]},
            'objects': [
                {'id': j, 'pose': {'t': [-4.0 + 5.0 * j, 0.0, 9.0 + 2.0 * j]},
                 'twist': [0.0, 0.005 * j, 0.0, 0.0, 0.0, 0.3],
                 'points': {'count': 8, 'extent': [1.5, 1.5, 3.0]}}
                for j in (1, 2)
            ],
        }
        cls.gt, frames = generate_scene(SceneConfig.from_dict(spec))
        cls.formulation = HybridFormulation(FactorParams(point_sigma=0.01), initial_pose=cls.gt.camera_poses[0])
        runner = BatchRunner(cls.formulation)
        for f in frames:
            runner.process_frame(f)
        cls.estimate = runner.finish()

    def test_matches_ground_truth(self):
        for j in (1, 2):
            for k in range(8):
                points = reconstruct_object_map(self.estimate, self.formulation, j, k)
                assert len(points) == 8
                for track, p in points.items():
                    assert_allclose(p, self.gt.world_point(j, track, k), atol=1e-5)

    def test_errors(self):
        with pytest.raises(UnknownObjectError):
            reconstruct_object_map(self.estimate, self.formulation, 9, 0)
        with pytest.raises(FrameMismatchError):
            reconstruct_object_map(self.estimate, self.formulation, 1, 42)

    def test_trajectory_rows(self):
        errors = evaluate(dict(enumerate(self.gt.camera_poses)), dict(enumerate(self.gt.camera_poses)),
                          self.formulation.frame_motions(self.estimate), self.gt.frame_motions).objects
        rows = object_trajectory_rows(self.formulation, self.estimate, errors, map_growth(self.estimate,
                                                                                          self.formulation))
        assert len(rows) == 16
        first, second = rows[0], rows[1]
        assert 'vx' not in first and 'me_trans' not in first
        assert second['me_trans'] == pytest.approx(0.0, abs=1e-5)
        poses, l_e = self.gt.object_poses[1], self.formulation.registry[1].l_e
        embedded = [poses[k].compose(poses[0].inverse()).compose(l_e) for k in (0, 1)]
        w, v = body_velocity(embedded[0], embedded[1])
        assert_allclose([second['wx'], second['wy'], second['wz']], w, atol=1e-5)
        assert_allclose([second['vx'], second['vy'], second['vz']], v, atol=1e-5)
        assert all(row['map_size'] == 8 for row in rows)


class TestMapGrowth(object):

    def test_embedding_frame_and_growth(self):
        formulation = HybridFormulation()
        estimate = Values()
        fresh = [(10 + i, (2.0 + 0.5 * i, 0.5, 1.0)) for i in range(4)]
        for k, obs in enumerate((SQUARE, SQUARE, SQUARE + fresh)):
            delta = formulation.process_frame(estimate, FrameMeasurements(k, (), {1: obs}, Pose()))
            estimate.insert_all(delta.new_values)
        points = reconstruct_object_map(estimate, formulation, 1, 0)
        for track, z in SQUARE:
            assert_allclose(points[track], z, atol=1e-12)
        growth = map_growth(estimate, formulation)[1]
        assert growth == {0: 4, 1: 4, 2: 8}


class TestRunReport(object):

    def test_row(self):
        metrics = MetricReport(0.5, 1.0, 0.1)
        report = assemble_report(metrics, [stats(0, 2, 3, 1.0), stats(1, 5, 4, 2.0)], sequence='toy',
                                 method='incremental-hybrid')
        assert not report.failed
        row = report.as_row()
        assert row['status'] == OK
        assert row['frames'] == 2
        assert row['max_clique'] == 4
        assert row['avg_clique'] == pytest.approx(1.5)
        assert row['max_reelim'] == 5
        assert row['avg_update_ms'] == pytest.approx(1.5)
        assert row['ate_trans'] == 0.5

    def test_update_time_is_per_frame(self):
        # one static graph plus two object graphs reporting on the same frames
        records = []
        for k in range(3):
            records.append(stats(k)._replace(wall_ms=1.0))
            records.extend(stats(k)._replace(wall_ms=2.0, object_id=j) for j in (1, 2))
        report = assemble_report(MetricReport(0.5, 1.0, 0.1), records, method='incremental-parallel-hybrid')
        assert report.timing == [5.0, 5.0, 5.0]
        assert report.avg_update_ms == pytest.approx(5.0)
        assert report.as_row()['frames'] == 3

    def test_failed_report(self):
        report = assemble_report(None, sequence='toy', method='batch-hybrid', status=FAILED,
                                 message='budget exceeded')
        assert report.failed
        row = report.as_row()
        assert 'ate_trans' not in row
        assert row['frames'] == 0
        assert 'budget exceeded' in report.render()

    def test_write_metrics(self):
        reports = [assemble_report(MetricReport(0.5, 1.0, 0.1), [stats(0)], sequence='toy', method='a'),
                   assemble_report(None, sequence='toy', method='b', status=FAILED)]
        out = io.StringIO()
        write_metrics(reports, out)
        lines = out.getvalue().splitlines()
        assert lines[0] == ','.join(METRIC_FIELDS)
        assert len(lines) == 3
        assert lines[1].startswith('toy,a,ok,0.5,')
        assert lines[2].startswith('toy,b,failed,,')

    def test_write(self, tmpdir):
        report = assemble_report(MetricReport(0.5, 1.0, 0.1), [stats(0)], sequence='toy', method='a',
                                 per_object=[dict(object_id=1, frame=0, tx=1.0)])
        report.write(str(tmpdir))
        assert tmpdir.join('stats_a.csv').read().splitlines()[0].endswith('object_id')
        assert tmpdir.join('per_object_a.csv').read().splitlines()[1].startswith('1,0,')
        assert tmpdir.join('report_a.txt').read().startswith('toy / a: OK')
