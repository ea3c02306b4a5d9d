#!/usr/bin/env python
# -*- coding: utf-8 -*-
import numpy as np
import pytest
from numpy.testing import assert_allclose

from hybridslam.exceptions import DuplicateKeyError, UnknownKeyError
from hybridslam.geometry import Motion, Pose
from hybridslam.keys import Key, KeyKind
from hybridslam.values import Values


class TestKey(object):

    def test_dims(self):
        assert Key.camera(0).dim == 6
        assert Key.motion(1, 3).dim == 6
        assert Key.object_point(1, 7).dim == 3
        assert Key.static_point(4).dim == 3
        assert Key.motion(1, 3).is_pose
        assert not Key.static_point(4).is_pose

    def test_labels(self):
        assert str(Key.camera(2)) == 'X2'
        assert str(Key.camera(2, owner=3)) == 'X2@j3'
        assert str(Key.motion(1, 5)) == 'H1_5'
        assert str(Key.object_point(1, 7)) == 'm1_7'
        assert str(Key.object_point(1, 7, frame=4)) == 'm1_7@4'
        assert str(Key.static_point(9)) == 'l9'

    def test_owned_camera_copy_is_distinct(self):
        assert Key.camera(2) != Key.camera(2, owner=1)
        assert Key.camera(2, owner=1).kind == KeyKind.CAMERA_POSE

    def test_total_order(self):
        keys = [Key.static_point(1), Key.object_point(2, 1), Key.motion(1, 1), Key.camera(3), Key.camera(1)]
        assert sorted(keys) == [Key.camera(1), Key.camera(3), Key.motion(1, 1), Key.object_point(2, 1),
                                Key.static_point(1)]


class TestValues(object):

    def setup_method(self, method):
        self.values = Values()
        self.values.insert(Key.camera(0), Pose())
        self.values.insert(Key.motion(1, 1), Motion.from_rotvec((0.0, 0.1, 0.0), (1.0, 0.0, 0.0)))
        self.values.insert(Key.static_point(0), [1.0, 2.0, 3.0])

    def test_insert_duplicate(self):
        with pytest.raises(DuplicateKeyError):
            self.values.insert(Key.camera(0), Pose())

    def test_unknown_key(self):
        with pytest.raises(UnknownKeyError):
            self.values.at(Key.camera(5))
        with pytest.raises(UnknownKeyError):
            self.values.update(Key.camera(5), Pose())

    def test_kind_checking(self):
        with pytest.raises(TypeError):
            self.values.insert(Key.camera(1), Motion())
        with pytest.raises(TypeError):
            self.values.insert(Key.motion(1, 2), Pose())

    def test_points_are_arrays(self):
        assert isinstance(self.values.at(Key.static_point(0)), np.ndarray)

    def test_retract(self):
        delta = {Key.static_point(0): np.array([0.5, 0.0, -1.0]),
                 Key.camera(0): np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0])}
        moved = self.values.retract(delta)
        assert_allclose(moved.at(Key.static_point(0)), [1.5, 2.0, 2.0])
        assert_allclose(moved.at(Key.camera(0)).t, [1.0, 0.0, 0.0])
        assert isinstance(moved.at(Key.camera(0)), Pose)
        # original untouched
        assert_allclose(self.values.at(Key.static_point(0)), [1.0, 2.0, 3.0])

    def test_of_kind(self):
        motions = self.values.of_kind(KeyKind.OBJECT_MOTION, object_id=1)
        assert list(motions) == [Key.motion(1, 1)]
        assert self.values.of_kind(KeyKind.OBJECT_MOTION, object_id=2) == {}

    def test_copy_is_independent(self):
        other = self.values.copy()
        other.insert(Key.camera(1), Pose())
        assert Key.camera(1) not in self.values
        assert len(other) == 4
