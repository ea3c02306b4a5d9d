import enum
from typing import NamedTuple


class KeyKind(enum.IntEnum):
    CAMERA_POSE = 0
    OBJECT_MOTION = 1
    OBJECT_POINT = 2
    STATIC_POINT = 3


POSE_KINDS = (KeyKind.CAMERA_POSE, KeyKind.OBJECT_MOTION)

UNUSED = -1


class Key(NamedTuple):
    """
    Typed variable identifier. Tuple ordering gives the total order used to break ties
    in elimination orderings.

    ``object_id`` is 0 for camera poses and static points, except that a camera pose copy
    owned by an object's own factor graph carries that object's id. ``frame`` is unused for
    points of the object-centric formulation; the world-centric formulation stores one
    point per frame and sets it.
    """
    kind: KeyKind
    object_id: int = 0
    frame: int = UNUSED
    track_id: int = UNUSED

    @classmethod
    def camera(cls, frame, owner=0):
        return cls(KeyKind.CAMERA_POSE, owner, frame, UNUSED)

    @classmethod
    def motion(cls, object_id, frame):
        return cls(KeyKind.OBJECT_MOTION, object_id, frame, UNUSED)

    @classmethod
    def object_point(cls, object_id, track_id, frame=UNUSED):
        return cls(KeyKind.OBJECT_POINT, object_id, frame, track_id)

    @classmethod
    def static_point(cls, track_id):
        return cls(KeyKind.STATIC_POINT, 0, UNUSED, track_id)

    @property
    def dim(self):
        return 6 if self.kind in POSE_KINDS else 3

    @property
    def is_pose(self):
        return self.kind in POSE_KINDS

    def __str__(self):
        if self.kind == KeyKind.CAMERA_POSE:
            return 'X%d' % self.frame if not self.object_id else 'X%d@j%d' % (self.frame, self.object_id)
        if self.kind == KeyKind.OBJECT_MOTION:
            return 'H%d_%d' % (self.object_id, self.frame)
        if self.kind == KeyKind.OBJECT_POINT:
            if self.frame == UNUSED:
                return 'm%d_%d' % (self.object_id, self.track_id)
            return 'm%d_%d@%d' % (self.object_id, self.track_id, self.frame)
        return 'l%d' % self.track_id
