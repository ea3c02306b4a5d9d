import numpy as np

from .exceptions import DuplicateKeyError, UnknownKeyError
from .geometry import Motion, Pose, as_point
from .keys import KeyKind

_KIND_TYPES = {
    KeyKind.CAMERA_POSE: Pose,
    KeyKind.OBJECT_MOTION: Motion,
}


def check_type(key, value):
    expected = _KIND_TYPES.get(key.kind)
    if expected is None:
        return as_point(value)
    if not isinstance(value, expected):
        raise TypeError('%s expects a %s, got %s' % (key, expected.__name__, type(value).__name__))
    return value


class Values(object):
    """
    Variable assignment: Key -> Pose, Motion or 3-vector point.
    """

    def __init__(self, items=None):
        self._values = {}
        if items:
            for key, value in dict(items).items():
                self.insert(key, value)

    def insert(self, key, value):
        if key in self._values:
            raise DuplicateKeyError(key)
        self._values[key] = check_type(key, value)

    def update(self, key, value):
        if key not in self._values:
            raise UnknownKeyError(key)
        self._values[key] = check_type(key, value)

    def upsert(self, key, value):
        self._values[key] = check_type(key, value)

    def insert_all(self, other):
        for key, value in other.items():
            self.insert(key, value)

    def at(self, key):
        try:
            return self._values[key]
        except KeyError:
            raise UnknownKeyError(key)

    def get(self, key, default=None):
        return self._values.get(key, default)

    def pop(self, key):
        return self._values.pop(key)

    def keys(self):
        return self._values.keys()

    def items(self):
        return self._values.items()

    def of_kind(self, kind, object_id=None):
        return dict((k, v) for k, v in self._values.items()
                    if k.kind == kind and (object_id is None or k.object_id == object_id))

    def copy(self):
        out = Values()
        out._values = dict(self._values)
        return out

    def retract(self, delta):
        """New assignment with every key in ``delta`` moved along its tangent vector."""
        out = self.copy()
        for key, d in delta.items():
            value = self.at(key)
            if key.is_pose:
                out._values[key] = value.retract(d)
            else:
                out._values[key] = value + np.asarray(d, dtype=float)
        return out

    def __contains__(self, key):
        return key in self._values

    def __iter__(self):
        return iter(self._values)

    def __len__(self):
        return len(self._values)

    def __repr__(self):
        return 'Values(%d variables)' % len(self._values)
