"""
SE(3) arithmetic used by every factor.

Tangent vectors are ordered (rotation, translation) and perturbations are applied on
the right: ``T (+) xi = T * exp(xi)``.
"""
import math

import numpy as np
from twisted.logger import Logger

logger = Logger()

# below these angles the closed forms lose precision and Taylor series are used
_SERIES_ANGLE = 1e-2
_Q_SERIES_ANGLE = 1e-1
_NEAR_PI_SINE = 1e-6


def skew(v):
    """Hat operator: 3-vector to skew-symmetric matrix."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def vee(m):
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def as_point(p):
    point = np.array(p, dtype=float).reshape(3)
    if not np.all(np.isfinite(point)):
        raise ValueError('Point has non-finite entries: %r' % (point,))
    return point


def as_twist(xi):
    twist = np.array(xi, dtype=float).reshape(6)
    if not np.all(np.isfinite(twist)):
        raise ValueError('Twist has non-finite entries: %r' % (twist,))
    return twist


def _so3_coefficients(theta):
    """Returns sin(t)/t, (1-cos(t))/t^2 and (t-sin(t))/t^3."""
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        return (1.0 - t2 / 6.0 + t2 * t2 / 120.0,
                0.5 - t2 / 24.0 + t2 * t2 / 720.0,
                1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0)
    half = math.sin(0.5 * theta)
    return (math.sin(theta) / theta,
            2.0 * half * half / (theta * theta),
            (theta - math.sin(theta)) / theta ** 3)


def _so3_inverse_coefficient(theta):
    """1/t^2 - (1+cos(t))/(2 t sin(t)), written with half angles so t = pi is regular."""
    if theta < _SERIES_ANGLE:
        t2 = theta * theta
        return 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    return 1.0 / (theta * theta) - math.cos(0.5 * theta) / (2.0 * theta * math.sin(0.5 * theta))


def so3_exp(phi):
    phi = np.asarray(phi, dtype=float)
    theta = float(np.linalg.norm(phi))
    a, b, _ = _so3_coefficients(theta)
    w = skew(phi)
    return np.eye(3) + a * w + b * w.dot(w)


def so3_log(rot):
    """
    Principal logarithm of a rotation matrix.

    At exactly pi the axis sign is ambiguous; the representative whose first nonzero
    component is positive is returned.
    """
    rot = np.asarray(rot, dtype=float)
    sine_axis = 0.5 * vee(rot - rot.T)
    s = float(np.linalg.norm(sine_axis))
    c = min(1.0, max(-1.0, 0.5 * (np.trace(rot) - 1.0)))
    theta = math.atan2(s, c)

    if c > 0.0 and theta < _SERIES_ANGLE:
        return sine_axis * (1.0 + theta * theta / 6.0 + 7.0 * theta ** 4 / 360.0)

    if c < 0.0 and s < _NEAR_PI_SINE:
        sym = 0.5 * (rot + rot.T) - c * np.eye(3)
        i = int(np.argmax(np.diag(sym)))
        axis = sym[:, i] / math.sqrt(sym[i, i] * (1.0 - c))
        axis /= np.linalg.norm(axis)
        if s > 1e-12:
            if axis.dot(sine_axis) < 0.0:
                axis = -axis
        else:
            first = axis[np.abs(axis) > 1e-12][0]
            if first < 0.0:
                axis = -axis
        return theta * axis

    return sine_axis * (theta / s)


def so3_left_jacobian(phi):
    theta = float(np.linalg.norm(phi))
    _, b, c = _so3_coefficients(theta)
    w = skew(phi)
    return np.eye(3) + b * w + c * w.dot(w)


def so3_right_jacobian(phi):
    return so3_left_jacobian(-np.asarray(phi, dtype=float))


def so3_left_jacobian_inverse(phi):
    theta = float(np.linalg.norm(phi))
    w = skew(phi)
    return np.eye(3) - 0.5 * w + _so3_inverse_coefficient(theta) * w.dot(w)


def so3_right_jacobian_inverse(phi):
    return so3_left_jacobian_inverse(-np.asarray(phi, dtype=float))


def rotation_angle(rot):
    """Angle in radians of a rotation matrix."""
    rot = np.asarray(rot, dtype=float)
    s = float(np.linalg.norm(0.5 * vee(rot - rot.T)))
    c = min(1.0, max(-1.0, 0.5 * (np.trace(rot) - 1.0)))
    return math.atan2(s, c)


class Rotation(object):
    """
    Element of SO(3), stored as a read-only 3x3 matrix.
    """
    __slots__ = ('_matrix',)

    def __init__(self, matrix=None):
        m = np.eye(3) if matrix is None else np.array(matrix, dtype=float)
        if m.shape != (3, 3):
            raise ValueError('Rotation matrix must be 3x3, got %r' % (m.shape,))
        m.setflags(write=False)
        self._matrix = m

    @classmethod
    def from_matrix(cls, matrix, tol=1e-9):
        """Validating constructor."""
        rot = cls(matrix)
        if not rot.is_valid(tol):
            raise ValueError('Matrix is not a proper rotation')
        return rot

    @classmethod
    def from_rotvec(cls, phi):
        return cls(so3_exp(phi))

    @classmethod
    def rx(cls, angle):
        return cls.from_rotvec((angle, 0.0, 0.0))

    @classmethod
    def ry(cls, angle):
        return cls.from_rotvec((0.0, angle, 0.0))

    @classmethod
    def rz(cls, angle):
        return cls.from_rotvec((0.0, 0.0, angle))

    @property
    def matrix(self):
        return self._matrix

    def compose(self, other):
        return Rotation(self._matrix.dot(other.matrix))

    def inverse(self):
        return Rotation(self._matrix.T)

    def log(self):
        return so3_log(self._matrix)

    def angle(self):
        return rotation_angle(self._matrix)

    def act(self, p):
        return self._matrix.dot(p)

    def is_valid(self, tol=1e-9):
        m = self._matrix
        return (np.allclose(m.dot(m.T), np.eye(3), rtol=0.0, atol=tol)
                and abs(np.linalg.det(m) - 1.0) <= tol)

    def __repr__(self):
        return 'Rotation(rotvec=%s)' % np.array2string(self.log(), precision=6)


class SE3(object):
    """
    Rigid transform [R | t]. Immutable; ``Pose`` and ``Motion`` share this arithmetic but
    are kept apart so a motion is never silently used where a pose is expected.
    """
    __slots__ = ('_R', '_t')

    def __init__(self, rotation=None, translation=None):
        if rotation is None:
            r = np.eye(3)
        elif isinstance(rotation, Rotation):
            r = rotation.matrix
        else:
            r = np.array(rotation, dtype=float)
        t = np.zeros(3) if translation is None else np.array(translation, dtype=float).reshape(3)
        if r.shape != (3, 3):
            raise ValueError('Rotation block must be 3x3, got %r' % (r.shape,))
        if not np.all(np.isfinite(t)):
            raise ValueError('Translation has non-finite entries: %r' % (t,))
        r.setflags(write=False)
        t.setflags(write=False)
        self._R = r
        self._t = t

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, matrix):
        m = np.asarray(matrix, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_rotvec(cls, phi, translation=None):
        return cls(so3_exp(phi), translation)

    @property
    def R(self):
        return self._R

    @property
    def t(self):
        return self._t

    @property
    def rotation(self):
        return Rotation(self._R)

    @property
    def translation(self):
        return self._t

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self._R
        m[:3, 3] = self._t
        return m

    def compose(self, other):
        """
        Group product ``self * other``. The result has the kind of ``self``, except that a
        motion applied to a pose yields a pose.
        """
        kind = type(other) if isinstance(self, Motion) and isinstance(other, Pose) else type(self)
        return kind(self._R.dot(other.R), self._R.dot(other.t) + self._t)

    def inverse(self):
        rt = self._R.T
        return type(self)(rt, -rt.dot(self._t))

    def between(self, other):
        """``self^-1 * other``."""
        return type(self)(self._R.T.dot(other.R), self._R.T.dot(other.t - self._t))

    def transform_point(self, p):
        return self._R.dot(p) + self._t

    def inverse_transform_point(self, p):
        return self._R.T.dot(np.asarray(p, dtype=float) - self._t)

    def retract(self, xi):
        return self.compose(exp(xi, kind=type(self)))

    def local(self, other):
        """Tangent vector ``xi`` such that ``self.retract(xi) == other``."""
        return log(self.between(other))

    def as_kind(self, kind):
        return kind(self._R, self._t)

    def equals(self, other, tol=1e-9):
        return (np.allclose(self._R, other.R, rtol=0.0, atol=tol)
                and np.allclose(self._t, other.t, rtol=0.0, atol=tol))

    def __repr__(self):
        return '%s(rotvec=%s, t=%s)' % (
            type(self).__name__,
            np.array2string(so3_log(self._R), precision=6),
            np.array2string(self._t, precision=6))


class Pose(SE3):
    """Position and orientation of a body frame (camera X or object L) in a reference frame."""
    __slots__ = ()


class Motion(SE3):
    """Transform carrying a rigid body from one pose to another; not itself a pose."""
    __slots__ = ()


def compose(a, b):
    return a.compose(b)


def inverse(a):
    return a.inverse()


def exp(xi, kind=None):
    """Exponential map of a (rotation, translation) twist."""
    xi = np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    kind = kind or Motion
    return kind(so3_exp(phi), so3_left_jacobian(phi).dot(rho))


def log(t):
    """Logarithm map on the principal branch, returning a (rotation, translation) twist."""
    phi = so3_log(t.R)
    rho = so3_left_jacobian_inverse(phi).dot(t.t)
    return np.concatenate([phi, rho])


def adjoint(t):
    """6x6 adjoint in (rotation, translation) ordering: exp(Ad(T) xi) = T exp(xi) T^-1."""
    ad = np.zeros((6, 6))
    ad[:3, :3] = t.R
    ad[3:, 3:] = t.R
    ad[3:, :3] = skew(t.t).dot(t.R)
    return ad


def _q_coefficients(theta):
    if theta < _Q_SERIES_ANGLE:
        t2 = theta * theta
        c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
        c2 = -1.0 / 24.0 + t2 / 720.0 - t2 * t2 / 40320.0
        c4 = -1.0 / 120.0 + t2 / 5040.0 - t2 * t2 / 362880.0
    else:
        s, c = math.sin(theta), math.cos(theta)
        c1 = (theta - s) / theta ** 3
        c2 = (1.0 - theta * theta / 2.0 - c) / theta ** 4
        c4 = (theta - s - theta ** 3 / 6.0) / theta ** 5
    return c1, c2, -0.5 * (c2 - 3.0 * c4)


def se3_right_jacobian(xi):
    xi = np.asarray(xi, dtype=float)
    phi, rho = xi[:3], xi[3:]
    w, v = skew(phi), skew(rho)
    c1, c2, c3 = _q_coefficients(float(np.linalg.norm(phi)))
    wv, vw, ww = w.dot(v), v.dot(w), w.dot(w)
    wvw = wv.dot(w)
    q = (-0.5 * v + c1 * (wv + vw - wvw)
         + c2 * (ww.dot(v) + vw.dot(w) - 3.0 * wvw)
         + c3 * (wvw.dot(w) + w.dot(wvw)))
    jr = so3_right_jacobian(phi)
    jac = np.zeros((6, 6))
    jac[:3, :3] = jr
    jac[3:, 3:] = jr
    jac[3:, :3] = q
    return jac


def se3_right_jacobian_inverse(xi):
    jac = se3_right_jacobian(xi)
    jr_inv = so3_right_jacobian_inverse(np.asarray(xi, dtype=float)[:3])
    inv = np.zeros((6, 6))
    inv[:3, :3] = jr_inv
    inv[3:, 3:] = jr_inv
    inv[3:, :3] = -jr_inv.dot(jac[3:, :3]).dot(jr_inv)
    return inv


def transform_point(t, p):
    return t.transform_point(p)


def point_to_world(h, l_e, p_local):
    """World position at k of a point stored in the embedded object frame: H_ek L_e m."""
    return h.transform_point(l_e.transform_point(p_local))


def recover_object_pose(h, l_e):
    """Object pose at k from its cumulative motion: L_k = H_ek L_e."""
    return Pose(h.R.dot(l_e.R), h.R.dot(l_e.t) + h.t)


def body_frame_motion(l_prev, l_curr):
    """Relative motion seen in the object's own frame: L_{k-1}^-1 L_k."""
    return Motion(l_prev.R.T.dot(l_curr.R), l_prev.R.T.dot(l_curr.t - l_prev.t))


def body_velocity(l_prev, l_curr, dt=1.0):
    """Angular (rad/s) and linear (m/s) body-frame velocity over one frame interval."""
    xi = log(body_frame_motion(l_prev, l_curr))
    return xi[:3] / dt, xi[3:] / dt


def reverse_motion(h, l_e, l_k):
    """
    Motion carrying the object from k back to its embedded frame,
    L_k (L_e^-1 H_ek L_e)^-1 L_k^-1, evaluated term by term.
    """
    local = l_e.inverse().compose(h).compose(l_e).as_kind(Motion)
    reverse = l_k.compose(local.inverse()).compose(l_k.inverse()).as_kind(Motion)
    logger.debug('reverse motion {reverse!r}', reverse=reverse)
    return reverse
