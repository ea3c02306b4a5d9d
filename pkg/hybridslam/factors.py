"""
Residuals, analytic Jacobians and noise models for the object-centric and world-centric
dynamic SLAM graphs.

A factor's residual is ``r(x)``; linearizing around ``x`` gives whitened blocks
``A_i = W J_i`` and right hand side ``b = -W r`` so that the update solves ``A dx = b``.
Poses and motions are perturbed on the right (``x exp(xi)``), points additively.
"""
import math

import numpy as np
from scipy import linalg

from .geometry import (
    Motion, adjoint, log, reverse_motion, se3_right_jacobian_inverse, skew)

_IDENTITY = Motion()


class NoiseModel(object):
    """
    Gaussian noise with optional Huber kernel. Stored as the square-root information
    matrix ``W`` with ``W^T W = Sigma^-1``.
    """

    def __init__(self, sqrt_information, huber=None):
        w = np.array(sqrt_information, dtype=float)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise ValueError('Square-root information must be square, got %r' % (w.shape,))
        if huber is not None and huber <= 0.0:
            raise ValueError('Huber threshold must be positive')
        w.setflags(write=False)
        self.sqrt_information = w
        self.huber = huber

    @classmethod
    def isotropic(cls, dim, sigma, huber=None):
        return cls.diagonal([sigma] * dim, huber=huber)

    @classmethod
    def diagonal(cls, sigmas, huber=None):
        sigmas = np.asarray(sigmas, dtype=float)
        if np.any(sigmas <= 0.0):
            raise ValueError('Sigmas must be positive: %r' % (sigmas,))
        return cls(np.diag(1.0 / sigmas), huber=huber)

    @classmethod
    def gaussian(cls, covariance, huber=None):
        cov = np.asarray(covariance, dtype=float)
        cov = 0.5 * (cov + cov.T)
        lower = linalg.cholesky(cov, lower=True)
        return cls(linalg.solve_triangular(lower, np.eye(len(cov)), lower=True), huber=huber)

    @property
    def dim(self):
        return self.sqrt_information.shape[0]

    @property
    def covariance(self):
        w_inv = linalg.inv(self.sqrt_information)
        return w_inv.dot(w_inv.T)

    def whiten(self, r):
        return self.sqrt_information.dot(r)

    def weight(self, whitened):
        """IRLS weight of the Huber kernel; 1 for a pure Gaussian."""
        if self.huber is None:
            return 1.0
        e = float(np.linalg.norm(whitened))
        return 1.0 if e <= self.huber else self.huber / e

    def loss(self, whitened):
        e = float(np.linalg.norm(whitened))
        if self.huber is None or e <= self.huber:
            return 0.5 * e * e
        return self.huber * e - 0.5 * self.huber * self.huber

    def __repr__(self):
        return 'NoiseModel(dim=%d, huber=%r)' % (self.dim, self.huber)


class LinearFactor(object):
    """Whitened Gaussian factor ``|sum_i A_i dx_i - b|^2``."""

    def __init__(self, keys, blocks, b):
        self.keys = tuple(keys)
        self.blocks = [np.asarray(a, dtype=float) for a in blocks]
        self.b = np.asarray(b, dtype=float)
        rows = len(self.b)
        for key, a in zip(self.keys, self.blocks):
            if a.shape != (rows, key.dim):
                raise ValueError('Block for %s has shape %r, expected %r' % (key, a.shape, (rows, key.dim)))

    @property
    def rows(self):
        return len(self.b)

    def block(self, key):
        return self.blocks[self.keys.index(key)]

    def error(self, delta):
        r = -self.b.copy()
        for key, a in zip(self.keys, self.blocks):
            r += a.dot(delta[key])
        return 0.5 * float(r.dot(r))

    def __repr__(self):
        return 'LinearFactor(%s, rows=%d)' % (', '.join(str(k) for k in self.keys), self.rows)


# residual functions


def hybrid_motion_residual(x_k, h_ek, m_local, l_e, z):
    """``z - X_k^-1 H_ek L_e m`` for a point stored in its object's embedded frame."""
    world = h_ek.transform_point(l_e.transform_point(m_local))
    return np.asarray(z, dtype=float) - x_k.inverse_transform_point(world)


def init_object_point(x_k, h_ek, l_e, l_k, z):
    """Embedded-frame point that zeroes the hybrid residual at the given estimates."""
    world = x_k.transform_point(z)
    return l_e.inverse_transform_point(reverse_motion(h_ek, l_e, l_k).transform_point(world))


def object_smoothing_residual(h_a, h_b, h_c, l_e):
    """
    Change in the object's body-frame motion across three consecutive frames. Zero when
    the object moves with a constant body twist.
    """
    l_a, l_b, l_c = (h.compose(l_e) for h in (h_a, h_b, h_c))
    first = l_a.between(l_b)
    second = l_b.between(l_c)
    return log(first.between(second))


def static_point_residual(x_k, m_world, z):
    return np.asarray(z, dtype=float) - x_k.inverse_transform_point(m_world)


def between_pose_residual(x_a, x_b, odom):
    return log(odom.between(x_a.between(x_b)))


def pose_prior_residual(x, mean):
    return log(mean.between(x))


def baseline_motion_residual(m_prev, m_curr, h):
    return np.asarray(m_curr, dtype=float) - h.transform_point(m_prev)


def baseline_smoothing_residual(h_prev, h_curr):
    return log(h_prev.between(h_curr))


def point_prior_residual(m, z):
    return np.asarray(z, dtype=float) - np.asarray(m, dtype=float)


def point_between_residual(m_a, m_b, d):
    return np.asarray(m_b, dtype=float) - np.asarray(m_a, dtype=float) - np.asarray(d, dtype=float)


# factors


class Factor(object):
    """
    Nonlinear factor over ``keys``. Subclasses implement ``evaluate``, which returns the
    unwhitened residual and one Jacobian per key.
    """
    kind = None
    arity = None
    dim = 3
    linear = False

    def __init__(self, keys, noise):
        self.keys = tuple(keys)
        if self.arity is not None and len(self.keys) != self.arity:
            raise ValueError('%s takes %d keys, got %d' % (type(self).__name__, self.arity, len(self.keys)))
        if noise.dim != self.dim:
            raise ValueError('%s needs a %d-dim noise model, got %d' % (type(self).__name__, self.dim, noise.dim))
        self.noise = noise

    def residual(self, values):
        return self.evaluate(values, jacobians=False)[0]

    def evaluate(self, values, jacobians=True):
        raise NotImplementedError

    def whitened_residual(self, values):
        return self.noise.whiten(self.residual(values))

    def error(self, values):
        return self.noise.loss(self.whitened_residual(values))

    def linearize(self, values):
        r, jacs = self.evaluate(values)
        w = self.noise.sqrt_information
        wr = w.dot(r)
        scale = math.sqrt(self.noise.weight(wr))
        return LinearFactor(self.keys, [scale * w.dot(j) for j in jacs], -scale * wr)

    def __repr__(self):
        return '%s(%s)' % (type(self).__name__, ', '.join(str(k) for k in self.keys))


class HybridMotionFactor(Factor):
    """
    Observation of an object point through the object's cumulative motion from its embedded
    frame. ``motion_key`` is None on the embedding frame itself, where the motion is the
    identity constant.
    """
    kind = 'hybrid_motion'

    def __init__(self, camera_key, motion_key, point_key, l_e, z, noise):
        self.motion_key = motion_key
        keys = (camera_key, point_key) if motion_key is None else (camera_key, motion_key, point_key)
        self.l_e = l_e
        self.z = np.array(z, dtype=float)
        self.z.setflags(write=False)
        super(HybridMotionFactor, self).__init__(keys, noise)

    def evaluate(self, values, jacobians=True):
        x = values.at(self.keys[0])
        h = _IDENTITY if self.motion_key is None else values.at(self.motion_key)
        m = values.at(self.keys[-1])
        q = self.l_e.transform_point(m)
        p = x.inverse_transform_point(h.transform_point(q))
        r = self.z - p
        if not jacobians:
            return r, None
        rx_t = x.R.T
        j_x = np.hstack([-skew(p), np.eye(3)])
        j_m = -rx_t.dot(h.R).dot(self.l_e.R)
        if self.motion_key is None:
            return r, [j_x, j_m]
        j_h = rx_t.dot(h.R).dot(np.hstack([skew(q), -np.eye(3)]))
        return r, [j_x, j_h, j_m]


class StaticPointFactor(Factor):
    """Camera-frame observation of a world point. Also used for per-frame world-centric object points."""
    kind = 'static_point'
    arity = 2

    def __init__(self, camera_key, point_key, z, noise):
        self.z = np.array(z, dtype=float)
        self.z.setflags(write=False)
        super(StaticPointFactor, self).__init__((camera_key, point_key), noise)

    def evaluate(self, values, jacobians=True):
        x = values.at(self.keys[0])
        p = x.inverse_transform_point(values.at(self.keys[1]))
        r = self.z - p
        if not jacobians:
            return r, None
        return r, [np.hstack([-skew(p), np.eye(3)]), -x.R.T]


class BetweenPoseFactor(Factor):
    kind = 'between_pose'
    arity = 2
    dim = 6

    def __init__(self, key_a, key_b, odom, noise):
        self.odom = odom
        super(BetweenPoseFactor, self).__init__((key_a, key_b), noise)

    def evaluate(self, values, jacobians=True):
        a = values.at(self.keys[0])
        b = values.at(self.keys[1])
        r = between_pose_residual(a, b, self.odom)
        if not jacobians:
            return r, None
        jr_inv = se3_right_jacobian_inverse(r)
        return r, [-jr_inv.dot(adjoint(b.between(a))), jr_inv]


class BaselineSmoothingFactor(BetweenPoseFactor):
    """Constant world-frame motion between consecutive per-frame motions of one object."""
    kind = 'baseline_smoothing'

    def __init__(self, prev_key, curr_key, noise):
        super(BaselineSmoothingFactor, self).__init__(prev_key, curr_key, _IDENTITY, noise)


class PosePriorFactor(Factor):
    kind = 'pose_prior'
    arity = 1
    dim = 6

    def __init__(self, key, mean, noise):
        self.mean = mean
        super(PosePriorFactor, self).__init__((key,), noise)

    def evaluate(self, values, jacobians=True):
        r = pose_prior_residual(values.at(self.keys[0]), self.mean)
        if not jacobians:
            return r, None
        return r, [se3_right_jacobian_inverse(r)]


class BaselineMotionFactor(Factor):
    """World-frame point carried from k-1 to k by the object's per-frame motion."""
    kind = 'baseline_motion'
    arity = 3

    def __init__(self, prev_point_key, curr_point_key, motion_key, noise):
        super(BaselineMotionFactor, self).__init__((prev_point_key, curr_point_key, motion_key), noise)

    def evaluate(self, values, jacobians=True):
        m_prev = values.at(self.keys[0])
        m_curr = values.at(self.keys[1])
        h = values.at(self.keys[2])
        r = baseline_motion_residual(m_prev, m_curr, h)
        if not jacobians:
            return r, None
        j_h = np.hstack([h.R.dot(skew(m_prev)), -h.R])
        return r, [-h.R, np.eye(3), j_h]


class ObjectSmoothingFactor(Factor):
    """
    Constant body-frame motion over three consecutive cumulative motions. ``keys`` may hold
    None in the first slot when that motion is the embedding frame's identity.
    """
    kind = 'object_smoothing'
    dim = 6

    def __init__(self, key_a, key_b, key_c, l_e, noise, numerical=False):
        self.slots = (key_a, key_b, key_c)
        self.l_e = l_e
        self.numerical = numerical
        super(ObjectSmoothingFactor, self).__init__(tuple(k for k in self.slots if k is not None), noise)

    def _motions(self, values):
        return [_IDENTITY if k is None else values.at(k) for k in self.slots]

    def evaluate(self, values, jacobians=True):
        h_a, h_b, h_c = self._motions(values)
        r = object_smoothing_residual(h_a, h_b, h_c, self.l_e)
        if not jacobians:
            return r, None
        if self.numerical:
            return r, numerical_jacobians(self, values)
        l_e_inv = self.l_e.inverse()
        e = l_e_inv.compose(h_b.inverse()).compose(h_a).compose(h_b.inverse()).compose(h_c).compose(self.l_e)
        m_inv = l_e_inv.compose(h_c.inverse()).compose(h_b)
        jr_inv = se3_right_jacobian_inverse(r)
        ad_m_inv = adjoint(m_inv)
        jac = {
            0: jr_inv.dot(ad_m_inv),
            1: -jr_inv.dot(adjoint(e.inverse().compose(l_e_inv)) + ad_m_inv),
            2: jr_inv.dot(adjoint(l_e_inv)),
        }
        return r, [jac[i] for i, k in enumerate(self.slots) if k is not None]


class PointPriorFactor(Factor):
    kind = 'point_prior'
    arity = 1
    linear = True

    def __init__(self, key, z, noise):
        self.z = np.array(z, dtype=float)
        self.z.setflags(write=False)
        super(PointPriorFactor, self).__init__((key,), noise)

    def evaluate(self, values, jacobians=True):
        r = point_prior_residual(values.at(self.keys[0]), self.z)
        return r, (None if not jacobians else [-np.eye(3)])


class PointBetweenFactor(Factor):
    kind = 'point_between'
    arity = 2
    linear = True

    def __init__(self, key_a, key_b, d, noise):
        self.d = np.array(d, dtype=float)
        self.d.setflags(write=False)
        super(PointBetweenFactor, self).__init__((key_a, key_b), noise)

    def evaluate(self, values, jacobians=True):
        r = point_between_residual(values.at(self.keys[0]), values.at(self.keys[1]), self.d)
        return r, (None if not jacobians else [-np.eye(3), np.eye(3)])


def linearize(factor, values):
    return factor.linearize(values)


def numerical_jacobians(factor, values, step=1e-6):
    """Central differences of the unwhitened residual along each key's tangent space."""
    jacobians = []
    for key in factor.keys:
        cols = []
        for i in range(key.dim):
            d = np.zeros(key.dim)
            d[i] = step
            plus = factor.residual(values.retract({key: d}))
            minus = factor.residual(values.retract({key: -d}))
            cols.append((plus - minus) / (2.0 * step))
        jacobians.append(np.column_stack(cols))
    return jacobians


class FactorParams(object):
    """
    Noise settings shared by both formulations. Sigmas are (rotation rad, translation m).
    """

    def __init__(self, point_sigma=0.01, smoothing_sigmas=(0.01, 0.05), odometry_sigmas=(0.001, 0.01),
                 prior_sigmas=(1e-4, 1e-4), huber=None, numerical_smoothing=False):
        self.point_sigma = point_sigma
        self.smoothing_sigmas = tuple(smoothing_sigmas)
        self.odometry_sigmas = tuple(odometry_sigmas)
        self.prior_sigmas = tuple(prior_sigmas)
        self.huber = huber
        self.numerical_smoothing = numerical_smoothing

    @classmethod
    def from_config(cls, config):
        section = 'factors'
        huber = config.getfloat('huber', 0.0, section=section)
        return cls(
            point_sigma=config.getfloat('point_sigma', 0.01, section=section),
            smoothing_sigmas=(config.getfloat('smoothing_sigma_rot', 0.01, section=section),
                              config.getfloat('smoothing_sigma_trans', 0.05, section=section)),
            odometry_sigmas=(config.getfloat('odometry_sigma_rot', 0.001, section=section),
                             config.getfloat('odometry_sigma_trans', 0.01, section=section)),
            prior_sigmas=(config.getfloat('prior_sigma_rot', 1e-4, section=section),
                          config.getfloat('prior_sigma_trans', 1e-4, section=section)),
            huber=huber or None,
            numerical_smoothing=config.getboolean('numerical_smoothing', False, section=section),
        )

    @staticmethod
    def _pose_sigmas(pair):
        return [pair[0]] * 3 + [pair[1]] * 3

    def point_noise(self):
        # zero simulator noise still needs a finite weight
        return NoiseModel.isotropic(3, max(self.point_sigma, 1e-3), huber=self.huber)

    def smoothing_noise(self):
        return NoiseModel.diagonal(self._pose_sigmas(self.smoothing_sigmas))

    def odometry_noise(self):
        return NoiseModel.diagonal(self._pose_sigmas(self.odometry_sigmas))

    def prior_noise(self):
        return NoiseModel.diagonal(self._pose_sigmas(self.prior_sigmas))


def factor_keys(factors):
    """Sorted union of the keys touched by ``factors``."""
    keys = set()
    for f in factors:
        keys.update(f.keys)
    return sorted(keys)


__all__ = [
    'NoiseModel', 'LinearFactor', 'Factor', 'HybridMotionFactor', 'StaticPointFactor',
    'BetweenPoseFactor', 'BaselineSmoothingFactor', 'PosePriorFactor', 'BaselineMotionFactor',
    'ObjectSmoothingFactor', 'PointPriorFactor', 'PointBetweenFactor', 'FactorParams',
    'hybrid_motion_residual', 'init_object_point', 'object_smoothing_residual',
    'static_point_residual', 'between_pose_residual', 'pose_prior_residual',
    'baseline_motion_residual', 'baseline_smoothing_residual', 'point_prior_residual',
    'point_between_residual', 'linearize', 'numerical_jacobians', 'factor_keys',
]
