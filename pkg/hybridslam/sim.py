"""
Synthetic dynamic scenes: a moving camera, rigid objects under body-frame motion and noisy
3D point tracks measured in the camera frame.
"""
from pkgutil import get_data

import numpy as np
import yaml
from twisted.logger import Logger

from .exceptions import InvalidConfig, UnknownObjectError
from .geometry import Motion, Pose, as_point, as_twist, exp

log = Logger()


def pose_from_dict(spec):
    if spec is None:
        return Pose()
    if isinstance(spec, Pose):
        return spec
    return Pose.from_rotvec(spec.get('rotvec', (0.0, 0.0, 0.0)), spec.get('t', (0.0, 0.0, 0.0)))


class ObjectSpec(object):
    """
    A rigid object. ``body_twist`` is either one twist applied every frame or a list with the
    twist applied when stepping into each frame (entry k moves the object from k-1 to k; entry
    0 is unused).
    """

    def __init__(self, object_id, initial_pose, body_twist, point_cloud, track_lifetime=1000, visibility=None):
        self.object_id = int(object_id)
        self.initial_pose = initial_pose
        twists = np.array(body_twist, dtype=float)
        self.body_twist = twists.reshape(-1, 6) if twists.size != 6 else as_twist(twists)
        self.point_cloud = np.array(point_cloud, dtype=float).reshape(-1, 3)
        self.track_lifetime = int(track_lifetime)
        self.visibility = tuple(visibility) if visibility is not None else None

    def twist_at(self, k):
        if self.body_twist.ndim == 1:
            return self.body_twist
        return self.body_twist[min(k, len(self.body_twist) - 1)]

    def validate(self, num_frames):
        if self.object_id < 1:
            raise InvalidConfig('Object ids start at 1, got %d' % self.object_id)
        if len(self.point_cloud) < 3:
            raise InvalidConfig('Object %d needs at least 3 points' % self.object_id)
        if self.track_lifetime < 2:
            raise InvalidConfig('Object %d track_lifetime must be >= 2' % self.object_id)
        first, last = self.visibility
        if not (0 <= first < num_frames and 0 <= last < num_frames):
            raise InvalidConfig('Object %d visibility %r outside [0, %d)'
                                % (self.object_id, self.visibility, num_frames))
        if first > last:
            raise InvalidConfig('Object %d is never visible' % self.object_id)


class SceneConfig(object):

    def __init__(self, num_frames, objects=(), camera_waypoints=None, camera_twist=None, initial_camera=None,
                 static_points=None, num_static_points=0, static_bounds=((-10.0, -10.0, 4.0), (10.0, 10.0, 20.0)),
                 static_track_lifetime=None, noise_sigma=0.0, odometry_sigmas=(0.0, 0.0), max_features_per_object=100,
                 rng_seed=0):
        self.num_frames = int(num_frames)
        self.objects = list(objects)
        self.camera_waypoints = list(camera_waypoints) if camera_waypoints else None
        self.camera_twist = as_twist(camera_twist if camera_twist is not None else np.zeros(6))
        self.initial_camera = initial_camera or Pose()
        self.static_points = np.array(static_points if static_points is not None else [], dtype=float).reshape(-1, 3)
        self.num_static_points = int(num_static_points)
        self.static_bounds = np.array(static_bounds, dtype=float)
        self.static_track_lifetime = int(static_track_lifetime) if static_track_lifetime is not None else None
        self.noise_sigma = float(noise_sigma)
        self.odometry_sigmas = tuple(float(s) for s in odometry_sigmas)
        self.max_features_per_object = int(max_features_per_object)
        self.rng_seed = int(rng_seed)
        for obj in self.objects:
            if obj.visibility is None:
                obj.visibility = (0, self.num_frames - 1)

    def validate(self):
        if self.num_frames < 2:
            raise InvalidConfig('num_frames must be >= 2, got %d' % self.num_frames)
        if self.noise_sigma < 0.0 or min(self.odometry_sigmas) < 0.0:
            raise InvalidConfig('noise sigmas must be >= 0')
        if self.max_features_per_object < 1:
            raise InvalidConfig('max_features_per_object must be >= 1')
        if self.static_track_lifetime is not None and self.static_track_lifetime < 2:
            raise InvalidConfig('static track_lifetime must be >= 2, got %d' % self.static_track_lifetime)
        ids = [obj.object_id for obj in self.objects]
        if len(set(ids)) != len(ids):
            raise InvalidConfig('Duplicate object ids: %r' % (ids,))
        for obj in self.objects:
            obj.validate(self.num_frames)
        return self

    def first_camera_pose(self):
        return self.camera_waypoints[0] if self.camera_waypoints else self.initial_camera

    @classmethod
    def from_dict(cls, spec, seed=None):
        """Build from the ``scene`` mapping of a config file."""
        spec = dict(spec or {})
        rng_seed = int(spec.get('rng_seed', 0) if seed is None else seed)
        rng = np.random.default_rng(rng_seed)
        camera = spec.get('camera') or {}
        waypoints = [pose_from_dict(w) for w in camera.get('waypoints', ())] or None
        static = spec.get('static_points') or {}
        objects = []
        for i, obj in enumerate(spec.get('objects') or ()):
            objects.append(ObjectSpec(
                object_id=obj.get('id', i + 1),
                initial_pose=pose_from_dict(obj.get('pose')),
                body_twist=obj.get('twist', [0.0] * 6),
                point_cloud=_cloud(obj.get('points'), rng),
                track_lifetime=obj.get('track_lifetime', 1000),
                visibility=obj.get('visibility'),
            ))
        return cls(
            num_frames=spec.get('num_frames', 10),
            objects=objects,
            camera_waypoints=waypoints,
            camera_twist=camera.get('twist'),
            initial_camera=pose_from_dict(camera.get('initial')),
            static_points=static.get('points'),
            num_static_points=static.get('count', 0),
            static_bounds=static.get('bounds', ((-10.0, -10.0, 4.0), (10.0, 10.0, 20.0))),
            static_track_lifetime=static.get('track_lifetime'),
            noise_sigma=spec.get('noise_sigma', 0.0),
            odometry_sigmas=spec.get('odometry_sigmas', (0.0, 0.0)),
            max_features_per_object=spec.get('max_features_per_object', 100),
            rng_seed=rng_seed,
        ).validate()


def _cloud(spec, rng):
    if spec is None:
        spec = {'count': 20, 'extent': (1.0, 1.0, 1.0)}
    if isinstance(spec, dict):
        extent = np.array(spec.get('extent', (1.0, 1.0, 1.0)), dtype=float)
        return rng.uniform(-0.5 * extent, 0.5 * extent, size=(int(spec.get('count', 20)), 3))
    return np.array(spec, dtype=float).reshape(-1, 3)


def load_scene(path, seed=None):
    with open(path) as f:
        data = yaml.safe_load(f) or {}
    return SceneConfig.from_dict(data.get('scene', data), seed=seed)


def load_preset(name):
    """Raw mapping of a packaged preset from ``hybridslam/presets``."""
    try:
        data = get_data(__package__, 'presets/{name}.yaml'.format(name=name))
    except (IOError, OSError):
        raise InvalidConfig('Unknown preset: %s' % name)
    if data is None:
        raise InvalidConfig('Unknown preset: %s' % name)
    return yaml.safe_load(data) or {}


class GroundTruth(object):
    """
    ``frame_motions[j][k]`` carries object j from k-1 to k in the world frame;
    ``cumulative_motions[j][k]`` carries it from its first visible frame ``first_seen[j]`` to k.
    """

    def __init__(self):
        self.camera_poses = []
        self.object_poses = {}
        self.frame_motions = {}
        self.cumulative_motions = {}
        self.first_seen = {}
        self.last_seen = {}
        self.static_points = {}
        self.object_points = {}
        self.track_object = {}

    def object_ids(self):
        return sorted(self.object_poses)

    def world_point(self, object_id, track_id, frame):
        return self.object_poses[object_id][frame].transform_point(self.object_points[object_id][track_id])


class FrameMeasurements(object):

    def __init__(self, frame, static_obs=None, dynamic_obs=None, odometry=None):
        self.frame = frame
        self.static_obs = list(static_obs or ())
        self.dynamic_obs = dict(dynamic_obs or {})
        self.odometry = odometry

    def object_ids(self):
        return sorted(j for j, obs in self.dynamic_obs.items() if obs)

    def static_only(self):
        return FrameMeasurements(self.frame, self.static_obs, {}, self.odometry)

    def for_object(self, object_id):
        return FrameMeasurements(self.frame, (), {object_id: self.dynamic_obs.get(object_id, [])}, self.odometry)

    def __repr__(self):
        return 'FrameMeasurements(frame=%d, static=%d, dynamic=%s)' % (
            self.frame, len(self.static_obs), dict((j, len(o)) for j, o in self.dynamic_obs.items()))


def camera_trajectory(config):
    n = config.num_frames
    if not config.camera_waypoints:
        poses = [config.initial_camera]
        step = exp(config.camera_twist, kind=Motion)
        for _ in range(1, n):
            poses.append(poses[-1].compose(step).as_kind(Pose))
        return poses
    waypoints = config.camera_waypoints
    if len(waypoints) == 1:
        return [waypoints[0]] * n
    segments = len(waypoints) - 1
    bounds = [int(round(s * (n - 1) / float(segments))) for s in range(segments + 1)]
    poses = [waypoints[0]]
    for s in range(segments):
        steps = bounds[s + 1] - bounds[s]
        if steps <= 0:
            continue
        twist = waypoints[s].local(waypoints[s + 1]) / steps
        step = exp(twist, kind=Motion)
        for _ in range(steps):
            poses.append(poses[-1].compose(step).as_kind(Pose))
    return poses


def _noisy(rng, sigma, size):
    if sigma <= 0.0:
        return np.zeros(size)
    return rng.normal(0.0, sigma, size=size)


def generate_scene(config):
    """Returns the ground truth and one FrameMeasurements per frame."""
    config.validate()
    rng = np.random.default_rng(config.rng_seed)
    n = config.num_frames
    gt = GroundTruth()
    gt.camera_poses = camera_trajectory(config)

    static = [p for p in config.static_points]
    if config.num_static_points:
        lo, hi = config.static_bounds
        static.extend(rng.uniform(lo, hi, size=(config.num_static_points, 3)))
    gt.static_points = dict((i, as_point(p)) for i, p in enumerate(static))
    static_lifetime = config.static_track_lifetime
    # [point id, age]; a retired static track is replaced by a fresh landmark
    static_slots = [[i, i % static_lifetime if static_lifetime else 0] for i in sorted(gt.static_points)]
    next_static = len(static)

    next_track = [0]

    def new_track(object_id, body_point):
        track = next_track[0]
        next_track[0] += 1
        gt.object_points[object_id][track] = as_point(body_point)
        gt.track_object[track] = object_id
        return track

    slots = {}
    for obj in config.objects:
        j = obj.object_id
        poses = [obj.initial_pose]
        for k in range(1, n):
            poses.append(poses[-1].compose(exp(obj.twist_at(k), kind=Motion)).as_kind(Pose))
        gt.object_poses[j] = dict(enumerate(poses))
        first, last = obj.visibility
        gt.first_seen[j] = first
        gt.last_seen[j] = last
        gt.frame_motions[j] = dict(
            (k, poses[k].compose(poses[k - 1].inverse()).as_kind(Motion)) for k in range(first + 1, last + 1))
        gt.cumulative_motions[j] = dict(
            (k, poses[k].compose(poses[first].inverse()).as_kind(Motion)) for k in range(first, n))
        gt.object_points[j] = {}
        slots[j] = []

    frames = []
    for k in range(n):
        x_k = gt.camera_poses[k]
        odometry = None
        if k > 0:
            true_odom = gt.camera_poses[k - 1].between(x_k).as_kind(Motion)
            rot, trans = config.odometry_sigmas
            noise = np.concatenate([_noisy(rng, rot, 3), _noisy(rng, trans, 3)])
            odometry = true_odom.compose(exp(noise, kind=Motion))
        if static_lifetime:
            lo, hi = config.static_bounds
            for slot in static_slots:
                if slot[1] >= static_lifetime:
                    gt.static_points[next_static] = as_point(rng.uniform(lo, hi))
                    slot[0], slot[1] = next_static, 0
                    next_static += 1
        static_obs = []
        for slot in static_slots:
            m = gt.static_points[slot[0]]
            static_obs.append((slot[0], x_k.inverse_transform_point(m) + _noisy(rng, config.noise_sigma, 3)))
            slot[1] += 1

        dynamic_obs = {}
        for obj in config.objects:
            j = obj.object_id
            first, last = obj.visibility
            if not first <= k <= last:
                continue
            live = slots[j]
            if not live:
                count = min(len(obj.point_cloud), config.max_features_per_object)
                # staggered ages so tracks retire a few at a time
                live.extend([new_track(j, obj.point_cloud[i]), i % obj.track_lifetime] for i in range(count))
            lo, hi = obj.point_cloud.min(axis=0), obj.point_cloud.max(axis=0)
            for slot in live:
                if slot[1] >= obj.track_lifetime:
                    slot[0] = new_track(j, rng.uniform(lo, hi))
                    slot[1] = 0
            obs = []
            for slot in live:
                m = gt.world_point(j, slot[0], k)
                obs.append((slot[0], x_k.inverse_transform_point(m) + _noisy(rng, config.noise_sigma, 3)))
                slot[1] += 1
            dynamic_obs[j] = obs
        frames.append(FrameMeasurements(k, static_obs, dynamic_obs, odometry))

    log.info('generated scene: {frames} frames, {objects} objects, {static} static points, {tracks} dynamic tracks',
             frames=n, objects=len(config.objects), static=len(gt.static_points), tracks=next_track[0])
    return gt, frames


def ground_truth_frame_motion(gt, object_id, frame):
    """World-frame motion of the object from frame-1 to frame: L_k L_{k-1}^-1."""
    motions = gt.frame_motions.get(object_id)
    if motions is None or frame not in motions:
        raise UnknownObjectError('No motion for object %r at frame %r' % (object_id, frame))
    return motions[frame]
