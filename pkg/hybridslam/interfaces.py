from zope.interface import Interface, Attribute


class ISmoother(Interface):
    """An incremental nonlinear least-squares solver over a growing factor graph"""

    params = Attribute("The smoother's parameters")

    def update(new_factors=(), new_values=None, remove_indices=(), constrained_keys=None, frame=None):
        """Add factors and variables, optionally remove factors, and re-solve.

        Returns a tuple of the current estimate and the SmootherStats of this update.
        """

    def calculate_estimate():
        """Return the current estimate as Values"""

    def relinearization_events():
        """Return the keys relinearized during the last update"""

    def marginal_covariance(key):
        """Return the marginal covariance of a single variable"""


class IFormulation(Interface):
    """Builds new factors and variables for each incoming frame of measurements"""

    name = Attribute("Short formulation name used in reports")

    def process_frame(estimate, measurements):
        """Return a FrameDelta for the given frame"""

    def camera_trajectory(estimate):
        """Return frame -> camera Pose from an estimate"""

    def frame_motions(estimate):
        """Return object_id -> {frame: per-frame world Motion} from an estimate"""


class IRunner(Interface):
    """Feeds a stream of frames through a formulation and a solver"""

    def process_frame(measurements):
        """Consume one frame of measurements"""

    def estimate():
        """Return the current estimate"""
