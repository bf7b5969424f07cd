"""splatalign: pose-free multi-view alignment and pixel-aligned Gaussian scenes.

Reconstructs a renderable 3D Gaussian scene from sparse unposed views given
per-view metric depth maps and cross-view 2D correspondences. The pipeline is
coarse pairwise alignment -> pose synchronization -> geometry confidence ->
scene construction -> gradient-based fine alignment -> rendering/evaluation.
"""

__version__ = "0.1.0"

FORMAT_VERSION = 1

from .geom import CameraIntrinsics, Pose  # noqa: F401
