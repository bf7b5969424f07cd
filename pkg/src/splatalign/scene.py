"""Pixel-aligned Gaussian construction and scene merging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, EmptySceneError, ValidationError
from .geom import CameraIntrinsics, Pose, backproject_grid


@dataclass
class GaussianParams:
    """Deterministic mapping from confidence/depth to Gaussian parameters."""

    sigma_max: float = 0.95  # opacity at full confidence
    opacity_eps: float = 1e-4  # keeps opacity strictly below 1
    pixel_radius: float = 1.0  # footprint radius in pixels at the Gaussian's depth
    k_z: float = 1.0  # depth-axis scale relative to the in-plane scale


@dataclass
class GaussianScene:
    """Flat, array-of-structs collection of 3D Gaussians with provenance."""

    centers: np.ndarray  # (N, 3) world frame
    opacities: np.ndarray  # (N,) in [0, 1)
    covariances: np.ndarray  # (N, 3, 3) SPD
    colors: np.ndarray  # (N, 3) in [0, 1]
    view_ids: np.ndarray  # (N,) source view per Gaussian
    pixels: np.ndarray  # (N, 2) source pixel (u, v)
    n_views: int

    def __post_init__(self):
        n = len(self.centers)
        shapes = {
            "centers": (self.centers.shape, (n, 3)),
            "opacities": (self.opacities.shape, (n,)),
            "covariances": (self.covariances.shape, (n, 3, 3)),
            "colors": (self.colors.shape, (n, 3)),
            "view_ids": (self.view_ids.shape, (n,)),
            "pixels": (self.pixels.shape, (n, 2)),
        }
        for name, (got, want) in shapes.items():
            if got != want:
                raise ValidationError(f"scene field {name} has shape {got}, expected {want}")

    def __len__(self) -> int:
        return len(self.centers)

    @property
    def per_view_counts(self) -> np.ndarray:
        return np.bincount(self.view_ids, minlength=self.n_views)

    @property
    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if len(self) == 0:
            z = np.zeros(3)
            return z, z
        return self.centers.min(axis=0), self.centers.max(axis=0)


def build_view_gaussians(
    image: np.ndarray,
    depth,
    pose: Pose,
    intr: CameraIntrinsics,
    confidence: np.ndarray,
    params: GaussianParams | None = None,
    view_id: int = 0,
) -> GaussianScene:
    """One Gaussian per valid-depth pixel of a single view.

    Center: world-frame back-projection of the pixel at its depth. Opacity:
    ``clamp(sigma_max * confidence, 0, 1 - eps)``. Covariance: a disc of
    radius ``pixel_radius`` pixels at the Gaussian's depth, axis-aligned in
    the camera frame and rotated into the world frame. Color: the image RGB
    at the pixel.
    """
    params = params or GaussianParams()
    h, w = depth.values.shape
    if image.shape[:2] != (h, w):
        raise DimensionMismatchError(f"image {image.shape[:2]} vs depth {(h, w)}")
    if confidence.shape != (h, w):
        raise DimensionMismatchError(f"confidence {confidence.shape} vs depth {(h, w)}")

    mask = depth.valid
    cam_pts = backproject_grid(depth.values, intr)[mask]
    world = (cam_pts - pose.translation) @ pose.rotation  # R^T (x - t) per row

    d = depth.values[mask]
    s_xy = params.pixel_radius * d / intr.fx
    # camera-frame diag(s^2, s^2, (k_z s)^2) rotated into world: R^T D R
    Rt = pose.rotation.T
    scales = np.stack([s_xy**2, s_xy**2, (params.k_z * s_xy) ** 2], axis=-1)
    cov = np.einsum("ab,nb,cb->nac", Rt, scales, Rt)

    opac = np.clip(params.sigma_max * confidence[mask], 0.0, 1.0 - params.opacity_eps)
    colors = image[mask]

    vv, uu = np.nonzero(mask)
    return GaussianScene(
        centers=world,
        opacities=opac,
        covariances=cov,
        colors=np.clip(colors, 0.0, 1.0),
        view_ids=np.full(len(d), view_id, dtype=np.int64),
        pixels=np.stack([uu, vv], axis=-1).astype(np.int64),
        n_views=view_id + 1,
    )


def merge_scene(per_view: list[GaussianScene]) -> GaussianScene:
    """Concatenate per-view Gaussian sets, preserving per-view order."""
    if not per_view or sum(len(s) for s in per_view) == 0:
        raise EmptySceneError("merge produced an empty scene")
    n_views = max(s.n_views for s in per_view)
    return GaussianScene(
        centers=np.concatenate([s.centers for s in per_view]),
        opacities=np.concatenate([s.opacities for s in per_view]),
        covariances=np.concatenate([s.covariances for s in per_view]),
        colors=np.concatenate([s.colors for s in per_view]),
        view_ids=np.concatenate([s.view_ids for s in per_view]),
        pixels=np.concatenate([s.pixels for s in per_view]),
        n_views=n_views,
    )
