"""File formats: scene manifests, depth maps, images, correspondences,
feature maps and Gaussian scenes.

Formats (all binary ones little-endian, opened with magic bytes + a version
byte; loaders reject unknown versions):

* Manifest: a single JSON document, grammar documented in the README. Paths
  are resolved relative to the manifest's directory.
* Depth: PFM (float32, grayscale, negative scale = little-endian, rows
  bottom-to-top) or 16-bit grayscale PNG with a ``<path>.scale`` sidecar
  holding the metres-per-unit factor. Non-positive stored values load as
  invalid-mask pixels, never as errors.
* Correspondences: text; header line ``i j count`` then ``u1 v1 u2 v2 conf``
  rows.
* Features: magic ``SAFT``, version, u32 (h, w, d), float32 payload.
* Gaussian scene: magic ``SASC``, version, u32 view count, u64 record count,
  then per-Gaussian records (center 3xf8, opacity f8, covariance upper
  triangle 6xf8, color 3xf8, view id u4, pixel 2xu4).

Depth maps are held as float64 in memory; PFM storage is float32, so a
save->load round trip is bit-exact exactly when values are float32
representable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import FORMAT_VERSION
from .errors import FormatError, ManifestError, ValidationError
from .geom import CameraIntrinsics
from .scene import GaussianScene

FEATURE_MAGIC = b"SAFT"
SCENE_MAGIC = b"SASC"

_SCENE_RECORD = np.dtype(
    [
        ("center", "<f8", (3,)),
        ("opacity", "<f8"),
        ("cov6", "<f8", (6,)),
        ("color", "<f8", (3,)),
        ("view", "<u4"),
        ("pixel", "<u4", (2,)),
    ]
)

_UPPER6 = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


# ---------------------------------------------------------------------------
# depth maps


@dataclass
class DepthMap:
    """Per-pixel metric depth with a validity mask."""

    values: np.ndarray  # (H, W) float64
    valid: np.ndarray  # (H, W) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape or self.values.ndim != 2:
            raise ValidationError(f"depth/valid shape mismatch: {self.values.shape} vs {self.valid.shape}")
        if np.any(self.values[self.valid] <= 0):
            raise ValidationError("valid depth values must be positive")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @staticmethod
    def from_values(values: np.ndarray) -> "DepthMap":
        """Build a map marking non-positive or non-finite entries invalid."""
        v = np.asarray(values, dtype=np.float64)
        return DepthMap(v, np.isfinite(v) & (v > 0))


def bilinear_depth(depth: DepthMap, uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear depth lookup at float pixel coordinates (N, 2).

    Only neighbors with nonzero interpolation weight participate; a lookup is
    flagged bad when any participating neighbor is invalid or out of bounds.
    Returns (values, ok_mask).
    """
    uv = np.asarray(uv, dtype=np.float64)
    u, v = uv[:, 0], uv[:, 1]
    h, w = depth.values.shape
    inside = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.clip(u, 0, w - 1)
    vc = np.clip(v, 0, h - 1)
    u0 = np.floor(uc).astype(np.int64)
    v0 = np.floor(vc).astype(np.int64)
    fu = uc - u0
    fv = vc - v0
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)

    vals = np.zeros(len(uv))
    ok = inside.copy()
    weights = [(v0, u0, (1 - fu) * (1 - fv)), (v0, u1, fu * (1 - fv)), (v1, u0, (1 - fu) * fv), (v1, u1, fu * fv)]
    for yy, xx, ww in weights:
        active = ww > 0
        vals += ww * np.where(active, depth.values[yy, xx], 0.0)
        ok &= ~active | depth.valid[yy, xx]
    return vals, ok


def save_depth(d: DepthMap, path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        data = np.where(d.valid, d.values, 0.0).astype(np.float32)
        _write_pfm(data, path)
    elif path.suffix.lower() == ".png":
        save_depth_png(d, path)
    else:
        raise FormatError(f"unsupported depth extension: {path.suffix}")


def load_depth(path) -> DepthMap:
    path = Path(path)
    if path.suffix.lower() == ".pfm":
        return DepthMap.from_values(_read_pfm(path).astype(np.float64))
    if path.suffix.lower() == ".png":
        return load_depth_png(path)
    raise FormatError(f"unsupported depth extension: {path.suffix}")


def save_depth_png(d: DepthMap, path, scale: float = 0.001) -> None:
    """Quantize to 16-bit PNG, ``stored = round(depth / scale)``; 0 = invalid."""
    raw = np.zeros(d.values.shape, dtype=np.uint16)
    q = np.round(d.values / scale)
    q = np.clip(q, 1, 65535)
    raw[d.valid] = q[d.valid].astype(np.uint16)
    Image.fromarray(raw, mode="I;16").save(path)
    Path(str(path) + ".scale").write_text(f"{scale:.17g}\n")


def load_depth_png(path) -> DepthMap:
    sidecar = Path(str(path) + ".scale")
    if not sidecar.exists():
        raise FormatError(f"missing sidecar scale file: {sidecar}")
    scale = float(sidecar.read_text().strip())
    raw = np.asarray(Image.open(path), dtype=np.float64)
    return DepthMap(raw * scale, raw > 0)


def _write_pfm(data: np.ndarray, path) -> None:
    if data.ndim != 2:
        raise FormatError("PFM writer expects a 2d grayscale array")
    h, w = data.shape
    with open(path, "wb") as f:
        f.write(b"Pf\n")
        f.write(f"{w} {h}\n".encode())
        f.write(b"-1.0\n")
        # PFM stores rows bottom-to-top
        f.write(np.ascontiguousarray(data[::-1]).astype("<f4").tobytes())


def _read_pfm(path) -> np.ndarray:
    with open(path, "rb") as f:
        header = f.readline().strip()
        if header == b"PF":
            raise FormatError(f"{path}: color PFM not supported")
        if header != b"Pf":
            raise FormatError(f"{path}: bad PFM magic {header!r}")
        dims = f.readline().decode()
        m = re.match(r"^\s*(\d+)\s+(\d+)\s*$", dims)
        if not m:
            raise FormatError(f"{path}: malformed PFM dimension line {dims!r}")
        w, h = int(m.group(1)), int(m.group(2))
        scale = float(f.readline().decode().strip())
        dtype = "<f4" if scale < 0 else ">f4"
        payload = f.read(w * h * 4)
        if len(payload) != w * h * 4:
            raise FormatError(f"{path}: truncated PFM payload")
        data = np.frombuffer(payload, dtype=dtype).reshape(h, w)
    return data[::-1].copy()


def save_pfm(data: np.ndarray, path) -> None:
    """Write an arbitrary float grayscale array (confidence, rendered depth)."""
    _write_pfm(np.asarray(data, dtype=np.float32), path)


def load_pfm(path) -> np.ndarray:
    return _read_pfm(path).astype(np.float64)


# ---------------------------------------------------------------------------
# images


def load_image(path) -> np.ndarray:
    """Load an RGB image as float64 (H, W, 3) in [0, 1]."""
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float64)
    return img / 255.0


def save_image(img: np.ndarray, path) -> None:
    """Quantize a float [0, 1] image to 8-bit PNG."""
    q = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(q).save(path)


def quantize_image(img: np.ndarray) -> np.ndarray:
    """The exact save/load quantization applied by :func:`save_image`."""
    q = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    return q.astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# correspondences


@dataclass
class CorrespondenceSet:
    """Pixel matches between a view pair with per-match confidence."""

    i: int
    j: int
    p: np.ndarray  # (M, 2) pixels in view i
    q: np.ndarray  # (M, 2) pixels in view j
    confidence: np.ndarray  # (M,) in (0, 1]

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=np.float64).reshape(-1, 2)
        self.q = np.asarray(self.q, dtype=np.float64).reshape(-1, 2)
        self.confidence = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
        if not (len(self.p) == len(self.q) == len(self.confidence)):
            raise ValidationError("correspondence arrays must share length")
        if np.any(self.confidence <= 0) or np.any(self.confidence > 1):
            raise ValidationError("confidences must lie in (0, 1]")
        seen = {tuple(row) for row in self.p}
        if len(seen) != len(self.p):
            raise ValidationError("duplicate source pixels in correspondence set")

    def __len__(self) -> int:
        return len(self.confidence)

    def validate_bounds(self, size_i: tuple[int, int], size_j: tuple[int, int]) -> None:
        """Check pixels against (width, height) bounds for both views."""
        for name, px, (w, h) in (("p", self.p, size_i), ("q", self.q, size_j)):
            if len(px) and (
                px[:, 0].min() < 0 or px[:, 0].max() > w - 1 or px[:, 1].min() < 0 or px[:, 1].max() > h - 1
            ):
                raise ValidationError(f"{name} pixels fall outside the {w}x{h} image")


def save_correspondences(c: CorrespondenceSet, path) -> None:
    with open(path, "w") as f:
        f.write(f"{c.i} {c.j} {len(c)}\n")
        for k in range(len(c)):
            f.write(
                f"{c.p[k, 0]:.17g} {c.p[k, 1]:.17g} {c.q[k, 0]:.17g} {c.q[k, 1]:.17g} {c.confidence[k]:.17g}\n"
            )


def load_correspondences(path) -> CorrespondenceSet:
    with open(path) as f:
        header = f.readline().split()
        if len(header) != 3:
            raise FormatError(f"{path}: header must be 'i j count'")
        i, j, count = int(header[0]), int(header[1]), int(header[2])
        rows = np.loadtxt(f, dtype=np.float64, ndmin=2) if count else np.zeros((0, 5))
    if rows.shape != (count, 5):
        raise FormatError(f"{path}: expected {count} rows of 5 columns, got {rows.shape}")
    return CorrespondenceSet(i, j, rows[:, 0:2], rows[:, 2:4], rows[:, 4])


# ---------------------------------------------------------------------------
# feature maps


@dataclass
class FeatureMap:
    """Unit-norm descriptor grid of shape (h, w, d)."""

    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValidationError(f"feature map must be (h, w, d), got {self.values.shape}")
        norms = np.linalg.norm(self.values, axis=-1)
        if np.any(norms < 1e-12):
            raise ValidationError("feature map contains zero-norm cells")
        if np.abs(norms - 1.0).max() > 1e-6:
            self.values = self.values / norms[..., None]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape


def save_features(fm: FeatureMap, path) -> None:
    h, w, d = fm.shape
    with open(path, "wb") as f:
        f.write(FEATURE_MAGIC)
        f.write(bytes([FORMAT_VERSION]))
        f.write(np.array([h, w, d], dtype="<u4").tobytes())
        f.write(fm.values.astype("<f4").tobytes())


def load_features(path) -> FeatureMap:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != FEATURE_MAGIC:
            raise FormatError(f"{path}: bad feature magic {magic!r}")
        version = f.read(1)[0]
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported feature format version {version}")
        h, w, d = np.frombuffer(f.read(12), dtype="<u4")
        payload = f.read(int(h) * int(w) * int(d) * 4)
        if len(payload) != h * w * d * 4:
            raise FormatError(f"{path}: truncated feature payload")
        values = np.frombuffer(payload, dtype="<f4").reshape(h, w, d)
    return FeatureMap(values.astype(np.float64))


# ---------------------------------------------------------------------------
# Gaussian scenes


def save_scene(scene: GaussianScene, path) -> None:
    n = len(scene)
    rec = np.zeros(n, dtype=_SCENE_RECORD)
    rec["center"] = scene.centers
    rec["opacity"] = scene.opacities
    for k, (a, b) in enumerate(_UPPER6):
        rec["cov6"][:, k] = scene.covariances[:, a, b]
    rec["color"] = scene.colors
    rec["view"] = scene.view_ids
    rec["pixel"] = scene.pixels
    with open(path, "wb") as f:
        f.write(SCENE_MAGIC)
        f.write(bytes([FORMAT_VERSION]))
        f.write(np.array([scene.n_views], dtype="<u4").tobytes())
        f.write(np.array([n], dtype="<u8").tobytes())
        f.write(rec.tobytes())


def load_scene(path) -> GaussianScene:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != SCENE_MAGIC:
            raise FormatError(f"{path}: bad scene magic {magic!r}")
        version = f.read(1)[0]
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported scene format version {version}")
        n_views = int(np.frombuffer(f.read(4), dtype="<u4")[0])
        n = int(np.frombuffer(f.read(8), dtype="<u8")[0])
        rec = np.frombuffer(f.read(n * _SCENE_RECORD.itemsize), dtype=_SCENE_RECORD)
        if len(rec) != n:
            raise FormatError(f"{path}: truncated scene payload")
    cov = np.zeros((n, 3, 3))
    for k, (a, b) in enumerate(_UPPER6):
        cov[:, a, b] = rec["cov6"][:, k]
        cov[:, b, a] = rec["cov6"][:, k]
    return GaussianScene(
        centers=rec["center"].astype(np.float64),
        opacities=rec["opacity"].astype(np.float64),
        covariances=cov,
        colors=rec["color"].astype(np.float64),
        view_ids=rec["view"].astype(np.int64),
        pixels=rec["pixel"].astype(np.int64),
        n_views=n_views,
    )


# ---------------------------------------------------------------------------
# manifest


@dataclass
class ViewEntry:
    image: Path
    depth: Path
    intrinsics: CameraIntrinsics
    features: Path | None = None
    gt_pose: Path | None = None
    role: str = "context"


@dataclass
class PairEntry:
    i: int
    j: int
    correspondences: Path


@dataclass
class SceneManifest:
    views: list[ViewEntry]
    pairs: list[PairEntry]
    near: float
    far: float
    root: Path = field(default_factory=Path)

    @property
    def n_views(self) -> int:
        return len(self.views)

    def context_indices(self) -> list[int]:
        return [k for k, v in enumerate(self.views) if v.role == "context"]

    def target_indices(self) -> list[int]:
        return [k for k, v in enumerate(self.views) if v.role == "target"]


def _require(d: dict, key: str, where: str):
    if key not in d:
        raise ManifestError("schema", f"{where}: missing required field '{key}'")
    return d[key]


def load_manifest(path) -> SceneManifest:
    """Load and fully validate a scene manifest; all referenced files must exist."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise ManifestError("missing-file", f"manifest not found: {path}")
    except json.JSONDecodeError as e:
        raise ManifestError("parse", f"{path}:{e.lineno}:{e.colno}: {e.msg}")
    root = path.parent

    near = float(_require(doc, "near", str(path)))
    far = float(_require(doc, "far", str(path)))
    if not (0 < near < far):
        raise ManifestError("bounds", f"require 0 < near < far, got near={near} far={far}")

    views = []
    for k, v in enumerate(_require(doc, "views", str(path))):
        where = f"views[{k}]"
        intr = _require(v, "intrinsics", where)
        try:
            intrinsics = CameraIntrinsics(
                fx=float(_require(intr, "fx", where)),
                fy=float(_require(intr, "fy", where)),
                cx=float(_require(intr, "cx", where)),
                cy=float(_require(intr, "cy", where)),
                width=int(_require(intr, "width", where)),
                height=int(_require(intr, "height", where)),
            )
        except Exception as e:
            if isinstance(e, ManifestError):
                raise
            raise ManifestError("schema", f"{where}: bad intrinsics: {e}")
        role = v.get("role", "context")
        if role not in ("context", "target"):
            raise ManifestError("schema", f"{where}: role must be 'context' or 'target', got {role!r}")
        entry = ViewEntry(
            image=root / _require(v, "image", where),
            depth=root / _require(v, "depth", where),
            intrinsics=intrinsics,
            features=(root / v["features"]) if v.get("features") else None,
            gt_pose=(root / v["gt_pose"]) if v.get("gt_pose") else None,
            role=role,
        )
        for p in (entry.image, entry.depth, entry.features, entry.gt_pose):
            if p is not None and not p.exists():
                raise ManifestError("missing-file", f"{where}: referenced file does not exist: {p}")
        if role == "target" and entry.gt_pose is None:
            raise ManifestError("target-pose", f"{where}: target views require a gt_pose")
        views.append(entry)
    if not views:
        raise ManifestError("schema", f"{path}: manifest declares no views")

    contexts = {k for k, v in enumerate(views) if v.role == "context"}
    pairs = []
    for k, pr in enumerate(doc.get("pairs", [])):
        where = f"pairs[{k}]"
        i, j = int(_require(pr, "i", where)), int(_require(pr, "j", where))
        if not (0 <= i < len(views)) or not (0 <= j < len(views)):
            raise ManifestError("pair-index", f"{where}: pair ({i}, {j}) out of range for {len(views)} views")
        if i >= j:
            raise ManifestError("pair-order", f"{where}: pairs require i < j, got ({i}, {j})")
        if i not in contexts or j not in contexts:
            raise ManifestError("pair-index", f"{where}: pair ({i}, {j}) references a target view")
        cpath = root / _require(pr, "correspondences", where)
        if not cpath.exists():
            raise ManifestError("missing-file", f"{where}: correspondence file does not exist: {cpath}")
        pairs.append(PairEntry(i, j, cpath))

    return SceneManifest(views=views, pairs=pairs, near=near, far=far, root=root)


@dataclass
class LoadedView:
    """A fully loaded view: image, depth, intrinsics, optional features."""

    image: np.ndarray
    depth: DepthMap
    intrinsics: CameraIntrinsics
    features: FeatureMap | None
    role: str


def load_view(manifest: SceneManifest, index: int) -> LoadedView:
    v = manifest.views[index]
    image = load_image(v.image)
    depth = load_depth(v.depth)
    h, w = image.shape[:2]
    if (v.intrinsics.height, v.intrinsics.width) != (h, w):
        raise ValidationError(
            f"view {index}: image is {w}x{h} but intrinsics declare "
            f"{v.intrinsics.width}x{v.intrinsics.height}"
        )
    if depth.values.shape != (h, w):
        raise ValidationError(f"view {index}: depth map {depth.values.shape} does not match image {h, w}")
    features = load_features(v.features) if v.features else None
    return LoadedView(image=image, depth=depth, intrinsics=v.intrinsics, features=features, role=v.role)


def load_pair_correspondences(manifest: SceneManifest, entry: PairEntry) -> CorrespondenceSet:
    c = load_correspondences(entry.correspondences)
    if (c.i, c.j) != (entry.i, entry.j):
        raise ValidationError(
            f"correspondence file {entry.correspondences} declares pair ({c.i}, {c.j}), "
            f"manifest says ({entry.i}, {entry.j})"
        )
    ii, jj = manifest.views[entry.i].intrinsics, manifest.views[entry.j].intrinsics
    c.validate_bounds((ii.width, ii.height), (jj.width, jj.height))
    return c
