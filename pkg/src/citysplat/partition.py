"""Scene contraction, uniform block division, training-data assignment,
empty-block bound enlargement, manifest export and block fusion.

World positions are first normalized against a foreground box, then warped by
a radial contraction so the unbounded background lands inside [-2, 2]^3. The
contracted cube is divided into a uniform grid of blocks; each Gaussian
belongs to exactly one block. Training images are assigned to a block either
because removing the block visibly changes the rendered image (SSIM test) or
because the camera center sits inside the block.
"""

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ._util import atomic_write_text
from .core import CameraView, GaussianCloud
from .errors import DataError
from .metrics import l_ssim
from .render import RenderSettings, rasterize

__all__ = [
    "ContractionMap",
    "BlockGrid",
    "AssignmentMatrix",
    "normalize_position",
    "contract",
    "uncontract",
    "grid_partition",
    "block_of_points",
    "bounds_contain",
    "assign_b1",
    "assign_b2",
    "assign",
    "enlarge_bounds",
    "export_manifests",
    "import_manifests",
    "fuse",
]

ENLARGE_FACTOR = 1.2
# suggested fine-tuning hyperparameters exported with each block manifest:
# position/scaling learning-rate multipliers and schedule length
POSITION_LR_SCALE = 0.4
SCALE_LR_SCALE = 0.8
FINE_TUNE_ITERATIONS = 30_000


@dataclass(frozen=True)
class ContractionMap:
    """Foreground box whose interior normalizes to [-1, 1]^3."""

    p_min: np.ndarray
    p_max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.p_min, dtype=np.float64).reshape(3).copy()
        hi = np.asarray(self.p_max, dtype=np.float64).reshape(3).copy()
        if not (np.isfinite(lo).all() and np.isfinite(hi).all()):
            raise ValueError("foreground bounds must be finite")
        if not (hi > lo).all():
            raise ValueError("p_max must exceed p_min on every axis")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "p_min", lo)
        object.__setattr__(self, "p_max", hi)

    @classmethod
    def from_config(cls, config, cloud: GaussianCloud) -> "ContractionMap":
        """Foreground from config x-y bounds; the height range comes from the
        scene itself unless the config carries a third component."""
        lo = list(config.foreground_min)
        hi = list(config.foreground_max)
        if len(lo) == 2:
            z0, z1 = _z_range(cloud)
            lo.append(z0)
            hi.append(z1)
        return cls(np.array(lo), np.array(hi))

    @classmethod
    def central_third(cls, cloud: GaussianCloud) -> "ContractionMap":
        """Foreground = central third of the scene's x-y extent, full height."""
        if cloud.count == 0:
            raise DataError("cannot derive a foreground box from an empty cloud")
        lo = cloud.positions.min(axis=0)
        hi = cloud.positions.max(axis=0)
        center = 0.5 * (lo + hi)
        sixth = np.maximum((hi - lo) / 6.0, 1e-6)
        z0, z1 = _z_range(cloud)
        return cls(
            np.array([center[0] - sixth[0], center[1] - sixth[1], z0]),
            np.array([center[0] + sixth[0], center[1] + sixth[1], z1]),
        )


def _z_range(cloud: GaussianCloud):
    if cloud.count == 0:
        raise DataError("cannot derive a height range from an empty cloud")
    z0 = float(cloud.positions[:, 2].min())
    z1 = float(cloud.positions[:, 2].max())
    if z1 <= z0:
        z1 = z0 + 1e-6  # flat scene; keep the box non-degenerate
    return z0, z1


def normalize_position(p: np.ndarray, cmap: ContractionMap) -> np.ndarray:
    """Affine map sending the foreground box onto [-1, 1]^3; shape-preserving
    over any (..., 3) input."""
    p = np.asarray(p, dtype=np.float64)
    return 2.0 * (p - cmap.p_min) / (cmap.p_max - cmap.p_min) - 1.0


def contract(p_hat: np.ndarray) -> np.ndarray:
    """Radial contraction in the max norm: identity inside the unit cube,
    (2 - 1/m) * p/m outside with m the max-norm radius. Output lies in
    (-2, 2)^3 for finite input."""
    p = np.asarray(p_hat, dtype=np.float64)
    if not np.isfinite(p).all():
        raise ValueError("contract requires finite coordinates")
    m = np.abs(p).max(axis=-1, keepdims=True)
    safe = np.maximum(m, 1.0)
    return np.where(m <= 1.0, p, (2.0 - 1.0 / safe) * p / safe)


def uncontract(c: np.ndarray) -> np.ndarray:
    """Inverse of `contract`. Coordinates on the cube surface (max norm
    exactly 2) map to infinity along their nonzero components."""
    c = np.asarray(c, dtype=np.float64)
    m = np.abs(c).max(axis=-1, keepdims=True)
    if (m > 2.0).any():
        raise ValueError("contracted coordinates cannot exceed 2 in max norm")
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(m <= 1.0, 1.0, 1.0 / (m * (2.0 - m)))
        return np.where(c == 0.0, 0.0, c * factor)


def denormalize_position(p_hat: np.ndarray, cmap: ContractionMap) -> np.ndarray:
    p_hat = np.asarray(p_hat, dtype=np.float64)
    return cmap.p_min + 0.5 * (p_hat + 1.0) * (cmap.p_max - cmap.p_min)


def _full_dims(dims) -> tuple:
    dims = tuple(int(d) for d in dims)
    if len(dims) == 2:
        dims = dims + (1,)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ValueError("block dims need 2 or 3 entries, all >= 1")
    return dims


def _bin(c: np.ndarray, n: int) -> np.ndarray:
    # lower-inclusive uniform bins over [-2, 2]; the value 2 joins the top bin
    i = np.floor((c + 2.0) / 4.0 * n).astype(np.int64)
    return np.clip(i, 0, n - 1)


def block_of_points(contracted: np.ndarray, dims) -> np.ndarray:
    """Block index per contracted point; the canonical binning shared by
    partitioning and fusion."""
    nx, ny, nz = _full_dims(dims)
    c = np.asarray(contracted, dtype=np.float64).reshape(-1, 3)
    ix = _bin(c[:, 0], nx)
    iy = _bin(c[:, 1], ny)
    iz = _bin(c[:, 2], nz) if nz > 1 else np.zeros(len(c), dtype=np.int64)
    return ix + nx * (iy + ny * iz)


def bounds_contain(points: np.ndarray, bounds_min, bounds_max) -> np.ndarray:
    """Componentwise lower-inclusive, upper-exclusive box test in contracted
    space; an upper bound sitting on the cube surface (=2) is inclusive so the
    topmost cells are closed."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    lo = np.asarray(bounds_min, dtype=np.float64)
    hi = np.asarray(bounds_max, dtype=np.float64)
    below = np.where(hi == 2.0, p <= hi, p < hi)
    return ((p >= lo) & below).all(axis=1)


@dataclass(frozen=True)
class BlockGrid:
    """Uniform division of the contracted cube, with per-Gaussian membership.

    Bounds are stored per block as contracted-space boxes; unpartitioned axes
    span the full [-2, 2]. Membership assigns every Gaussian to exactly one
    block by lower-inclusive binning of its contracted position.
    """

    map: ContractionMap
    dims: tuple
    bounds_min: np.ndarray  # (J, 3) contracted
    bounds_max: np.ndarray  # (J, 3)
    membership: np.ndarray  # (K,) block index per Gaussian
    counts: np.ndarray      # (J,)
    contracted: np.ndarray  # (K, 3) contracted Gaussian positions

    @property
    def n_blocks(self) -> int:
        return self.bounds_min.shape[0]

    def members(self, j: int) -> np.ndarray:
        return np.nonzero(self.membership == j)[0]


def grid_partition(cloud: GaussianCloud, cmap: ContractionMap, dims) -> BlockGrid:
    nx, ny, nz = _full_dims(dims)
    contracted = contract(normalize_position(cloud.positions, cmap))
    membership = block_of_points(contracted, (nx, ny, nz))

    n_blocks = nx * ny * nz
    edges = lambda n: np.linspace(-2.0, 2.0, n + 1)
    ex, ey, ez = edges(nx), edges(ny), edges(nz)
    j = np.arange(n_blocks)
    ix = j % nx
    iy = (j // nx) % ny
    iz = j // (nx * ny)
    bounds_min = np.stack([ex[ix], ey[iy], ez[iz]], axis=1)
    bounds_max = np.stack([ex[ix + 1], ey[iy + 1], ez[iz + 1]], axis=1)
    if nz == 1:
        bounds_min[:, 2] = -2.0
        bounds_max[:, 2] = 2.0

    counts = np.bincount(membership, minlength=n_blocks)
    return BlockGrid(
        map=cmap, dims=(nx, ny) if nz == 1 else (nx, ny, nz),
        bounds_min=bounds_min, bounds_max=bounds_max,
        membership=membership, counts=counts, contracted=contracted,
    )


def enlarge_bounds(j: int, grid: BlockGrid, min_count: int,
                   factor: float = ENLARGE_FACTOR):
    """Grow block j's box symmetrically about its center until it contains at
    least `min_count` Gaussians, clipping to the contracted cube. Used only
    for data assignment; block membership is untouched."""
    if min_count <= 0:
        raise ValueError("min_count must be positive")
    lo = grid.bounds_min[j].copy()
    hi = grid.bounds_max[j].copy()
    total = grid.contracted.shape[0]
    if total < min_count:
        warnings.warn(
            f"scene holds {total} Gaussians, fewer than the enlargement "
            f"threshold {min_count}; using the whole contracted cube"
        )
        return np.full(3, -2.0), np.full(3, 2.0)
    while bounds_contain(grid.contracted, lo, hi).sum() < min_count:
        if (lo == -2.0).all() and (hi == 2.0).all():
            break
        center = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo) * factor
        lo = np.maximum(center - half, -2.0)
        hi = np.minimum(center + half, 2.0)
    return lo, hi


@dataclass(frozen=True)
class AssignmentMatrix:
    """Boolean pose-to-block assignment with provenance.

    entries[i, j] is true iff the SSIM contribution test (B1) or the
    camera-containment test (B2) holds for pose i against block j, evaluated
    under the recorded per-block bounds (original cells, or enlarged ones for
    blocks that would otherwise receive no poses). provenance[i, j] is one of
    "", "B1", "B2", "B1+B2".
    """

    entries: np.ndarray
    provenance: np.ndarray
    bounds_min_used: np.ndarray
    bounds_max_used: np.ndarray
    image_ids: tuple
    unassignable: tuple  # (image_id, reason) pairs

    @property
    def n_poses(self) -> int:
        return self.entries.shape[0]

    @property
    def n_blocks(self) -> int:
        return self.entries.shape[1]

    def images_for_block(self, j: int) -> list:
        return [self.image_ids[i] for i in np.nonzero(self.entries[:, j])[0]]

    def blocks_for_image(self, image_id) -> list:
        i = self.image_ids.index(image_id)
        return list(np.nonzero(self.entries[i])[0])


def _pose_view(pose, index: int):
    """Accept either a bare CameraView or a record with .view and .image_id."""
    if isinstance(pose, CameraView):
        return pose, index
    return pose.view, pose.image_id


def _scaled_camera(cam: CameraView, scale: float) -> CameraView:
    if scale == 1.0:
        return cam
    return CameraView(
        width=max(1, int(round(cam.width * scale))),
        height=max(1, int(round(cam.height * scale))),
        fx=cam.fx * scale, fy=cam.fy * scale,
        cx=cam.cx * scale, cy=cam.cy * scale,
        rotation_w2c=cam.rotation_w2c, translation_w2c=cam.translation_w2c,
    )


def _default_renderer(settings: Optional[RenderSettings]) -> Callable:
    settings = settings or RenderSettings()
    return lambda cloud, cam: rasterize(cloud, cam, settings)


def assign_b1(pose: CameraView, j: int, cloud: GaussianCloud, grid: BlockGrid,
              epsilon: float, renderer: Optional[Callable] = None,
              bounds=None) -> bool:
    """Contribution test: does removing block j's members change the render
    of this pose by more than epsilon in SSIM loss?"""
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    renderer = renderer or _default_renderer(None)
    if bounds is None:
        member_mask = grid.membership == j
    else:
        member_mask = bounds_contain(grid.contracted, bounds[0], bounds[1])
    if not member_mask.any():
        return False  # identical clouds render identically; the loss is zero
    full = renderer(cloud, pose)
    rest = renderer(cloud.take(np.nonzero(~member_mask)[0]), pose)
    return l_ssim(full, rest) > epsilon


def assign_b2(pose: CameraView, j: int, grid: BlockGrid, bounds=None) -> bool:
    """Containment test: does the camera center fall inside block j?"""
    center = contract(normalize_position(pose.camera_center, grid.map))
    if bounds is None:
        lo, hi = grid.bounds_min[j], grid.bounds_max[j]
    else:
        lo, hi = bounds
    return bool(bounds_contain(center[None], lo, hi)[0])


def assign(poses: Sequence, grid: BlockGrid, cloud: GaussianCloud,
           epsilon: float, *, settings: Optional[RenderSettings] = None,
           assignment_scale: float = 0.25, enlarge_min_count: int = 25_000,
           renderer: Optional[Callable] = None) -> AssignmentMatrix:
    """Assign every pose to the blocks it should train: contribution OR
    containment. Blocks that end up with no poses retry under enlarged bounds.

    Contribution renders run at `assignment_scale` linear resolution. A pose
    whose renders fail is marked unassignable with the failure reason and
    assigned to nothing.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    renderer = renderer or _default_renderer(settings)
    n_blocks = grid.n_blocks
    views = []
    ids = []
    for i, pose in enumerate(poses):
        view, image_id = _pose_view(pose, i)
        views.append(view)
        ids.append(image_id)

    entries = np.zeros((len(views), n_blocks), dtype=bool)
    provenance = np.full((len(views), n_blocks), "", dtype="<U5")
    bounds_min_used = grid.bounds_min.copy()
    bounds_max_used = grid.bounds_max.copy()
    unassignable = []

    rest_clouds = {
        j: cloud.take(np.nonzero(grid.membership != j)[0])
        for j in range(n_blocks) if grid.counts[j] > 0
    }

    def evaluate(i: int, j: int, full_img, scaled_cam, rest_cloud, bounds):
        b1 = False
        if full_img is not None and rest_cloud is not None:
            b1 = l_ssim(full_img, renderer(rest_cloud, scaled_cam)) > epsilon
        b2 = assign_b2(views[i], j, grid, bounds=bounds)
        if b1 or b2:
            entries[i, j] = True
            provenance[i, j] = "B1+B2" if (b1 and b2) else ("B1" if b1 else "B2")
        else:
            entries[i, j] = False
            provenance[i, j] = ""

    scaled_views = [_scaled_camera(v, assignment_scale) for v in views]
    full_images = [None] * len(views)
    failed = set()

    def mark_failed(i, exc):
        failed.add(i)
        unassignable.append((ids[i], str(exc)))
        entries[i, :] = False
        provenance[i, :] = ""

    for i, scaled in enumerate(scaled_views):
        try:
            full_images[i] = renderer(cloud, scaled)
        except Exception as exc:  # a broken pose must not sink the batch
            mark_failed(i, exc)

    for j in range(n_blocks):
        rest = rest_clouds.get(j)
        for i, scaled in enumerate(scaled_views):
            if i in failed:
                continue
            try:
                evaluate(i, j, full_images[i], scaled, rest, None)
            except Exception as exc:
                mark_failed(i, exc)

    # blocks no pose trains: grow their bounds and retry both tests
    for j in range(n_blocks):
        if entries[:, j].any():
            continue
        lo, hi = enlarge_bounds(j, grid, enlarge_min_count)
        bounds_min_used[j] = lo
        bounds_max_used[j] = hi
        member_mask = bounds_contain(grid.contracted, lo, hi)
        rest = cloud.take(np.nonzero(~member_mask)[0]) if member_mask.any() else None
        for i, scaled in enumerate(scaled_views):
            if i in failed:
                continue
            try:
                evaluate(i, j, full_images[i], scaled, rest, (lo, hi))
            except Exception as exc:
                mark_failed(i, exc)

    return AssignmentMatrix(
        entries=entries, provenance=provenance,
        bounds_min_used=bounds_min_used, bounds_max_used=bounds_max_used,
        image_ids=tuple(ids), unassignable=tuple(unassignable),
    )


# ---------------------------------------------------------------------------
# manifests


def _floats(values) -> list:
    return [float(v) for v in values]


def _plain(v):
    """Numpy scalars down to builtin types for JSON."""
    return v.item() if isinstance(v, np.generic) else v


def _world_bounds(lo: np.ndarray, hi: np.ndarray, cmap: ContractionMap):
    """World-space box covering the inverse contraction of a contracted box.

    Axes whose cell spans the whole cube (unpartitioned, or a 1-wide grid)
    are first clipped to the foreground slab [-1, 1]: their full preimage is
    unbounded in every direction, which would drown the informative axes, so
    the reported box covers the block's foreground region instead. Components
    reaching the cube surface come back infinite."""
    full = (lo == -2.0) & (hi == 2.0)
    lo = np.where(full, -1.0, lo)
    hi = np.where(full, 1.0, hi)
    corners = np.array([
        [x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])
    ])
    world = denormalize_position(uncontract(corners), cmap)
    return world.min(axis=0), world.max(axis=0)


def export_manifests(grid: BlockGrid, assignment: AssignmentMatrix, config,
                     out_dir) -> None:
    """Write one training manifest per block plus a grid summary.

    Each manifest carries the block's bounds (contracted and world space),
    its member-Gaussian indices, the assigned image ids and suggested
    fine-tuning hyperparameters. Together the manifests partition the
    Gaussian index set.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for j in range(grid.n_blocks):
        wlo, whi = _world_bounds(grid.bounds_min[j], grid.bounds_max[j], grid.map)
        manifest = {
            "block_id": j,
            "bounds_contracted": {
                "min": _floats(grid.bounds_min[j]), "max": _floats(grid.bounds_max[j]),
            },
            "bounds_world": {"min": _floats(wlo), "max": _floats(whi)},
            "gaussian_indices": [int(i) for i in grid.members(j)],
            "image_ids": [_plain(v) for v in assignment.images_for_block(j)],
            "hyperparameters": {
                "pos_lr_scale": POSITION_LR_SCALE,
                "scale_lr_scale": SCALE_LR_SCALE,
                "iterations": FINE_TUNE_ITERATIONS,
            },
        }
        atomic_write_text(out / f"block_{j}.json", json.dumps(manifest, indent=2))

    summary = {
        "dims": [int(d) for d in grid.dims],
        "foreground_min": _floats(grid.map.p_min),
        "foreground_max": _floats(grid.map.p_max),
        "image_ids": [_plain(v) for v in assignment.image_ids],
        "bounds_min": [_floats(b) for b in grid.bounds_min],
        "bounds_max": [_floats(b) for b in grid.bounds_max],
        "bounds_min_used": [_floats(b) for b in assignment.bounds_min_used],
        "bounds_max_used": [_floats(b) for b in assignment.bounds_max_used],
        "provenance": [
            [int(i), int(j), str(assignment.provenance[i, j])]
            for i, j in zip(*np.nonzero(assignment.entries))
        ],
        "unassignable": [[_plain(u[0]), str(u[1])] for u in assignment.unassignable],
    }
    atomic_write_text(out / "grid.json", json.dumps(summary, indent=2))


def import_manifests(out_dir) -> AssignmentMatrix:
    """Rebuild the assignment matrix written by `export_manifests`."""
    out = Path(out_dir)
    try:
        summary = json.loads((out / "grid.json").read_text())
    except FileNotFoundError:
        raise DataError(f"missing grid summary in {out}") from None
    image_ids = summary["image_ids"]
    n_blocks = len(summary["bounds_min_used"])
    entries = np.zeros((len(image_ids), n_blocks), dtype=bool)
    provenance = np.full((len(image_ids), n_blocks), "", dtype="<U5")
    index_of = {img: i for i, img in enumerate(image_ids)}
    for j in range(n_blocks):
        path = out / f"block_{j}.json"
        if not path.exists():
            raise DataError(f"missing manifest {path.name} in {out}")
        manifest = json.loads(path.read_text())
        for img in manifest["image_ids"]:
            entries[index_of[img], j] = True
    for i, j, tag in summary["provenance"]:
        provenance[i, j] = tag
    if not np.array_equal(provenance != "", entries):
        raise DataError("manifest image lists disagree with recorded provenance")
    return AssignmentMatrix(
        entries=entries, provenance=provenance,
        bounds_min_used=np.array(summary["bounds_min_used"], dtype=np.float64),
        bounds_max_used=np.array(summary["bounds_max_used"], dtype=np.float64),
        image_ids=tuple(image_ids),
        unassignable=tuple((u[0], u[1]) for u in summary["unassignable"]),
    )


def load_grid(out_dir, cloud: Optional[GaussianCloud] = None) -> BlockGrid:
    """Rebuild the spatial grid recorded by `export_manifests`. Pass a cloud
    to recompute membership; without one the grid carries no members but
    still supports binning and fusion."""
    out = Path(out_dir)
    try:
        summary = json.loads((out / "grid.json").read_text())
    except FileNotFoundError:
        raise DataError(f"missing grid summary in {out}") from None
    cmap = ContractionMap(
        p_min=np.array(summary["foreground_min"], dtype=np.float64),
        p_max=np.array(summary["foreground_max"], dtype=np.float64),
    )
    if cloud is None:
        cloud = GaussianCloud.empty()
    return grid_partition(cloud, cmap, tuple(summary["dims"]))


def fuse(block_clouds: Sequence, grid: BlockGrid) -> GaussianCloud:
    """Concatenate per-block clouds, keeping from each only the Gaussians
    whose contracted position still falls inside that block. Strays that
    drifted into a neighbor during fine-tuning are dropped; blocks are
    concatenated in ascending block order."""
    pieces = []
    for cloud, j in sorted(block_clouds, key=lambda item: item[1]):
        if not 0 <= j < grid.n_blocks:
            raise DataError(f"block index {j} outside the grid")
        if cloud.count == 0:
            continue
        contracted = contract(normalize_position(cloud.positions, grid.map))
        keep = block_of_points(contracted, grid.dims) == j
        if keep.any():
            pieces.append(cloud.take(np.nonzero(keep)[0]))
    if not pieces:
        return GaussianCloud.empty()
    return GaussianCloud.concat(pieces)
