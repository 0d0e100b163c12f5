"""Detail-level generation and selection.

Levels are built by ranking Gaussians with a training-view significance score
and keeping a shrinking top fraction per level, so coarser levels are strict
subsets of finer ones. Each block gets floater-robust world bounds (median
absolute deviation clipping); at render time a block's distance to the camera
picks the detail level for all its Gaussians, and the visible blocks are
concatenated into one render set.
"""

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Tuple

import numpy as np

from ._util import atomic_write_text
from .core import CameraView, GaussianCloud, build_covariances
from .errors import DataError
from .ply import load_ply, save_ply
from .render import LOW_PASS, RenderSettings

__all__ = [
    "LodScene",
    "VisibilityDecision",
    "AssembledSet",
    "significance_scores",
    "compress",
    "mad_bounds",
    "build_lod",
    "block_visible",
    "select_level",
    "decide_visibility",
    "assemble_render_set",
    "save_lod",
    "load_lod",
]

VOLUME_EXPONENT = 0.1
VOLUME_PERCENTILE = 90.0
MIN_FOOTPRINT_RADIUS = 0.5  # px; a hit needs a footprint of at least a pixel


def _views(cameras) -> list:
    out = []
    for cam in cameras:
        out.append(cam if isinstance(cam, CameraView) else cam.view)
    return out


def significance_scores(cloud: GaussianCloud, cameras: Sequence,
                        settings: Optional[RenderSettings] = None) -> np.ndarray:
    """Per-Gaussian pruning score: training-view hit count x opacity x
    percentile-clamped volume^0.1.

    A view hits a Gaussian when its center is in front of the near plane,
    projects inside the image, and its projected support radius covers at
    least a pixel. Scores are all nonnegative; Gaussians no view hits score 0.
    """
    settings = settings or RenderSettings()
    k = cloud.count
    if k == 0:
        return np.zeros(0)
    hits = np.zeros(k)
    sigma = build_covariances(cloud.scales, cloud.rotations)
    for cam in _views(cameras):
        t = cloud.positions @ cam.rotation_w2c.T + cam.translation_w2c
        z = t[:, 2]
        front = z > settings.near_plane
        idx = np.nonzero(front)[0]
        if idx.size == 0:
            continue
        tf = t[idx]
        zf = z[idx]
        u = cam.fx * tf[:, 0] / zf + cam.cx
        v = cam.fy * tf[:, 1] / zf + cam.cy
        on_image = (u >= 0.0) & (u <= cam.width) & (v >= 0.0) & (v <= cam.height)

        w = cam.rotation_w2c
        vcs = np.einsum("ij,kjl,ml->kim", w, sigma[idx], w)
        jac = np.zeros((idx.size, 2, 3))
        jac[:, 0, 0] = cam.fx / zf
        jac[:, 0, 2] = -cam.fx * tf[:, 0] / (zf * zf)
        jac[:, 1, 1] = cam.fy / zf
        jac[:, 1, 2] = -cam.fy * tf[:, 1] / (zf * zf)
        cov = np.einsum("kij,kjl,kml->kim", jac, vcs, jac)
        a = cov[:, 0, 0] + LOW_PASS
        b = cov[:, 0, 1]
        c = cov[:, 1, 1] + LOW_PASS
        mid = 0.5 * (a + c)
        lam = mid + np.sqrt(np.maximum(mid * mid - (a * c - b * b), 0.0))
        radius = settings.support_sigmas * np.sqrt(lam)
        hits[idx] += (on_image & (radius >= MIN_FOOTPRINT_RADIUS)).astype(np.float64)

    volume = np.prod(cloud.scales, axis=1)
    cap = np.percentile(volume, VOLUME_PERCENTILE)
    clamped = np.minimum(volume, cap)
    return hits * cloud.opacities * clamped ** VOLUME_EXPONENT


def _keep_count(rate: float, k: int) -> int:
    if not 0.0 < rate <= 1.0:
        raise ValueError("compression rate must be in (0, 1]")
    if k == 0:
        return 0
    # relative epsilon so rate*k landing a hair above an integer (float
    # rounding of the product) does not inflate the ceiling
    return min(k, max(1, math.ceil(rate * k - 1e-9 * k)))


def _priority(scores: np.ndarray) -> np.ndarray:
    """Indices ordered by descending score, ties broken by original index."""
    return np.argsort(-scores, kind="stable")


def compress(cloud: GaussianCloud, rate: float, sh_degree: int = 3,
             cameras: Sequence = (), *, scores: Optional[np.ndarray] = None) -> GaussianCloud:
    """Keep the ceil(rate*K) highest-significance Gaussians in their original
    order and drop SH bands above sh_degree from storage."""
    if scores is None:
        scores = significance_scores(cloud, cameras)
    keep = _keep_count(rate, cloud.count)
    kept = np.sort(_priority(np.asarray(scores, dtype=np.float64))[:keep])
    return cloud.take(kept).with_sh_degree(sh_degree)


def mad_bounds(block_cloud: GaussianCloud, n_mad: float) -> Tuple[np.ndarray, np.ndarray]:
    """Floater-robust world bounds: per axis, clip min/max to median plus or
    minus n_mad median-absolute-deviations; a zero deviation falls back to the
    exact extremes on that axis. n_mad = inf disables clipping."""
    if block_cloud.count == 0:
        raise ValueError("bounds of an empty block are undefined")
    if not n_mad > 0:
        raise ValueError("n_mad must be positive")
    p = block_cloud.positions
    lo = p.min(axis=0).copy()
    hi = p.max(axis=0).copy()
    med = np.median(p, axis=0)
    mad = np.median(np.abs(p - med), axis=0)
    for axis in range(3):
        if mad[axis] > 0.0 and math.isfinite(n_mad):
            lo[axis] = max(lo[axis], med[axis] - n_mad * mad[axis])
            hi[axis] = min(hi[axis], med[axis] + n_mad * mad[axis])
    return lo, hi


@dataclass(frozen=True)
class LodScene:
    """Per-block detail levels plus the uncompressed scene.

    levels[L][j] is block j's cloud at level L, where level 0 is the coarsest
    and the last level the finest; the level index equals the LoD number.
    distance_intervals are nearest-first, so interval i selects level
    n_levels - 1 - i. Bounds are world-space per block, shared by all levels
    and computed from the uncompressed members; blocks with no members carry
    zero bounds and never contribute.
    """

    levels: tuple
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    distance_intervals: tuple
    sh_degrees: tuple  # aligned with levels (coarsest first)
    n_mad: float
    full: GaussianCloud

    def __post_init__(self):
        levels = tuple(tuple(level) for level in self.levels)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "distance_intervals",
                           tuple((float(a), float(b)) for a, b in self.distance_intervals))
        object.__setattr__(self, "sh_degrees", tuple(int(d) for d in self.sh_degrees))
        if not levels:
            raise ValueError("at least one level required")
        n_blocks = len(levels[0])
        if any(len(level) != n_blocks for level in levels):
            raise ValueError("every level must carry the same block set")
        if len(self.distance_intervals) != len(levels):
            raise ValueError("one distance interval per level required")
        if len(self.sh_degrees) != len(levels):
            raise ValueError("one sh_degree per level required")
        bmin = np.asarray(self.bounds_min, dtype=np.float64).reshape(n_blocks, 3)
        bmax = np.asarray(self.bounds_max, dtype=np.float64).reshape(n_blocks, 3)
        if not (np.isfinite(bmin).all() and np.isfinite(bmax).all()):
            raise ValueError("block bounds must be finite")
        object.__setattr__(self, "bounds_min", bmin)
        object.__setattr__(self, "bounds_max", bmax)

    @property
    def n_levels(self) -> int:
        return len(self.levels)

    @property
    def n_blocks(self) -> int:
        return len(self.levels[0])

    @property
    def finest(self) -> int:
        return self.n_levels - 1

    def level_size(self, level: int) -> int:
        return sum(c.count for c in self.levels[level])

    def occupied(self, j: int) -> bool:
        return self.levels[self.finest][j].count > 0


def build_lod(cloud: GaussianCloud, grid, cameras: Sequence, config) -> LodScene:
    """Generate all detail levels for a partitioned scene.

    Gaussians are ranked once over the training views; level L keeps the top
    ceil(rate_L * K) globally and splits them by block, so levels are nested.
    Config rates and SH degrees are listed finest-first and reversed here.
    """
    n_levels = len(config.compression_rates)
    scores = significance_scores(cloud, cameras)
    order = _priority(scores)

    rates = tuple(reversed(config.compression_rates))      # coarsest first
    degrees = tuple(reversed(config.lod_sh_degrees))
    n_blocks = grid.n_blocks

    levels = []
    for rate, degree in zip(rates, degrees):
        keep = _keep_count(rate, cloud.count)
        mask = np.zeros(cloud.count, dtype=bool)
        mask[order[:keep]] = True
        blocks = []
        for j in range(n_blocks):
            idx = np.nonzero(mask & (grid.membership == j))[0]
            blocks.append(cloud.take(idx).with_sh_degree(degree))
        levels.append(tuple(blocks))

    bounds_min = np.zeros((n_blocks, 3))
    bounds_max = np.zeros((n_blocks, 3))
    for j in range(n_blocks):
        members = grid.members(j)
        if members.size:
            bounds_min[j], bounds_max[j] = mad_bounds(cloud.take(members), config.n_mad)

    return LodScene(
        levels=tuple(levels), bounds_min=bounds_min, bounds_max=bounds_max,
        distance_intervals=config.distance_intervals,
        sh_degrees=degrees, n_mad=float(config.n_mad), full=cloud,
    )


# ---------------------------------------------------------------------------
# visibility and selection


@dataclass(frozen=True)
class VisibilityDecision:
    """One block's per-frame fate: whether it renders, at which level, its
    minimum corner distance, and the projected screen box when one exists."""

    block: int
    visible: bool
    level: Optional[int]
    distance: float
    screen_box: Optional[tuple]


def block_visible(bounds, cam: CameraView) -> Tuple[bool, float]:
    """Frustum test for one world-space box.

    The camera sitting inside the box means visible at distance 0. Otherwise
    the corners in front of the camera are projected; the block is visible
    when their bounding box meets the screen rectangle. Boxes straddling the
    camera plane (corners both in front and behind) are conservatively
    visible: their on-screen extent is unbounded and cannot be boxed.
    """
    lo = np.asarray(bounds[0], dtype=np.float64)
    hi = np.asarray(bounds[1], dtype=np.float64)
    center = cam.camera_center
    if ((center >= lo) & (center <= hi)).all():
        return True, 0.0

    corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                        for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    distance = float(np.linalg.norm(corners - center, axis=1).min())
    t = cam.world_to_camera(corners)
    z = t[:, 2]
    if (z <= 0.0).all():
        return False, distance
    if (z <= 0.0).any():
        return True, distance
    u = cam.fx * t[:, 0] / z + cam.cx
    v = cam.fy * t[:, 1] / z + cam.cy
    visible = (u.max() >= 0.0 and u.min() <= cam.width
               and v.max() >= 0.0 and v.min() <= cam.height)
    return visible, distance


def _screen_box(bounds, cam: CameraView) -> Optional[tuple]:
    lo, hi = bounds
    corners = np.array([[x, y, z] for x in (lo[0], hi[0])
                        for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    t = cam.world_to_camera(corners)
    z = t[:, 2]
    if (z <= 0.0).any():
        return (0.0, 0.0, float(cam.width), float(cam.height))
    u = cam.fx * t[:, 0] / z + cam.cx
    v = cam.fy * t[:, 1] / z + cam.cy
    return (float(u.min()), float(v.min()), float(u.max()), float(v.max()))


def select_level(distance: float, intervals: Sequence) -> int:
    """Level index for a camera distance: the nearest interval picks the
    finest level, each farther interval one coarser."""
    distance = float(distance)
    if distance < 0.0:
        raise ValueError("distance must be nonnegative")
    n = len(intervals)
    for i, (lo, hi) in enumerate(intervals):
        if lo <= distance < hi:
            return n - 1 - i
    raise ValueError(f"no interval covers distance {distance}")


def _select_levels(distances: np.ndarray, intervals) -> np.ndarray:
    los = np.array([lo for lo, _ in intervals])
    i = np.searchsorted(los, distances, side="right") - 1
    return len(intervals) - 1 - i


def decide_visibility(scene: LodScene, cam: CameraView,
                      force_level: Optional[int] = None) -> tuple:
    decisions = []
    for j in range(scene.n_blocks):
        if not scene.occupied(j):
            decisions.append(VisibilityDecision(j, False, None, math.inf, None))
            continue
        bounds = (scene.bounds_min[j], scene.bounds_max[j])
        visible, distance = block_visible(bounds, cam)
        if not visible:
            decisions.append(VisibilityDecision(j, False, None, distance, None))
            continue
        if force_level is None:
            level = select_level(distance, scene.distance_intervals)
        else:
            level = int(force_level)
        decisions.append(VisibilityDecision(j, True, level, distance,
                                            _screen_box(bounds, cam)))
    return tuple(decisions)


@dataclass(frozen=True)
class AssembledSet:
    """Render set for one frame plus the per-block decisions behind it."""

    cloud: GaussianCloud
    decisions: tuple
    selection_ms: float


def assemble_render_set(scene: LodScene, cam: CameraView, *,
                        mode: str = "block",
                        force_level: Optional[int] = None) -> AssembledSet:
    """Concatenate the visible blocks at their selected levels.

    mode "block" shares one level across a block (corner-distance rule);
    mode "pointwise" re-buckets every Gaussian by its own camera distance,
    which is the slower ablation baseline. force_level pins the level of
    every visible block (still subject to visibility).
    """
    start = time.perf_counter()
    if mode == "block":
        decisions = decide_visibility(scene, cam, force_level=force_level)
        pieces = [
            scene.levels[d.level][d.block]
            for d in decisions
            if d.visible and scene.levels[d.level][d.block].count
        ]
    elif mode == "pointwise":
        center = cam.camera_center
        decisions = ()
        pieces = []
        for level in range(scene.n_levels):
            want = level if force_level is None else int(force_level)
            for block in scene.levels[level]:
                if block.count == 0:
                    continue
                d = np.linalg.norm(block.positions - center, axis=1)
                keep = _select_levels(d, scene.distance_intervals) == want
                if level == want and keep.any():
                    pieces.append(block.take(np.nonzero(keep)[0]))
    else:
        raise ValueError(f"unknown selection mode: {mode}")
    selection_ms = (time.perf_counter() - start) * 1000.0

    if not pieces:
        cloud = GaussianCloud.empty()
    elif len(pieces) == 1:
        cloud = pieces[0]
    else:
        cloud = GaussianCloud.concat(pieces)
    return AssembledSet(cloud=cloud, decisions=decisions, selection_ms=selection_ms)


# ---------------------------------------------------------------------------
# on-disk bundle


def save_lod(scene: LodScene, out_dir) -> None:
    """Bundle layout: index.json, full.ply, levels/<L>/blocks/<j>.ply."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    index = {
        "intervals": [[a, b] for a, b in scene.distance_intervals],
        "n_mad": scene.n_mad,
        "bounds": {
            "min": [[float(v) for v in b] for b in scene.bounds_min],
            "max": [[float(v) for v in b] for b in scene.bounds_max],
        },
        "sh_degrees": list(scene.sh_degrees),
        "n_levels": scene.n_levels,
        "n_blocks": scene.n_blocks,
    }
    atomic_write_text(out / "index.json", json.dumps(index, indent=2))
    save_ply(scene.full, out / "full.ply")
    for level, blocks in enumerate(scene.levels):
        level_dir = out / "levels" / str(level) / "blocks"
        level_dir.mkdir(parents=True, exist_ok=True)
        for j, block in enumerate(blocks):
            save_ply(block, level_dir / f"{j}.ply")


def load_lod(in_dir) -> LodScene:
    root = Path(in_dir)
    try:
        index = json.loads((root / "index.json").read_text())
    except FileNotFoundError:
        raise DataError(f"not a detail-level bundle: {root} has no index.json") from None
    levels = []
    for level in range(int(index["n_levels"])):
        blocks = []
        for j in range(int(index["n_blocks"])):
            path = root / "levels" / str(level) / "blocks" / f"{j}.ply"
            if not path.exists():
                raise DataError(f"bundle is missing {path.relative_to(root)}")
            blocks.append(load_ply(path))
        levels.append(tuple(blocks))
    return LodScene(
        levels=tuple(levels),
        bounds_min=np.array(index["bounds"]["min"], dtype=np.float64),
        bounds_max=np.array(index["bounds"]["max"], dtype=np.float64),
        distance_intervals=tuple((a, b) for a, b in index["intervals"]),
        sh_degrees=tuple(index["sh_degrees"]),
        n_mad=float(index["n_mad"]),
        full=load_ply(root / "full.ply"),
    )
