"""Forward splatting renderer: EWA projection, tile binning, global depth
sort, front-to-back alpha blending over a background color.

Blending at pixel x accumulates, over depth-ascending splats,
``alpha_k c_k G_k(x) prod_{t<k} (1 - alpha_t G_t(x))`` with the per-splat
effective alpha clamped to 0.99, fragments below ``alpha_floor`` skipped and
the pixel terminated once transmittance would cross ``transmittance_floor``.
Splats claim tiles through the axis-aligned box of their support ellipse at
``sqrt(2 ln(1/alpha_floor))`` standard deviations (per-axis marginal sigmas),
which contains every fragment the alpha floor can accept, so tile binning
never changes the result.
"""

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .core import CameraView, GaussianCloud, Image, build_covariances, sh_to_colors

__all__ = [
    "RenderSettings",
    "SplatPrimitive",
    "FrameStats",
    "project_gaussian",
    "rasterize",
    "rasterize_stats",
]

LOW_PASS = 0.3  # px^2 added to the projected covariance diagonal
_SINGULAR_DET = 1e-12


@dataclass(frozen=True)
class RenderSettings:
    background: tuple = (0.0, 0.0, 0.0)
    sh_degree: int = 3
    tile_size: int = 16
    alpha_floor: float = 1.0 / 255.0
    transmittance_floor: float = 1e-4
    near_plane: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "background", tuple(float(c) for c in self.background))
        if len(self.background) != 3 or any(not 0.0 <= c <= 1.0 for c in self.background):
            raise ValueError("background must be three channels in [0, 1]")
        if self.sh_degree not in (0, 1, 2, 3):
            raise ValueError("sh_degree must be 0..3")
        if self.tile_size < 8:
            raise ValueError("tile_size must be at least 8")
        for name in ("alpha_floor", "transmittance_floor"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if self.near_plane <= 0:
            raise ValueError("near_plane must be positive")

    @property
    def support_sigmas(self) -> float:
        """Support radius in standard deviations implied by the alpha floor."""
        return math.sqrt(2.0 * math.log(1.0 / self.alpha_floor))


@dataclass(frozen=True)
class SplatPrimitive:
    """One projected Gaussian: 2D mean and covariance in pixels, camera depth,
    evaluated color, opacity, source index and support radius."""

    mean2d: np.ndarray
    cov2d: np.ndarray
    depth: float
    color: np.ndarray
    opacity: float
    source_index: int
    radius: float


@dataclass(frozen=True)
class FrameStats:
    visible_splats: int
    blended_fragments: int
    skipped_singular: int
    wall_ms: float


class _Projected:
    """Depth-sorted projection of a cloud against one camera (internal)."""

    __slots__ = ("means", "conics", "covs", "depths", "colors", "opacities",
                 "radii", "source", "skipped_singular")

    def __init__(self, means, conics, covs, depths, colors, opacities, radii, source, skipped):
        self.means = means
        self.conics = conics
        self.covs = covs
        self.depths = depths
        self.colors = colors
        self.opacities = opacities
        self.radii = radii
        self.source = source
        self.skipped_singular = skipped

    @property
    def count(self):
        return self.means.shape[0]


def _project_cloud(cloud: GaussianCloud, cam: CameraView, settings: RenderSettings) -> _Projected:
    k = cloud.count
    empty = lambda *shape: np.zeros(shape)
    if k == 0:
        return _Projected(empty(0, 2), empty(0, 3), empty(0, 3), empty(0),
                          empty(0, 3), empty(0), empty(0, 2), np.zeros(0, dtype=np.int64), 0)

    t = cloud.positions @ cam.rotation_w2c.T + cam.translation_w2c
    z = t[:, 2]
    in_front = z > settings.near_plane
    idx = np.nonzero(in_front)[0]
    if idx.size == 0:
        return _Projected(empty(0, 2), empty(0, 3), empty(0, 3), empty(0),
                          empty(0, 3), empty(0), empty(0, 2), np.zeros(0, dtype=np.int64), 0)
    t = t[idx]
    z = z[idx]

    mx = cam.fx * t[:, 0] / z + cam.cx
    my = cam.fy * t[:, 1] / z + cam.cy

    sigma = build_covariances(cloud.scales[idx], cloud.rotations[idx])
    w = cam.rotation_w2c
    v = np.einsum("ij,kjl,ml->kim", w, sigma, w)  # camera-space covariance

    n = idx.size
    jac = np.zeros((n, 2, 3))
    jac[:, 0, 0] = cam.fx / z
    jac[:, 0, 2] = -cam.fx * t[:, 0] / (z * z)
    jac[:, 1, 1] = cam.fy / z
    jac[:, 1, 2] = -cam.fy * t[:, 1] / (z * z)
    cov2d = np.einsum("kij,kjl,kml->kim", jac, v, jac)
    a = cov2d[:, 0, 0] + LOW_PASS
    b = cov2d[:, 0, 1]
    c = cov2d[:, 1, 1] + LOW_PASS

    det = a * c - b * b
    ok = det > _SINGULAR_DET
    skipped = int(n - ok.sum())

    # marginal standard deviations bound the support ellipse exactly per
    # axis, so thin slanted splats claim far fewer tiles than a disc of the
    # major radius would
    rx = settings.support_sigmas * np.sqrt(a)
    ry = settings.support_sigmas * np.sqrt(c)

    on_image = (
        (mx + rx > 0.0) & (mx - rx < cam.width)
        & (my + ry > 0.0) & (my - ry < cam.height)
    )
    keep = ok & on_image
    sel = np.nonzero(keep)[0]
    if sel.size == 0:
        return _Projected(empty(0, 2), empty(0, 3), empty(0, 3), empty(0),
                          empty(0, 3), empty(0), empty(0, 2), np.zeros(0, dtype=np.int64), skipped)

    src = idx[sel]
    dirs = cloud.positions[src] - cam.camera_center
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    colors = sh_to_colors(cloud.sh[src], dirs, settings.sh_degree)

    d = det[sel]
    conics = np.stack([c[sel] / d, -b[sel] / d, a[sel] / d], axis=1)
    covs = np.stack([a[sel], b[sel], c[sel]], axis=1)
    depths = z[sel]

    # global stable sort by depth; stability makes source index the tie-break
    order = np.argsort(depths, kind="stable")
    return _Projected(
        means=np.ascontiguousarray(np.stack([mx[sel], my[sel]], axis=1)[order]),
        conics=np.ascontiguousarray(conics[order]),
        covs=np.ascontiguousarray(covs[order]),
        depths=np.ascontiguousarray(depths[order]),
        colors=np.ascontiguousarray(colors[order]),
        opacities=np.ascontiguousarray(cloud.opacities[src][order]),
        radii=np.ascontiguousarray(np.stack([rx[sel], ry[sel]], axis=1)[order]),
        source=np.ascontiguousarray(src[order]).astype(np.int64),
        skipped=skipped,
    )


def project_gaussian(g, cam: CameraView, settings: Optional[RenderSettings] = None,
                     source_index: int = 0) -> Optional[SplatPrimitive]:
    """Project one Gaussian; None when it is culled (behind the near plane,
    off-image support, or singular projected covariance)."""
    settings = settings or RenderSettings()
    cloud = GaussianCloud(
        positions=g.position[None], opacities=[g.opacity], scales=g.scale[None],
        rotations=g.rotation[None], sh=g.sh[None],
    )
    p = _project_cloud(cloud, cam, settings)
    if p.count == 0:
        return None
    a, b, c = p.covs[0]
    mid = 0.5 * (a + c)
    lam_max = mid + math.sqrt(max(mid * mid - (a * c - b * b), 0.0))
    return SplatPrimitive(
        mean2d=p.means[0],
        cov2d=np.array([[a, b], [b, c]]),
        depth=float(p.depths[0]),
        color=p.colors[0],
        opacity=float(p.opacities[0]),
        source_index=source_index,
        radius=settings.support_sigmas * math.sqrt(lam_max),
    )


def _bin_tiles(p: _Projected, cam, tile_size: int):
    """CSR (tile -> splat ids) with per-tile depth order preserved."""
    ntx = (cam.width + tile_size - 1) // tile_size
    nty = (cam.height + tile_size - 1) // tile_size
    n_tiles = ntx * nty
    if p.count == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(n_tiles + 1, dtype=np.int64), ntx, nty

    # pixel centers sit at integer + 0.5, hence the half-pixel shift
    rx = p.radii[:, 0]
    ry = p.radii[:, 1]
    tx0 = np.clip(np.floor((p.means[:, 0] - rx - 0.5) / tile_size).astype(np.int64), 0, ntx - 1)
    tx1 = np.clip(np.floor((p.means[:, 0] + rx - 0.5) / tile_size).astype(np.int64), 0, ntx - 1)
    ty0 = np.clip(np.floor((p.means[:, 1] - ry - 0.5) / tile_size).astype(np.int64), 0, nty - 1)
    ty1 = np.clip(np.floor((p.means[:, 1] + ry - 0.5) / tile_size).astype(np.int64), 0, nty - 1)

    w = tx1 - tx0 + 1
    h = ty1 - ty0 + 1
    counts = w * h
    total = int(counts.sum())
    splat = np.repeat(np.arange(p.count, dtype=np.int64), counts)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    local = np.arange(total, dtype=np.int64) - np.repeat(starts, counts)
    wrep = np.repeat(w, counts)
    lx = local % wrep
    ly = local // wrep
    tiles = (np.repeat(ty0, counts) + ly) * ntx + (np.repeat(tx0, counts) + lx)

    order = np.argsort(tiles, kind="stable")  # keeps depth order within a tile
    tile_ids = splat[order]
    offsets = np.zeros(n_tiles + 1, dtype=np.int64)
    np.cumsum(np.bincount(tiles, minlength=n_tiles), out=offsets[1:])
    return tile_ids, offsets, ntx, nty


def rasterize_stats(cloud: GaussianCloud, cam: CameraView,
                    settings: Optional[RenderSettings] = None):
    """Render and return (Image, FrameStats). The wall clock is read after the
    blending kernel has returned, so all work is flushed before the timestamp."""
    settings = settings or RenderSettings()
    start = time.perf_counter()

    p = _project_cloud(cloud, cam, settings)
    tile_ids, offsets, ntx, nty = _bin_tiles(p, cam, settings.tile_size)

    out = np.empty((cam.height, cam.width, 3))
    frags = np.zeros(ntx * nty, dtype=np.int64)
    _kernels.blend_tiles(
        tile_ids, offsets, p.means, p.conics, p.colors, p.opacities,
        np.asarray(settings.background, dtype=np.float64),
        settings.tile_size, cam.width, cam.height, ntx,
        settings.alpha_floor, settings.transmittance_floor,
        out, frags,
    )
    wall_ms = (time.perf_counter() - start) * 1000.0

    image = Image(np.clip(out, 0.0, 1.0))
    stats = FrameStats(
        visible_splats=p.count,
        blended_fragments=int(frags.sum()),
        skipped_singular=p.skipped_singular,
        wall_ms=wall_ms,
    )
    return image, stats


def rasterize(cloud: GaussianCloud, cam: CameraView,
              settings: Optional[RenderSettings] = None) -> Image:
    image, _ = rasterize_stats(cloud, cam, settings)
    return image
