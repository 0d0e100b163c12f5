"""Numba tile-blending kernel.

Tiles are independent work items (disjoint pixel ranges), so the parallel
range is deterministic regardless of thread count. Splat ids arrive per tile
already sorted by (depth, source index); the kernel only composites.

No fastmath: blending must stay bit-reproducible against a plain-numpy
reference evaluation.
"""

import math

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def blend_tiles(
    tile_ids,      # (P,) int64, splat index per (tile, splat) pair, depth order within tile
    tile_offsets,  # (T+1,) int64 CSR offsets into tile_ids
    means,         # (M, 2) float64 pixel-space centers
    conics,        # (M, 3) float64 inverse-covariance entries (a, b, c)
    colors,        # (M, 3) float64
    opacities,     # (M,) float64
    background,    # (3,) float64
    tile_size, width, height, n_tiles_x,
    alpha_floor, t_floor,
    out,           # (H, W, 3) float64, fully overwritten
    fragments,     # (T,) int64, blended fragment count per tile
):
    n_tiles = tile_offsets.shape[0] - 1
    for t in prange(n_tiles):
        tx = t % n_tiles_x
        ty = t // n_tiles_x
        x0 = tx * tile_size
        y0 = ty * tile_size
        x1 = min(x0 + tile_size, width)
        y1 = min(y0 + tile_size, height)
        s0 = tile_offsets[t]
        s1 = tile_offsets[t + 1]
        count = 0
        for py in range(y0, y1):
            sy = py + 0.5
            for px in range(x0, x1):
                sx = px + 0.5
                trans = 1.0
                r = 0.0
                g = 0.0
                b = 0.0
                for k in range(s0, s1):
                    s = tile_ids[k]
                    dx = sx - means[s, 0]
                    dy = sy - means[s, 1]
                    power = (
                        -0.5 * (conics[s, 0] * dx * dx + conics[s, 2] * dy * dy)
                        - conics[s, 1] * dx * dy
                    )
                    alpha = opacities[s] * math.exp(power)
                    if alpha > 0.99:
                        alpha = 0.99
                    if alpha < alpha_floor:
                        continue
                    next_trans = trans * (1.0 - alpha)
                    if next_trans < t_floor:
                        # the crossing fragment is dropped and the pixel is done
                        break
                    w = trans * alpha
                    r += w * colors[s, 0]
                    g += w * colors[s, 1]
                    b += w * colors[s, 2]
                    trans = next_trans
                    count += 1
                out[py, px, 0] = r + trans * background[0]
                out[py, px, 1] = g + trans * background[1]
                out[py, px, 2] = b + trans * background[2]
        fragments[t] = count


def warmup():
    """Force JIT compilation with a minimal call (useful before timing)."""
    blend_tiles(
        np.zeros(0, dtype=np.int64),
        np.zeros(2, dtype=np.int64),
        np.zeros((0, 2)), np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0),
        np.zeros(3), 16, 1, 1, 1, 1.0 / 255.0, 1e-4,
        np.zeros((1, 1, 3)), np.zeros(1, dtype=np.int64),
    )
