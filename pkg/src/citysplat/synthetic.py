"""Deterministic synthetic city scenes for desk-scale testing.

The generator emits a jittered ground sheet plus box-shaped buildings whose
walls and roofs are sampled as flattened, yaw-aligned Gaussians with full
degree-3 color content, together with an orbit-and-grid camera set spanning
several altitudes. Every position receives a small jitter so no two Gaussians
share a camera depth; renders are then invariant to storage order bit for bit.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .colmap import CameraRecord, assign_split
from .core import CameraView, GaussianCloud, SH_C0
from .errors import DataError

__all__ = ["SceneBundle", "generate_synthetic_city", "look_at"]


@dataclass(frozen=True)
class SceneBundle:
    """A cloud plus its posed (and possibly absent) images."""

    cloud: GaussianCloud
    cameras: Tuple[CameraRecord, ...]
    split: Tuple[str, ...]  # "train" / "test" per camera

    def __post_init__(self):
        object.__setattr__(self, "cameras", tuple(self.cameras))
        object.__setattr__(self, "split", tuple(self.split))
        if len(self.split) != len(self.cameras):
            raise DataError("one split tag per camera required")
        ids = [rec.image_id for rec in self.cameras]
        if len(set(ids)) != len(ids):
            raise DataError("image ids must be unique")
        if any(tag not in ("train", "test") for tag in self.split):
            raise DataError("split tags must be 'train' or 'test'")

    def train_cameras(self) -> list:
        return [c for c, tag in zip(self.cameras, self.split) if tag == "train"]

    def test_cameras(self) -> list:
        return [c for c, tag in zip(self.cameras, self.split) if tag == "test"]


def look_at(eye, target, width: int, height: int, fx: float,
            fy: Optional[float] = None, up=(0.0, 0.0, 1.0)) -> CameraView:
    """Camera at `eye` with +z toward `target` (x right, y down)."""
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    norm = np.linalg.norm(forward)
    if norm == 0:
        raise ValueError("eye and target coincide")
    forward = forward / norm
    up = np.asarray(up, dtype=np.float64)
    if abs(forward @ up) / np.linalg.norm(up) > 0.999:
        up = np.array([0.0, 1.0, 0.0])  # looking along the up axis; pick another
    right = np.cross(forward, up)
    right = right / np.linalg.norm(right)
    down = np.cross(forward, right)
    rot = np.stack([right, down, forward])
    return CameraView(
        width=width, height=height, fx=fx, fy=fx if fy is None else fy,
        cx=width / 2.0, cy=height / 2.0,
        rotation_w2c=rot, translation_w2c=-rot @ eye,
    )


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    """Integer allocation proportional to weights, summing exactly to total."""
    raw = weights / weights.sum() * total
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    order = np.argsort(raw - base)[::-1]
    base[order[:short]] += 1
    return base


def _sh_block(rng, n: int, albedo: np.ndarray) -> np.ndarray:
    """Degree-3 coefficients around a base color, with mild view dependence."""
    sh = rng.normal(0.0, 0.05, (n, 3, 16))
    sh[:, :, 0] = (albedo + rng.normal(0.0, 0.03, (n, 3)) - 0.5) / SH_C0
    return sh


def _yaw_quats(yaw: float, n: int) -> np.ndarray:
    q = np.zeros((n, 4))
    q[:, 0] = math.cos(yaw / 2.0)
    q[:, 3] = math.sin(yaw / 2.0)
    return q


def generate_synthetic_city(seed: int = 0, extent: float = 100.0,
                            n_buildings: int = 40, n_cameras: int = 64,
                            target_gaussians: int = 50_000,
                            image_size: Tuple[int, int] = (160, 120)) -> SceneBundle:
    """Seeded city: ground sheet + `n_buildings` boxes, `n_cameras` poses.

    The cloud holds exactly `target_gaussians` members: 30% ground, the rest
    split across buildings proportional to surface area. Cameras are two
    orbit rings plus a tilted top-down grid, all at distinct altitudes; every
    8th pose is tagged as test.
    """
    if n_buildings <= 0:
        raise ValueError("n_buildings must be positive")
    if n_cameras <= 0:
        raise ValueError("n_cameras must be positive")
    if target_gaussians < 100:
        raise ValueError("target_gaussians too small for a meaningful scene")
    rng = np.random.default_rng(seed)
    half = extent / 2.0

    # building footprints: center, size, yaw, albedo
    centers = rng.uniform(-0.85 * half, 0.85 * half, (n_buildings, 2))
    widths = rng.uniform(3.0, 12.0, n_buildings)
    depths = rng.uniform(3.0, 12.0, n_buildings)
    heights = rng.uniform(5.0, 40.0, n_buildings)
    yaws = rng.uniform(0.0, 2.0 * math.pi, n_buildings)
    albedos = rng.uniform(0.2, 0.9, (n_buildings, 3))

    n_ground = int(round(0.3 * target_gaussians))
    areas = 2.0 * heights * (widths + depths) + widths * depths
    building_counts = _largest_remainder(areas, target_gaussians - n_ground)

    parts = []

    g_albedo = np.array([0.36, 0.42, 0.33])
    ground_pos = np.column_stack([
        rng.uniform(-half, half, n_ground),
        rng.uniform(-half, half, n_ground),
        np.zeros(n_ground),
    ])
    parts.append(dict(
        positions=ground_pos,
        scales=np.column_stack([
            rng.uniform(0.35, 0.7, n_ground),
            rng.uniform(0.35, 0.7, n_ground),
            rng.uniform(0.03, 0.08, n_ground),
        ]),
        rotations=_yaw_quats(0.0, n_ground),
        opacities=rng.uniform(0.45, 0.9, n_ground),
        sh=_sh_block(rng, n_ground, g_albedo),
    ))

    for b in range(n_buildings):
        n_b = int(building_counts[b])
        if n_b == 0:
            continue
        w, d, h = widths[b], depths[b], heights[b]
        # five faces weighted by area: -x, +x, -y, +y walls, roof
        face_areas = np.array([d * h, d * h, w * h, w * h, w * d])
        face_counts = _largest_remainder(face_areas, n_b)
        local = []
        scale = []
        for face, n_f in enumerate(face_counts):
            if n_f == 0:
                continue
            u = rng.uniform(-0.5, 0.5, n_f)
            v = rng.uniform(0.0, 1.0, n_f)
            thin = rng.uniform(0.08, 0.18, n_f)
            t1 = rng.uniform(0.35, 0.9, n_f)
            t2 = rng.uniform(0.35, 0.9, n_f)
            if face < 2:  # walls with normal along local x
                sign = -1.0 if face == 0 else 1.0
                local.append(np.column_stack([np.full(n_f, sign * w / 2.0), u * d, v * h]))
                scale.append(np.column_stack([thin, t1, t2]))
            elif face < 4:  # walls with normal along local y
                sign = -1.0 if face == 2 else 1.0
                local.append(np.column_stack([u * w, np.full(n_f, sign * d / 2.0), v * h]))
                scale.append(np.column_stack([t1, thin, t2]))
            else:  # roof
                local.append(np.column_stack([u * w, rng.uniform(-0.5, 0.5, n_f) * d,
                                              np.full(n_f, h)]))
                scale.append(np.column_stack([t1, t2, thin]))
        local = np.concatenate(local)
        cos_y, sin_y = math.cos(yaws[b]), math.sin(yaws[b])
        world = np.empty_like(local)
        world[:, 0] = centers[b, 0] + cos_y * local[:, 0] - sin_y * local[:, 1]
        world[:, 1] = centers[b, 1] + sin_y * local[:, 0] + cos_y * local[:, 1]
        world[:, 2] = local[:, 2]
        parts.append(dict(
            positions=world,
            scales=np.concatenate(scale),
            rotations=_yaw_quats(yaws[b], len(world)),
            opacities=rng.uniform(0.75, 0.98, len(world)),
            sh=_sh_block(rng, len(world), albedos[b]),
        ))

    positions = np.concatenate([p["positions"] for p in parts])
    positions += rng.normal(0.0, 0.05, positions.shape)  # break depth ties
    cloud = GaussianCloud(
        positions=positions,
        opacities=np.concatenate([p["opacities"] for p in parts]),
        scales=np.concatenate([p["scales"] for p in parts]),
        rotations=np.concatenate([p["rotations"] for p in parts]),
        sh=np.concatenate([p["sh"] for p in parts]),
    )

    cameras = _camera_set(rng, n_cameras, extent, image_size)
    return SceneBundle(cloud=cloud, cameras=cameras, split=tuple(assign_split(cameras)))


def _camera_set(rng, n_cameras: int, extent: float, image_size) -> tuple:
    width, height = int(image_size[0]), int(image_size[1])
    fx = 0.85 * width
    half = extent / 2.0
    eyes = []
    targets = []

    n_orbit = n_cameras // 2
    n_low = n_orbit // 2
    for count, altitude, radius in [
        (n_low, 0.12 * extent, 0.62 * half),
        (n_orbit - n_low, 0.30 * extent, 0.85 * half),
    ]:
        for i in range(count):
            a = 2.0 * math.pi * i / max(count, 1) + rng.normal(0.0, 0.02)
            r = radius * (1.0 + rng.normal(0.0, 0.02))
            eyes.append([r * math.cos(a), r * math.sin(a), altitude * (1.0 + rng.normal(0.0, 0.03))])
            targets.append(rng.normal([0.0, 0.0, 4.0], [2.0, 2.0, 1.0]))

    n_grid = n_cameras - n_orbit
    side = max(1, math.ceil(math.sqrt(n_grid)))
    lattice = np.linspace(-0.55 * half, 0.55 * half, side)
    made = 0
    for gy in lattice:
        for gx in lattice:
            if made >= n_grid:
                break
            altitude = (0.35 if made % 2 == 0 else 0.55) * extent
            eye = np.array([gx, gy, altitude]) + rng.normal(0.0, 0.5, 3)
            eyes.append(eye)
            targets.append([0.6 * eye[0] + rng.normal(0.0, 1.0),
                            0.6 * eye[1] + rng.normal(0.0, 1.0), 0.0])
            made += 1

    records = []
    for i, (eye, target) in enumerate(zip(eyes, targets)):
        view = look_at(eye, target, width=width, height=height, fx=fx)
        records.append(CameraRecord(image_id=i, view=view, name=f"synth_{i:04d}.png"))
    return tuple(records)
