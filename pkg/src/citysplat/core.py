"""Core scene types and the math shared by every stage: Gaussian primitives,
columnar clouds, pinhole cameras, images, covariance construction and
spherical-harmonics color evaluation.

All types are immutable after construction (arrays are marked read-only), so
they can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Gaussian",
    "GaussianCloud",
    "CameraView",
    "Image",
    "build_covariance",
    "build_covariances",
    "quat_to_rotmat",
    "sh_to_color",
    "sh_to_colors",
    "SH_DEGREE_SIZES",
]

QUAT_NORM_TOL = 1e-6
ROT_ORTHO_TOL = 1e-6

# Real spherical-harmonics basis constants, degree 0..3, in the layout used by
# Gaussian checkpoint files (band-major, channel-last).
SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

# coefficient count per degree
SH_DEGREE_SIZES = {0: 1, 1: 4, 2: 9, 3: 16}
_SIZE_TO_DEGREE = {v: k for k, v in SH_DEGREE_SIZES.items()}


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(a, dtype=np.float64)
    if out is a:
        out = out.copy()
    out.setflags(write=False)
    return out


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix from a unit quaternion (w, x, y, z). Accepts (4,) or (N, 4)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    r = np.empty((q.shape[0], 3, 3), dtype=np.float64)
    r[:, 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    r[:, 0, 1] = 2.0 * (x * y - w * z)
    r[:, 0, 2] = 2.0 * (x * z + w * y)
    r[:, 1, 0] = 2.0 * (x * y + w * z)
    r[:, 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    r[:, 1, 2] = 2.0 * (y * z - w * x)
    r[:, 2, 0] = 2.0 * (x * z - w * y)
    r[:, 2, 1] = 2.0 * (y * z + w * x)
    r[:, 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return r[0] if single else r


def build_covariance(scale, rotation) -> np.ndarray:
    """World-space covariance R diag(scale^2) R^T of one Gaussian.

    scale must be positive componentwise and rotation a unit quaternion
    (w, x, y, z). The result is symmetric positive-semidefinite and invariant
    under quaternion sign flip.
    """
    scale = np.asarray(scale, dtype=np.float64)
    rotation = np.asarray(rotation, dtype=np.float64)
    if scale.shape != (3,) or rotation.shape != (4,):
        raise ValueError("expected scale (3,) and rotation (4,)")
    if not (np.all(np.isfinite(scale)) and np.all(np.isfinite(rotation))):
        raise ValueError("non-finite covariance parameters")
    if np.any(scale <= 0):
        raise ValueError("scale components must be positive")
    if abs(np.linalg.norm(rotation) - 1.0) > QUAT_NORM_TOL:
        raise ValueError("rotation quaternion is not normalized")
    r = quat_to_rotmat(rotation)
    return (r * scale**2) @ r.T


def build_covariances(scales: np.ndarray, rotations: np.ndarray) -> np.ndarray:
    """Vectorized build_covariance over (K, 3) scales and (K, 4) quaternions."""
    r = quat_to_rotmat(rotations)
    rs = r * np.asarray(scales, dtype=np.float64)[:, None, :] ** 2
    return np.einsum("kij,klj->kil", rs, r)


def eval_sh_basis(dirs: np.ndarray, degree: int) -> np.ndarray:
    """Real SH basis values for unit directions.

    dirs: (..., 3); returns (..., (degree+1)^2) with band-major ordering.
    """
    if degree not in SH_DEGREE_SIZES:
        raise ValueError(f"degree must be 0..3, got {degree}")
    dirs = np.asarray(dirs, dtype=np.float64)
    x, y, z = dirs[..., 0], dirs[..., 1], dirs[..., 2]
    n = SH_DEGREE_SIZES[degree]
    out = np.empty(dirs.shape[:-1] + (n,), dtype=np.float64)
    out[..., 0] = SH_C0
    if degree >= 1:
        out[..., 1] = -SH_C1 * y
        out[..., 2] = SH_C1 * z
        out[..., 3] = -SH_C1 * x
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        xy, yz, xz = x * y, y * z, x * z
        out[..., 4] = SH_C2[0] * xy
        out[..., 5] = SH_C2[1] * yz
        out[..., 6] = SH_C2[2] * (2.0 * zz - xx - yy)
        out[..., 7] = SH_C2[3] * xz
        out[..., 8] = SH_C2[4] * (xx - yy)
    if degree >= 3:
        out[..., 9] = SH_C3[0] * y * (3.0 * xx - yy)
        out[..., 10] = SH_C3[1] * xy * z
        out[..., 11] = SH_C3[2] * y * (4.0 * zz - xx - yy)
        out[..., 12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
        out[..., 13] = SH_C3[4] * x * (4.0 * zz - xx - yy)
        out[..., 14] = SH_C3[5] * z * (xx - yy)
        out[..., 15] = SH_C3[6] * x * (xx - 3.0 * yy)
    return out


def sh_to_color(sh: np.ndarray, view_dir, degree: int = 3) -> np.ndarray:
    """View-dependent RGB of one Gaussian: clamp(0.5 + sum(basis * sh), [0, 1]).

    sh is (3, C) with C >= (degree+1)^2 coefficient triples; bands above
    `degree` are ignored.
    """
    sh = np.asarray(sh, dtype=np.float64)
    d = np.asarray(view_dir, dtype=np.float64)
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite view direction")
    basis = eval_sh_basis(d, degree)
    n = basis.shape[-1]
    if sh.shape[0] != 3 or sh.shape[1] < n:
        raise ValueError(f"sh must be (3, >= {n}), got {sh.shape}")
    return np.clip(0.5 + sh[:, :n] @ basis, 0.0, 1.0)


def sh_to_colors(sh: np.ndarray, dirs: np.ndarray, degree: int = 3) -> np.ndarray:
    """Vectorized sh_to_color: sh (K, 3, C), dirs (K, 3) -> colors (K, 3)."""
    sh = np.asarray(sh, dtype=np.float64)
    degree = min(degree, _SIZE_TO_DEGREE[sh.shape[2]])
    basis = eval_sh_basis(dirs, degree)
    n = basis.shape[-1]
    return np.clip(0.5 + np.einsum("kcn,kn->kc", sh[:, :, :n], basis), 0.0, 1.0)


@dataclass(frozen=True)
class Gaussian:
    """One anisotropic 3D Gaussian primitive.

    position: (3,) world units; opacity in [0, 1]; scale: (3,) positive
    standard deviations; rotation: unit quaternion (w, x, y, z);
    sh: (3, 16) SH coefficients, degree 0..3.
    """

    position: np.ndarray
    opacity: float
    scale: np.ndarray
    rotation: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _freeze(np.reshape(self.position, (3,))))
        object.__setattr__(self, "scale", _freeze(np.reshape(self.scale, (3,))))
        object.__setattr__(self, "rotation", _freeze(np.reshape(self.rotation, (4,))))
        object.__setattr__(self, "sh", _freeze(np.reshape(self.sh, (3, 16))))
        object.__setattr__(self, "opacity", float(self.opacity))
        for name in ("position", "scale", "rotation", "sh"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite {name}")
        if not np.isfinite(self.opacity) or not 0.0 <= self.opacity <= 1.0:
            raise ValueError("opacity must be in [0, 1]")
        if np.any(self.scale <= 0):
            raise ValueError("scale components must be positive")
        if abs(np.linalg.norm(self.rotation) - 1.0) > QUAT_NORM_TOL:
            raise ValueError("rotation quaternion is not normalized")

    def covariance(self) -> np.ndarray:
        return build_covariance(self.scale, self.rotation)


@dataclass(frozen=True)
class GaussianCloud:
    """Columnar, ordered set of K Gaussians.

    sh is (K, 3, C) with C in {1, 4, 9, 16}; reduced C means the cloud stores
    only the lower SH bands (detail levels do this).
    """

    positions: np.ndarray
    opacities: np.ndarray
    scales: np.ndarray
    rotations: np.ndarray
    sh: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.positions).shape[0]
        object.__setattr__(self, "positions", _freeze(np.reshape(self.positions, (k, 3))))
        object.__setattr__(self, "opacities", _freeze(np.reshape(self.opacities, (k,))))
        object.__setattr__(self, "scales", _freeze(np.reshape(self.scales, (k, 3))))
        object.__setattr__(self, "rotations", _freeze(np.reshape(self.rotations, (k, 4))))
        sh = np.asarray(self.sh, dtype=np.float64)
        if sh.ndim != 3 or sh.shape[0] != k or sh.shape[1] != 3:
            raise ValueError(f"sh must be (K, 3, C), got {sh.shape}")
        if sh.shape[2] not in _SIZE_TO_DEGREE:
            raise ValueError(f"sh coefficient count {sh.shape[2]} is not a full degree")
        object.__setattr__(self, "sh", _freeze(sh))
        for name in ("positions", "opacities", "scales", "rotations", "sh"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"non-finite values in {name}")
        if k:
            if self.opacities.min() < 0.0 or self.opacities.max() > 1.0:
                raise ValueError("opacities must be in [0, 1]")
            if self.scales.min() <= 0.0:
                raise ValueError("scale components must be positive")
            norms = np.linalg.norm(self.rotations, axis=1)
            if np.abs(norms - 1.0).max() > QUAT_NORM_TOL:
                raise ValueError("rotation quaternions must be normalized")

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def __len__(self) -> int:
        return self.count

    @property
    def sh_degree(self) -> int:
        return _SIZE_TO_DEGREE[self.sh.shape[2]]

    @classmethod
    def empty(cls, sh_coeffs: int = 16) -> "GaussianCloud":
        return cls(
            positions=np.zeros((0, 3)),
            opacities=np.zeros(0),
            scales=np.zeros((0, 3)),
            rotations=np.zeros((0, 4)),
            sh=np.zeros((0, 3, sh_coeffs)),
        )

    @classmethod
    def from_gaussians(cls, gaussians: Sequence[Gaussian]) -> "GaussianCloud":
        if not gaussians:
            return cls.empty()
        return cls(
            positions=np.stack([g.position for g in gaussians]),
            opacities=np.array([g.opacity for g in gaussians]),
            scales=np.stack([g.scale for g in gaussians]),
            rotations=np.stack([g.rotation for g in gaussians]),
            sh=np.stack([g.sh for g in gaussians]),
        )

    @classmethod
    def concat(cls, clouds: Iterable["GaussianCloud"]) -> "GaussianCloud":
        """Concatenate clouds in order; SH storage is zero-padded to the widest."""
        clouds = [c for c in clouds]
        if not clouds:
            return cls.empty()
        width = max(c.sh.shape[2] for c in clouds)
        return cls(
            positions=np.concatenate([c.positions for c in clouds]),
            opacities=np.concatenate([c.opacities for c in clouds]),
            scales=np.concatenate([c.scales for c in clouds]),
            rotations=np.concatenate([c.rotations for c in clouds]),
            sh=np.concatenate([_pad_sh(c.sh, width) for c in clouds]),
        )

    def take(self, indices) -> "GaussianCloud":
        """Subset cloud preserving the given index order."""
        idx = np.asarray(indices)
        return GaussianCloud(
            positions=self.positions[idx],
            opacities=self.opacities[idx],
            scales=self.scales[idx],
            rotations=self.rotations[idx],
            sh=self.sh[idx],
        )

    def with_sh_degree(self, degree: int) -> "GaussianCloud":
        """Drop SH bands above `degree` from storage (no-op when already narrower)."""
        n = SH_DEGREE_SIZES[degree]
        if n >= self.sh.shape[2]:
            return self
        return GaussianCloud(
            positions=self.positions,
            opacities=self.opacities,
            scales=self.scales,
            rotations=self.rotations,
            sh=self.sh[:, :, :n],
        )

    def gaussian(self, i: int) -> Gaussian:
        """Single-primitive view; reduced SH storage is zero-padded back to 16."""
        return Gaussian(
            position=self.positions[i],
            opacity=float(self.opacities[i]),
            scale=self.scales[i],
            rotation=self.rotations[i],
            sh=_pad_sh(self.sh[i : i + 1], 16)[0],
        )


def _pad_sh(sh: np.ndarray, width: int) -> np.ndarray:
    if sh.shape[2] == width:
        return sh
    out = np.zeros(sh.shape[:2] + (width,), dtype=np.float64)
    out[:, :, : sh.shape[2]] = sh
    return out


@dataclass(frozen=True)
class CameraView:
    """Pinhole camera: intrinsics in pixels plus a world-to-camera rigid pose."""

    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float
    rotation_w2c: np.ndarray
    translation_w2c: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        for name in ("fx", "fy", "cx", "cy"):
            object.__setattr__(self, name, float(getattr(self, name)))
        object.__setattr__(self, "rotation_w2c", _freeze(np.reshape(self.rotation_w2c, (3, 3))))
        object.__setattr__(self, "translation_w2c", _freeze(np.reshape(self.translation_w2c, (3,))))
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        r = self.rotation_w2c
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(self.translation_w2c)):
            raise ValueError("non-finite camera pose")
        if np.abs(r @ r.T - np.eye(3)).max() > ROT_ORTHO_TOL:
            raise ValueError("rotation_w2c is not orthonormal")

    @cached_property
    def camera_center(self) -> np.ndarray:
        """World-space camera position, -R^T t."""
        c = -self.rotation_w2c.T @ self.translation_w2c
        c.setflags(write=False)
        return c

    def world_to_camera(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=np.float64) @ self.rotation_w2c.T + self.translation_w2c


@dataclass(frozen=True)
class Image:
    """RGB image with float channels in [0, 1], shape (H, W, 3)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"pixels must be (H, W, 3), got {px.shape}")
        if not np.all(np.isfinite(px)):
            raise ValueError("non-finite pixel values")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValueError("pixel values must be in [0, 1]")
        object.__setattr__(self, "pixels", _freeze(px))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]
