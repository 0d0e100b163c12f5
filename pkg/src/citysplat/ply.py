"""Gaussian checkpoint PLY serialization.

Binary little-endian layout, one float32 vertex element with properties
  x y z nx ny nz f_dc_0..2 f_rest_* opacity scale_0..2 rot_0..3
where f_rest holds the SH bands above band 0 in channel-major order and may
be 0, 9, 24 or 45 wide (reduced detail levels store fewer bands).

Stored values are pre-activation: `opacity` is a logit, `scale_i` is a log.
Loading applies sigmoid/exp; saving inverts them. The normal slots are
vestigial and written as zeros. Quaternions are stored (w, x, y, z) and are
only renormalized on load when they miss unit norm by more than the type
tolerance, so files written by this module round-trip byte for byte.
"""

import os
import warnings

import numpy as np
from scipy.special import expit, logit

from ._util import atomic_write_bytes
from .core import QUAT_NORM_TOL, GaussianCloud, SH_DEGREE_SIZES
from .errors import DataError, PlySchemaError

MIN_SCALE = 1e-8
_OPACITY_CLAMP = 1e-6

_FREST_WIDTHS = {3 * (n - 1) for n in SH_DEGREE_SIZES.values()}  # {0, 9, 24, 45}


def _property_names(f_rest_count: int):
    names = ["x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"]
    names += [f"f_rest_{i}" for i in range(f_rest_count)]
    names += ["opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"]
    return names


def _parse_header(blob: bytes, path):
    end = blob.find(b"end_header\n")
    if not blob.startswith(b"ply\n") or end < 0:
        raise PlySchemaError(f"{path}: not a PLY file")
    lines = blob[:end].decode("ascii", "replace").splitlines()
    fmt = None
    count = None
    props = []
    element = None
    for line in lines[1:]:
        tokens = line.split()
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        if tokens[0] == "format":
            fmt = tokens[1]
        elif tokens[0] == "element":
            if element is not None:
                raise PlySchemaError(f"{path}: unsupported extra element '{tokens[1]}'")
            if tokens[1] != "vertex":
                raise PlySchemaError(f"{path}: expected a vertex element, got '{tokens[1]}'")
            element = tokens[1]
            count = int(tokens[2])
        elif tokens[0] == "property":
            if element is None:
                raise PlySchemaError(f"{path}: property declared before the vertex element")
            if tokens[1] not in ("float", "float32"):
                raise PlySchemaError(f"{path}: property '{tokens[-1]}' is not float32")
            props.append(tokens[2])
    if fmt != "binary_little_endian":
        raise PlySchemaError(f"{path}: format must be binary_little_endian, got {fmt}")
    if count is None:
        raise PlySchemaError(f"{path}: missing vertex element")
    return count, props, end + len(b"end_header\n")


def load_ply(path) -> GaussianCloud:
    """Load a Gaussian checkpoint.

    Raises PlySchemaError when the layout is wrong (missing property, wrong
    format) and DataError for non-finite rows or zero-norm quaternions, with
    the offending row index in the message.
    """
    with open(path, "rb") as f:
        blob = f.read()
    count, props, offset = _parse_header(blob, path)

    f_rest = sorted(
        (int(p[len("f_rest_"):]) for p in props if p.startswith("f_rest_")),
    )
    n_rest = len(f_rest)
    if n_rest not in _FREST_WIDTHS or f_rest != list(range(n_rest)):
        raise PlySchemaError(f"{path}: f_rest properties must be a 0/9/24/45-wide prefix")
    for name in _property_names(n_rest):
        if name not in props:
            raise PlySchemaError(f"{path}: missing property '{name}'")

    dtype = np.dtype([(p, "<f4") for p in props])
    body = blob[offset:]
    if len(body) < count * dtype.itemsize:
        raise DataError(f"{path}: truncated body, expected {count} vertices")
    raw = np.frombuffer(body[: count * dtype.itemsize], dtype=dtype)

    def col(*names):
        return np.stack([raw[n].astype(np.float64) for n in names], axis=1)

    table = np.stack([raw[p].astype(np.float64) for p in props], axis=1) if count else np.zeros((0, len(props)))
    bad = ~np.all(np.isfinite(table), axis=1)
    if bad.any():
        raise DataError(f"{path}: non-finite value at row {int(np.argmax(bad))}")

    positions = col("x", "y", "z")
    opacities = expit(raw["opacity"].astype(np.float64)) if count else np.zeros(0)

    scales = np.exp(col("scale_0", "scale_1", "scale_2"))
    tiny = scales <= MIN_SCALE
    if tiny.any():
        warnings.warn(f"{path}: clamped {int(tiny.sum())} degenerate scale components to {MIN_SCALE}")
        scales = np.where(tiny, MIN_SCALE, scales)

    rotations = col("rot_0", "rot_1", "rot_2", "rot_3")
    norms = np.linalg.norm(rotations, axis=1)
    if count and norms.min() == 0.0:
        raise DataError(f"{path}: zero-norm quaternion at row {int(np.argmin(norms))}")
    off = np.abs(norms - 1.0) > QUAT_NORM_TOL
    if off.any():
        rotations = np.where(off[:, None], rotations / norms[:, None], rotations)

    n_coeffs = 1 + n_rest // 3
    sh = np.zeros((count, 3, n_coeffs))
    sh[:, 0, 0] = raw["f_dc_0"]
    sh[:, 1, 0] = raw["f_dc_1"]
    sh[:, 2, 0] = raw["f_dc_2"]
    for c in range(3):
        for i in range(n_coeffs - 1):
            sh[:, c, 1 + i] = raw[f"f_rest_{c * (n_coeffs - 1) + i}"]

    return GaussianCloud(
        positions=positions, opacities=opacities, scales=scales,
        rotations=rotations, sh=sh,
    )


def dump_ply(cloud: GaussianCloud) -> bytes:
    """Serialized checkpoint bytes for a cloud (see save_ply)."""
    k = cloud.count
    n_coeffs = cloud.sh.shape[2]
    n_rest = 3 * (n_coeffs - 1)
    props = _property_names(n_rest)

    header = "ply\nformat binary_little_endian 1.0\n"
    header += f"element vertex {k}\n"
    header += "".join(f"property float {p}\n" for p in props)
    header += "end_header\n"

    op = cloud.opacities
    pinned = (op == 0.0) | (op == 1.0)
    if pinned.any():
        warnings.warn(f"clamped {int(pinned.sum())} saturated opacities before logit")
        op = np.clip(op, _OPACITY_CLAMP, 1.0 - _OPACITY_CLAMP)

    out = np.zeros(k, dtype=np.dtype([(p, "<f4") for p in props]))
    for i, name in enumerate(("x", "y", "z")):
        out[name] = cloud.positions[:, i]
    out["f_dc_0"] = cloud.sh[:, 0, 0]
    out["f_dc_1"] = cloud.sh[:, 1, 0]
    out["f_dc_2"] = cloud.sh[:, 2, 0]
    for c in range(3):
        for i in range(n_coeffs - 1):
            out[f"f_rest_{c * (n_coeffs - 1) + i}"] = cloud.sh[:, c, 1 + i]
    out["opacity"] = logit(op)
    for i in range(3):
        out[f"scale_{i}"] = np.log(cloud.scales[:, i])
    for i in range(4):
        out[f"rot_{i}"] = cloud.rotations[:, i]

    return header.encode("ascii") + out.tobytes()


def save_ply(cloud: GaussianCloud, path):
    """Write a checkpoint atomically (write-then-rename)."""
    atomic_write_bytes(os.fspath(path), dump_ply(cloud))
