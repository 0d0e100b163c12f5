"""COLMAP sparse-model parsing (cameras/images, text and binary variants).

Only PINHOLE and SIMPLE_PINHOLE camera models are supported; the stored
quaternion (w, x, y, z) and translation are world-to-camera. Text and binary
models of the same scene parse to identical CameraViews.
"""

import os
import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import CameraView, quat_to_rotmat
from .errors import DataError, UnsupportedCameraModel

# model id -> (name, parameter count); ids fixed by the COLMAP file format
CAMERA_MODELS = {
    0: ("SIMPLE_PINHOLE", 3),
    1: ("PINHOLE", 4),
    2: ("SIMPLE_RADIAL", 4),
    3: ("RADIAL", 5),
    4: ("OPENCV", 8),
    5: ("OPENCV_FISHEYE", 8),
    6: ("FULL_OPENCV", 12),
    7: ("FOV", 5),
    8: ("SIMPLE_RADIAL_FISHEYE", 4),
    9: ("RADIAL_FISHEYE", 5),
    10: ("THIN_PRISM_FISHEYE", 12),
}
_MODEL_IDS = {name: mid for mid, (name, _) in CAMERA_MODELS.items()}


@dataclass(frozen=True)
class CameraRecord:
    """One posed image: COLMAP image id, view, and the image file name."""

    image_id: int
    view: CameraView
    name: str


def _intrinsics(model: str, width, height, params):
    if model == "SIMPLE_PINHOLE":
        f, cx, cy = params
        return dict(width=width, height=height, fx=f, fy=f, cx=cx, cy=cy)
    if model == "PINHOLE":
        fx, fy, cx, cy = params
        return dict(width=width, height=height, fx=fx, fy=fy, cx=cx, cy=cy)
    raise UnsupportedCameraModel(model)


def _read_cameras_text(path):
    cams = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            cam_id, model = int(parts[0]), parts[1]
            width, height = int(parts[2]), int(parts[3])
            params = [float(v) for v in parts[4:]]
            cams[cam_id] = _intrinsics(model, width, height, params)
    return cams


def _read_cameras_binary(path):
    cams = {}
    with open(path, "rb") as f:
        (n,) = struct.unpack("<Q", f.read(8))
        for _ in range(n):
            cam_id, model_id, width, height = struct.unpack("<iiQQ", f.read(24))
            if model_id not in CAMERA_MODELS:
                raise DataError(f"{path}: unknown camera model id {model_id}")
            name, n_params = CAMERA_MODELS[model_id]
            params = struct.unpack(f"<{n_params}d", f.read(8 * n_params))
            cams[cam_id] = _intrinsics(name, width, height, list(params))
    return cams


def _read_images_text(path):
    images = []
    with open(path) as f:
        lines = (ln.strip() for ln in f)
        for line in lines:
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            image_id = int(parts[0])
            qvec = np.array([float(v) for v in parts[1:5]])
            tvec = np.array([float(v) for v in parts[5:8]])
            cam_id = int(parts[8])
            name = parts[9]
            next(lines, None)  # the per-image 2D point line
            images.append((image_id, qvec, tvec, cam_id, name))
    return images


def _read_images_binary(path):
    images = []
    with open(path, "rb") as f:
        (n,) = struct.unpack("<Q", f.read(8))
        for _ in range(n):
            image_id = struct.unpack("<I", f.read(4))[0]
            qvec = np.array(struct.unpack("<4d", f.read(32)))
            tvec = np.array(struct.unpack("<3d", f.read(24)))
            cam_id = struct.unpack("<I", f.read(4))[0]
            name = b""
            while True:
                ch = f.read(1)
                if ch in (b"\x00", b""):
                    break
                name += ch
            (n_pts,) = struct.unpack("<Q", f.read(8))
            f.seek(24 * n_pts, os.SEEK_CUR)  # x, y, point3D id per 2D point
            images.append((image_id, qvec, tvec, cam_id, name.decode("utf-8")))
    return images


def load_colmap(model_dir) -> list:
    """Parse a sparse model directory into CameraRecords sorted by image id.

    Prefers the text model when both text and binary files are present.
    """
    model_dir = os.fspath(model_dir)

    def pick(stem):
        txt = os.path.join(model_dir, f"{stem}.txt")
        binp = os.path.join(model_dir, f"{stem}.bin")
        if os.path.exists(txt):
            return txt, True
        if os.path.exists(binp):
            return binp, False
        raise DataError(f"{model_dir}: missing {stem}.txt/.bin")

    cam_path, cam_text = pick("cameras")
    img_path, img_text = pick("images")
    cams = _read_cameras_text(cam_path) if cam_text else _read_cameras_binary(cam_path)
    images = _read_images_text(img_path) if img_text else _read_images_binary(img_path)

    records = []
    for image_id, qvec, tvec, cam_id, name in sorted(images, key=lambda r: r[0]):
        if cam_id not in cams:
            raise DataError(f"{img_path}: image {image_id} references unknown camera {cam_id}")
        view = CameraView(rotation_w2c=quat_to_rotmat(qvec), translation_w2c=tvec, **cams[cam_id])
        records.append(CameraRecord(image_id=image_id, view=view, name=name))
    return records


def assign_split(records, test_every: Optional[int] = 8) -> list:
    """Train/test tag per record: every `test_every`-th (by ordinal) is test."""
    if not test_every:
        return ["train"] * len(records)
    return ["test" if i % test_every == 0 else "train" for i in range(len(records))]


def _rotmat_to_qvec(r):
    # w-first quaternion from a rotation matrix, standard trace construction
    m = np.asarray(r, dtype=np.float64)
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    return np.array(q)


def write_colmap_text(model_dir, records):
    """Write cameras.txt/images.txt for a list of CameraRecords.

    Each record gets its own PINHOLE camera entry (camera id = image id).
    """
    model_dir = os.fspath(model_dir)
    os.makedirs(model_dir, exist_ok=True)

    cam_lines = ["# Camera list: CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]"]
    img_lines = ["# Image list: IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME"]
    for rec in records:
        v = rec.view
        cam_lines.append(
            f"{rec.image_id} PINHOLE {v.width} {v.height} {v.fx!r} {v.fy!r} {v.cx!r} {v.cy!r}"
        )
        q = [float(x) for x in _rotmat_to_qvec(v.rotation_w2c)]
        t = [float(x) for x in v.translation_w2c]
        img_lines.append(
            f"{rec.image_id} {q[0]!r} {q[1]!r} {q[2]!r} {q[3]!r} "
            f"{t[0]!r} {t[1]!r} {t[2]!r} {rec.image_id} {rec.name}"
        )
        img_lines.append("")  # empty 2D point line

    from ._util import atomic_write_text

    atomic_write_text(os.path.join(model_dir, "cameras.txt"), "\n".join(cam_lines) + "\n")
    atomic_write_text(os.path.join(model_dir, "images.txt"), "\n".join(img_lines) + "\n")
