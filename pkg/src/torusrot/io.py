"""Artifact writers: JSON, CSV, PBM (P4) and PPM (P6), all written atomically."""
from __future__ import annotations

import colorsys
import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np


def write_atomic(path, data: bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over the target."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _plain(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False, default=_plain) + "\n"


def write_json(path, obj) -> Path:
    return write_atomic(path, dumps_json(obj).encode("utf-8"))


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> Path:
    return write_atomic(path, csv_text(header, rows).encode("utf-8"))


def pbm_bytes(bits: np.ndarray) -> bytes:
    """P4 bitmap; raster row 0 is the bottom, so rows are flipped for display."""
    img = np.ascontiguousarray(np.asarray(bits, dtype=bool)[::-1])
    h, w = img.shape
    return f"P4\n{w} {h}\n".encode("ascii") + np.packbits(img, axis=1).tobytes()


def ppm_bytes(rgb: np.ndarray) -> bytes:
    """P6 pixmap from an (h, w, 3) uint8 array whose row 0 is the bottom."""
    img = np.ascontiguousarray(np.asarray(rgb, dtype=np.uint8)[::-1])
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_pnm(data: bytes):
    """Parse P4/P6 output of the writers above; returns the array with row 0 at the bottom."""
    magic, rest = data.split(b"\n", 1)
    dims, rest = rest.split(b"\n", 1)
    w, h = (int(t) for t in dims.split())
    if magic == b"P4":
        packed = np.frombuffer(rest, dtype=np.uint8).reshape(h, -1)
        return np.unpackbits(packed, axis=1)[:, :w].astype(bool)[::-1]
    if magic == b"P6":
        _, rest = rest.split(b"\n", 1)
        return np.frombuffer(rest, dtype=np.uint8).reshape(h, w, 3)[::-1]
    raise ValueError(f"unsupported format {magic!r}")


def hue(t: float) -> tuple:
    r, g, b = colorsys.hsv_to_rgb(float(t) % 1.0, 0.85, 0.9)
    return int(round(255 * r)), int(round(255 * g)), int(round(255 * b))


def render_lamination(lam) -> np.ndarray:
    """Circloids coloured by level on a white background."""
    ny, nx = lam.raster.shape
    rgb = np.full((ny, nx, 3), 255, dtype=np.uint8)
    for r, C in zip(lam.levels, lam.circloids):
        rgb[C.mask.bits] = hue(r * 0.8)
    return rgb


def render_heat(values: np.ndarray) -> np.ndarray:
    """Values in [0, 1) mapped to a hue ramp."""
    lut = np.array([hue(0.8 * i / 255) for i in range(256)], dtype=np.uint8)
    idx = np.clip(np.floor(np.mod(values, 1.0) * 256), 0, 255).astype(int)
    return lut[idx]
