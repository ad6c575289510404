"""Reading and writing fields, images, overlays and configuration files.

Images are stored with the first row at the top, whereas field arrays have
``j = 0`` at the bottom (``y`` grows with the row index).  Every image reader
and writer here flips rows so the two conventions meet.  CSV field files keep
array order (first line is ``j = 0``) and full float precision.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import tomli
import tomli_w
from PIL import Image, ImageDraw

from .errors import ConfigError
from .stripes import StripeSet

__all__ = [
    "read_image",
    "write_pgm",
    "write_png",
    "read_field_csv",
    "write_field_csv",
    "read_field",
    "write_overlay",
    "load_toml",
    "dump_toml",
    "write_json",
    "resize_box",
]

IMAGE_SUFFIXES = (".pgm", ".png")


def read_image(path) -> np.ndarray:
    """Grayscale PGM (P5, 8 or 16 bit) or PNG mapped to ``[0, 1]``."""
    path = Path(path)
    with Image.open(path) as im:
        im.load()
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=float)
            maxval = _pgm_maxval(path) if path.suffix.lower() == ".pgm" else 65535.0
        elif im.mode in ("L", "P", "RGB", "RGBA", "LA", "1"):
            arr = np.asarray(im.convert("L"), dtype=float)
            maxval = _pgm_maxval(path) if path.suffix.lower() == ".pgm" else 255.0
        else:
            raise ConfigError(f"unsupported image mode {im.mode!r} in {path}")
    return np.flipud(arr / maxval).copy()


def _pgm_maxval(path: Path) -> float:
    with open(path, "rb") as fh:
        tokens: list[bytes] = []
        while len(tokens) < 4:
            line = fh.readline()
            if not line:
                break
            tokens += line.split(b"#", 1)[0].split()
    if len(tokens) < 4 or tokens[0] != b"P5":
        raise ConfigError(f"{path} is not a binary (P5) PGM file")
    return float(tokens[3])


def _scale(arr: np.ndarray, vmax: float | None) -> tuple[np.ndarray, float]:
    arr = np.asarray(arr, dtype=float)
    if vmax is None:
        top = float(np.max(arr)) if arr.size else 1.0
        vmax = 1.0 if top <= 1.0 else top
    return np.clip(arr / vmax, 0.0, 1.0), vmax


def write_pgm(path, arr: np.ndarray, bits: int = 16, vmax: float | None = None) -> float:
    """Binary PGM of ``arr`` mapped from ``[0, vmax]``; returns ``vmax``.

    ``vmax`` defaults to 1 when the data fits in ``[0, 1]`` (so values survive
    a round trip up to quantization) and to the data maximum otherwise.
    """
    if bits not in (8, 16):
        raise ConfigError("PGM depth must be 8 or 16 bits")
    unit, vmax = _scale(arr, vmax)
    maxval = 255 if bits == 8 else 65535
    q = np.rint(np.flipud(unit) * maxval).astype(">u2" if bits == 16 else "u1")
    ny, nx = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{nx} {ny}\n{maxval}\n".encode("ascii"))
        fh.write(q.tobytes())
    return vmax


def write_png(path, arr: np.ndarray, vmax: float | None = None) -> float:
    unit, vmax = _scale(arr, vmax)
    Image.fromarray(np.rint(np.flipud(unit) * 255).astype(np.uint8), mode="L").save(path)
    return vmax


def write_field_csv(path, arr: np.ndarray) -> None:
    np.savetxt(path, np.asarray(arr, dtype=float), delimiter=",", fmt="%.17g", newline="\r\n")


def read_field_csv(path) -> np.ndarray:
    arr = np.loadtxt(path, delimiter=",", ndmin=2)
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{path} contains non-finite values")
    return arr


def read_field(path) -> np.ndarray:
    """Dispatch on suffix: ``.csv`` (exact values) or an image."""
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".csv":
        return read_field_csv(path)
    if suffix in IMAGE_SUFFIXES:
        return read_image(path)
    raise ConfigError(f"unsupported input format {suffix!r}; use .csv, .pgm or .png")


def write_overlay(path, image: np.ndarray, stripes: StripeSet, zoom: int = 4,
                  color=(255, 40, 40)) -> None:
    """PNG of ``image`` (grayscale, auto-scaled) with the segments drawn on top."""
    img = np.asarray(image, dtype=float)
    lo, hi = float(img.min()), float(img.max())
    unit = (img - lo) / (hi - lo) if hi > lo else np.zeros_like(img)
    gray = np.rint(np.flipud(unit) * 255).astype(np.uint8)
    ny, nx = gray.shape
    rgb = Image.fromarray(gray, mode="L").convert("RGB").resize((nx * zoom, ny * zoom), Image.NEAREST)
    draw = ImageDraw.Draw(rgb)
    h = stripes.grid.h
    for s in stripes:
        a, b = s.endpoints
        pa = (a[0] / h * zoom, (ny - a[1] / h) * zoom)
        pb = (b[0] / h * zoom, (ny - b[1] / h) * zoom)
        draw.line([pa, pb], fill=color, width=max(1, zoom // 2))
    rgb.save(path)


def load_toml(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None


def dump_toml(data: dict, path) -> None:
    with open(path, "wb") as fh:
        tomli_w.dump(_drop_none(data), fh)


def _drop_none(d):
    if isinstance(d, dict):
        return {k: _drop_none(v) for k, v in d.items() if v is not None}
    if isinstance(d, list):
        return [_drop_none(v) for v in d]
    return d


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _box_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic matrix averaging input cells over each output cell."""
    edges_in = np.arange(n_in + 1) / n_in
    edges_out = np.arange(n_out + 1) / n_out
    lo = np.maximum(edges_out[:-1, None], edges_in[None, :-1])
    hi = np.minimum(edges_out[1:, None], edges_in[None, 1:])
    W = np.clip(hi - lo, 0.0, None)
    return W / W.sum(axis=1, keepdims=True)


def resize_box(arr: np.ndarray, n: int) -> np.ndarray:
    """Box-filter resampling to ``n x n`` (area-weighted averages)."""
    if n < 1:
        raise ConfigError("resize target must be positive")
    arr = np.asarray(arr, dtype=float)
    ny, nx = arr.shape
    return _box_matrix(ny, n) @ arr @ _box_matrix(nx, n).T
