"""File formats: CSV signals, PGM images and ``key=value`` text."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def write_signal_csv(path, values, fmt="%.17g"):
    """Write samples as plain CSV.

    1D signals are written one value per line, 2D grids row-major with comma
    separators.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim not in (1, 2):
        raise ValueError("signals must be 1D or 2D")
    np.savetxt(path, values if values.ndim == 2 else values[:, None], delimiter=",", fmt=fmt)


def read_signal_csv(path):
    """Inverse of :func:`write_signal_csv`.

    A single-column file is returned as a 1D array.
    """
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return data[:, 0].copy() if data.shape[1] == 1 else data


def write_pgm(path, image, maxval=255, vmin=None, vmax=None):
    """Write ``image`` as binary PGM (P5).

    Values are mapped linearly from ``[vmin, vmax]`` (default: the image
    range) to ``[0, maxval]`` and clipped. ``maxval`` is 255 or 65535.
    """
    image = np.asarray(image, dtype=float)
    if image.ndim != 2:
        raise ValueError("PGM images must be 2D")
    if maxval not in (255, 65535):
        raise ValueError("maxval must be 255 or 65535")
    lo = float(image.min()) if vmin is None else float(vmin)
    hi = float(image.max()) if vmax is None else float(vmax)
    scale = (hi - lo) or 1.0
    q = np.rint(np.clip((image - lo) / scale, 0.0, 1.0) * maxval)
    dtype = np.uint8 if maxval == 255 else np.uint16
    Image.fromarray(q.astype(dtype)).save(Path(path), format="PPM")


def read_pgm(path):
    """Read a grayscale image and return floats in ``[0, 1]``.

    Any format Pillow understands is accepted; colour images are converted
    to luminance.
    """
    with Image.open(path) as img:
        if img.mode in ("I;16", "I;16B", "I"):
            arr = np.asarray(img, dtype=float) / 65535.0
        else:
            arr = np.asarray(img.convert("L"), dtype=float) / 255.0
    return arr


def write_keyvalue(path, mapping):
    """Write one ``key=value`` pair per line."""
    with open(path, "w") as fh:
        for key, value in mapping.items():
            fh.write(f"{key}={value}\n")


def read_keyvalue(path):
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped.

    Values are returned as strings.
    """
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out
