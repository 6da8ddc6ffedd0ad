"""Little-endian binary blob helpers shared by the dataset and model formats."""

from pathlib import Path

import numpy as np


class FormatError(ValueError):
    """Raised when an on-disk manifest or blob is malformed."""


def _read(path, dtype, count):
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"missing blob {path}")
    raw = np.fromfile(path, dtype=dtype)
    if raw.size != count:
        raise FormatError(
            f"blob {path.name} holds {raw.size} values, manifest implies {count}"
        )
    return raw


def write_real(path, arr, dtype="<f4"):
    np.ascontiguousarray(arr, dtype=dtype).tofile(path)


def read_real(path, count, dtype="<f4"):
    return _read(path, dtype, count).astype(np.float64)


def write_int32(path, arr):
    np.ascontiguousarray(arr, dtype="<i4").tofile(path)


def read_int32(path, count):
    return _read(path, "<i4", count).astype(np.int64)


def write_complex(path, arr):
    """Write a complex array as interleaved (re, im) binary32, row-major."""
    arr = np.ascontiguousarray(arr, dtype=np.complex128)
    if np.any(np.abs(arr) > np.finfo(np.float32).max) or not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{Path(path).name}: values are not representable in binary32")
    inter = np.empty(arr.shape + (2,), dtype="<f4")
    inter[..., 0] = arr.real
    inter[..., 1] = arr.imag
    inter.tofile(path)


def read_complex(path, shape):
    count = int(np.prod(shape))
    raw = _read(path, "<f4", 2 * count).astype(np.float64)
    return (raw[0::2] + 1j * raw[1::2]).reshape(shape)


def write_mask(path, mask):
    np.ascontiguousarray(mask, dtype=np.uint8).tofile(path)


def read_mask(path, shape):
    raw = _read(path, np.uint8, int(np.prod(shape)))
    if np.any(raw > 1):
        raise FormatError(f"mask blob {Path(path).name} contains values other than 0/1")
    return raw.astype(bool).reshape(shape)
