"""Latent vector codec: real/complex pairing, pre-whitening and dataset handling.

TX latents ``s_T`` (length ``d``) and RX latents ``s_R`` (length ``m``) are real.
They are turned into complex symbols by pairing the first half of the vector
(real parts) with the second half (imaginary parts).  Row-major batches are
supported everywhere: the pairing acts on the last axis.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _blobs
from ._blobs import FormatError

__all__ = [
    "ChannelDims",
    "ClassifierHead",
    "DimensionError",
    "FormatError",
    "LatentDataset",
    "SyntheticSpec",
    "Whitener",
    "apply_whitener",
    "compression_factor",
    "fit_whitener",
    "generate_synthetic",
    "load_dataset",
    "pair_to_complex",
    "save_dataset",
    "unpair_to_real",
]

MAP_KINDS = ("complex_linear", "real_linear", "mlp_nonlinear")


class DimensionError(ValueError):
    """Raised on incompatible array shapes."""


class InsufficientDataError(ValueError):
    """Raised when a statistic needs more samples than were given."""


def pair_to_complex(s):
    """Pair the two halves of the last axis into complex symbols.

    ``out[..., i] = s[..., i] + 1j * s[..., i + L/2]``.
    """
    s = np.asarray(s, dtype=np.float64)
    length = s.shape[-1]
    if length % 2:
        raise DimensionError(f"cannot pair an odd-length vector (length {length})")
    half = length // 2
    return s[..., :half] + 1j * s[..., half:]


def unpair_to_real(y):
    """Exact inverse of :func:`pair_to_complex`."""
    y = np.asarray(y, dtype=np.complex128)
    return np.concatenate([y.real, y.imag], axis=-1)


@dataclass(frozen=True)
class ChannelDims:
    K: int = 1
    n_t: int = 2
    n_r: int = 2

    def __post_init__(self):
        for name in ("K", "n_t", "n_r"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")

    @property
    def tx_symbols(self):
        return self.K * self.n_t

    @property
    def rx_symbols(self):
        return self.K * self.n_r


def compression_factor(dims, d):
    """Ratio of transmitted complex symbols ``K*N_T`` to the complex latent size ``d/2``."""
    if d % 2:
        raise DimensionError(f"d must be even, got {d}")
    return dims.K * dims.n_t / (d / 2)


@dataclass
class Whitener:
    mean: np.ndarray
    transform: np.ndarray
    eps: float = 1e-8

    @property
    def dim(self):
        return self.mean.shape[0]

    @classmethod
    def identity(cls, dim):
        return cls(np.zeros(dim, dtype=np.complex128), np.eye(dim, dtype=np.complex128), 0.0)


def fit_whitener(x, eps=1e-8, center=True):
    """Fit a covariance-whitening transform on the columns of ``x`` ((d/2) x n).

    The covariance is the Hermitian second moment of the (centered) columns,
    normalized by ``n`` so that the whitened matrix satisfies ``X X^H = n I``.
    Eigenvalues below ``eps`` are floored at ``eps``.
    """
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 2:
        raise DimensionError("fit_whitener expects a (dim, n) matrix")
    n = x.shape[1]
    if n < 2:
        raise InsufficientDataError(f"need at least 2 samples to fit a whitener, got {n}")
    mean = x.mean(axis=1) if center else np.zeros(x.shape[0], dtype=np.complex128)
    xc = x - mean[:, None]
    cov = xc @ xc.conj().T / n
    cov = 0.5 * (cov + cov.conj().T)
    evals, evecs = np.linalg.eigh(cov)
    evals = np.maximum(evals, eps)
    transform = (evecs / np.sqrt(evals)) @ evecs.conj().T
    if not np.all(np.isfinite(transform)):
        raise FloatingPointError("non-finite whitening transform")
    return Whitener(mean=mean, transform=transform, eps=eps)


def apply_whitener(w, x):
    """Apply ``transform @ (x - mean)`` to a vector or to the columns of a matrix."""
    x = np.asarray(x, dtype=np.complex128)
    if x.shape[0] != w.dim:
        raise DimensionError(f"whitener expects leading dimension {w.dim}, got {x.shape[0]}")
    if x.ndim == 1:
        return w.transform @ (x - w.mean)
    return w.transform @ (x - w.mean[:, None])


@dataclass
class ClassifierHead:
    """Linear head ``argmax(w @ s_R + b)``; ``w`` is C x m."""

    w: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.w.ndim != 2 or self.b.shape != (self.w.shape[0],):
            raise DimensionError("head needs w of shape (C, m) and b of shape (C,)")

    def predict(self, s_r):
        # argmax returns the first maximum: ties go to the lowest class index
        scores = np.atleast_2d(s_r) @ self.w.T + self.b
        return np.argmax(scores, axis=1)


@dataclass
class LatentDataset:
    tx: np.ndarray
    rx: np.ndarray
    labels: np.ndarray
    n_classes: int
    head: ClassifierHead | None = None

    def __post_init__(self):
        self.tx = np.atleast_2d(np.asarray(self.tx, dtype=np.float64))
        self.rx = np.atleast_2d(np.asarray(self.rx, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        n = self.tx.shape[0]
        if self.rx.shape[0] != n or self.labels.shape[0] != n:
            raise DimensionError(
                f"row counts differ: tx {n}, rx {self.rx.shape[0]}, labels {self.labels.shape[0]}"
            )
        if self.d % 2 or self.m % 2:
            raise DimensionError(f"latent dimensions must be even (d={self.d}, m={self.m})")
        if self.n_classes < 1:
            raise ValueError("n_classes must be positive")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if self.head is not None and self.head.w.shape != (self.n_classes, self.m):
            raise DimensionError(
                f"head weights have shape {self.head.w.shape}, expected ({self.n_classes}, {self.m})"
            )

    @property
    def n(self):
        return self.tx.shape[0]

    @property
    def d(self):
        return self.tx.shape[1]

    @property
    def m(self):
        return self.rx.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx)
        return LatentDataset(self.tx[idx], self.rx[idx], self.labels[idx], self.n_classes, self.head)

    def split(self, n_train, n_test=None):
        """First ``n_train`` rows as pilots, the last ``n_test`` rows held out."""
        n_test = self.n - n_train if n_test is None else n_test
        if n_train + n_test > self.n or n_train < 1 or n_test < 0:
            raise ValueError(f"cannot split {self.n} rows into {n_train} + {n_test}")
        return self.subset(np.arange(n_train)), self.subset(np.arange(self.n - n_test, self.n))

    def complex_tx(self):
        """Complex TX symbols as a (d/2) x n matrix."""
        return pair_to_complex(self.tx).T

    def complex_rx(self):
        return pair_to_complex(self.rx).T

    def astype32(self):
        """Round every array to binary32 precision (lossless under save/load)."""
        head = None
        if self.head is not None:
            head = ClassifierHead(
                self.head.w.astype(np.float32).astype(np.float64),
                self.head.b.astype(np.float32).astype(np.float64),
            )
        return LatentDataset(
            self.tx.astype(np.float32).astype(np.float64),
            self.rx.astype(np.float32).astype(np.float64),
            self.labels.copy(),
            self.n_classes,
            head,
        )


@dataclass(frozen=True)
class SyntheticSpec:
    d: int
    m: int
    n: int
    n_classes: int = 10
    cluster_spread: float = 0.1
    map_kind: str = "complex_linear"
    seed: int = 0

    def validate(self):
        if self.d < 2 or self.m < 2 or self.d % 2 or self.m % 2:
            raise ValueError(f"d and m must be even and >= 2 (d={self.d}, m={self.m})")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.n_classes < 2:
            raise ValueError("n_classes must be at least 2")
        if self.cluster_spread < 0:
            raise ValueError("cluster_spread must be non-negative")
        if self.map_kind not in MAP_KINDS:
            raise ValueError(f"map_kind must be one of {MAP_KINDS}, got {self.map_kind!r}")


def _complex_normal(rng, shape, var=1.0):
    scale = np.sqrt(var / 2)
    return scale * rng.standard_normal(shape) + 1j * scale * rng.standard_normal(shape)


def synthetic_tx_map(spec, rng):
    """Draw the seeded map sending RX latents (rows) to TX latents (rows)."""
    d, m = spec.d, spec.m
    if spec.map_kind == "complex_linear":
        q = _complex_normal(rng, (d // 2, m // 2), var=1.0 / (m // 2))
        return lambda rx: unpair_to_real(pair_to_complex(rx) @ q.T), q
    if spec.map_kind == "real_linear":
        a = rng.standard_normal((d, m)) / np.sqrt(m)
        return lambda rx: rx @ a.T, a
    w1 = rng.standard_normal((m, m)) / np.sqrt(m)
    w2 = rng.standard_normal((d, m)) / np.sqrt(m)
    return lambda rx: np.tanh(rx @ w1.T) @ w2.T, (w1, w2)


def generate_synthetic(spec):
    """Clustered RX latents, TX latents obtained through a seeded random map.

    The classifier head scores ``2 c_k . s - |c_k|^2`` so its argmax is the
    nearest class centroid.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    centroids = rng.standard_normal((spec.n_classes, spec.m))
    labels = rng.permutation(np.arange(spec.n) % spec.n_classes)
    rx = centroids[labels] + spec.cluster_spread * rng.standard_normal((spec.n, spec.m))
    to_tx, _ = synthetic_tx_map(spec, rng)
    tx = to_tx(rx)
    head = ClassifierHead(2.0 * centroids, -np.sum(centroids**2, axis=1))
    return LatentDataset(tx, rx, labels, spec.n_classes, head)


_DTYPES = {"f32le": "<f4", "f64le": "<f8"}


def save_dataset(ds, path, dtype="f32le"):
    """Write ``manifest.json`` plus raw little-endian blobs into directory ``path``."""
    if dtype not in _DTYPES:
        raise ValueError(f"dtype must be one of {sorted(_DTYPES)}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    np_dtype = _DTYPES[dtype]
    files = {"tx": "tx.bin", "rx": "rx.bin", "labels": "labels.bin"}
    _blobs.write_real(path / files["tx"], ds.tx, np_dtype)
    _blobs.write_real(path / files["rx"], ds.rx, np_dtype)
    _blobs.write_int32(path / files["labels"], ds.labels)
    if ds.head is not None:
        files["head_w"] = "head_w.bin"
        files["head_b"] = "head_b.bin"
        _blobs.write_real(path / files["head_w"], ds.head.w, np_dtype)
        _blobs.write_real(path / files["head_b"], ds.head.b, np_dtype)
    manifest = {
        "version": 1,
        "n": ds.n,
        "d": ds.d,
        "m": ds.m,
        "C": ds.n_classes,
        "dtype": dtype,
        "files": files,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_dataset(path):
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise FormatError(f"no manifest.json in {path}") from exc
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest.json is not valid JSON: {exc}") from exc
    try:
        version = manifest["version"]
        n, d, m, c = (int(manifest[k]) for k in ("n", "d", "m", "C"))
        dtype = manifest["dtype"]
        files = manifest["files"]
        tx_file, rx_file, lab_file = files["tx"], files["rx"], files["labels"]
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed manifest: {exc!r}") from exc
    if version != 1:
        raise FormatError(f"unsupported dataset version {version}")
    if dtype not in _DTYPES:
        raise FormatError(f"unsupported dtype {dtype!r}")
    np_dtype = _DTYPES[dtype]
    tx = _blobs.read_real(path / tx_file, n * d, np_dtype).reshape(n, d)
    rx = _blobs.read_real(path / rx_file, n * m, np_dtype).reshape(n, m)
    labels = _blobs.read_int32(path / lab_file, n)
    head = None
    if "head_w" in files or "head_b" in files:
        if not ("head_w" in files and "head_b" in files):
            raise FormatError("head_w and head_b must be given together")
        w = _blobs.read_real(path / files["head_w"], c * m, np_dtype).reshape(c, m)
        b = _blobs.read_real(path / files["head_b"], c, np_dtype)
        head = ClassifierHead(w, b)
    return LatentDataset(tx, rx, labels, c, head)
