"""Flat Rayleigh-fading MIMO channel, block lifting over K uses, and receiver noise."""

from dataclasses import dataclass

import numpy as np

from .codec import ChannelDims, DimensionError


def rng_from(seed):
    """``numpy`` generator from an int or a tuple of ints (e.g. ``(base, point, realization)``)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def complex_gaussian(rng, shape, var=1.0):
    """i.i.d. CN(0, var) samples: real and imaginary parts each N(0, var/2)."""
    scale = np.sqrt(var / 2.0)
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return scale * re + 1j * (scale * im)


@dataclass
class MimoChannel:
    h_bar: np.ndarray  # N_R x N_T, one channel use
    dims: ChannelDims

    def __post_init__(self):
        self.h_bar = np.asarray(self.h_bar, dtype=np.complex128)
        if self.h_bar.shape != (self.dims.n_r, self.dims.n_t):
            raise DimensionError(
                f"h_bar has shape {self.h_bar.shape}, expected ({self.dims.n_r}, {self.dims.n_t})"
            )
        if not np.all(np.isfinite(self.h_bar)):
            raise ValueError("channel matrix has non-finite entries")

    @property
    def lifted(self):
        return lift_channel(self)


@dataclass(frozen=True)
class SnrSpec:
    snr_db: float = 20.0
    p_t: float = 1.0

    def __post_init__(self):
        if not self.p_t > 0:
            raise ValueError("power budget p_t must be positive")


def sample_channel(dims, seed):
    """Draw H-bar with unit-variance CN(0, 1) entries, constant over the K uses."""
    rng = rng_from(seed)
    return MimoChannel(complex_gaussian(rng, (dims.n_r, dims.n_t)), dims)


def identity_channel(dims):
    """Truncated / zero-padded identity, the surrogate used for channel-unaware training."""
    return MimoChannel(np.eye(dims.n_r, dims.n_t, dtype=np.complex128), dims)


def lift_channel(ch):
    """Block-diagonal ``I_K kron H_bar`` of shape (K N_R) x (K N_T)."""
    return np.kron(np.eye(ch.dims.K), ch.h_bar)


def sigma2_from_snr(spec):
    """Per-receive-entry noise variance for ``SNR = P_T / sigma2``."""
    return spec.p_t * 10.0 ** (-spec.snr_db / 10.0)


def transmit(h_lifted, x_bar, noise):
    """``H x_bar + v``; accepts a single vector or rows of a batch."""
    h_lifted = np.asarray(h_lifted)
    x_bar = np.asarray(x_bar)
    noise = np.asarray(noise)
    if x_bar.shape[-1] != h_lifted.shape[1]:
        raise DimensionError(f"channel expects {h_lifted.shape[1]} inputs, got {x_bar.shape[-1]}")
    out = x_bar @ h_lifted.T
    if noise.shape != out.shape:
        raise DimensionError(f"noise shape {noise.shape} does not match output {out.shape}")
    return out + noise


def sample_noise(length, sigma2, seed):
    """CN(0, sigma2) receiver noise; ``length`` may be an int or a shape tuple."""
    if sigma2 < 0:
        raise ValueError("noise variance must be non-negative")
    rng = rng_from(seed)
    return complex_gaussian(rng, length, sigma2)
