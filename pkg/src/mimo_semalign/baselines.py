"""Disjoint alignment + channel equalization baselines.

Semantic alignment is a least-squares real map ``Q`` (m x d) between the TX and
RX latent spaces; the MIMO link is equalized separately with SVD precoding and
an MMSE-weighted SVD decoder.  Three strategies decide what is sent through the
link under a budget of ``2 K N_T`` real dimensions:

* ``first_k``: the first ``2 K N_T`` TX features, aligned by ``Q`` at the RX;
* ``top_k``: the ``K N_T`` largest-magnitude TX features, the other half of the
  budget carrying their (error-free) indices;
* ``eigen_k``: a truncated SVD of ``Q`` split into a TX projection and an RX
  reconstruction.
"""

from dataclasses import dataclass

import numpy as np

from .channel import SnrSpec, lift_channel, sample_noise, sigma2_from_snr
from .codec import compression_factor, pair_to_complex, unpair_to_real

KINDS = ("first_k", "top_k", "eigen_k")
EIGEN_VARIANTS = ("as_written", "split_sqrt", "sigma_tx_only")


@dataclass
class AlignmentMap:
    q: np.ndarray  # m x d

    def __call__(self, s_t):
        return np.asarray(s_t) @ self.q.T


def fit_alignment(ds, rcond=1e-10):
    """Minimum-norm least-squares ``Q = S_R S_T^+`` (rows of the dataset are samples)."""
    if ds.n < 1:
        raise ValueError("need at least one pilot")
    # rows: rx ~= tx @ Q^T
    qt, *_ = np.linalg.lstsq(ds.tx, ds.rx, rcond=rcond)
    return AlignmentMap(qt.T)


@dataclass
class SvdEqualizer:
    f_b: np.ndarray  # K N_T x K N_T
    g_b: np.ndarray  # K N_T x K N_R: one output per transmitted stream
    f_block: np.ndarray
    g_block: np.ndarray
    mode: str = "multiplex"


def svd_blocks(h_bar, snr_linear):
    """Per-use ``(V, (S^H S + I/SNR)^{-1} (U S)^H)`` for ``H_bar = U S V^H``."""
    if not snr_linear > 0:
        raise ValueError("snr must be positive")
    h_bar = np.asarray(h_bar, dtype=np.complex128)
    n_r, n_t = h_bar.shape
    try:
        u, s, vh = np.linalg.svd(h_bar)
    except np.linalg.LinAlgError as exc:
        raise FloatingPointError(f"SVD of the channel failed: {exc}") from exc
    if not np.all(np.isfinite(s)):
        raise FloatingPointError("non-finite singular values")
    sigma = np.zeros((n_r, n_t))
    sigma[: len(s), : len(s)] = np.diag(s)
    f_block = vh.conj().T
    mmse = np.linalg.inv(sigma.T @ sigma + np.eye(n_t) / snr_linear)
    g_block = mmse @ (u @ sigma).conj().T
    return f_block, g_block


def svd_equalizer(h_bar, snr_linear, K, mode="multiplex"):
    """Lift the per-use SVD blocks over ``K`` uses.

    ``multiplex`` applies them block-diagonally (``I_K kron .``) so that K
    different symbol groups are sent.  ``repeat`` sends the same ``N_T``
    symbols on every use (``1_K kron V``) and averages the K decoded copies.
    """
    f_block, g_block = svd_blocks(h_bar, snr_linear)
    if mode == "multiplex":
        eye = np.eye(K)
        return SvdEqualizer(np.kron(eye, f_block), np.kron(eye, g_block), f_block, g_block, mode)
    if mode == "repeat":
        ones = np.ones((K, 1))
        return SvdEqualizer(
            np.kron(ones, f_block), np.kron(ones.T, g_block) / K, f_block, g_block, mode
        )
    raise ValueError(f"unknown lifting mode {mode!r}")


def select_first_k(s_t, budget):
    """Keep the first ``budget`` features; the RX zero-fills the rest."""
    s_t = np.asarray(s_t, dtype=np.float64)
    d = s_t.shape[-1]
    if budget > d or budget < 0:
        raise ValueError(f"budget {budget} outside [0, {d}]")
    payload = s_t[..., :budget].copy()
    recon = np.zeros_like(s_t)
    recon[..., :budget] = payload
    return payload, recon


def select_top_k(s_t, budget):
    """Send the ``budget/2`` largest-magnitude features; indices take the other half.

    Ties go to the lower index.  Returns ``(payload, indices, reconstruction)``;
    for a batch, indices are per row.
    """
    s_t = np.asarray(s_t, dtype=np.float64)
    d = s_t.shape[-1]
    if budget % 2 or budget > d or budget < 0:
        raise ValueError(f"budget must be even and at most d={d}, got {budget}")
    k = budget // 2
    # stable sort on -|s| keeps lower indices first among equal magnitudes
    order = np.argsort(-np.abs(s_t), axis=-1, kind="stable")[..., :k]
    idx = np.sort(order, axis=-1)
    payload = np.take_along_axis(s_t, idx, axis=-1)
    recon = np.zeros_like(s_t)
    np.put_along_axis(recon, idx, payload, axis=-1)
    return payload, idx, recon


def eigen_k_codecs(q, budget, variant="as_written"):
    """Truncated-SVD codecs ``(f_tilde: r x d, g_tilde: m x r)`` of ``Q = U S V^T``.

    ``as_written`` puts the singular values on both sides (so ``g f`` carries
    ``S^2``), ``split_sqrt`` puts ``sqrt(S)`` on each side and
    ``sigma_tx_only`` keeps ``S`` at the TX only, so a full budget gives ``g f = Q``.
    Budgets above the rank use zero singular values.
    """
    q = np.asarray(q, dtype=np.float64)
    m, d = q.shape
    r = int(budget)
    if r < 0 or r > min(m, d):
        raise ValueError(f"budget must lie in [0, {min(m, d)}]")
    if variant not in EIGEN_VARIANTS:
        raise ValueError(f"variant must be one of {EIGEN_VARIANTS}")
    u, s, vt = np.linalg.svd(q, full_matrices=False)
    s_r = np.diag(s[:r])
    if variant == "as_written":
        tx_s, rx_s = s_r, s_r
    elif variant == "split_sqrt":
        tx_s = rx_s = np.sqrt(s_r)
    else:
        tx_s, rx_s = s_r, np.eye(r)
    return tx_s @ vt[:r], u[:, :r] @ rx_s


@dataclass
class BaselineConfig:
    eigen_variant: str = "as_written"
    lift_mode: str = "multiplex"
    p_t: float = 1.0


def _budget(dims, mode):
    return 2 * (dims.tx_symbols if mode == "multiplex" else dims.n_t)


def _link(symbols, eq, h_lifted, sigma2, scale, seed):
    """Send unit-normalized symbol rows through the SVD-equalized channel."""
    tx = (symbols * scale) @ eq.f_b.T
    noise = sample_noise((symbols.shape[0], h_lifted.shape[0]), sigma2, seed)
    received = tx @ h_lifted.T + noise
    return (received @ eq.g_b.T) / scale


class Baseline:
    """A fitted disjoint baseline that can be evaluated on new TX latents."""

    def __init__(self, kind, train, channel, snr_db, cfg=None):
        cfg = BaselineConfig() if cfg is None else cfg
        if kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        self.kind = kind
        self.cfg = cfg
        self.dims = channel.dims
        self.budget = _budget(channel.dims, cfg.lift_mode)
        if self.budget > train.d:
            raise ValueError(f"budget {self.budget} exceeds d={train.d}")
        self.alignment = fit_alignment(train)
        self.snr_linear = 10.0 ** (snr_db / 10.0)
        self.eq = svd_equalizer(channel.h_bar, self.snr_linear, channel.dims.K, cfg.lift_mode)
        if kind == "eigen_k":
            self.f_tilde, self.g_tilde = eigen_k_codecs(self.alignment.q, self.budget, cfg.eigen_variant)
        # payload scaling so that the mean transmitted power is p_t
        payload = self._payload(train.tx)
        power = np.mean(np.sum(np.abs(payload) ** 2, axis=1))
        self.scale = np.sqrt(cfg.p_t / power) if power > 0 else 1.0

    def _payload(self, s_t):
        if self.kind == "first_k":
            payload, _ = select_first_k(s_t, self.budget)
            return pair_to_complex(payload)
        if self.kind == "top_k":
            values, _, _ = select_top_k(s_t, self.budget)
            # values ride on the real parts, the index half is not simulated
            return values.astype(np.complex128)
        return pair_to_complex(s_t @ self.f_tilde.T)

    def apply(self, s_t, h_lifted, sigma2, seed):
        s_t = np.atleast_2d(np.asarray(s_t, dtype=np.float64))
        payload = self._payload(s_t)
        n_sym = self.eq.f_b.shape[1]
        symbols = np.zeros((s_t.shape[0], n_sym), dtype=np.complex128)
        symbols[:, : payload.shape[1]] = payload
        decoded = _link(symbols, self.eq, h_lifted, sigma2, self.scale, seed)[:, : payload.shape[1]]
        if self.kind == "first_k":
            recon = np.zeros_like(s_t)
            recon[:, : self.budget] = unpair_to_real(decoded)
            return self.alignment(recon)
        if self.kind == "top_k":
            _, idx, _ = select_top_k(s_t, self.budget)
            recon = np.zeros_like(s_t)
            np.put_along_axis(recon, idx, decoded.real, axis=-1)
            return self.alignment(recon)
        return unpair_to_real(decoded) @ self.g_tilde.T


def run_baseline(kind, train, test, channel, snr_db, seed, cfg=None, p_t=1.0):
    """Fit a baseline on ``train`` and score it on ``test``; returns an EvalRecord."""
    from .evalx import EvalRecord, score

    cfg = BaselineConfig(p_t=p_t) if cfg is None else cfg
    model = Baseline(kind, train, channel, snr_db, cfg)
    h = lift_channel(channel)
    sigma2 = sigma2_from_snr(SnrSpec(snr_db, cfg.p_t))
    est = model.apply(test.tx, h, sigma2, seed)
    mse, acc = score(est, test)
    return EvalRecord(
        method=kind,
        zeta=compression_factor(channel.dims, train.d),
        snr_db=snr_db,
        n_pilots=train.n,
        seed=seed if isinstance(seed, int) else 0,
        mse=mse,
        accuracy=acc,
        flops=0,
        sparsity=0.0,
    )
