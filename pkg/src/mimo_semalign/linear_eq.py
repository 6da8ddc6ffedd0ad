"""Linear semantic precoder/decoder learned with scaled ADMM.

The program solved is

    min_{G, F}  (1/n) ||Y - G H F X||_F^2 + tr(G Sigma_v G^H)   s.t.  tr(F F^H) <= P_T

over complex matrices ``F`` (K N_T x d/2) and ``G`` (m/2 x K N_R), where the
columns of ``X`` are whitened TX symbols and the columns of ``Y`` the paired RX
latents.  ADMM splits the power constraint onto an auxiliary ``Z = F`` and
alternates the closed-form G update, a regularized F update (a generalized
Sylvester equation), the projection onto the power ball and the scaled dual
update.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as spla

from . import _blobs
from .channel import complex_gaussian, rng_from
from .codec import (
    ChannelDims,
    DimensionError,
    FormatError,
    Whitener,
    apply_whitener,
    fit_whitener,
    pair_to_complex,
    unpair_to_real,
)

SIGMA2_FLOOR = 1e-12
F_SOLVERS = ("auto", "kron", "sylvester")


class SolverError(np.linalg.LinAlgError):
    """A closed-form update hit a singular or non-finite linear system."""


class WhiteningWarning(UserWarning):
    pass


@dataclass
class AdmmConfig:
    rho: float = 100.0
    iters: int = 20
    p_t: float = 1.0
    f_solver: str = "auto"
    refit_g: bool = True

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if int(self.iters) != self.iters or self.iters < 0:
            raise ValueError("iters must be a non-negative integer")
        if not self.p_t > 0:
            raise ValueError("p_t must be positive")
        if self.f_solver not in F_SOLVERS:
            raise ValueError(f"f_solver must be one of {F_SOLVERS}")


@dataclass
class AdmmState:
    f: np.ndarray
    z: np.ndarray
    u: np.ndarray
    g: np.ndarray
    objective_history: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)

    @property
    def primal_residual(self):
        """``||F - Z||_F / max(1, ||F||_F)``."""
        return np.linalg.norm(self.f - self.z) / max(1.0, np.linalg.norm(self.f))


@dataclass
class LinearEqualizer:
    f: np.ndarray  # K N_T x d/2
    g: np.ndarray  # m/2 x K N_R
    whitener: Whitener
    p_t: float = 1.0

    @property
    def power(self):
        return float(np.real(np.vdot(self.f, self.f)))

    def apply(self, s_t, h_lifted, v):
        return apply_linear(self, s_t, h_lifted, v)


def _check_shapes(g, f, x, y, h):
    if f is not None and h.shape[1] != f.shape[0]:
        raise DimensionError(f"H has {h.shape[1]} columns but F has {f.shape[0]} rows")
    if f is not None and f.shape[1] != x.shape[0]:
        raise DimensionError(f"F has {f.shape[1]} columns but X has {x.shape[0]} rows")
    if g is not None and g.shape[1] != h.shape[0]:
        raise DimensionError(f"G has {g.shape[1]} columns but H has {h.shape[0]} rows")
    if g is not None and g.shape[0] != y.shape[0]:
        raise DimensionError(f"G has {g.shape[0]} rows but Y has {y.shape[0]} rows")
    if x.shape[1] != y.shape[1]:
        raise DimensionError("X and Y must have the same number of columns")


def objective(g, f, x, y, h, sigma2, n=None):
    """Empirical loss ``(1/n)||Y - G H F X||_F^2 + sigma2 * ||G||_F^2``."""
    g, f, x, y, h = (np.atleast_2d(np.asarray(a, dtype=np.complex128)) for a in (g, f, x, y, h))
    _check_shapes(g, f, x, y, h)
    n = x.shape[1] if n is None else n
    resid = y - g @ (h @ (f @ x))
    return float(np.real(np.vdot(resid, resid)) / n + sigma2 * np.real(np.vdot(g, g)))


def g_step(f, x, y, h, sigma2, n=None):
    """Closed-form decoder ``G = Y P^H (P P^H + n sigma2 I)^{-1}`` with ``P = H F X``."""
    f, x, y, h = (np.atleast_2d(np.asarray(a, dtype=np.complex128)) for a in (f, x, y, h))
    _check_shapes(None, f, x, y, h)
    n = x.shape[1] if n is None else n
    sigma2 = max(float(sigma2), SIGMA2_FLOOR)
    p = h @ (f @ x)
    gram = p @ p.conj().T
    gram = 0.5 * (gram + gram.conj().T) + n * sigma2 * np.eye(gram.shape[0])
    evals = np.linalg.eigvalsh(gram)
    if not np.all(np.isfinite(evals)) or evals[0] <= evals[-1] * gram.shape[0] * np.finfo(float).eps:
        raise SolverError(
            "G-step system (H F X)(H F X)^H + n Sigma_v is numerically singular; "
            "use a positive noise variance or a full-rank precoder"
        )
    try:
        gh = spla.solve(gram, p @ y.conj().T, assume_a="pos")
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"G-step solve failed: {exc}") from exc
    return gh.conj().T


def f_step_operands(g, x, y, h, z, u, rho, n=None):
    """Return ``(A, B, C, n*rho)`` of the F normal equation ``A F B + n rho F = C``."""
    g, x, y, h, z, u = (np.atleast_2d(np.asarray(a, dtype=np.complex128)) for a in (g, x, y, h, z, u))
    n = x.shape[1] if n is None else n
    gh = g @ h
    a = gh.conj().T @ gh
    b = x @ x.conj().T
    c = n * rho * (z - u) + gh.conj().T @ y @ x.conj().T
    return a, b, c, n * rho


def solve_kron(a, b, c, shift):
    """Solve ``A F B + shift F = C`` through ``(B^T kron A + shift I) vec(F) = vec(C)``.

    ``vec`` stacks columns, for which ``vec(A F B) = (B^T kron A) vec(F)``.
    """
    p, q = c.shape
    op = np.kron(b.T, a) + shift * np.eye(p * q)
    vec_f = spla.solve(op, c.reshape(-1, order="F"))
    return vec_f.reshape((p, q), order="F")


def solve_sylvester(a, b, c, shift):
    """Bartels-Stewart style solve of ``A F B + shift F = C``.

    Both coefficient matrices are reduced to complex Schur form
    ``A = Qa Ta Qa^H``, ``B = Qb Tb Qb^H``; the transformed unknown then
    satisfies ``Ta Ft Tb + shift Ft = Ct`` and is recovered one column at a
    time by upper-triangular solves, since ``Tb`` is upper triangular.
    """
    ta, qa = spla.schur(a.astype(np.complex128), output="complex")
    tb, qb = spla.schur(b.astype(np.complex128), output="complex")
    ct = qa.conj().T @ c @ qb
    p, q = ct.shape
    ft = np.zeros((p, q), dtype=np.complex128)
    eye = np.eye(p)
    for j in range(q):
        rhs = ct[:, j]
        if j:
            rhs = rhs - ta @ (ft[:, :j] @ tb[:j, j])
        ft[:, j] = spla.solve_triangular(tb[j, j] * ta + shift * eye, rhs)
    return qa @ ft @ qb.conj().T


def _pick_solver(solver, shape):
    if solver == "auto":
        return "sylvester" if min(shape) > 32 else "kron"
    if solver not in F_SOLVERS:
        raise ValueError(f"unknown F solver {solver!r}")
    return solver


def f_step(g, x, y, h, z, u, rho, n=None, solver="auto"):
    """Minimize ``(1/n)||Y - G H F X||_F^2 + rho ||F - Z + U||_F^2`` over F."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    a, b, c, shift = f_step_operands(g, x, y, h, z, u, rho, n)
    if _pick_solver(solver, c.shape) == "kron":
        return solve_kron(a, b, c, shift)
    return solve_sylvester(a, b, c, shift)


def projection_multiplier(zhat, p_t):
    """KKT multiplier of the power-ball projection: 0 inside, ``sqrt(tr/P_T) - 1`` outside."""
    power = float(np.real(np.vdot(zhat, zhat)))
    return 0.0 if power <= p_t else np.sqrt(power / p_t) - 1.0


def z_step(zhat, p_t):
    """Project onto ``{Z : tr(Z Z^H) <= P_T}`` by radial scaling."""
    if not p_t > 0:
        raise ValueError("p_t must be positive")
    zhat = np.asarray(zhat, dtype=np.complex128)
    power = float(np.real(np.vdot(zhat, zhat)))
    if power <= p_t:
        return zhat.copy()
    z = zhat * np.sqrt(p_t / power)
    # rounding can leave the trace an ulp above the budget; shave it off
    while float(np.real(np.vdot(z, z))) > p_t:
        z *= 1.0 - 2.0**-52
    return z


def u_step(u, f, z):
    u, f, z = (np.asarray(a, dtype=np.complex128) for a in (u, f, z))
    if not u.shape == f.shape == z.shape:
        raise DimensionError(f"shape mismatch in U-step: {u.shape}, {f.shape}, {z.shape}")
    # grouping the difference first keeps U bit-exact once F = Z
    return u + (f - z)


def _whiteness_gap(x):
    n = x.shape[1]
    cov = x @ x.conj().T / n
    return np.linalg.norm(cov - np.eye(x.shape[0])) / np.sqrt(x.shape[0])


def run_admm(x, y, h, sigma2, cfg=None, seed=0, whitener=None):
    """Run ``cfg.iters`` scaled-ADMM iterations from ``F0 ~ CN(0, 1)``, ``Z0 = U0 = 0``.

    Returns the deployable equalizer (precoder projected onto the power ball,
    decoder re-fitted to it when ``cfg.refit_g``) and the raw ADMM state.
    """
    cfg = AdmmConfig() if cfg is None else cfg
    x, y, h = (np.atleast_2d(np.asarray(a, dtype=np.complex128)) for a in (x, y, h))
    if x.shape[1] != y.shape[1]:
        raise DimensionError("X and Y must have the same number of columns")
    n = x.shape[1]
    if _whiteness_gap(x) > 0.1:
        warnings.warn(
            "X does not look whitened (sample covariance far from identity); the power "
            "constraint on F no longer matches the transmitted power",
            WhiteningWarning,
            stacklevel=2,
        )
    rng = rng_from(seed)
    shape = (h.shape[1], x.shape[0])
    f = complex_gaussian(rng, shape)
    state = AdmmState(
        f=f,
        z=np.zeros(shape, dtype=np.complex128),
        u=np.zeros(shape, dtype=np.complex128),
        g=np.zeros((y.shape[0], h.shape[0]), dtype=np.complex128),
    )
    for _ in range(cfg.iters):
        state.g = g_step(state.f, x, y, h, sigma2, n)
        state.f = f_step(state.g, x, y, h, state.z, state.u, cfg.rho, n, cfg.f_solver)
        state.z = z_step(state.f + state.u, cfg.p_t)
        state.u = u_step(state.u, state.f, state.z)
        state.objective_history.append(objective(state.g, state.f, x, y, h, sigma2, n))
        state.residual_history.append(state.primal_residual)
        if not np.isfinite(state.objective_history[-1]):
            raise SolverError("ADMM objective became non-finite")
    f_star = z_step(state.f, cfg.p_t)
    g_star = g_step(f_star, x, y, h, sigma2, n) if cfg.refit_g else state.g.copy()
    if whitener is None:
        whitener = Whitener.identity(x.shape[0])
    return LinearEqualizer(f=f_star, g=g_star, whitener=whitener, p_t=cfg.p_t), state


def train_linear(ds, h_lifted, sigma2, cfg=None, seed=0, whiten=True, center=False):
    """Pair and whiten a dataset's latents, then run ADMM against ``h_lifted``.

    Whitening is uncentered by default: the model ``G H F x`` has no offset
    term, so removing the TX mean would make non-zero-mean targets
    unreachable, and ``tr(F F^H)`` equals the transmitted power only when the
    second moment (not the covariance) of the whitened symbols is the identity.
    """
    x = ds.complex_tx()
    y = ds.complex_rx()
    w = fit_whitener(x, center=center) if whiten else Whitener.identity(x.shape[0])
    xw = apply_whitener(w, x)
    with warnings.catch_warnings():
        if not whiten:
            warnings.simplefilter("ignore", WhiteningWarning)
        return run_admm(xw, y, h_lifted, sigma2, cfg, seed, whitener=w)


def apply_linear(eq, s_t, h_lifted, v):
    """``unpair(G (H F whiten(pair(s_t)) + v))`` for one vector or a batch of rows."""
    s_t = np.asarray(s_t, dtype=np.float64)
    single = s_t.ndim == 1
    s_t = np.atleast_2d(s_t)
    v = np.atleast_2d(np.asarray(v, dtype=np.complex128))
    if s_t.shape[1] != 2 * eq.f.shape[1]:
        raise DimensionError(f"precoder expects d={2 * eq.f.shape[1]}, got {s_t.shape[1]}")
    if v.shape != (s_t.shape[0], eq.g.shape[1]):
        raise DimensionError(f"noise must have shape ({s_t.shape[0]}, {eq.g.shape[1]})")
    x = apply_whitener(eq.whitener, pair_to_complex(s_t).T)
    received = np.asarray(h_lifted) @ (eq.f @ x) + v.T
    out = unpair_to_real((eq.g @ received).T)
    return out[0] if single else out


def save_linear(eq, dims, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    d = 2 * eq.f.shape[1]
    m = 2 * eq.g.shape[0]
    manifest = {
        "kind": "linear",
        "K": dims.K,
        "n_t": dims.n_t,
        "n_r": dims.n_r,
        "d": d,
        "m": m,
        "p_t": eq.p_t,
    }
    _blobs.write_complex(path / "f.c64", eq.f)
    _blobs.write_complex(path / "g.c64", eq.g)
    _blobs.write_complex(
        path / "whitener.c64", np.concatenate([eq.whitener.mean, eq.whitener.transform.ravel()])
    )
    (path / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_linear(path):
    """Return ``(LinearEqualizer, ChannelDims)`` from a model directory."""
    path = Path(path)
    try:
        manifest = json.loads((path / "model.json").read_text())
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read model.json in {path}: {exc}") from exc
    if manifest.get("kind") != "linear":
        raise FormatError(f"not a linear model: kind={manifest.get('kind')!r}")
    try:
        dims = ChannelDims(manifest["K"], manifest["n_t"], manifest["n_r"])
        d, m, p_t = int(manifest["d"]), int(manifest["m"]), float(manifest["p_t"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model manifest: {exc!r}") from exc
    f = _blobs.read_complex(path / "f.c64", (dims.tx_symbols, d // 2))
    g = _blobs.read_complex(path / "g.c64", (m // 2, dims.rx_symbols))
    wblob = _blobs.read_complex(path / "whitener.c64", (d // 2 + (d // 2) ** 2,))
    whitener = Whitener(wblob[: d // 2], wblob[d // 2 :].reshape(d // 2, d // 2))
    return LinearEqualizer(f=f, g=g, whitener=whitener, p_t=p_t), dims
