"""Complex-valued MLP precoder/decoder trained through the simulated channel.

Arrays are batch-first: a batch of complex inputs is a ``(B, dim)`` array.

Gradients follow the convention ``grad = dL/dRe(w) + 1j * dL/dIm(w)`` for a
real loss ``L``, i.e. twice the conjugate Wirtinger derivative.  With this
convention plain gradient descent on the real and imaginary parts of a
parameter is ``w -= eta * grad``.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _blobs
from .channel import complex_gaussian, rng_from, sample_noise
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

EPS_NORM = 1e-12
_EPS_MAG = 1e-12


class TrainingDivergedError(FloatingPointError):
    pass


def _sigmoid(r):
    return 0.5 * (1.0 + np.tanh(0.5 * r))


# magnitude function and its derivative
MAGNITUDE_FUNCTIONS = {
    "tanh": (np.tanh, lambda r: 1.0 - np.tanh(r) ** 2),
    "sigmoid": (_sigmoid, lambda r: _sigmoid(r) * (1.0 - _sigmoid(r))),
    "identity": (lambda r: r, np.ones_like),
}


def _magnitude(alpha):
    if callable(alpha):
        return alpha, None
    try:
        return MAGNITUDE_FUNCTIONS[alpha]
    except KeyError:
        raise ValueError(f"unknown magnitude function {alpha!r}") from None


def phase_amplitude_activation(z, alpha="tanh"):
    """``alpha(|z|) * exp(1j * arg z)`` elementwise; ``arg 0`` is taken as 0."""
    fn, _ = _magnitude(alpha)
    z = np.asarray(z, dtype=np.complex128)
    r = np.abs(z)
    safe = np.where(r > 0, r, 1.0)
    phase = np.where(r > 0, z / safe, 1.0)
    return fn(r) * phase


def _phase_amplitude_grad(z, g_out, alpha):
    """Pull ``g_out`` back through the activation (see module docstring for the convention)."""
    fn, dfn = _magnitude(alpha)
    if dfn is None:
        raise ValueError("backpropagation needs a named magnitude function")
    r = np.abs(z)
    small = r < _EPS_MAG
    rs = np.where(small, 1.0, r)
    a = fn(r)
    da = dfn(r)
    # d out / d z (real) and d out / d conj(z)
    d1 = np.where(small, da, 0.5 * (a / rs + da))
    d2 = np.where(small, 0.0, (da * rs - a) * z**2 / (2.0 * rs**3))
    return np.conj(g_out) * d2 + g_out * d1


def normalize_power(x_bar, p_t=1.0):
    """Scale every vector (last axis) to squared norm ``p_t``; near-zero vectors map to 0."""
    if not p_t > 0:
        raise ValueError("p_t must be positive")
    x_bar = np.asarray(x_bar, dtype=np.complex128)
    norm = np.linalg.norm(x_bar, axis=-1, keepdims=True)
    ok = norm > EPS_NORM
    return np.where(ok, x_bar * (np.sqrt(p_t) / np.where(ok, norm, 1.0)), 0.0)


def _normalize_power_grad(x_bar, g_out, p_t):
    norm = np.linalg.norm(x_bar, axis=-1, keepdims=True)
    ok = norm > EPS_NORM
    safe = np.where(ok, norm, 1.0)
    u = x_bar / safe
    radial = np.real(np.sum(np.conj(u) * g_out, axis=-1, keepdims=True))
    return np.where(ok, np.sqrt(p_t) / safe * (g_out - u * radial), 0.0)


@dataclass
class Layer:
    w: np.ndarray  # out x in
    b: np.ndarray
    activation: str = "none"  # "phase_amplitude" or "none"
    mask: np.ndarray = None

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=np.complex128)
        self.b = np.asarray(self.b, dtype=np.complex128)
        if self.mask is None:
            self.mask = np.ones(self.w.shape, dtype=bool)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.b.shape != (self.w.shape[0],) or self.mask.shape != self.w.shape:
            raise DimensionError("bias/mask shapes do not match the weight matrix")
        if self.activation not in ("phase_amplitude", "none"):
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self):
        return self.w.shape[1]

    @property
    def out_dim(self):
        return self.w.shape[0]


@dataclass
class ComplexMlp:
    layers: list
    alpha: str = "tanh"

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.out_dim != nxt.in_dim:
                raise DimensionError(f"layer dims do not chain: {prev.out_dim} -> {nxt.in_dim}")

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    def n_weights(self):
        return sum(layer.w.size for layer in self.layers)

    def n_zero_weights(self):
        return sum(int(np.count_nonzero(layer.w == 0)) for layer in self.layers)

    def copy(self):
        return ComplexMlp(
            [Layer(l.w.copy(), l.b.copy(), l.activation, l.mask.copy()) for l in self.layers],
            self.alpha,
        )

    def __call__(self, x):
        return self.forward(x)[0]

    def forward(self, x):
        """Return ``(output, cache)`` where ``cache`` keeps what ``backward`` needs."""
        a = np.asarray(x, dtype=np.complex128)
        cache = []
        for layer in self.layers:
            z = a @ layer.w.T + layer.b
            cache.append((a, z))
            a = phase_amplitude_activation(z, self.alpha) if layer.activation != "none" else z
        return a, cache

    def backward(self, cache, g_out):
        """Return per-layer ``(grad_w, grad_b)`` (masked) and the gradient w.r.t. the input."""
        grads = [None] * len(self.layers)
        g = g_out
        for i in reversed(range(len(self.layers))):
            layer = self.layers[i]
            a, z = cache[i]
            if layer.activation != "none":
                g = _phase_amplitude_grad(z, g, self.alpha)
            gw = (g.T @ np.conj(a)) * layer.mask
            gb = g.sum(axis=0)
            grads[i] = (gw, gb)
            g = g @ np.conj(layer.w)
        return grads, g


def make_mlp(in_dim, hidden, out_dim, rng, alpha="tanh"):
    """Hidden layers use the phase-amplitude activation, the output layer is linear.

    Weights are CN(0, 1/fan_in), biases zero.
    """
    dims = [in_dim, *hidden, out_dim]
    layers = []
    for k, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        act = "phase_amplitude" if k < len(dims) - 2 else "none"
        w = complex_gaussian(rng, (fan_out, fan_in), 1.0 / fan_in)
        layers.append(Layer(w, np.zeros(fan_out, dtype=np.complex128), act))
    return ComplexMlp(layers, alpha)


def forward(precoder, decoder, x, h, v, p_t=1.0):
    """``decoder(H normalize_power(precoder(x)) + v)`` for one vector or a batch of rows."""
    out, _ = _forward_cached(precoder, decoder, x, h, v, p_t)
    return out


def _forward_cached(precoder, decoder, x, h, v, p_t):
    x = np.asarray(x, dtype=np.complex128)
    h = np.asarray(h, dtype=np.complex128)
    if x.shape[-1] != precoder.in_dim:
        raise DimensionError(f"precoder expects {precoder.in_dim} inputs, got {x.shape[-1]}")
    if h.shape != (decoder.in_dim, precoder.out_dim):
        raise DimensionError(
            f"channel shape {h.shape} does not chain {precoder.out_dim} -> {decoder.in_dim}"
        )
    raw, cache_p = precoder.forward(x)
    x_bar = normalize_power(raw, p_t)
    received = x_bar @ h.T + v
    out, cache_d = decoder.forward(received)
    return out, (raw, cache_p, cache_d)


def _noise(batch, h, sigma2, seed):
    return sample_noise((batch, h.shape[0]), sigma2, seed)


def loss(x, y, h, sigma2, nets, seed, p_t=1.0):
    """Batch mean of ``||y - decoder(H precoder(x) + v)||^2`` with fresh CN(0, sigma2) noise."""
    precoder, decoder = nets
    x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
    y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    v = _noise(x.shape[0], np.asarray(h), sigma2, seed)
    out = forward(precoder, decoder, x, h, v, p_t)
    return float(np.mean(np.sum(np.abs(y - out) ** 2, axis=1)))


def backward(nets, x, y, h, sigma2, seed, p_t=1.0):
    """Loss and masked gradients ``(precoder_grads, decoder_grads)``.

    The noise drawn from ``seed`` is the same as in :func:`loss`.
    """
    precoder, decoder = nets
    x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
    y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    h = np.asarray(h, dtype=np.complex128)
    v = _noise(x.shape[0], h, sigma2, seed)
    out, (raw, cache_p, cache_d) = _forward_cached(precoder, decoder, x, h, v, p_t)
    diff = out - y
    value = float(np.mean(np.sum(np.abs(diff) ** 2, axis=1)))
    g = 2.0 * diff / x.shape[0]
    grads_d, g = decoder.backward(cache_d, g)
    g = g @ np.conj(h)
    g = _normalize_power_grad(raw, g, p_t)
    grads_p, _ = precoder.backward(cache_p, g)
    return value, (grads_p, grads_d)


@dataclass(frozen=True)
class ThresholdSchedule:
    tau_theta: float
    tau_psi: float

    @classmethod
    def from_weights(cls, beta, gamma, eta):
        if beta < 0 or gamma < 0:
            raise ValueError("sparsity weights must be non-negative")
        return cls(beta * eta, gamma * eta)


def _threshold_net(net, tau, prune_bias=False):
    for layer in net.layers:
        keep = np.abs(layer.w) > tau
        layer.mask &= keep
        layer.w = np.where(layer.mask, layer.w, 0.0)
        if prune_bias:
            layer.b = np.where(np.abs(layer.b) > tau, layer.b, 0.0)
    return net


def hard_threshold(nets, schedule, prune_bias=False):
    """Zero (and permanently mask) weights with modulus not above the threshold, in place."""
    precoder, decoder = nets
    _threshold_net(precoder, schedule.tau_theta, prune_bias)
    _threshold_net(decoder, schedule.tau_psi, prune_bias)
    return precoder, decoder


def sparsity(nets):
    total = sum(net.n_weights() for net in nets)
    return sum(net.n_zero_weights() for net in nets) / total


@dataclass
class TrainConfig:
    eta: float = 1e-3
    epochs: int = 50
    beta: float = 0.0
    gamma: float = 0.0
    p_t: float = 1.0
    batch_size: int = 64
    seed: int = 0
    hidden_p: int | None = None  # default d/2
    hidden_d: int | None = None  # default m/2
    layers_p: int = 1
    layers_d: int = 1
    alpha: str = "tanh"
    threshold_every: str = "epoch"  # or "step"
    prune_bias: bool = False
    whiten: bool = True
    center: bool = False

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if int(self.epochs) != self.epochs or self.epochs < 1:
            raise ValueError("epochs must be a positive integer")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("beta and gamma must be non-negative")
        if not self.p_t > 0:
            raise ValueError("p_t must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.layers_p < 1 or self.layers_d < 1:
            raise ValueError("at least one hidden layer per network")
        if self.alpha not in MAGNITUDE_FUNCTIONS:
            raise ValueError(f"alpha must be one of {sorted(MAGNITUDE_FUNCTIONS)}")
        if self.threshold_every not in ("epoch", "step"):
            raise ValueError("threshold_every must be 'epoch' or 'step'")

    @property
    def schedule(self):
        return ThresholdSchedule.from_weights(self.beta, self.gamma, self.eta)


@dataclass
class NeuralEqualizer:
    precoder: ComplexMlp
    decoder: ComplexMlp
    whitener: Whitener
    p_t: float = 1.0

    def apply(self, s_t, h_lifted, v):
        return apply_neural(self, s_t, h_lifted, v)


def _sgd(net, grads, eta):
    for layer, (gw, gb) in zip(net.layers, grads):
        layer.w = (layer.w - eta * gw) * layer.mask
        layer.b = layer.b - eta * gb


def init_nets(x_dim, y_dim, h, cfg, rng):
    hp = cfg.hidden_p or x_dim
    hd = cfg.hidden_d or y_dim
    precoder = make_mlp(x_dim, [hp] * cfg.layers_p, h.shape[1], rng, cfg.alpha)
    decoder = make_mlp(h.shape[0], [hd] * cfg.layers_d, y_dim, rng, cfg.alpha)
    return precoder, decoder


def train(x, y, h, sigma2, cfg=None, nets=None, on_epoch=None):
    """Minibatch proximal gradient descent with hard thresholding.

    ``x`` (n, d/2) and ``y`` (n, m/2) are complex rows.  Thresholding runs at
    the end of every epoch (or after every step with ``threshold_every="step"``);
    pruned weights stay at zero for the rest of training.  ``on_epoch``, if
    given, is called as ``on_epoch(record, precoder, decoder)`` after each epoch.
    Returns ``(precoder, decoder, history)``.
    """
    cfg = TrainConfig() if cfg is None else cfg
    x = np.atleast_2d(np.asarray(x, dtype=np.complex128))
    y = np.atleast_2d(np.asarray(y, dtype=np.complex128))
    h = np.asarray(h, dtype=np.complex128)
    if x.shape[0] != y.shape[0]:
        raise DimensionError("x and y need the same number of rows")
    rng = rng_from(cfg.seed)
    if nets is None:
        precoder, decoder = init_nets(x.shape[1], y.shape[1], h, cfg, rng)
    else:
        precoder, decoder = (net.copy() for net in nets)
    schedule = cfg.schedule
    n = x.shape[0]
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            # overflow shows up as a non-finite loss, reported below
            with np.errstate(over="ignore", invalid="ignore"):
                value, (gp, gd) = backward((precoder, decoder), x[idx], y[idx], h, sigma2, rng, cfg.p_t)
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}; lower the learning rate (eta={cfg.eta})"
                )
            _sgd(precoder, gp, cfg.eta)
            _sgd(decoder, gd, cfg.eta)
            if cfg.threshold_every == "step":
                hard_threshold((precoder, decoder), schedule, cfg.prune_bias)
            total += value * len(idx)
        if cfg.threshold_every == "epoch":
            hard_threshold((precoder, decoder), schedule, cfg.prune_bias)
        history.append(
            {"epoch": epoch + 1, "loss": total / n, "sparsity": sparsity((precoder, decoder))}
        )
        if on_epoch is not None:
            on_epoch(history[-1], precoder, decoder)
    return precoder, decoder, history


def train_neural(ds, h_lifted, sigma2, cfg=None):
    """Pair (and whiten) a dataset, train both networks, return ``(NeuralEqualizer, history)``."""
    cfg = TrainConfig() if cfg is None else cfg
    x = ds.complex_tx()
    w = fit_whitener(x, center=cfg.center) if cfg.whiten else Whitener.identity(x.shape[0])
    xw = apply_whitener(w, x).T
    y = pair_to_complex(ds.rx)
    precoder, decoder, history = train(xw, y, h_lifted, sigma2, cfg)
    return NeuralEqualizer(precoder, decoder, w, cfg.p_t), history


def apply_neural(eq, s_t, h_lifted, v):
    """Real RX latent estimate for real TX latents (one vector or rows)."""
    s_t = np.asarray(s_t, dtype=np.float64)
    single = s_t.ndim == 1
    s_t = np.atleast_2d(s_t)
    x = apply_whitener(eq.whitener, pair_to_complex(s_t).T).T
    v = np.atleast_2d(np.asarray(v, dtype=np.complex128))
    out = unpair_to_real(forward(eq.precoder, eq.decoder, x, h_lifted, v, eq.p_t))
    return out[0] if single else out


def save_neural(eq, dims, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    layers = []
    i = 0
    for role, net in (("precoder", eq.precoder), ("decoder", eq.decoder)):
        for layer in net.layers:
            _blobs.write_complex(path / f"w{i}.c64", layer.w)
            _blobs.write_complex(path / f"b{i}.c64", layer.b)
            _blobs.write_mask(path / f"mask{i}.u8", layer.mask)
            layers.append(
                {"net": role, "in": layer.in_dim, "out": layer.out_dim, "activation": layer.activation}
            )
            i += 1
    d = 2 * eq.precoder.in_dim
    _blobs.write_complex(
        path / "whitener.c64", np.concatenate([eq.whitener.mean, eq.whitener.transform.ravel()])
    )
    manifest = {
        "kind": "neural",
        "K": dims.K,
        "n_t": dims.n_t,
        "n_r": dims.n_r,
        "d": d,
        "m": 2 * eq.decoder.out_dim,
        "p_t": eq.p_t,
        "alpha": eq.precoder.alpha,
        "layers": layers,
    }
    (path / "model.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def load_neural(path):
    """Return ``(NeuralEqualizer, ChannelDims)`` from a model directory."""
    path = Path(path)
    try:
        manifest = json.loads((path / "model.json").read_text())
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read model.json in {path}: {exc}") from exc
    if manifest.get("kind") != "neural":
        raise FormatError(f"not a neural model: kind={manifest.get('kind')!r}")
    try:
        dims = ChannelDims(manifest["K"], manifest["n_t"], manifest["n_r"])
        d = int(manifest["d"])
        alpha = manifest["alpha"]
        specs = manifest["layers"]
        nets = {"precoder": [], "decoder": []}
        for i, spec in enumerate(specs):
            shape = (int(spec["out"]), int(spec["in"]))
            w = _blobs.read_complex(path / f"w{i}.c64", shape)
            b = _blobs.read_complex(path / f"b{i}.c64", (shape[0],))
            mask = _blobs.read_mask(path / f"mask{i}.u8", shape)
            nets[spec["net"]].append(Layer(w, b, spec["activation"], mask))
        precoder = ComplexMlp(nets["precoder"], alpha)
        decoder = ComplexMlp(nets["decoder"], alpha)
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed neural model: {exc!r}") from exc
    wblob = _blobs.read_complex(path / "whitener.c64", (d // 2 + (d // 2) ** 2,))
    whitener = Whitener(wblob[: d // 2], wblob[d // 2 :].reshape(d // 2, d // 2))
    return NeuralEqualizer(precoder, decoder, whitener, float(manifest["p_t"])), dims
