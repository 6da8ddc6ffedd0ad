"""End-to-end scoring and seeded Monte-Carlo sweeps."""

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from . import flops as flops_mod
from .baselines import KINDS as BASELINE_KINDS
from .baselines import Baseline, BaselineConfig
from .channel import (
    SnrSpec,
    identity_channel,
    lift_channel,
    sample_channel,
    sample_noise,
    sigma2_from_snr,
)
from .codec import ChannelDims, compression_factor
from .linear_eq import AdmmConfig, LinearEqualizer, train_linear
from .neural_eq import NeuralEqualizer, TrainConfig, train_neural

METHODS = ("linear", "linear_unaware", "neural", "neural_unaware", *BASELINE_KINDS)
CSV_FIELDS = ("method", "zeta", "snr_db", "n_pilots", "seed", "mse", "accuracy", "flops", "sparsity")


@dataclass
class EvalRecord:
    method: str
    zeta: float
    snr_db: float
    n_pilots: int
    seed: int
    mse: float
    accuracy: float
    flops: int
    sparsity: float

    def __post_init__(self):
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy {self.accuracy} outside [0, 1]")
        if self.mse < 0:
            raise ValueError("mse must be non-negative")


def derive_seed(*parts):
    """Stable 32-bit seed from a tuple of non-negative ints."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def predict(model, s_t, h_lifted, sigma2, seed):
    """RX latent estimates for TX latent rows with one fresh noise draw per sample."""
    s_t = np.atleast_2d(np.asarray(s_t, dtype=np.float64))
    if isinstance(model, Baseline):
        return model.apply(s_t, h_lifted, sigma2, seed)
    if isinstance(model, (LinearEqualizer, NeuralEqualizer)):
        v = sample_noise((s_t.shape[0], np.shape(h_lifted)[0]), sigma2, seed)
        return model.apply(s_t, h_lifted, v)
    if callable(model):
        return model(s_t)
    raise TypeError(f"cannot evaluate {type(model).__name__}")


def mean_squared_error(est, target):
    return float(np.mean(np.sum((np.asarray(target) - np.asarray(est)) ** 2, axis=1)))


def accuracy(est, ds):
    if ds.head is None:
        raise ValueError("dataset has no classifier head")
    return float(np.mean(ds.head.predict(est) == ds.labels))


def score(est, ds):
    """``(mse, accuracy)``; accuracy is NaN-free only when the dataset carries a head."""
    mse = mean_squared_error(est, ds.rx)
    acc = accuracy(est, ds) if ds.head is not None else 0.0
    return mse, acc


def mse_eval(model, ds, h_lifted, sigma2, noise_seed):
    return mean_squared_error(predict(model, ds.tx, h_lifted, sigma2, noise_seed), ds.rx)


def accuracy_eval(model, ds, h_lifted, sigma2, noise_seed, head=None):
    if head is not None:
        ds = replace(ds, head=head)
    return accuracy(predict(model, ds.tx, h_lifted, sigma2, noise_seed), ds)


@dataclass(frozen=True)
class SweepPoint:
    K: int = 1
    n_t: int = 2
    n_r: int = 2
    snr_db: float = 20.0
    beta: float = 0.0  # beta = gamma for the neural model

    @property
    def dims(self):
        return ChannelDims(self.K, self.n_t, self.n_r)


def zeta_sweep(antennas, snr_db=20.0, K=1):
    """Square channels with ``N_T = N_R`` taken from ``antennas``."""
    return [SweepPoint(K, a, a, snr_db) for a in antennas]


def snr_sweep(snrs, n_t, K=1):
    return [SweepPoint(K, n_t, n_t, s) for s in snrs]


def sparsity_sweep(betas, n_t, snr_db=20.0, K=1):
    return [SweepPoint(K, n_t, n_t, snr_db, b) for b in betas]


@dataclass
class SweepConfig:
    n_pilots: int = 512
    n_test: int | None = None
    n_realizations: int = 6
    base_seed: int = 0
    p_t: float = 1.0
    admm: AdmmConfig = None
    neural: TrainConfig = None
    baseline: BaselineConfig = None

    def __post_init__(self):
        self.admm = AdmmConfig(p_t=self.p_t) if self.admm is None else self.admm
        self.neural = TrainConfig(p_t=self.p_t) if self.neural is None else self.neural
        self.baseline = BaselineConfig(p_t=self.p_t) if self.baseline is None else self.baseline
        if self.n_realizations < 1:
            raise ValueError("n_realizations must be positive")


def run_method(method, train, test, point, realization, cfg, point_index=0):
    """Train one method on one channel realization and score it on ``test``."""
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    base = cfg.base_seed
    dims = point.dims
    channel = sample_channel(dims, (base, point_index, realization, 0))
    h = lift_channel(channel)
    sigma2 = sigma2_from_snr(SnrSpec(point.snr_db, cfg.p_t))
    init_seed = derive_seed(base, point_index, realization, 1)
    noise_seed = (base, point_index, realization, 2)
    h_train = lift_channel(identity_channel(dims)) if method.endswith("_unaware") else h
    n_flops, sparsity = 0, 0.0
    if method.startswith("linear"):
        model, _ = train_linear(train, h_train, sigma2, replace(cfg.admm, p_t=cfg.p_t), init_seed)
        n_flops = flops_mod.linear_model_flops(dims, train.d, train.m)
    elif method.startswith("neural"):
        ncfg = replace(cfg.neural, beta=point.beta, gamma=point.beta, seed=init_seed, p_t=cfg.p_t)
        model, _ = train_neural(train, h_train, sigma2, ncfg)
        nets = (model.precoder, model.decoder)
        n_flops = flops_mod.exact_neural_flops(nets)
        sparsity = flops_mod.measured_sparsity(nets)
    else:
        model = Baseline(method, train, channel, point.snr_db, replace(cfg.baseline, p_t=cfg.p_t))
    est = predict(model, test.tx, h, sigma2, noise_seed)
    mse, acc = score(est, test)
    return EvalRecord(
        method=method,
        zeta=compression_factor(dims, train.d),
        snr_db=float(point.snr_db),
        n_pilots=train.n,
        seed=realization,
        mse=mse,
        accuracy=acc,
        flops=int(n_flops),
        sparsity=float(sparsity),
    )


def monte_carlo(methods, dataset, points, cfg=None, threads=1):
    """One record per (sweep point, realization, method), in that nesting order.

    Each realization draws its channel, initialization and noise from seeds
    derived from ``(base_seed, point index, realization)``, so the output does
    not depend on ``threads``.
    """
    cfg = SweepConfig() if cfg is None else cfg
    for method in methods:
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    train, test = dataset.split(cfg.n_pilots, cfg.n_test)
    tasks = [
        (method, p_idx, point, r)
        for p_idx, point in enumerate(points)
        for r in range(cfg.n_realizations)
        for method in methods
    ]

    def run(task):
        method, p_idx, point, r = task
        return run_method(method, train, test, point, r, cfg, p_idx)

    if threads <= 1:
        return [run(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, tasks))


def summarize(records):
    """Mean/std of accuracy and MSE grouped by (method, zeta, snr_db, n_pilots)."""
    groups = {}
    for rec in records:
        key = (rec.method, rec.zeta, rec.snr_db, rec.n_pilots)
        groups.setdefault(key, []).append(rec)
    out = []
    for key, recs in groups.items():
        acc = np.array([r.accuracy for r in recs])
        mse = np.array([r.mse for r in recs])
        out.append(
            {
                "method": key[0],
                "zeta": key[1],
                "snr_db": key[2],
                "n_pilots": key[3],
                "n": len(recs),
                "accuracy_mean": float(acc.mean()),
                "accuracy_std": float(acc.std()),
                "mse_mean": float(mse.mean()),
                "flops_mean": float(np.mean([r.flops for r in recs])),
                "sparsity_mean": float(np.mean([r.sparsity for r in recs])),
            }
        )
    return out


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def records_to_csv(records):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_FIELDS)
    for rec in records:
        row = asdict(rec)
        writer.writerow([_fmt(row[f]) for f in CSV_FIELDS])
    return buf.getvalue()


def write_csv(records, path):
    with open(path, "w", newline="") as fh:
        fh.write(records_to_csv(records))


def read_csv(path):
    types = {f.name: f.type for f in fields(EvalRecord)}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(EvalRecord(**{k: types[k](v) for k, v in row.items()}))
    return out
