"""Command-line front end.

Every subcommand reads an optional JSON config, rejects unknown keys, fills in
defaults, and writes the fully resolved config next to its outputs so a run
can be repeated bit for bit.  Exit codes: 0 success, 2 bad configuration or
input, 3 numerical failure.
"""

import argparse
import json
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import _blobs
from . import flops as flops_mod
from .baselines import EIGEN_VARIANTS, BaselineConfig
from .channel import MimoChannel, SnrSpec, identity_channel, lift_channel, sample_channel, sigma2_from_snr
from .codec import ChannelDims, SyntheticSpec, apply_whitener, compression_factor, generate_synthetic, load_dataset, save_dataset
from .evalx import (
    METHODS,
    EvalRecord,
    SweepConfig,
    derive_seed,
    monte_carlo,
    predict,
    score,
    snr_sweep,
    sparsity_sweep,
    write_csv,
    zeta_sweep,
)
from .linear_eq import AdmmConfig, load_linear, objective, save_linear, train_linear
from .neural_eq import TrainConfig, load_neural, save_neural, train_neural

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
RESOLVED_NAME = "resolved_config.json"
SWEEP_KINDS = ("zeta", "snr", "sparsity")


class ConfigError(ValueError):
    pass


# -- config plumbing ---------------------------------------------------------


def _load_json(path):
    if path is None:
        return {}
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return raw


def _check_keys(raw, allowed, where):
    if not isinstance(raw, dict):
        raise ConfigError(f"{where}: expected an object, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(allowed)}")


def _build(cls, raw, where, fixed=None):
    """Instantiate dataclass ``cls`` from ``raw``; keys in ``fixed`` are set by the caller."""
    fixed = fixed or {}
    allowed = [f.name for f in fields(cls) if f.name not in fixed]
    _check_keys(raw, allowed, where)
    try:
        return cls(**{**raw, **fixed})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _merge(defaults, raw, where):
    _check_keys(raw, defaults, where)
    return {**defaults, **raw}


def _dims(raw, where="channel"):
    merged = _merge({"K": 1, "n_t": 2, "n_r": 2}, raw, where)
    try:
        return ChannelDims(int(merged["K"]), int(merged["n_t"]), int(merged["n_r"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def _run_keys(raw, args, names):
    """Split run-level keys (seed, paths, kind) off a config; command-line flags win.

    This lets any resolved config written by a command be fed straight back to it.
    """
    raw = dict(raw)
    for name in names:
        value = raw.pop(name, None)
        if getattr(args, name) is None and value is not None:
            setattr(args, name, value)
    if args.seed is None:
        args.seed = 0
    try:
        args.seed = int(args.seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {args.seed!r}") from exc
    return raw


def _dump(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    return path


def _load_data(path):
    if path is None:
        raise ConfigError("--data is required")
    return load_dataset(path)


# -- gen-data ----------------------------------------------------------------


def cmd_gen_data(args):
    raw = _load_json(args.config)
    if args.seed is not None:
        raw = {**raw, "seed": args.seed}
    dtype = raw.pop("dtype", "f32le")
    spec = _build(SyntheticSpec, raw, "gen-data config")
    try:
        spec.validate()
    except ValueError as exc:
        raise ConfigError(f"gen-data config: {exc}") from exc
    out = Path(args.out)
    ds = generate_synthetic(spec)
    save_dataset(ds, out, dtype=dtype)
    resolved = {**asdict(spec), "dtype": dtype}
    _dump(resolved, out / RESOLVED_NAME)
    print(f"wrote {ds.n} samples (d={ds.d}, m={ds.m}, C={ds.n_classes}) to {out}")
    return EXIT_OK


# -- train -------------------------------------------------------------------

TRAIN_DEFAULTS = {
    "channel": {"K": 1, "n_t": 2, "n_r": 2},
    "snr_db": 20.0,
    "p_t": 1.0,
    "n_pilots": None,
    "channel_aware": True,
    "whiten": True,
    "center": False,
    "admm": {},
    "neural": {},
}


def _resolve_train(raw, kind, seed):
    cfg = _merge(TRAIN_DEFAULTS, raw, "train config")
    dims = _dims(cfg["channel"])
    try:
        snr = SnrSpec(float(cfg["snr_db"]), float(cfg["p_t"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train config: {exc}") from exc
    admm = _build(AdmmConfig, cfg["admm"], "train config: admm", {"p_t": snr.p_t})
    neural = _build(
        TrainConfig,
        cfg["neural"],
        "train config: neural",
        {"p_t": snr.p_t, "seed": derive_seed(seed, 1), "whiten": cfg["whiten"], "center": cfg["center"]},
    )
    resolved = {
        **cfg,
        "kind": kind,
        "seed": seed,
        "channel": asdict(dims),
        "admm": {k: v for k, v in asdict(admm).items() if k != "p_t"},
        "neural": {k: v for k, v in asdict(neural).items() if k not in ("p_t", "seed", "whiten", "center")},
    }
    return resolved, dims, snr, admm, neural


def cmd_train(args):
    raw = _run_keys(_load_json(args.config), args, ["seed", "kind", "data"])
    seed = args.seed
    args.kind = args.kind or "linear"
    if args.kind not in ("linear", "neural"):
        raise ConfigError(f"kind must be linear or neural, got {args.kind!r}")
    resolved, dims, snr, admm, neural = _resolve_train(raw, args.kind, seed)
    ds = _load_data(args.data)
    n_pilots = resolved["n_pilots"]
    train = ds if n_pilots is None else ds.split(int(n_pilots))[0]
    channel = sample_channel(dims, (seed, 0))
    h = lift_channel(channel)
    h_train = h if resolved["channel_aware"] else lift_channel(identity_channel(dims))
    sigma2 = sigma2_from_snr(snr)
    out = Path(args.out)
    if args.kind == "linear":
        eq, state = train_linear(
            train, h_train, sigma2, admm, derive_seed(seed, 1), resolved["whiten"], resolved["center"]
        )
        save_linear(eq, dims, out)
        x = apply_whitener(eq.whitener, train.complex_tx())
        final = objective(eq.g, eq.f, x, train.complex_rx(), h_train, sigma2)
        metrics = {
            "kind": "linear",
            "objective": final,
            "power": eq.power,
            "feasible": bool(eq.power <= snr.p_t * (1 + 1e-6)),
            "primal_residual": state.primal_residual,
            "sparsity": 0.0,
        }
    else:
        eq, history = train_neural(train, h_train, sigma2, neural)
        save_neural(eq, dims, out)
        metrics = {
            "kind": "neural",
            "loss": history[-1]["loss"],
            "sparsity": history[-1]["sparsity"],
            "feasible": True,
            "history": history,
        }
    _blobs.write_complex(out / "channel.c64", channel.h_bar)
    _dump({**resolved, "data": str(args.data)}, out / RESOLVED_NAME)
    _dump(metrics, out / "metrics.json")
    line = {k: v for k, v in metrics.items() if k != "history"}
    print(" ".join(f"{k}={_fmt(v)}" for k, v in line.items()))
    return EXIT_OK


def _fmt(v):
    return f"{v:.6g}" if isinstance(v, float) else str(v)


# -- eval --------------------------------------------------------------------


def _load_model(path):
    path = Path(path)
    try:
        kind = json.loads((path / "model.json").read_text()).get("kind")
    except (FileNotFoundError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {path / 'model.json'}: {exc}") from exc
    if kind == "linear":
        model, dims = load_linear(path)
    elif kind == "neural":
        model, dims = load_neural(path)
    else:
        raise ConfigError(f"unknown model kind {kind!r}")
    return kind, model, dims


def cmd_eval(args):
    raw = _run_keys(_load_json(args.config), args, ["seed", "model", "data"])
    if args.model is None:
        raise ConfigError("--model is required")
    seed = args.seed
    kind, model, dims = _load_model(args.model)
    trained = _load_json(Path(args.model) / RESOLVED_NAME) if (Path(args.model) / RESOLVED_NAME).exists() else {}
    defaults = {"snr_db": trained.get("snr_db", 20.0), "n_test": None}
    cfg = _merge(defaults, raw, "eval config")
    ds = _load_data(args.data)
    n_pilots = trained.get("n_pilots")
    if cfg["n_test"] is not None:
        test = ds.split(0, int(cfg["n_test"]))[1]
    elif n_pilots is not None and int(n_pilots) < ds.n:
        test = ds.split(int(n_pilots))[1]
    else:
        test = ds
    h_bar = _blobs.read_complex(Path(args.model) / "channel.c64", (dims.n_r, dims.n_t))
    channel = MimoChannel(h_bar, dims)
    snr = SnrSpec(float(cfg["snr_db"]), model.p_t)
    sigma2 = sigma2_from_snr(snr)
    est = predict(model, test.tx, lift_channel(channel), sigma2, (seed, 2))
    mse, acc = score(est, test)
    if kind == "neural":
        nets = (model.precoder, model.decoder)
        n_flops, s = flops_mod.exact_neural_flops(nets), flops_mod.measured_sparsity(nets)
    else:
        n_flops, s = flops_mod.linear_model_flops(dims, test.d, test.m), 0.0
    rec = EvalRecord(kind, compression_factor(dims, test.d), snr.snr_db, int(n_pilots or ds.n), seed, mse, acc, n_flops, s)
    out = Path(args.out)
    write_csv([rec], out)
    _dump({**cfg, "model": str(args.model), "data": str(args.data), "seed": seed}, _sidecar(out))
    print(f"mse={mse:.6g} accuracy={acc:.4f} flops={n_flops}")
    return EXIT_OK


def _sidecar(out):
    out = Path(out)
    return out.with_name(out.stem + ".config.json")


# -- sweep -------------------------------------------------------------------

SWEEP_DEFAULTS = {
    "methods": ["linear", "linear_unaware", "first_k", "top_k", "eigen_k"],
    "sweep": {},
    "n_pilots": 512,
    "n_test": None,
    "n_realizations": 6,
    "p_t": 1.0,
    "admm": {},
    "neural": {},
    "baseline": {},
}
GRID_DEFAULTS = {"kind": "zeta", "values": [1, 2, 4, 6], "K": 1, "n_t": 2, "snr_db": 20.0}


def _resolve_sweep(raw, seed):
    cfg = _merge(SWEEP_DEFAULTS, raw, "sweep config")
    grid = _merge(GRID_DEFAULTS, cfg["sweep"], "sweep config: sweep")
    methods = list(cfg["methods"])
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise ConfigError(f"sweep config: unknown methods {bad}; choose from {list(METHODS)}")
    if grid["kind"] not in SWEEP_KINDS:
        raise ConfigError(f"sweep config: sweep.kind must be one of {SWEEP_KINDS}")
    values = list(grid["values"])
    if not values:
        raise ConfigError("sweep config: sweep.values is empty")
    try:
        if grid["kind"] == "zeta":
            points = zeta_sweep([int(v) for v in values], float(grid["snr_db"]), int(grid["K"]))
        elif grid["kind"] == "snr":
            points = snr_sweep([float(v) for v in values], int(grid["n_t"]), int(grid["K"]))
        else:
            points = sparsity_sweep([float(v) for v in values], int(grid["n_t"]), float(grid["snr_db"]), int(grid["K"]))
        for p in points:
            ChannelDims(p.K, p.n_t, p.n_r)
        p_t = float(cfg["p_t"])
        if cfg["baseline"].get("eigen_variant", "as_written") not in EIGEN_VARIANTS:
            raise ValueError(f"eigen_variant must be one of {EIGEN_VARIANTS}")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep config: {exc}") from exc
    sweep_cfg = _build(
        SweepConfig,
        {k: cfg[k] for k in ("n_pilots", "n_test", "n_realizations")},
        "sweep config",
        {
            "base_seed": seed,
            "p_t": p_t,
            "admm": _build(AdmmConfig, cfg["admm"], "sweep config: admm", {"p_t": p_t}),
            "neural": _build(TrainConfig, cfg["neural"], "sweep config: neural", {"p_t": p_t}),
            "baseline": _build(BaselineConfig, cfg["baseline"], "sweep config: baseline", {"p_t": p_t}),
        },
    )
    resolved = {
        **cfg,
        "methods": methods,
        "sweep": grid,
        "seed": seed,
        "admm": {k: v for k, v in asdict(sweep_cfg.admm).items() if k != "p_t"},
        "neural": {k: v for k, v in asdict(sweep_cfg.neural).items() if k != "p_t"},
        "baseline": {k: v for k, v in asdict(sweep_cfg.baseline).items() if k != "p_t"},
    }
    return resolved, methods, points, sweep_cfg


def cmd_sweep(args):
    raw = _run_keys(_load_json(args.config), args, ["seed", "data"])
    seed = args.seed
    resolved, methods, points, sweep_cfg = _resolve_sweep(raw, seed)
    ds = _load_data(args.data)
    need = sweep_cfg.n_pilots + (sweep_cfg.n_test or 1)
    if need > ds.n:
        raise ConfigError(f"dataset has {ds.n} rows, sweep needs at least {need}")
    records = monte_carlo(methods, ds, points, sweep_cfg, threads=args.threads)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(records, out)
    _dump({**resolved, "data": str(args.data)}, _sidecar(out))
    print(f"wrote {len(records)} records to {out}")
    return EXIT_OK


# -- flops -------------------------------------------------------------------

FLOPS_DEFAULTS = {"K": 1, "n_t": 6, "n_r": 6, "d": 384, "m": 768, "sparsity": 0.0, "c": 0}
RATIO_NOTE = (
    "note: the published comparison quotes roughly 113x for this setting; "
    "evaluating both closed-form counts gives the ratio above"
)


def cmd_flops(args):
    raw = _run_keys(_load_json(args.config), args, ["model"])
    if args.model is not None:
        _check_keys(raw, ["c"], "flops config")
        c = int(raw.get("c", flops_mod.DEFAULT_ACTIVATION_COST))
        kind, model, dims = _load_model(args.model)
        d = 2 * (model.f.shape[1] if kind == "linear" else model.precoder.in_dim)
        m = 2 * (model.g.shape[0] if kind == "linear" else model.decoder.out_dim)
        linear = flops_mod.linear_model_flops(dims, d, m)
        report = {"kind": kind, "K": dims.K, "n_t": dims.n_t, "n_r": dims.n_r, "d": d, "m": m, "linear": linear}
        if kind == "neural":
            nets = (model.precoder, model.decoder)
            s = flops_mod.measured_sparsity(nets)
            report.update(
                c=c,
                sparsity=s,
                neural_exact=flops_mod.exact_neural_flops(nets, c),
                neural_formula=flops_mod.neural_model_flops(flops_mod.arch_of(*nets), s, c),
                per_layer=flops_mod.exact_neural_report(nets, c).per_layer,
            )
            report["ratio"] = report["neural_exact"] / linear
        resolved = {"model": str(args.model), "c": c}
    else:
        cfg = _merge(FLOPS_DEFAULTS, raw, "flops config")
        try:
            dims = ChannelDims(int(cfg["K"]), int(cfg["n_t"]), int(cfg["n_r"]))
            d, m, s, c = int(cfg["d"]), int(cfg["m"]), float(cfg["sparsity"]), int(cfg["c"])
            arch = flops_mod.MlpArch.for_setup(dims, d, m)
            neural = flops_mod.neural_model_flops(arch, s, c)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"flops config: {exc}") from exc
        linear = flops_mod.linear_model_flops(dims, d, m)
        report = {
            "kind": "formula",
            **cfg,
            "zeta": compression_factor(dims, d),
            "linear": linear,
            "neural_formula": neural,
            "ratio": neural / linear,
            "per_layer": flops_mod.neural_model_report(arch, s, c).per_layer,
        }
        resolved = cfg
    for key in ("linear", "neural_exact", "neural_formula"):
        if key in report:
            print(f"{key}: {report[key]}")
    if "ratio" in report:
        print(f"neural/linear ratio: {report['ratio']:.1f}")
    if report["kind"] == "formula":
        print(RATIO_NOTE)
    if args.out is not None:
        out = Path(args.out)
        _dump(report, out)
        _dump(resolved, _sidecar(out))
    return EXIT_OK


# -- entry point -------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="base seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker threads; 1 is the bit-exact reference")
    common.add_argument("--config", default=None, help="JSON config file")

    parser = argparse.ArgumentParser(prog="mimo-semalign", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic latent dataset")
    p.add_argument("--out", required=True, help="dataset directory")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a linear or neural equalizer")
    p.add_argument("--kind", choices=("linear", "neural"), default=None, help="default linear")
    p.add_argument("--data", default=None, help="dataset directory")
    p.add_argument("--out", required=True, help="model directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="score a saved model on a dataset")
    p.add_argument("--model", default=None)
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True, help="CSV file")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="Monte-Carlo sweep to CSV")
    p.add_argument("--data", default=None)
    p.add_argument("--out", required=True, help="CSV file")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("flops", parents=[common], help="FLOP counts from a model or an architecture")
    p.add_argument("--model", default=None)
    p.add_argument("--out", default=None, help="optional JSON report")
    p.set_defaults(func=cmd_flops)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
