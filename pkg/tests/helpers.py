"""Shared oracles for the test modules."""

import numpy as np

from mimo_semalign.channel import complex_gaussian
from mimo_semalign.codec import SyntheticSpec, generate_synthetic
from mimo_semalign.neural_eq import backward, loss, make_mlp


def tiny_reference_net(seed=0, alpha="tanh"):
    """d = m = 4, K = N_T = N_R = 1, one hidden layer of width 2, random biases."""
    rng = np.random.default_rng(seed)
    precoder = make_mlp(2, [2], 1, rng, alpha)
    decoder = make_mlp(1, [2], 2, rng, alpha)
    for net in (precoder, decoder):
        for layer in net.layers:
            layer.b = complex_gaussian(rng, layer.b.shape, 0.25)
    x = complex_gaussian(rng, (5, 2))
    y = complex_gaussian(rng, (5, 2))
    h = complex_gaussian(rng, (1, 1))
    return (precoder, decoder), x, y, h


def finite_difference_error(nets, x, y, h, sigma2, seed, step=1e-6, p_t=1.0):
    """Largest relative gap between analytic and central-difference gradients.

    Every real and imaginary component of every weight and bias is perturbed.
    The relative error of one component is ``|a - f| / max(|a|, |f|, 1e-6)``.
    """
    _, (gp, gd) = backward(nets, x, y, h, sigma2, seed, p_t)
    worst = 0.0
    for net, grads in zip(nets, (gp, gd)):
        for layer, (gw, gb) in zip(net.layers, grads):
            for name, grad in (("w", gw), ("b", gb)):
                param = getattr(layer, name)
                for idx in np.ndindex(param.shape):
                    for unit, part in ((1.0, grad[idx].real), (1j, grad[idx].imag)):
                        orig = param[idx]
                        param[idx] = orig + step * unit
                        hi = loss(x, y, h, sigma2, nets, seed, p_t)
                        param[idx] = orig - step * unit
                        lo = loss(x, y, h, sigma2, nets, seed, p_t)
                        param[idx] = orig
                        fd = (hi - lo) / (2 * step)
                        worst = max(worst, abs(fd - part) / max(abs(fd), abs(part), 1e-6))
    return worst


def reference_task():
    """Desk-scale stand-in for paired image latents: d=32, m=48, 10 classes."""
    spec = SyntheticSpec(d=32, m=48, n=2000, n_classes=10, cluster_spread=1.0, map_kind="real_linear", seed=0)
    return generate_synthetic(spec)


def tree_bytes(path):
    """Map each file under ``path`` (or the file itself) to its raw bytes."""
    from pathlib import Path

    path = Path(path)
    if path.is_file():
        return {path.name: path.read_bytes()}
    return {str(p.relative_to(path)): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def run_cli(*argv, config=None, tmp=None):
    """Invoke the CLI in-process; ``config`` is written to a JSON file under ``tmp`` first."""
    import json

    from mimo_semalign.cli import main

    args = list(map(str, argv))
    if config is not None:
        cfg_path = tmp / f"cfg{abs(hash(json.dumps(config, sort_keys=True)))}.json"
        cfg_path.write_text(json.dumps(config))
        args += ["--config", str(cfg_path)]
    return main(args)
