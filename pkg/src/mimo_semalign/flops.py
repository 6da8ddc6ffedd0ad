"""FLOP counts for the linear and neural equalizers.

Every real arithmetic operation counts as one FLOP.  A complex
multiply-accumulate costs 8, so a dense complex ``a x b`` matrix-vector
product is ``a(8b - 2)`` and ``8ab`` once a bias is added.
"""

from dataclasses import dataclass, field

import numpy as np

DEFAULT_ACTIVATION_COST = 20


@dataclass
class FlopsReport:
    per_layer: list = field(default_factory=list)  # (name, count)
    sparsity_used: float = 0.0
    activation_cost_c: int = DEFAULT_ACTIVATION_COST

    @property
    def total(self):
        return sum(count for _, count in self.per_layer)


def complex_matvec_flops(a, b, with_bias=False, sparsity=0.0):
    """FLOPs of ``A b (+ c)`` for complex ``A`` (a x b).

    A non-zero ``sparsity`` only applies to the biased case, ``8(1-s)ab``
    rounded to the nearest integer.
    """
    if a < 1 or b < 1:
        raise ValueError("matrix dimensions must be positive")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must lie in [0, 1], got {sparsity}")
    if not with_bias:
        if sparsity:
            raise ValueError("the sparse count is defined for the biased layer only")
        return a * (8 * b - 2)
    return int(round(8 * (1.0 - sparsity) * a * b))


def linear_model_flops(dims, d, m):
    """``4 K N_T d + (4 K N_R - 1) m - 2 K N_T``."""
    kt, kr = dims.K * dims.n_t, dims.K * dims.n_r
    return 4 * kt * d + (4 * kr - 1) * m - 2 * kt


def linear_model_report(dims, d, m):
    kt, kr = dims.K * dims.n_t, dims.K * dims.n_r
    return FlopsReport(
        per_layer=[
            ("precoder F", complex_matvec_flops(kt, d // 2)),
            ("decoder G", complex_matvec_flops(m // 2, kr)),
        ],
        activation_cost_c=0,
    )


@dataclass(frozen=True)
class MlpArch:
    i_p: int
    h_p: int
    o_p: int
    i_d: int
    h_d: int
    o_d: int
    l_p: int = 1
    l_d: int = 1

    @classmethod
    def for_setup(cls, dims, d, m):
        """Single hidden layer of width d/2 (precoder) and m/2 (decoder)."""
        return cls(d // 2, d // 2, dims.K * dims.n_t, dims.K * dims.n_r, m // 2, m // 2)


def neural_model_flops(arch, sparsity=0.0, c=DEFAULT_ACTIVATION_COST):
    """Uniform-sparsity estimate for two MLPs with ``l`` hidden layers each."""
    if arch.l_p < 1 or arch.l_d < 1:
        raise ValueError("each network needs at least one hidden layer")
    if not 0.0 <= sparsity <= 1.0:
        raise ValueError(f"sparsity must lie in [0, 1], got {sparsity}")
    weights = (
        arch.h_p * arch.i_p
        + arch.o_p * arch.h_p
        + arch.h_d * arch.i_d
        + arch.o_d * arch.h_d
        + (arch.l_p - 1) * arch.h_p**2
        + (arch.l_d - 1) * arch.h_d**2
    )
    dense = 8 * (1.0 - sparsity) * weights
    return int(round(dense)) + c * (arch.l_p * arch.h_p + arch.l_d * arch.h_d)


def neural_model_report(arch, sparsity=0.0, c=DEFAULT_ACTIVATION_COST):
    rows = []
    dims_p = [arch.i_p] + [arch.h_p] * arch.l_p + [arch.o_p]
    dims_d = [arch.i_d] + [arch.h_d] * arch.l_d + [arch.o_d]
    for role, chain in (("precoder", dims_p), ("decoder", dims_d)):
        for k, (fan_in, fan_out) in enumerate(zip(chain, chain[1:])):
            rows.append((f"{role}.{k}", complex_matvec_flops(fan_out, fan_in, True, sparsity)))
            if k < len(chain) - 2:
                rows.append((f"{role}.{k}.act", c * fan_out))
    return FlopsReport(per_layer=rows, sparsity_used=sparsity, activation_cost_c=c)


def measured_sparsity(nets):
    """Fraction of exactly-zero entries over all weight matrices (biases excluded)."""
    if not isinstance(nets, (list, tuple)):
        nets = [nets]
    total = sum(layer.w.size for net in nets for layer in net.layers)
    zeros = sum(int(np.count_nonzero(layer.w == 0)) for net in nets for layer in net.layers)
    return zeros / total


def exact_neural_report(nets, c=DEFAULT_ACTIVATION_COST):
    """Per-layer count ``8 * nnz(W)`` (bias add included) plus activation costs."""
    if not isinstance(nets, (list, tuple)):
        nets = [nets]
    names = ("precoder", "decoder")
    rows = []
    for j, net in enumerate(nets):
        role = names[j] if len(nets) == 2 else f"net{j}"
        for k, layer in enumerate(net.layers):
            rows.append((f"{role}.{k}", 8 * int(np.count_nonzero(layer.w))))
            if layer.activation != "none":
                rows.append((f"{role}.{k}.act", c * layer.out_dim))
    return FlopsReport(per_layer=rows, sparsity_used=measured_sparsity(nets), activation_cost_c=c)


def exact_neural_flops(nets, c=DEFAULT_ACTIVATION_COST):
    return exact_neural_report(nets, c).total


def arch_of(precoder, decoder):
    """``MlpArch`` of a trained pair with equal-width hidden layers."""
    return MlpArch(
        i_p=precoder.in_dim,
        h_p=precoder.layers[0].out_dim,
        o_p=precoder.out_dim,
        i_d=decoder.in_dim,
        h_d=decoder.layers[0].out_dim,
        o_d=decoder.out_dim,
        l_p=len(precoder.layers) - 1,
        l_d=len(decoder.layers) - 1,
    )
