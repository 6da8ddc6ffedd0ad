"""Trade accuracy for arithmetic by pruning the neural equalizer.

Larger sparsity weights raise the hard-threshold level, so more complex
weights get zeroed and stay zeroed.  The exact FLOP count follows the
surviving weights; the linear equalizer's count is printed for scale.
"""

from mimo_semalign.channel import SnrSpec, lift_channel, sample_channel, sigma2_from_snr
from mimo_semalign.codec import ChannelDims, SyntheticSpec, generate_synthetic
from mimo_semalign.evalx import accuracy_eval
from mimo_semalign.flops import exact_neural_flops, linear_model_flops
from mimo_semalign.neural_eq import TrainConfig, train_neural

data = generate_synthetic(SyntheticSpec(d=32, m=48, n=2000, n_classes=10, cluster_spread=1.0, map_kind="real_linear"))
pilots, test = data.split(1000, 1000)
dims = ChannelDims(K=1, n_t=4, n_r=4)
h = lift_channel(sample_channel(dims, seed=0))
sigma2 = sigma2_from_snr(SnrSpec(snr_db=20.0))

print(f"linear equalizer: {linear_model_flops(dims, data.d, data.m)} FLOPs")
for beta in (0.0, 20.0, 50.0, 100.0, 200.0):
    eq, history = train_neural(pilots, h, sigma2, TrainConfig(eta=1e-3, epochs=50, beta=beta, gamma=beta))
    acc = accuracy_eval(eq, test, h, sigma2, noise_seed=0)
    n_flops = exact_neural_flops((eq.precoder, eq.decoder))
    print(f"beta=gamma={beta:<5}  sparsity {history[-1]['sparsity']:.3f}  FLOPs {n_flops:6d}  accuracy {acc:.3f}")
