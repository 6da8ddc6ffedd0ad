"""Joint MIMO precoding and semantic latent-space alignment.

Modules:

* ``codec``: real/complex pairing, whitening, datasets and synthetic latents
* ``channel``: Rayleigh MIMO channel and receiver noise
* ``linear_eq``: linear precoder/decoder trained by scaled ADMM
* ``neural_eq``: sparsifiable complex-valued MLP precoder/decoder
* ``baselines``: least-squares alignment with SVD equalization
* ``flops``: complexity accounting
* ``evalx``: scoring and Monte-Carlo sweeps
* ``cli``: command-line front end
"""

from .channel import MimoChannel, SnrSpec, lift_channel, sample_channel, sigma2_from_snr
from .codec import (
    ChannelDims,
    ClassifierHead,
    LatentDataset,
    SyntheticSpec,
    Whitener,
    compression_factor,
    generate_synthetic,
    load_dataset,
    pair_to_complex,
    save_dataset,
    unpair_to_real,
)
from .evalx import EvalRecord, SweepConfig, monte_carlo
from .linear_eq import AdmmConfig, LinearEqualizer, run_admm, train_linear
from .neural_eq import NeuralEqualizer, TrainConfig, train_neural

__version__ = "0.1.0"

__all__ = [
    "AdmmConfig",
    "ChannelDims",
    "ClassifierHead",
    "EvalRecord",
    "LatentDataset",
    "LinearEqualizer",
    "MimoChannel",
    "NeuralEqualizer",
    "SnrSpec",
    "SweepConfig",
    "SyntheticSpec",
    "TrainConfig",
    "Whitener",
    "compression_factor",
    "generate_synthetic",
    "lift_channel",
    "load_dataset",
    "monte_carlo",
    "pair_to_complex",
    "run_admm",
    "sample_channel",
    "save_dataset",
    "sigma2_from_snr",
    "train_linear",
    "train_neural",
    "unpair_to_real",
]
