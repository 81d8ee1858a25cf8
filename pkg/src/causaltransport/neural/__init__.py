from .mlp import Mlp, TrainConfig, forward_backward, grad_check, softmax
from .patches import PatchBagEncoder, patch_bag
from .readout import ErmClassifier, NeuralReadout, train_erm, train_readout
from .vae import Vae, VaeRepresentation, train_vae

__all__ = [
    "ErmClassifier", "Mlp", "NeuralReadout", "PatchBagEncoder", "TrainConfig", "Vae",
    "VaeRepresentation", "forward_backward", "grad_check", "patch_bag", "softmax",
    "train_erm", "train_readout", "train_vae",
]
