"""Minimal CNN kernel library: ops, layers, networks, weight files."""

from .layers import Conv2D, FullyConnected, L2Normalize, MaxPool2D, PReLU, Softmax
from .network import Network
from .weights import WeightStore, as_tensor, load_weights, save_weights

__all__ = [
    "Conv2D",
    "FullyConnected",
    "L2Normalize",
    "MaxPool2D",
    "PReLU",
    "Softmax",
    "Network",
    "WeightStore",
    "as_tensor",
    "load_weights",
    "save_weights",
]
