"""VA-GCN: geometric-attention graph convolution for point clouds on a small
numpy reverse-mode autodiff engine."""
from .errors import VagcnError
from .model import ModelConfig, VAGCN, build_model, forward, loss, predict_proba
from .spatial import NeighborGraph, knn_bruteforce, knn_grid
from .training import TrainConfig, evaluate, msi_predict, train

__version__ = "0.1.0"
