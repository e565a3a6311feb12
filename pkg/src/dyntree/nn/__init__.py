from .base import ArchitectureMismatch, QNet, copy_params
from .checkpoint import CheckpointError, load, save
from .mlp import MlpQNet
from .optim import Adam
from .transformer import TransformerQNet

__all__ = ["ArchitectureMismatch", "QNet", "copy_params", "CheckpointError", "load", "save",
           "MlpQNet", "Adam", "TransformerQNet"]
