"""Dynamic tree-of-thought question answering with a DQN strategy selector."""

from .agent import RewardConfig, compute_reward
from .datasets import QARecord, load_dataset
from .evaluation import EvalReport, compare, evaluate
from .retrieval import Retriever, index
from .training import TrainConfig, TrainedAgent, train
from .tree import ActionKind, ReasoningTree, TreeLimits
from .world import WorldConfig, generate_world

__version__ = "0.1.0"

__all__ = ["RewardConfig", "compute_reward", "QARecord", "load_dataset", "EvalReport", "compare",
           "evaluate", "Retriever", "index", "TrainConfig", "TrainedAgent", "train", "ActionKind",
           "ReasoningTree", "TreeLimits", "WorldConfig", "generate_world"]
