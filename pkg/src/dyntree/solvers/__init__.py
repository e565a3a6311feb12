from .common import AccountingError, Decision, SolveOutcome
from .dynamic import RandomPolicy, solve_policy, solve_random, solve_rl
from .exhaustive import solve_exhaustive
from .forest import RandomForest, ReliabilityClassifier, reliability_features, train_reliability
from .greedy import solve_greedy, train_reliability_classifier

__all__ = ["AccountingError", "Decision", "SolveOutcome", "RandomPolicy", "solve_policy",
           "solve_random", "solve_rl", "solve_exhaustive", "RandomForest", "ReliabilityClassifier",
           "reliability_features", "train_reliability", "solve_greedy", "train_reliability_classifier"]
