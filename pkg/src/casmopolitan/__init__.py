"""Trust-region Bayesian optimization over categorical and mixed spaces."""

from .benchmarks import Benchmark, get_benchmark, random_search
from .optimizer import Optimizer, OptimizerConfig, ProtocolError, optimize
from .record import Evaluation, RunRecord
from .space import MixedPoint, SearchSpace

__all__ = [
    "Benchmark",
    "Evaluation",
    "MixedPoint",
    "Optimizer",
    "OptimizerConfig",
    "ProtocolError",
    "RunRecord",
    "SearchSpace",
    "get_benchmark",
    "optimize",
    "random_search",
]
