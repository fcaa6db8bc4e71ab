"""Numerical checks of the theory: information gain, Gram spectra, regret."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np

from .gp import robust_cholesky
from .kernels import KernelKind, KernelParams, gram
from .record import RunRecord
from .space import MixedPoint, SearchSpace


def log_det_gain(K: np.ndarray, sigma2: float) -> float:
    """``0.5 * log det(I + K / sigma2)`` via Cholesky."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    A = np.eye(K.shape[0]) + np.asarray(K) / sigma2
    L, _ = robust_cholesky(A)
    return float(np.sum(np.log(np.diag(L))))


def info_gain(points: Sequence[MixedPoint], space: SearchSpace, params: KernelParams, sigma2: float,
              kind: KernelKind = "categorical") -> float:
    """Information gain ``gamma = 0.5 log|I + K / sigma2|`` of a sample set."""
    if len(points) == 0:
        raise ValueError("info_gain needs at least one point")
    return log_det_gain(gram(points, params, space, kind), sigma2)


# ---------------------------------------------------------------------------
# one categorical variable with n levels: k(a, b) = exp(l * [a == b])


def single_variable_gram(levels: Sequence[int], l: float) -> np.ndarray:
    a = np.asarray(levels)
    return np.exp(l * (a[:, None] == a[None, :]))


def categorical_spectrum(n: int, l: float) -> np.ndarray:
    """Ascending eigenvalues of the Gram matrix over all ``n`` levels."""
    return np.linalg.eigvalsh(single_variable_gram(np.arange(n), l))


def expected_categorical_spectrum(n: int, l: float) -> np.ndarray:
    """``e^l - 1`` with multiplicity ``n - 1`` and ``e^l + n - 1`` once, ascending."""
    return np.sort(np.append(np.full(n - 1, math.exp(l) - 1.0), math.exp(l) + n - 1.0))


def categorical_gain_bound(n: int, T: int, l: float, sigma2: float) -> float:
    """``n * log(1 + T (e^l + n - 1) / sigma2)``."""
    return n * math.log1p(T * (math.exp(l) + n - 1.0) / sigma2)


@dataclass(frozen=True)
class InfoGainReport:
    T: int
    samples: tuple[int, ...]
    gamma: float
    bound: float
    strategy: str

    @property
    def slack(self) -> float:
        return self.bound - self.gamma

    @property
    def holds(self) -> bool:
        return self.slack >= 0

    def to_row(self) -> dict:
        return {"T": self.T, "strategy": self.strategy, "gamma": self.gamma,
                "bound": self.bound, "slack": self.slack}


def greedy_levels(n: int, T: int, l: float, sigma2: float) -> list[int]:
    """Sample set built by adding, T times, the level with the largest gain increase."""
    chosen: list[int] = []
    for _ in range(T):
        gains = [log_det_gain(single_variable_gram(chosen + [a], l), sigma2) for a in range(n)]
        chosen.append(int(np.argmax(gains)))
    return chosen


def check_categorical_gain_bound(
    n: int, T: int, l: float, sigma2: float, rng: np.random.Generator,
    strategy: Literal["random", "greedy"] = "random",
) -> InfoGainReport:
    """Information gain of a random or greedy sample set against the closed-form bound."""
    if n < 2 or T < 1:
        raise ValueError("need n >= 2 and T >= 1")
    if strategy == "random":
        levels = [int(v) for v in rng.integers(0, n, size=T)]
    elif strategy == "greedy":
        levels = greedy_levels(n, T, l, sigma2)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    gamma = log_det_gain(single_variable_gram(levels, l), sigma2)
    return InfoGainReport(T, tuple(levels), gamma, categorical_gain_bound(n, T, l, sigma2), strategy)


# ---------------------------------------------------------------------------
# regret


@dataclass(frozen=True)
class RegretCurve:
    """Regrets of a run against a known optimum.

    ``simple`` has one entry per evaluation. ``per_restart`` holds the regret
    of each completed restart's best point and ``cumulative`` its running sum.
    """

    simple: np.ndarray
    per_restart: np.ndarray
    cumulative: np.ndarray

    def average(self) -> np.ndarray:
        """``R_I / I`` for ``I = 1..len(per_restart)``."""
        return self.cumulative / np.arange(1, self.cumulative.size + 1) if self.cumulative.size else self.cumulative


def regret_curve(record: RunRecord, f_star: float) -> RegretCurve:
    sign = 1.0 if record.maximize else -1.0
    simple = sign * (f_star - record.incumbent_trajectory())
    completed = len(record.restarts)
    per = []
    for i in range(completed):
        vals = [e.value for e in record.evaluations if e.restart == i and e.kind != "replacement"]
        if vals:
            best = max(vals) if record.maximize else min(vals)
            per.append(sign * (f_star - best))
    per = np.array(per, dtype=float)
    return RegretCurve(simple, per, np.cumsum(per))


def format_table(rows: Sequence[dict], columns: Optional[Sequence[str]] = None) -> str:
    """Tab-separated table with a header row."""
    if not rows:
        return ""
    columns = list(columns or rows[0].keys())
    out = ["\t".join(columns)]
    for r in rows:
        out.append("\t".join(_cell(r.get(c)) for c in columns))
    return "\n".join(out) + "\n"


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)
