"""Synthetic objectives, a weighted MaxSAT evaluator and random search.

Every benchmark takes a :class:`MixedPoint` whose continuous part lies in the
unit cube and maps it to its native domain itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .record import RunRecord
from .space import DimensionError, MixedPoint, SearchSpace, sample_uniform

# ---------------------------------------------------------------------------
# Ackley


ACKLEY_A = 20.0
ACKLEY_B = 0.2
ACKLEY_C = 2.0 * math.pi


def ackley(z: np.ndarray) -> float:
    z = np.asarray(z, dtype=float)
    d = z.size
    s1 = np.sqrt(np.sum(z * z) / d)
    s2 = np.sum(np.cos(ACKLEY_C * z)) / d
    return float(-ACKLEY_A * np.exp(-ACKLEY_B * s1) - np.exp(s2) + ACKLEY_A + math.e)


ACKLEY53_SPACE = SearchSpace((2,) * 50, ((-1.0, 1.0),) * 3)


def _check_shape(z: MixedPoint, space: SearchSpace, name: str) -> None:
    if len(z.cats) != space.d_h or len(z.conts) != space.d_x:
        raise DimensionError(
            f"{name} expects {space.d_h} categorical and {space.d_x} continuous values, "
            f"got {len(z.cats)} and {len(z.conts)}"
        )


def ackley53(z: MixedPoint) -> float:
    """Ackley on 50 binary and 3 continuous coordinates; minimum 0 at the origin."""
    _check_shape(z, ACKLEY53_SPACE, "ackley53")
    x = ACKLEY53_SPACE.denormalize(z.conts)
    return ackley(np.concatenate([np.asarray(z.cats, dtype=float), x]))


# ---------------------------------------------------------------------------
# Func2C / Func3C


def bea(x1: float, x2: float) -> float:
    return (1.5 - x1 + x1 * x2) ** 2 + (2.25 - x1 + x1 * x2**2) ** 2 + (2.625 - x1 + x1 * x2**3) ** 2


def cam(x1: float, x2: float) -> float:
    # constant 5 as printed for this benchmark (the textbook camel uses 4)
    return (5 - 2.1 * x1**2 + x1**4 / 3) * x1**2 + x1 * x2 + (-4 + 4 * x2**2) * x2**2


def ros(x1: float, x2: float) -> float:
    return (1 - x1) ** 2 + 100 * (x2 - x1**2) ** 2


# (weight, base function) for every level of each categorical input
H1_ARMS = ((1.0, ros), (1.0, cam), (1.0, bea))
H2_ARMS = ((1.0, ros), (1.0, cam), (1.0, bea), (1.0, bea), (1.0, bea))
H3_ARMS = ((5.0, ros), (2.0, cam), (2.0, bea), (3.0, bea))

FUNC2C_SPACE = SearchSpace((3, 5), ((-1.0, 1.0),) * 2)
FUNC3C_SPACE = SearchSpace((3, 5, 4), ((-1.0, 1.0),) * 2)


def _func_nc(z: MixedPoint, space: SearchSpace, tables, name: str) -> float:
    _check_shape(z, space, name)
    x1, x2 = space.denormalize(z.conts)
    total = 0.0
    for level, arms in zip(z.cats, tables):
        w, f = arms[level]
        total += w * f(x1, x2)
    return float(-total)


def func2c(z: MixedPoint) -> float:
    """Negated sum of the base functions chosen by ``h_1`` and ``h_2`` (maximize)."""
    return _func_nc(z, FUNC2C_SPACE, (H1_ARMS, H2_ARMS), "func2c")


def func3c(z: MixedPoint) -> float:
    return _func_nc(z, FUNC3C_SPACE, (H1_ARMS, H2_ARMS, H3_ARMS), "func3c")


# ---------------------------------------------------------------------------
# discretised Branin

BRANIN_LEVELS = 51
_LEVEL_VALUES = tuple(float(v) for v in np.linspace(-1.0, 1.0, BRANIN_LEVELS))
BRANIN_SPACE = SearchSpace((BRANIN_LEVELS, BRANIN_LEVELS), (), (_LEVEL_VALUES, _LEVEL_VALUES))
BRANIN_F_STAR = 0.404


def branin(x1: float, x2: float) -> float:
    a, b, c = 1.0, 5.1 / (4 * math.pi**2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * math.cos(x1) + s


def branin_discretized(z: MixedPoint) -> float:
    """Branin on a 51 x 51 grid of ``[-1, 1]^2`` mapped to ``[-5, 10] x [0, 15]``."""
    _check_shape(z, BRANIN_SPACE, "branin_discretized")
    for level in z.cats:
        if not 0 <= level < BRANIN_LEVELS:
            raise ValueError(f"level {level} outside [0, {BRANIN_LEVELS - 1}]")
    u1, u2 = _LEVEL_VALUES[z.cats[0]], _LEVEL_VALUES[z.cats[1]]
    return branin(2.5 + 7.5 * u1, 7.5 + 7.5 * u2)


# ---------------------------------------------------------------------------
# weighted MaxSAT


class WcnfError(ValueError):
    """Malformed WCNF text; the message names the offending line."""


@dataclass(frozen=True)
class WcnfInstance:
    num_vars: int
    clauses: tuple[tuple[float, tuple[int, ...]], ...]
    top: Optional[float] = None

    def __post_init__(self):
        if self.num_vars < 1:
            raise ValueError("num_vars must be positive")
        for w, lits in self.clauses:
            if not w > 0:
                raise ValueError(f"clause weight must be positive, got {w}")
            if not lits:
                raise ValueError("clauses must be nonempty")
            for lit in lits:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ValueError(f"literal {lit} out of range for {self.num_vars} variables")

    @property
    def space(self) -> SearchSpace:
        return SearchSpace((2,) * self.num_vars)


def _number(tok: str, lineno: int, what: str) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise WcnfError(f"line {lineno}: {what} {tok!r} is not a number") from None
    if not math.isfinite(v):
        raise WcnfError(f"line {lineno}: {what} {tok!r} is not finite")
    return v


def _integer(tok: str, lineno: int, what: str) -> int:
    try:
        return int(tok)
    except ValueError:
        raise WcnfError(f"line {lineno}: {what} {tok!r} is not an integer") from None


def parse_wcnf(text: str) -> WcnfInstance:
    """Parse DIMACS WCNF (``p wcnf nvars nclauses [top]`` header)."""
    header = None
    clauses = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        toks = line.split()
        if toks[0] == "p":
            if header is not None:
                raise WcnfError(f"line {lineno}: duplicate header")
            if len(toks) not in (4, 5) or toks[1] != "wcnf":
                raise WcnfError(f"line {lineno}: malformed header {line!r}")
            nv = _integer(toks[2], lineno, "variable count")
            nc = _integer(toks[3], lineno, "clause count")
            if nv < 1 or nc < 0:
                raise WcnfError(f"line {lineno}: header counts must be positive")
            top = _number(toks[4], lineno, "top weight") if len(toks) == 5 else None
            header = (nv, nc, top)
            continue
        if header is None:
            raise WcnfError(f"line {lineno}: clause before the header")
        w = _number(toks[0], lineno, "weight")
        if not w > 0:
            raise WcnfError(f"line {lineno}: weight must be positive")
        if toks[-1] != "0":
            raise WcnfError(f"line {lineno}: clause is missing the terminating 0")
        lits = tuple(_integer(t, lineno, "literal") for t in toks[1:-1])
        if not lits:
            raise WcnfError(f"line {lineno}: empty clause")
        for lit in lits:
            if lit == 0 or abs(lit) > header[0]:
                raise WcnfError(f"line {lineno}: literal {lit} out of range 1..{header[0]}")
        clauses.append((w, lits))
    if header is None:
        raise WcnfError("missing 'p wcnf' header")
    if len(clauses) != header[1]:
        raise WcnfError(f"header declares {header[1]} clauses, found {len(clauses)}")
    return WcnfInstance(header[0], tuple(clauses), header[2])


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def serialize_wcnf(inst: WcnfInstance) -> str:
    head = f"p wcnf {inst.num_vars} {len(inst.clauses)}"
    if inst.top is not None:
        head += f" {_fmt(inst.top)}"
    lines = [head]
    for w, lits in inst.clauses:
        lines.append(" ".join([_fmt(w), *map(str, lits), "0"]))
    return "\n".join(lines) + "\n"


def load_wcnf(path) -> WcnfInstance:
    return parse_wcnf(Path(path).read_text())


def maxsat_value(inst: WcnfInstance, assignment: Sequence) -> float:
    """Total weight of satisfied clauses; ``assignment[i]`` is variable ``i + 1``."""
    a = np.asarray(assignment).astype(bool)
    if a.size != inst.num_vars:
        raise DimensionError(f"assignment has {a.size} values, instance has {inst.num_vars} variables")
    total = 0.0
    for w, lits in inst.clauses:
        if any(a[abs(lit) - 1] == (lit > 0) for lit in lits):
            total += w
    return total


def maxsat_objective(inst: WcnfInstance) -> Callable[[MixedPoint], float]:
    def f(z: MixedPoint) -> float:
        return maxsat_value(inst, z.cats)

    return f


def maxsat_brute_force(inst: WcnfInstance) -> float:
    """Exact optimum by enumerating all ``2^n`` assignments (vectorized)."""
    n = inst.num_vars
    if n > 24:
        raise ValueError("brute force is limited to 24 variables")
    bits = ((np.arange(2**n)[:, None] >> np.arange(n)) & 1).astype(bool)
    total = np.zeros(2**n)
    for w, lits in inst.clauses:
        sat = np.zeros(2**n, dtype=bool)
        for lit in lits:
            col = bits[:, abs(lit) - 1]
            sat |= col if lit > 0 else ~col
        total += w * sat
    return float(total.max())


def random_wcnf(n_vars: int, n_clauses: int, rng: np.random.Generator, max_len: int = 3,
                weight_range: tuple[int, int] = (1, 10)) -> WcnfInstance:
    """Random instance with integer weights and clauses of 1..max_len distinct variables."""
    clauses = []
    for _ in range(n_clauses):
        k = int(rng.integers(1, min(max_len, n_vars) + 1))
        vars_ = rng.choice(n_vars, size=k, replace=False) + 1
        signs = rng.choice([-1, 1], size=k)
        w = float(rng.integers(weight_range[0], weight_range[1] + 1))
        clauses.append((w, tuple(int(s * v) for s, v in zip(signs, vars_))))
    return WcnfInstance(n_vars, tuple(clauses))


# ---------------------------------------------------------------------------
# random search and the registry


def random_search(objective: Callable[[MixedPoint], float], space: SearchSpace, T: int,
                  rng: np.random.Generator, maximize: bool = True, seed: int = 0) -> RunRecord:
    """``T`` uniform evaluations logged in the optimizer's record format."""
    if T < 1:
        raise ValueError("T must be >= 1")
    record = RunRecord("random", seed, maximize)
    for _ in range(T):
        z = sample_uniform(space, rng)
        record.append(0, "random", z, float(objective(z)))
    return record


@dataclass(frozen=True)
class Benchmark:
    name: str
    space: SearchSpace
    objective: Callable[[MixedPoint], float] = field(compare=False)
    maximize: bool
    f_star: Optional[float] = None


BENCHMARKS = {
    "ackley53": Benchmark("ackley53", ACKLEY53_SPACE, ackley53, maximize=False, f_star=0.0),
    "func2c": Benchmark("func2c", FUNC2C_SPACE, func2c, maximize=True),
    "func3c": Benchmark("func3c", FUNC3C_SPACE, func3c, maximize=True),
    "branin_discretized": Benchmark("branin_discretized", BRANIN_SPACE, branin_discretized,
                                    maximize=False, f_star=BRANIN_F_STAR),
}


def get_benchmark(name: str, wcnf_path: Optional[str] = None) -> Benchmark:
    if name == "maxsat":
        if wcnf_path is None:
            raise ValueError("the maxsat benchmark needs a WCNF file")
        inst = load_wcnf(wcnf_path)
        return Benchmark("maxsat", inst.space, maxsat_objective(inst), maximize=True)
    try:
        return BENCHMARKS[name]
    except KeyError:
        known = ", ".join(sorted([*BENCHMARKS, "maxsat"]))
        raise ValueError(f"unknown benchmark {name!r}; known: {known}") from None
