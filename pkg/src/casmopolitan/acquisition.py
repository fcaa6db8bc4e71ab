"""Acquisition functions and their optimizers over trust regions.

Searches work on any callable ``acq(H, X) -> values`` over array batches,
which keeps them independent of the surrogate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Literal, Optional

import numpy as np
from scipy.special import ndtr

from .gp import GaussianProcess
from .space import MixedPoint, SearchSpace, continuous_tr_bounds, perturb_categorical, sample_in_tr, sample_uniform

AcqFn = Callable[[np.ndarray, np.ndarray], np.ndarray]

INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class AcquisitionSpec:
    kind: Literal["ei", "ucb"] = "ei"
    incumbent_best: float = 0.0
    beta: float = 1.96**2

    def __post_init__(self):
        if self.kind not in ("ei", "ucb"):
            raise ValueError(f"unknown acquisition {self.kind!r}")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")


@dataclass(frozen=True)
class SearchSettings:
    budget: int = 100
    n_restarts: int = 3
    lr: float = 0.03
    fd_step: float = 1e-4
    tol: float = 1e-7


@dataclass(frozen=True)
class Region:
    """Where a search may move. ``center=None`` means the whole space."""

    center: Optional[MixedPoint]
    L_h: int
    L_x: Optional[float] = None

    @classmethod
    def whole(cls, space: SearchSpace) -> "Region":
        return cls(None, space.d_h, None)


def expected_improvement(mu, var, best):
    mu = np.asarray(mu, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(var, dtype=float), 0.0))
    diff = mu - best
    out = np.maximum(diff, 0.0)
    pos = sigma > 0
    if np.any(pos):
        s = sigma[pos] if sigma.ndim else sigma
        d = diff[pos] if diff.ndim else diff
        u = d / s
        val = d * ndtr(u) + s * INV_SQRT_2PI * np.exp(-0.5 * u * u)
        if out.ndim:
            out[pos] = val
        else:
            out = val
    return np.maximum(out, 0.0)


def eval_acq(spec: AcquisitionSpec, mu, var):
    """EI or UCB from posterior mean and variance (scalars or arrays)."""
    if spec.kind == "ei":
        res = expected_improvement(mu, var, spec.incumbent_best)
    else:
        res = np.asarray(mu, dtype=float) + np.sqrt(spec.beta) * np.sqrt(np.maximum(var, 0.0))
    return float(res) if np.ndim(res) == 0 else res


def make_acq(model: GaussianProcess, spec: AcquisitionSpec) -> AcqFn:
    def acq(H: np.ndarray, X: np.ndarray) -> np.ndarray:
        mu, var = model.predict(H, X)
        return eval_acq(spec, mu, var)

    return acq


def _start(space: SearchSpace, region: Region, rng: np.random.Generator) -> MixedPoint:
    if region.center is None:
        return sample_uniform(space, rng)
    return sample_in_tr(space, region.center, region.L_h, region.L_x, rng)


def _box(space: SearchSpace, region: Region) -> tuple[np.ndarray, np.ndarray]:
    if region.center is None or region.L_x is None:
        return np.zeros(space.d_x), np.ones(space.d_x)
    return continuous_tr_bounds(np.asarray(region.center.conts), region.L_x)


class _HammingWalker:
    """Random Hamming-1 moves that respect the categorical trust region."""

    def __init__(self, space: SearchSpace, region: Region):
        self.cards = space.cards_array
        self.d_h = space.d_h
        self.L_h = region.L_h
        self.center = None if region.center is None else np.asarray(region.center.cats, dtype=np.int64)

    def distance(self, h: np.ndarray) -> int:
        return 0 if self.center is None else int(np.count_nonzero(h != self.center))

    def propose(self, h: np.ndarray, dist: int, rng: np.random.Generator):
        """Random neighbour and its distance, or ``None`` if it leaves the region."""
        j = int(rng.integers(self.d_h))
        v = int(rng.integers(self.cards[j] - 1))
        v += v >= h[j]
        if self.center is not None:
            dist = dist - int(h[j] != self.center[j]) + int(v != self.center[j])
            if dist > self.L_h:
                return None
        cand = h.copy()
        cand[j] = v
        return cand, dist


def local_search(
    acq: AcqFn,
    space: SearchSpace,
    region: Region,
    rng: np.random.Generator,
    settings: SearchSettings = SearchSettings(),
    visited: Optional[list] = None,
) -> tuple[MixedPoint, float]:
    """Hill-climb over random Hamming-1 neighbours (purely categorical spaces).

    A move is taken only if the neighbour stays in the region and strictly
    improves the acquisition. Returns the best point seen over all restarts.
    """
    walker = _HammingWalker(space, region)
    empty_x = np.zeros((1, space.d_x))
    best_h, best_val = None, -np.inf
    for _ in range(settings.n_restarts):
        h = np.asarray(_start(space, region, rng).cats, dtype=np.int64)
        dist = walker.distance(h)
        val = float(acq(h[None, :], empty_x)[0])
        if visited is not None:
            visited.append(MixedPoint.from_arrays(h))
        if val > best_val:
            best_h, best_val = h.copy(), val
        for _ in range(settings.budget):
            move = walker.propose(h, dist, rng)
            if move is None:
                continue
            cand, cand_dist = move
            cand_val = float(acq(cand[None, :], empty_x)[0])
            if visited is not None:
                visited.append(MixedPoint.from_arrays(cand))
            if cand_val > val:
                h, dist, val = cand, cand_dist, cand_val
                if val > best_val:
                    best_h, best_val = h.copy(), val
    return MixedPoint.from_arrays(best_h), best_val


def interleaved_search(
    acq: AcqFn,
    space: SearchSpace,
    region: Region,
    rng: np.random.Generator,
    settings: SearchSettings = SearchSettings(),
    visited: Optional[list] = None,
) -> tuple[MixedPoint, float]:
    """Alternate one Hamming-1 move with one projected Adam step on ``x``.

    The continuous gradient is a central finite difference. Each restart
    stops after ``budget`` steps or once a full step changes the acquisition
    by less than ``tol``.
    """
    if space.d_x == 0:
        return local_search(acq, space, region, rng, settings, visited)
    walker = _HammingWalker(space, region) if space.d_h else None
    lo, hi = _box(space, region)
    d_x = space.d_x
    eye = np.eye(d_x) * settings.fd_step
    b1, b2, eps = 0.9, 0.999, 1e-8
    best_z, best_val = None, -np.inf

    def f(h, x):
        return acq(np.repeat(h[None, :], x.shape[0], axis=0), x)

    for _ in range(settings.n_restarts):
        z0 = _start(space, region, rng)
        h = np.asarray(z0.cats, dtype=np.int64)
        x = np.asarray(z0.conts, dtype=float)
        dist = walker.distance(h) if walker else 0
        val = float(f(h, x[None, :])[0])
        if visited is not None:
            visited.append(MixedPoint.from_arrays(h, x))
        if val > best_val:
            best_z, best_val = (h.copy(), x.copy()), val
        m = np.zeros(d_x)
        v = np.zeros(d_x)
        for t in range(1, settings.budget + 1):
            prev = val
            if walker is not None:
                move = walker.propose(h, dist, rng)
                if move is not None:
                    cand, cand_dist = move
                    cand_val = float(f(cand, x[None, :])[0])
                    if visited is not None:
                        visited.append(MixedPoint.from_arrays(cand, x))
                    if cand_val > val:
                        h, dist, val = cand, cand_dist, cand_val
            fd = f(h, np.vstack([x + eye, x - eye]))
            grad = (fd[:d_x] - fd[d_x:]) / (2.0 * settings.fd_step)
            m = b1 * m + (1 - b1) * grad
            v = b2 * v + (1 - b2) * grad * grad
            x = np.clip(x + settings.lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps), lo, hi)
            val = float(f(h, x[None, :])[0])
            if visited is not None:
                visited.append(MixedPoint.from_arrays(h, x))
            if val > best_val:
                best_z, best_val = (h.copy(), x.copy()), val
            if abs(val - prev) < settings.tol:
                break
    return MixedPoint.from_arrays(*best_z), best_val


def optimize_acq(
    acq: AcqFn,
    space: SearchSpace,
    region: Region,
    rng: np.random.Generator,
    settings: SearchSettings = SearchSettings(),
    visited: Optional[list] = None,
) -> tuple[MixedPoint, float]:
    """Dispatch to local or interleaved search depending on the space."""
    if space.d_x:
        return interleaved_search(acq, space, region, rng, settings, visited)
    return local_search(acq, space, region, rng, settings, visited)


# ---------------------------------------------------------------------------
# model-facing wrappers


def _region_from_tr(tr) -> Region:
    return Region(tr.center, tr.L_h, tr.L_x)


def local_search_categorical(model, spec, tr, budget, n_restarts, rng, visited=None) -> MixedPoint:
    settings = SearchSettings(budget=budget, n_restarts=n_restarts)
    return local_search(make_acq(model, spec), model.space, _region_from_tr(tr), rng, settings, visited)[0]


def interleaved_search_mixed(model, spec, tr, budget, n_restarts, rng, visited=None) -> MixedPoint:
    settings = SearchSettings(budget=budget, n_restarts=n_restarts)
    return interleaved_search(make_acq(model, spec), model.space, _region_from_tr(tr), rng, settings, visited)[0]


def _is_training_input(model: GaussianProcess, z: MixedPoint) -> bool:
    if model.n == 0:
        return False
    same = np.ones(model.n, dtype=bool)
    if model.space.d_h:
        same &= np.all(model.H == np.asarray(z.cats), axis=1)
    if model.space.d_x:
        same &= np.all(model.X == np.asarray(z.conts), axis=1)
    return bool(same.any())


def _dedupe(model: GaussianProcess, z: MixedPoint, region: Region, rng: np.random.Generator) -> MixedPoint:
    """Swap a proposal that repeats a training input for a Hamming-1 neighbour."""
    space = model.space
    if space.d_h == 0 or not _is_training_input(model, z):
        return z
    walker = _HammingWalker(space, region)
    h = np.asarray(z.cats, dtype=np.int64)
    dist = walker.distance(h)
    fallback = None
    for _ in range(10 * space.d_h):
        move = walker.propose(h, dist, rng)
        if move is None:
            continue
        cand = MixedPoint(tuple(int(c) for c in move[0]), z.conts)
        if not _is_training_input(model, cand):
            return cand
        fallback = fallback or cand
    return fallback or z


def propose(
    model: GaussianProcess,
    spec: AcquisitionSpec,
    region: Region,
    rng: np.random.Generator,
    settings: SearchSettings = SearchSettings(),
) -> MixedPoint:
    """Single acquisition maximizer within ``region``; EI uses the model's best ``y``."""
    if spec.kind == "ei":
        spec = replace(spec, incumbent_best=model.best_y)
    z, _ = optimize_acq(make_acq(model, spec), model.space, region, rng, settings)
    return _dedupe(model, z, region, rng)


def propose_batch(
    model: GaussianProcess,
    spec: AcquisitionSpec,
    region: Region,
    b: int,
    rng: np.random.Generator,
    settings: SearchSettings = SearchSettings(),
) -> list[MixedPoint]:
    """Kriging-believer batch: condition on each proposal's posterior mean in turn.

    Hyperparameters stay fixed between hallucinations. The hallucinated
    observations live only in a local copy of the model.
    """
    if b < 1:
        raise ValueError("batch size must be >= 1")
    out = []
    current = model
    for i in range(b):
        z = propose(current, spec, region, rng, settings)
        out.append(z)
        if i + 1 < b:
            mu, _ = current.posterior(z)
            current = current.condition_on(np.asarray(z.cats), np.asarray(z.conts), np.array([mu]))
    return out
