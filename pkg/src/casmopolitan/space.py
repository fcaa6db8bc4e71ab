"""Search spaces, points, Hamming geometry and trust-region samplers.

Continuous coordinates are always stored normalized to the unit cube; use
:meth:`SearchSpace.denormalize` at the objective boundary.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np


class DimensionError(ValueError):
    """Raised when vectors of mismatched length are compared."""


@dataclass(frozen=True)
class MixedPoint:
    """One candidate ``z = [h, x]``.

    ``cats`` holds category indices; ``conts`` holds coordinates in ``[0, 1]``.
    """

    cats: tuple[int, ...] = ()
    conts: tuple[float, ...] = ()

    @classmethod
    def from_arrays(cls, h: Sequence[int], x: Sequence[float] = ()) -> "MixedPoint":
        return cls(tuple(int(v) for v in h), tuple(float(v) for v in x))

    def to_dict(self) -> dict:
        return {"cats": list(self.cats), "conts": list(self.conts)}

    @classmethod
    def from_dict(cls, d: dict) -> "MixedPoint":
        return cls.from_arrays(d.get("cats", ()), d.get("conts", ()))


@dataclass(frozen=True)
class SearchSpace:
    """Product of categorical dimensions and a continuous box.

    Parameters
    ----------
    categorical_cards : sequence of int
        Number of levels ``n_j`` of each categorical dimension.
    continuous_bounds : sequence of (float, float)
        Raw ``(lower, upper)`` bounds of each continuous dimension.
    ordinal : sequence of (sequence of float or None), optional
        Per categorical dimension, the numeric value attached to each level
        when the dimension is ordinal. ``None`` marks a plain categorical
        dimension. The distance between levels is the absolute difference of
        their values and the maximal distance is ``max - min``.
    """

    categorical_cards: tuple[int, ...] = ()
    continuous_bounds: tuple[tuple[float, float], ...] = ()
    ordinal: tuple[Optional[tuple[float, ...]], ...] = field(default=())

    def __post_init__(self):
        cards = tuple(int(n) for n in self.categorical_cards)
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.continuous_bounds)
        if any(n < 2 for n in cards):
            raise ValueError(f"every categorical dimension needs >= 2 levels, got {cards}")
        if any(not lo < hi for lo, hi in bounds):
            raise ValueError(f"continuous bounds must satisfy lower < upper, got {bounds}")
        if not cards and not bounds:
            raise ValueError("search space is empty")
        ordinal = tuple(self.ordinal) if self.ordinal else (None,) * len(cards)
        if len(ordinal) != len(cards):
            raise ValueError("ordinal descriptor length must equal the number of categorical dimensions")
        norm = []
        for n, levels in zip(cards, ordinal):
            if levels is None:
                norm.append(None)
                continue
            levels = tuple(float(v) for v in levels)
            if len(levels) != n:
                raise ValueError(f"ordinal levels {levels} do not match cardinality {n}")
            if max(levels) == min(levels):
                raise ValueError("ordinal levels must not all coincide")
            norm.append(levels)
        object.__setattr__(self, "categorical_cards", cards)
        object.__setattr__(self, "continuous_bounds", bounds)
        object.__setattr__(self, "ordinal", tuple(norm))

    @property
    def d_h(self) -> int:
        return len(self.categorical_cards)

    @property
    def d_x(self) -> int:
        return len(self.continuous_bounds)

    @property
    def n_combinations(self) -> int:
        """Number of distinct categorical assignments (product of the ``n_j``)."""
        return math.prod(self.categorical_cards)

    @property
    def is_mixed(self) -> bool:
        return self.d_h > 0 and self.d_x > 0

    @property
    def has_ordinal(self) -> bool:
        return any(levels is not None for levels in self.ordinal)

    @property
    def cards_array(self) -> np.ndarray:
        return np.asarray(self.categorical_cards, dtype=np.int64)

    def denormalize(self, conts: Sequence[float]) -> np.ndarray:
        """Map unit-cube coordinates to raw bounds."""
        x = np.asarray(conts, dtype=float)
        if self.d_x == 0:
            return x
        b = np.asarray(self.continuous_bounds)
        return b[:, 0] + x * (b[:, 1] - b[:, 0])

    def normalize(self, raw: Sequence[float]) -> np.ndarray:
        x = np.asarray(raw, dtype=float)
        if self.d_x == 0:
            return x
        b = np.asarray(self.continuous_bounds)
        return (x - b[:, 0]) / (b[:, 1] - b[:, 0])

    def enumerate(self) -> Iterator[MixedPoint]:
        """All categorical assignments (purely categorical spaces only)."""
        if self.d_x:
            raise ValueError("cannot enumerate a space with continuous dimensions")
        for h in itertools.product(*(range(n) for n in self.categorical_cards)):
            yield MixedPoint(tuple(h), ())

    def to_dict(self) -> dict:
        return {
            "categorical_cards": list(self.categorical_cards),
            "continuous_bounds": [list(b) for b in self.continuous_bounds],
            "ordinal": [None if lv is None else list(lv) for lv in self.ordinal],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpace":
        cards = d.get("categorical_cards", [])
        ordinal = d.get("ordinal") or None
        if ordinal is not None:
            ordinal = tuple(None if lv is None else tuple(lv) for lv in ordinal)
        return cls(
            categorical_cards=tuple(cards),
            continuous_bounds=tuple(tuple(b) for b in d.get("continuous_bounds", [])),
            ordinal=ordinal or (),
        )


def validate(space: SearchSpace, p: MixedPoint) -> bool:
    """True iff ``p`` is a member of ``space`` (normalized continuous part)."""
    if len(p.cats) != space.d_h or len(p.conts) != space.d_x:
        return False
    for v, n in zip(p.cats, space.categorical_cards):
        if not 0 <= v < n:
            return False
    return all(0.0 <= x <= 1.0 for x in p.conts)


def hamming(a: Sequence[int], b: Sequence[int]) -> int:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"length mismatch: {a.shape} vs {b.shape}")
    return int(np.count_nonzero(a != b))


def in_categorical_tr(center: Sequence[int], candidate: Sequence[int], L_h: int) -> bool:
    """Hamming-ball membership: at most ``L_h`` coordinates differ from ``center``."""
    if L_h < 0:
        raise ValueError("L_h must be nonnegative")
    return hamming(center, candidate) <= L_h


def in_continuous_tr(center: Sequence[float], candidate: Sequence[float], L_x: float) -> bool:
    """Axis-aligned cube of side ``L_x`` around ``center``."""
    c = np.asarray(center, dtype=float)
    x = np.asarray(candidate, dtype=float)
    if c.shape != x.shape:
        raise DimensionError(f"length mismatch: {c.shape} vs {x.shape}")
    return bool(np.all(np.abs(x - c) <= L_x / 2.0))


def continuous_tr_bounds(center: np.ndarray, L_x: float) -> tuple[np.ndarray, np.ndarray]:
    """Box of side ``L_x`` around ``center`` intersected with the unit cube."""
    c = np.asarray(center, dtype=float)
    return np.clip(c - L_x / 2.0, 0.0, 1.0), np.clip(c + L_x / 2.0, 0.0, 1.0)


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> MixedPoint:
    h = rng.integers(0, space.cards_array) if space.d_h else np.zeros(0, dtype=np.int64)
    x = rng.random(space.d_x)
    return MixedPoint.from_arrays(h, x)


def perturb_categorical(
    h: np.ndarray, cards: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Resample ``k`` distinct coordinates of ``h``, each to a different level."""
    out = np.array(h, dtype=np.int64, copy=True)
    if k <= 0:
        return out
    dims = rng.choice(len(h), size=k, replace=False)
    for j in dims:
        # uniform over the n_j - 1 other levels
        v = rng.integers(0, cards[j] - 1)
        out[j] = v + (v >= h[j])
    return out


def sample_in_tr(
    space: SearchSpace,
    center: MixedPoint,
    L_h: int,
    L_x: Optional[float],
    rng: np.random.Generator,
) -> MixedPoint:
    """Draw a point inside both trust regions around ``center``.

    The categorical part changes ``k ~ U{0..L_h}`` randomly chosen
    coordinates; the continuous part is uniform in the clipped box.
    """
    h = np.asarray(center.cats, dtype=np.int64)
    if space.d_h:
        k = int(rng.integers(0, min(L_h, space.d_h) + 1))
        h = perturb_categorical(h, space.cards_array, k, rng)
    if space.d_x:
        lo, hi = continuous_tr_bounds(np.asarray(center.conts), L_x if L_x is not None else 2.0)
        x = lo + rng.random(space.d_x) * (hi - lo)
    else:
        x = np.zeros(0)
    return MixedPoint.from_arrays(h, x)


def stack(points: Sequence[MixedPoint], space: SearchSpace) -> tuple[np.ndarray, np.ndarray]:
    """Points to ``(H, X)`` arrays of shapes ``(n, d_h)`` and ``(n, d_x)``."""
    n = len(points)
    H = np.array([p.cats for p in points], dtype=np.int64).reshape(n, space.d_h)
    X = np.array([p.conts for p in points], dtype=float).reshape(n, space.d_x)
    return H, X
