"""Restart-center selection from an archive of per-restart local maxima.

An auxiliary GP is fitted to the archive only and its UCB is maximized over
the whole space; the maximizer becomes the next trust-region center.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .acquisition import AcquisitionSpec, Region, SearchSettings, make_acq, optimize_acq
from .gp import FitSettings, GaussianProcess, GPFitError
from .kernels import KernelKind
from .space import MixedPoint, SearchSpace, sample_uniform

log = logging.getLogger(__name__)

DEFAULT_BETA = 1.96**2
MIN_POINTS_TO_FIT = 3


@dataclass(frozen=True)
class RestartArchive:
    """One ``(point, value)`` per completed restart, values on the maximization scale."""

    entries: tuple[tuple[MixedPoint, float], ...] = ()
    replacements: tuple[dict, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.entries)

    def contains(self, point: MixedPoint) -> bool:
        return any(p == point for p, _ in self.entries)

    def append(self, point: MixedPoint, value: float) -> "RestartArchive":
        return RestartArchive(self.entries + ((point, float(value)),), self.replacements)

    def append_replacement(self, duplicate: MixedPoint, point: MixedPoint, value: float) -> "RestartArchive":
        note = {"restart": len(self.entries), "duplicate": duplicate.to_dict(), "replacement": point.to_dict()}
        return RestartArchive(self.entries + ((point, float(value)),), self.replacements + (note,))

    def to_dict(self) -> dict:
        return {
            "entries": [{"point": p.to_dict(), "value": v} for p, v in self.entries],
            "replacements": list(self.replacements),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RestartArchive":
        entries = tuple((MixedPoint.from_dict(e["point"]), float(e["value"])) for e in d.get("entries", []))
        return cls(entries, tuple(d.get("replacements", [])))


def draw_replacement(archive: RestartArchive, space: SearchSpace, rng: np.random.Generator,
                     max_tries: int = 1000) -> MixedPoint:
    """Uniform random point not already in the archive."""
    for _ in range(max_tries):
        z = sample_uniform(space, rng)
        if not archive.contains(z):
            return z
    raise RuntimeError("could not draw a point outside the archive; the space is exhausted")


def record_local_maximum(
    archive: RestartArchive,
    point: MixedPoint,
    value: float,
    rng: np.random.Generator,
    space: Optional[SearchSpace] = None,
    objective: Optional[Callable[[MixedPoint], float]] = None,
) -> RestartArchive:
    """Append a restart's local maximum.

    A point already in the archive is replaced by a uniform random point,
    which ``objective`` evaluates (maximization scale).
    """
    if not archive.contains(point):
        return archive.append(point, value)
    if space is None or objective is None:
        raise ValueError("a duplicate local maximum needs space and objective to draw a replacement")
    z = draw_replacement(archive, space, rng)
    return archive.append_replacement(point, z, float(objective(z)))


def theoretical_beta(i: int, n_combinations: int, zeta: float = 0.1) -> float:
    """``2 log(|H| i^2 pi^2 / (6 zeta))``, the growing schedule of the regret analysis."""
    return 2.0 * math.log(n_combinations * i * i * math.pi**2 / (6.0 * zeta))


def auxiliary_model(
    archive: RestartArchive,
    space: SearchSpace,
    rng: np.random.Generator,
    kind: KernelKind = "categorical",
    ard: bool = True,
    lam: float = 0.5,
    fit_settings: FitSettings = FitSettings(),
) -> GaussianProcess:
    """GP on the archive alone; fitted only once it holds enough entries."""
    points = [p for p, _ in archive.entries]
    values = [v for _, v in archive.entries]
    model = GaussianProcess.from_data(space, points, values, kind=kind, ard=ard, lam=lam)
    if len(points) >= MIN_POINTS_TO_FIT:
        model = model.fit(rng, fit_settings)
    return model


def maximize_ucb(
    model: GaussianProcess,
    beta: float,
    rng: np.random.Generator,
    search_settings: SearchSettings = SearchSettings(),
) -> tuple[MixedPoint, float]:
    """Maximize ``mu + sqrt(beta) * sigma`` over the whole space (standardized scale)."""
    spec = AcquisitionSpec(kind="ucb", beta=beta)
    return optimize_acq(make_acq(model, spec), model.space, Region.whole(model.space), rng, search_settings)


def select_restart_center(
    archive: RestartArchive,
    space: SearchSpace,
    beta: float,
    rng: np.random.Generator,
    kind: KernelKind = "categorical",
    ard: bool = True,
    lam: float = 0.5,
    fit_settings: FitSettings = FitSettings(),
    search_settings: SearchSettings = SearchSettings(),
) -> MixedPoint:
    """Next trust-region center: the UCB maximizer of the archive GP."""
    if len(archive) == 0:
        return sample_uniform(space, rng)
    try:
        model = auxiliary_model(archive, space, rng, kind, ard, lam, fit_settings)
    except GPFitError as exc:
        log.warning("auxiliary GP fit failed (%s); restarting from a random center", exc)
        return sample_uniform(space, rng)
    return maximize_ucb(model, beta, rng, search_settings)[0]
