"""Trust-region BO loop with restarts, as a closed loop or an ask/tell pair.

The optimizer maximizes internally. With ``maximize=False`` values are
negated on the way in and the record keeps the caller's raw numbers.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, fields, replace
from typing import Callable, Literal, Optional

import numpy as np

from .acquisition import AcquisitionSpec, Region, SearchSettings, propose_batch
from .gp import FitSettings, GaussianProcess, GPFitError
from .kernels import KernelParams
from .record import RunRecord
from .restart import DEFAULT_BETA, RestartArchive, draw_replacement, select_restart_center, theoretical_beta
from .space import MixedPoint, SearchSpace, sample_in_tr, sample_uniform
from .trustregion import L_X_INIT, L_X_MAX, L_X_MIN, TrustRegionState, record_result, reset

log = logging.getLogger(__name__)


class ProtocolError(RuntimeError):
    """ask/tell called out of order or with the wrong points."""


@dataclass(frozen=True)
class OptimizerConfig:
    """Run settings. ``L_h0=None`` picks ``max(1, round(0.8 d_h))``."""

    n_init: int = 20
    max_evals: int = 200
    batch_size: int = 1
    acquisition: Literal["ei", "ucb"] = "ei"
    kernel: Literal["categorical", "ordinal"] = "categorical"
    ard: bool = True
    lam: float = 0.5
    use_trust_region: bool = True
    L_h0: Optional[int] = None
    L_x0: float = L_X_INIT
    L_x_min: float = L_X_MIN
    L_x_max: float = L_X_MAX
    alpha_s: float = 0.667
    succ_tol: int = 2
    fail_tol: int = 40
    beta: float = DEFAULT_BETA
    beta_schedule: Literal["constant", "theory"] = "constant"
    zeta: float = 0.1
    fit_restarts: int = 5
    fit_steps: int = 100
    fit_lr: float = 0.03
    search_budget: int = 100
    search_restarts: int = 3
    search_lr: float = 0.03
    maximize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_init < 2:
            raise ValueError("n_init must be >= 2")
        if self.max_evals < self.n_init:
            raise ValueError("max_evals must be >= n_init")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.acquisition not in ("ei", "ucb"):
            raise ValueError(f"unknown acquisition {self.acquisition!r}")
        if self.kernel not in ("categorical", "ordinal"):
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        if self.beta_schedule not in ("constant", "theory"):
            raise ValueError(f"unknown beta schedule {self.beta_schedule!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown optimizer settings: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def fit_settings(self) -> FitSettings:
        return FitSettings(n_restarts=self.fit_restarts, max_steps=self.fit_steps, lr=self.fit_lr)

    @property
    def search_settings(self) -> SearchSettings:
        return SearchSettings(budget=self.search_budget, n_restarts=self.search_restarts, lr=self.search_lr)


def _rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def _rng_from_state(state: dict) -> np.random.Generator:
    bg = np.random.PCG64()
    bg.state = state
    return np.random.Generator(bg)


class Optimizer:
    """Ask/tell driver.

    Each :meth:`ask` returns a batch that must be passed back to
    :meth:`tell` unchanged together with its values before the next ask.
    An empty batch means the budget is spent.
    """

    def __init__(self, space: SearchSpace, config: OptimizerConfig = OptimizerConfig()):
        if config.kernel == "ordinal" and not space.has_ordinal:
            raise ValueError("the ordinal kernel needs at least one ordinal dimension")
        self.space = space
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.record = RunRecord("casmopolitan", config.seed, config.maximize, config.hash())
        self.archive = RestartArchive()
        self.tr = self._fresh_tr(None)
        self.restart_index = 0
        self.local: list[int] = []  # record indices in the current GP
        self.y_stats: Optional[tuple[float, float]] = None
        self.params: Optional[KernelParams] = None
        self.noise: Optional[float] = None
        self.local_best: Optional[tuple[MixedPoint, float]] = None
        self.started = False
        self.restart_pending = False
        self.archived = False
        self.pending: list[MixedPoint] = []
        self.pending_kind = ""
        self.pending_lengths: tuple = (None, None)

    # ------------------------------------------------------------------ helpers

    def _fresh_tr(self, center: Optional[MixedPoint]) -> TrustRegionState:
        c = self.config
        tr = TrustRegionState.create(
            self.space.d_h, self.space.d_x > 0, L_h0=c.L_h0, L_x0=c.L_x0,
            L_x_min=c.L_x_min, L_x_max=c.L_x_max, alpha_s=c.alpha_s,
            succ_tol=c.succ_tol, fail_tol=c.fail_tol,
        )
        return replace(tr, center=center)

    def _internal(self, value: float) -> float:
        return value if self.config.maximize else -value

    @property
    def n_evals(self) -> int:
        return len(self.record)

    @property
    def remaining(self) -> int:
        return self.config.max_evals - self.n_evals

    def _region(self) -> Region:
        if not self.config.use_trust_region:
            return Region.whole(self.space)
        return Region(self.tr.center, self.tr.L_h, self.tr.L_x)

    def _lengths(self) -> tuple:
        if not self.config.use_trust_region:
            return None, None
        return self.tr.L_h, self.tr.L_x

    def _beta(self) -> float:
        if self.config.beta_schedule == "constant":
            return self.config.beta
        return theoretical_beta(self.restart_index + 1, self.space.n_combinations, self.config.zeta)

    def model(self) -> GaussianProcess:
        """GP on the points observed since the last restart, fitted now."""
        points = [self.record.evaluations[i].point for i in self.local]
        values = [self._internal(self.record.evaluations[i].value) for i in self.local]
        c = self.config
        gp = GaussianProcess.from_data(
            self.space, points, values, kind=c.kernel, params=self.params, noise=self.noise,
            y_stats=self.y_stats, ard=c.ard, lam=c.lam,
        )
        gp = gp.fit(self.rng, c.fit_settings)
        self.params, self.noise = gp.params, gp.noise
        return gp

    def _init_design(self, center: Optional[MixedPoint]) -> list[MixedPoint]:
        n = min(self.config.n_init, self.remaining)
        if center is None:
            return [sample_uniform(self.space, self.rng) for _ in range(n)]
        return [sample_in_tr(self.space, center, self.tr.L_h, self.tr.L_x, self.rng) for _ in range(n)]

    def _begin_restart(self) -> MixedPoint:
        c = self.config
        center = select_restart_center(
            self.archive, self.space, self._beta(), self.rng, kind=c.kernel, ard=c.ard, lam=c.lam,
            fit_settings=c.fit_settings, search_settings=c.search_settings,
        )
        self.restart_index += 1
        self.tr = reset(self.tr, center)
        self.local = []
        self.y_stats = None
        self.params = None
        self.noise = None
        self.local_best = None
        self.restart_pending = False
        self.archived = False
        self.record.restarts.append({
            "index": self.restart_index,
            "first_iteration": self.n_evals,
            "center": center.to_dict(),
        })
        return center

    # ------------------------------------------------------------------ protocol

    def ask(self) -> list[MixedPoint]:
        if self.pending:
            raise ProtocolError("ask called again before tell")
        if self.remaining <= 0:
            return []
        if not self.started:
            self.started = True
            return self._set_pending(self._init_design(None), "init")
        if self.restart_pending:
            if not self.archived:
                point, value = self.local_best
                if self.archive.contains(point):
                    # the repeated local maximum is swapped for a fresh random point
                    return self._set_pending([draw_replacement(self.archive, self.space, self.rng)], "replacement")
                self.archive = self.archive.append(point, value)
                self.archived = True
            center = self._begin_restart()
            return self._set_pending(self._init_design(center), "init")
        if len(self.local) < 2:
            return self._set_pending(self._init_design(self.tr.center)[:1], "init")
        b = min(self.config.batch_size, self.remaining)
        spec = AcquisitionSpec(kind=self.config.acquisition, beta=self._beta())
        try:
            gp = self.model()
        except GPFitError as exc:
            log.warning("GP fit failed (%s); sampling inside the trust region", exc)
            return self._set_pending(self._init_design(self.tr.center)[:b], "fallback")
        batch = propose_batch(gp, spec, self._region(), b, self.rng, self.config.search_settings)
        return self._set_pending(batch, "bo")

    def _set_pending(self, points: list[MixedPoint], kind: str) -> list[MixedPoint]:
        self.pending = list(points)
        self.pending_kind = kind
        self.pending_lengths = self._lengths()
        return list(points)

    def tell(self, points: list[MixedPoint], values) -> None:
        if not self.pending:
            raise ProtocolError("tell called before ask")
        points = list(points)
        if len(points) != len(self.pending):
            raise ProtocolError(f"expected {len(self.pending)} points, got {len(points)}")
        if any(p != q for p, q in zip(points, self.pending)):
            raise ProtocolError("tell received points that differ from the last ask")
        vals = [float(v) for v in np.atleast_1d(np.asarray(values, dtype=float))]
        if len(vals) != len(points):
            raise ProtocolError(f"expected {len(points)} values, got {len(vals)}")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("objective values must be finite")

        kind = self.pending_kind
        L_h, L_x = self.pending_lengths
        self.pending = []
        first = self.n_evals
        for p, v in zip(points, vals):
            self.record.append(self.restart_index, kind, p, v, L_h, L_x)
        internal = [self._internal(v) for v in vals]

        if kind == "replacement":
            self.archive = self.archive.append_replacement(self.local_best[0], points[0], internal[0])
            self.archived = True
            return

        self.local.extend(range(first, first + len(points)))
        if self.y_stats is None and len(self.local) >= 2:
            y = np.array([self._internal(self.record.evaluations[i].value) for i in self.local])
            std = float(y.std())
            self.y_stats = (float(y.mean()), std if std > 0 else 1.0)

        j = int(np.argmax(internal))
        prev = None if self.local_best is None else self.local_best[1]
        improved = prev is None or internal[j] > prev
        if improved:
            self.local_best = (points[j], internal[j])
            self.tr = replace(self.tr, center=points[j])

        if kind == "bo" and self.config.use_trust_region:
            before = (self.tr.L_h, self.tr.L_x)
            self.tr, restart = record_result(self.tr, improved)
            after = (self.tr.L_h, self.tr.L_x)
            if after != before:
                event = "expand" if after[0] > before[0] or (after[1] or 0) > (before[1] or 0) else "shrink"
                self.record.tr_events.append(
                    {"iteration": self.n_evals - 1, "event": event, "L_h": after[0], "L_x": after[1]}
                )
            if restart:
                self.restart_pending = True
                self.archived = False
                self.record.tr_events.append(
                    {"iteration": self.n_evals - 1, "event": "restart", "L_h": after[0], "L_x": after[1]}
                )
        self.record.archive = self.archive.to_dict()

    # ------------------------------------------------------------------ persistence

    def state_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "config": self.config.to_dict(),
            "rng": _rng_state(self.rng),
            "record": self.record.to_jsonl(),
            "archive": self.archive.to_dict(),
            "tr": self.tr.to_dict(),
            "restart_index": self.restart_index,
            "local": list(self.local),
            "y_stats": None if self.y_stats is None else list(self.y_stats),
            "params": None if self.params is None else self.params.to_dict(),
            "noise": self.noise,
            "local_best": None if self.local_best is None
            else {"point": self.local_best[0].to_dict(), "value": self.local_best[1]},
            "started": self.started,
            "restart_pending": self.restart_pending,
            "archived": self.archived,
            "pending": [p.to_dict() for p in self.pending],
            "pending_kind": self.pending_kind,
            "pending_lengths": list(self.pending_lengths),
        }

    @classmethod
    def from_state_dict(cls, d: dict) -> "Optimizer":
        opt = cls(SearchSpace.from_dict(d["space"]), OptimizerConfig.from_dict(d["config"]))
        opt.rng = _rng_from_state(d["rng"])
        opt.record = RunRecord.from_jsonl(d["record"])
        opt.archive = RestartArchive.from_dict(d["archive"])
        opt.tr = TrustRegionState.from_dict(d["tr"])
        opt.restart_index = int(d["restart_index"])
        opt.local = [int(i) for i in d["local"]]
        opt.y_stats = None if d["y_stats"] is None else tuple(d["y_stats"])
        opt.params = None if d["params"] is None else KernelParams.from_dict(d["params"])
        opt.noise = d["noise"]
        lb = d["local_best"]
        opt.local_best = None if lb is None else (MixedPoint.from_dict(lb["point"]), float(lb["value"]))
        opt.started = bool(d["started"])
        opt.restart_pending = bool(d["restart_pending"])
        opt.archived = bool(d["archived"])
        opt.pending = [MixedPoint.from_dict(p) for p in d["pending"]]
        opt.pending_kind = d["pending_kind"]
        opt.pending_lengths = tuple(d["pending_lengths"])
        return opt


def optimize(objective: Callable[[MixedPoint], float], space: SearchSpace,
             config: OptimizerConfig = OptimizerConfig()) -> RunRecord:
    """Run the full loop on ``objective``.

    If the objective raises, the exception propagates with the partial
    record attached as ``exc.run_record``.
    """
    opt = Optimizer(space, config)
    while True:
        batch = opt.ask()
        if not batch:
            break
        try:
            values = [objective(z) for z in batch]
        except Exception as exc:
            exc.run_record = opt.record
            raise
        opt.tell(batch, values)
    return opt.record

