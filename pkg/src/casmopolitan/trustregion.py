"""Trust-region length schedule and restart trigger."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .space import MixedPoint

L_X_MIN = 0.5**7
L_X_MAX = 1.6
L_X_INIT = 0.8


def default_initial_length(d_h: int) -> int:
    return max(1, round(0.8 * d_h))


@dataclass(frozen=True)
class TrustRegionState:
    """Lengths and counters of the categorical and continuous trust regions.

    ``L_x`` is ``None`` for purely categorical spaces. Shrinking floors the
    categorical length; expansion takes the ceiling so growth is strict.
    """

    d_h: int
    L_h: int
    L_h0: int
    L_x: Optional[float] = None
    L_x0: Optional[float] = None
    L_h_min: int = 0
    L_x_min: float = L_X_MIN
    L_x_max: float = L_X_MAX
    alpha_s: float = 0.667
    succ_tol: int = 2
    fail_tol: int = 40
    succ_count: int = 0
    fail_count: int = 0
    center: Optional[MixedPoint] = field(default=None, compare=False)

    def __post_init__(self):
        if not 0.0 < self.alpha_s < 1.0:
            raise ValueError(f"alpha_s must lie in (0, 1), got {self.alpha_s}")
        if self.succ_tol < 1 or self.fail_tol < 1:
            raise ValueError("succ_tol and fail_tol must be positive")
        if not 0 <= self.L_h <= self.L_h_max:
            raise ValueError(f"L_h={self.L_h} outside [0, {self.L_h_max}]")

    @classmethod
    def create(
        cls,
        d_h: int,
        continuous: bool,
        L_h0: Optional[int] = None,
        L_x0: float = L_X_INIT,
        **kwargs,
    ) -> "TrustRegionState":
        L_h0 = default_initial_length(d_h) if L_h0 is None else int(L_h0)
        L_h0 = min(L_h0, d_h)
        lx = L_x0 if continuous else None
        return cls(d_h=d_h, L_h=L_h0, L_h0=L_h0, L_x=lx, L_x0=lx, **kwargs)

    @property
    def L_h_max(self) -> int:
        return self.d_h

    @property
    def alpha_e(self) -> float:
        return 1.0 / self.alpha_s

    @property
    def restart_needed(self) -> bool:
        if self.d_h and self.L_h <= self.L_h_min:
            return True
        return self.L_x is not None and self.L_x < self.L_x_min

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "d_h", "L_h", "L_h0", "L_x", "L_x0", "L_h_min", "L_x_min", "L_x_max",
            "alpha_s", "succ_tol", "fail_tol", "succ_count", "fail_count",
        )}
        d["center"] = None if self.center is None else self.center.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrustRegionState":
        d = dict(d)
        center = d.pop("center", None)
        return cls(**d, center=None if center is None else MixedPoint.from_dict(center))


def record_result(state: TrustRegionState, improved: bool) -> tuple[TrustRegionState, bool]:
    """Advance the success/failure counters and resize both regions together."""
    if improved:
        succ, fail = state.succ_count + 1, 0
    else:
        succ, fail = 0, state.fail_count + 1
    L_h, L_x = state.L_h, state.L_x
    if succ == state.succ_tol:
        L_h = min(math.ceil(state.alpha_e * L_h), state.L_h_max)
        if L_x is not None:
            L_x = min(state.alpha_e * L_x, state.L_x_max)
        succ = 0
    elif fail == state.fail_tol:
        L_h = math.floor(state.alpha_s * L_h)
        if L_x is not None:
            L_x = state.alpha_s * L_x
        fail = 0
    new = replace(state, L_h=L_h, L_x=L_x, succ_count=succ, fail_count=fail)
    return new, new.restart_needed


def reset(state: TrustRegionState, new_center: MixedPoint) -> TrustRegionState:
    return replace(
        state, L_h=state.L_h0, L_x=state.L_x0, succ_count=0, fail_count=0, center=new_center
    )


def move_center(state: TrustRegionState, new_center: MixedPoint) -> TrustRegionState:
    return replace(state, center=new_center)
