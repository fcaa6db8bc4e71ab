"""Run logs: one entry per objective evaluation plus restart bookkeeping."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .space import MixedPoint


@dataclass(frozen=True)
class Evaluation:
    """A single objective call.

    ``value`` is the raw objective value as returned by the caller;
    ``incumbent`` is the best raw value so far in the run's own sense.
    ``L_h`` and ``L_x`` are the trust-region lengths when the point was proposed.
    """

    iteration: int
    restart: int
    kind: str
    point: MixedPoint
    value: float
    incumbent: float
    L_h: Optional[int] = None
    L_x: Optional[float] = None

    def to_dict(self) -> dict:
        return {
            "type": "eval",
            "iteration": self.iteration,
            "restart": self.restart,
            "kind": self.kind,
            "cats": list(self.point.cats),
            "conts": list(self.point.conts),
            "value": self.value,
            "incumbent": self.incumbent,
            "L_h": self.L_h,
            "L_x": self.L_x,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Evaluation":
        return cls(
            iteration=int(d["iteration"]),
            restart=int(d["restart"]),
            kind=d["kind"],
            point=MixedPoint(tuple(int(c) for c in d["cats"]), tuple(float(x) for x in d["conts"])),
            value=float(d["value"]),
            incumbent=float(d["incumbent"]),
            L_h=d.get("L_h"),
            L_x=d.get("L_x"),
        )


@dataclass
class RunRecord:
    """Append-only log of a run. Values are stored in the caller's sense."""

    method: str
    seed: int
    maximize: bool = True
    config_hash: str = ""
    evaluations: list[Evaluation] = field(default_factory=list)
    restarts: list[dict] = field(default_factory=list)
    tr_events: list[dict] = field(default_factory=list)
    archive: Optional[dict] = None

    def better(self, a: float, b: float) -> bool:
        return a > b if self.maximize else a < b

    def append(self, restart: int, kind: str, point: MixedPoint, value: float,
               L_h: Optional[int] = None, L_x: Optional[float] = None) -> Evaluation:
        value = float(value)
        inc = value
        if self.evaluations:
            prev = self.evaluations[-1].incumbent
            inc = value if self.better(value, prev) else prev
        ev = Evaluation(len(self.evaluations), restart, kind, point, value, inc, L_h, L_x)
        self.evaluations.append(ev)
        return ev

    def __len__(self) -> int:
        return len(self.evaluations)

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.evaluations])

    def incumbent_trajectory(self) -> np.ndarray:
        return np.array([e.incumbent for e in self.evaluations])

    @property
    def best(self) -> Optional[Evaluation]:
        best = None
        for e in self.evaluations:
            if best is None or self.better(e.value, best.value):
                best = e
        return best

    def restart_indices(self) -> list[int]:
        """Evaluation index at which each restart's first point was logged."""
        return [r["first_iteration"] for r in self.restarts]

    def summary(self) -> dict:
        best = self.best
        return {
            "method": self.method,
            "seed": self.seed,
            "maximize": self.maximize,
            "config_hash": self.config_hash,
            "n_evals": len(self.evaluations),
            "best_value": None if best is None else best.value,
            "best_point": None if best is None else best.point.to_dict(),
            "incumbent": self.incumbent_trajectory().tolist(),
            "restart_indices": self.restart_indices(),
        }

    # ------------------------------------------------------------------ io

    def to_lines(self) -> list[str]:
        head = {"type": "header", "method": self.method, "seed": self.seed,
                "maximize": self.maximize, "config_hash": self.config_hash}
        lines = [head]
        lines += [e.to_dict() for e in self.evaluations]
        lines += [{"type": "restart", **r} for r in self.restarts]
        lines += [{"type": "tr_event", **t} for t in self.tr_events]
        if self.archive is not None:
            lines.append({"type": "archive", **self.archive})
        return [json.dumps(d, sort_keys=True) for d in lines]

    def to_jsonl(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    def write(self, path: Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def from_jsonl(cls, text: str) -> "RunRecord":
        rec = None
        for n, line in enumerate(text.splitlines(), 1):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"line {n}: not valid JSON ({exc.msg})") from None
            t = d.pop("type", None)
            if t == "header":
                rec = cls(d["method"], d["seed"], d["maximize"], d.get("config_hash", ""))
            elif rec is None:
                raise ValueError(f"line {n}: record must start with a header line")
            elif t == "eval":
                rec.evaluations.append(Evaluation.from_dict(d))
            elif t == "restart":
                rec.restarts.append(d)
            elif t == "tr_event":
                rec.tr_events.append(d)
            elif t == "archive":
                rec.archive = d
            else:
                raise ValueError(f"line {n}: unknown entry type {t!r}")
        if rec is None:
            raise ValueError("empty record")
        return rec

    @classmethod
    def read(cls, path: Path) -> "RunRecord":
        return cls.from_jsonl(Path(path).read_text())

