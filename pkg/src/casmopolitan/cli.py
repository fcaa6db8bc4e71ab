"""Command-line harness: seed sweeps from a config file and ask/tell sessions.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .benchmarks import Benchmark, WcnfError, get_benchmark, random_search
from .optimizer import Optimizer, OptimizerConfig, ProtocolError, optimize
from .record import RunRecord
from .space import MixedPoint, SearchSpace

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
STATE_FILE = "state.json"
EXPERIMENT_KEYS = {"benchmark", "wcnf", "seeds", "output_dir", "random_search", "optimizer", "space", "sense"}


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    benchmark: str
    seeds: list[int]
    output_dir: Path
    optimizer: dict = field(default_factory=dict)
    random_search: bool = False
    wcnf: Optional[str] = None
    space: Optional[dict] = None
    sense: str = "max"

    @property
    def external(self) -> bool:
        return self.benchmark == "external"


def load_config(path, base_dir: Optional[Path] = None) -> ExperimentConfig:
    """Read and validate a YAML or JSON experiment file."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML/JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    unknown = set(raw) - EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    if "benchmark" not in raw:
        raise ConfigError("config needs a 'benchmark' entry ('external' for ask/tell sessions)")
    seeds = raw.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) and not isinstance(s, bool) for s in seeds):
        raise ConfigError("'seeds' must be a nonempty list of integers")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("'seeds' must not repeat")
    opt = raw.get("optimizer") or {}
    if not isinstance(opt, dict):
        raise ConfigError("'optimizer' must be a mapping")
    for key in ("seed", "maximize"):
        if key in opt:
            raise ConfigError(f"optimizer.{key} is set by the harness; use 'seeds' or the benchmark's sense")
    sense = raw.get("sense", "max")
    if sense not in ("max", "min"):
        raise ConfigError("'sense' must be 'max' or 'min'")
    wcnf = raw.get("wcnf")
    if wcnf is not None and base_dir is None:
        base_dir = path.parent
    if wcnf is not None and not Path(wcnf).is_absolute():
        wcnf = str(base_dir / wcnf)
    return ExperimentConfig(
        benchmark=str(raw["benchmark"]),
        seeds=list(seeds),
        output_dir=Path(raw.get("output_dir", "results")),
        optimizer=dict(opt),
        random_search=bool(raw.get("random_search", False)),
        wcnf=wcnf,
        space=raw.get("space"),
        sense=sense,
    )


def _optimizer_config(cfg: ExperimentConfig, seed: int, maximize: bool) -> OptimizerConfig:
    try:
        return OptimizerConfig.from_dict({**cfg.optimizer, "seed": seed, "maximize": maximize})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid optimizer settings: {exc}") from None


def resolve_benchmark(cfg: ExperimentConfig) -> Benchmark:
    if cfg.external:
        raise ConfigError("benchmark 'external' is driven through 'session', not 'run'")
    try:
        bench = get_benchmark(cfg.benchmark, cfg.wcnf)
    except (WcnfError, OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    oc = _optimizer_config(cfg, cfg.seeds[0], bench.maximize)
    try:
        Optimizer(bench.space, oc)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return bench


# ---------------------------------------------------------------------------
# run


def record_name(method: str, seed: int) -> str:
    return f"{method}_seed{seed}.jsonl"


def summarize(records: list[RunRecord]) -> list[dict]:
    """Per method and iteration, mean and standard error of the incumbent across seeds."""
    rows = []
    methods = sorted({r.method for r in records})
    for m in methods:
        curves = [r.incumbent_trajectory() for r in records if r.method == m and len(r)]
        if not curves:
            continue
        length = min(c.size for c in curves)
        Y = np.array([c[:length] for c in curves])
        n = Y.shape[0]
        mean = Y.mean(axis=0)
        se = Y.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(length)
        for i in range(length):
            rows.append({"method": m, "iteration": i, "n_seeds": n, "mean": float(mean[i]), "stderr": float(se[i])})
    return rows


def write_summary(rows: list[dict], path: Path) -> None:
    with open(path, "x", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["method", "iteration", "n_seeds", "mean", "stderr"])
        w.writeheader()
        for r in rows:
            w.writerow({**r, "mean": repr(r["mean"]), "stderr": repr(r["stderr"])})


def run_experiment(config_path, output_dir: Optional[str] = None) -> int:
    try:
        cfg = load_config(config_path)
        if output_dir is not None:
            cfg.output_dir = Path(output_dir)
        bench = resolve_benchmark(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    methods = ["casmopolitan"] + (["random"] if cfg.random_search else [])
    targets = [cfg.output_dir / record_name(m, s) for m in methods for s in cfg.seeds]
    targets += [cfg.output_dir / "summary.csv", cfg.output_dir / "failures.json"]
    clash = [str(t) for t in targets if t.exists()]
    if clash:
        print(f"config error: refusing to overwrite existing outputs: {', '.join(clash)}", file=sys.stderr)
        return EXIT_CONFIG
    cfg.output_dir.mkdir(parents=True, exist_ok=True)

    records, failures = [], []
    for seed in cfg.seeds:
        oc = _optimizer_config(cfg, seed, bench.maximize)
        for method in methods:
            failed = False
            try:
                if method == "casmopolitan":
                    rec = optimize(bench.objective, bench.space, oc)
                else:
                    rec = random_search(bench.objective, bench.space, oc.max_evals,
                                        np.random.default_rng(seed), bench.maximize, seed)
                    rec.config_hash = oc.hash()
            except Exception as exc:  # a failing seed must not stop the sweep
                log.exception("%s seed %d failed", method, seed)
                failed = True
                failures.append({"method": method, "seed": seed, "error": f"{type(exc).__name__}: {exc}"})
                rec = getattr(exc, "run_record", None)
                if rec is None:
                    continue
            rec.write(cfg.output_dir / record_name(method, seed))
            if not failed:
                records.append(rec)
                log.info("%s seed %d: best %r", method, seed, rec.best.value)

    write_summary(summarize(records), cfg.output_dir / "summary.csv")
    if failures:
        with open(cfg.output_dir / "failures.json", "x") as fh:
            json.dump(failures, fh, indent=2, sort_keys=True)
        print(f"{len(failures)} run(s) failed; see failures.json", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------------------
# ask/tell sessions


class StateError(RuntimeError):
    pass


def _checksum(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def save_state(session: Path, opt: Optimizer) -> None:
    payload = opt.state_dict()
    doc = {"checksum": _checksum(payload), "state": payload}
    tmp = session / (STATE_FILE + ".tmp")
    tmp.write_text(json.dumps(doc, sort_keys=True))
    os.replace(tmp, session / STATE_FILE)


def load_state(session: Path) -> Optimizer:
    path = session / STATE_FILE
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise StateError(f"no session state in {session}; run 'session init' first") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise StateError(f"state file {path} is unreadable or corrupted ({exc})") from None
    if not isinstance(doc, dict) or "state" not in doc or "checksum" not in doc:
        raise StateError(f"state file {path} is corrupted (missing checksum)")
    if _checksum(doc["state"]) != doc["checksum"]:
        raise StateError(f"state file {path} failed its checksum; refusing to continue")
    return Optimizer.from_state_dict(doc["state"])


def _point_doc(space: SearchSpace, z: MixedPoint) -> dict:
    return {"cats": list(z.cats), "conts": list(z.conts), "x": space.denormalize(z.conts).tolist()}


def session_init(session: Path, config_path) -> int:
    try:
        cfg = load_config(config_path)
        if cfg.external:
            if cfg.space is None:
                raise ConfigError("external sessions need a 'space' entry")
            try:
                space = SearchSpace.from_dict(cfg.space)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid space: {exc}") from None
            maximize = cfg.sense == "max"
        else:
            bench = resolve_benchmark(cfg)
            space, maximize = bench.space, bench.maximize
        oc = _optimizer_config(cfg, cfg.seeds[0], maximize)
        opt = Optimizer(space, oc)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    session.mkdir(parents=True, exist_ok=True)
    if (session / STATE_FILE).exists():
        print(f"config error: {session} already holds a session", file=sys.stderr)
        return EXIT_CONFIG
    save_state(session, opt)
    return EXIT_OK


def session_ask(session: Path) -> int:
    try:
        opt = load_state(session)
        batch = opt.ask()
    except (StateError, ProtocolError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    save_state(session, opt)
    print(json.dumps({"points": [_point_doc(opt.space, z) for z in batch]}, sort_keys=True))
    return EXIT_OK


def session_tell(session: Path, values: list[float]) -> int:
    try:
        opt = load_state(session)
        opt.tell(list(opt.pending), values)
    except (StateError, ProtocolError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    save_state(session, opt)
    return EXIT_OK


def session_export(session: Path, out: Path) -> int:
    try:
        opt = load_state(session)
    except StateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if out.exists():
        print(f"error: refusing to overwrite {out}", file=sys.stderr)
        return EXIT_RUNTIME
    opt.record.write(out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="casmopolitan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a seed sweep described by a config file")
    r.add_argument("config")
    r.add_argument("--output-dir", help="override the config's output_dir")

    s = sub.add_parser("session", help="drive the optimizer from outside with ask/tell")
    ssub = s.add_subparsers(dest="action", required=True)
    si = ssub.add_parser("init", help="create a session from a config file")
    si.add_argument("session_dir")
    si.add_argument("config")
    sa = ssub.add_parser("ask", help="print the next batch as JSON")
    sa.add_argument("session_dir")
    st = ssub.add_parser("tell", help="report objective values for the last batch")
    st.add_argument("session_dir")
    st.add_argument("values", nargs="+", type=float)
    se = ssub.add_parser("export", help="write the session's run record")
    se.add_argument("session_dir")
    se.add_argument("output")
    return p


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.command == "run":
        return run_experiment(args.config, args.output_dir)
    session = Path(args.session_dir)
    if args.action == "init":
        return session_init(session, args.config)
    if args.action == "ask":
        return session_ask(session)
    if args.action == "tell":
        return session_tell(session, args.values)
    return session_export(session, Path(args.output))


if __name__ == "__main__":
    sys.exit(main())
