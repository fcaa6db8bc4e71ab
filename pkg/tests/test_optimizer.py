"""Tests for the ask/tell optimizer and the closed-loop driver."""

import math

import numpy as np
import pytest

from casmopolitan import MixedPoint, Optimizer, OptimizerConfig, ProtocolError, SearchSpace, optimize
from casmopolitan.trustregion import default_initial_length

SPACE = SearchSpace((3,) * 6, ((0.0, 1.0),))
CAT = SearchSpace((3,) * 5)


def additive(space, seed):
    w = np.random.default_rng(seed).random((space.d_h, max(space.categorical_cards)))

    def f(z):
        return float(sum(w[j, c] for j, c in enumerate(z.cats)) - sum((x - 0.3) ** 2 for x in z.conts))

    return f


def small(**kw):
    base = dict(n_init=5, max_evals=25, fit_restarts=2, fit_steps=20, search_budget=20, search_restarts=2)
    base.update(kw)
    return OptimizerConfig(**base)


class TestConfig:
    def test_invariants(self):
        with pytest.raises(ValueError):
            OptimizerConfig(n_init=1)
        with pytest.raises(ValueError):
            OptimizerConfig(n_init=10, max_evals=5)
        with pytest.raises(ValueError):
            OptimizerConfig(batch_size=0)

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            OptimizerConfig.from_dict({"n_int": 5})

    def test_round_trip_and_hash(self):
        c = small(seed=3)
        assert OptimizerConfig.from_dict(c.to_dict()) == c
        assert c.hash() == OptimizerConfig.from_dict(c.to_dict()).hash()
        assert c.hash() != small(seed=4).hash()

    def test_ordinal_kernel_needs_ordinal_space(self):
        with pytest.raises(ValueError):
            Optimizer(CAT, OptimizerConfig(kernel="ordinal"))


class TestOptimize:
    def test_budget_equal_to_initial_design(self):
        f = additive(CAT, 0)
        rec = optimize(f, CAT, small(n_init=6, max_evals=6))
        assert len(rec) == 6
        assert all(e.kind == "init" for e in rec.evaluations)
        assert rec.best.value == max(f(e.point) for e in rec.evaluations)

    def test_deterministic(self):
        f = additive(SPACE, 1)
        a = optimize(f, SPACE, small(seed=7))
        b = optimize(f, SPACE, small(seed=7))
        assert a.to_jsonl() == b.to_jsonl()

    def test_seed_matters(self):
        f = additive(SPACE, 1)
        assert optimize(f, SPACE, small(seed=1)).to_jsonl() != optimize(f, SPACE, small(seed=2)).to_jsonl()

    def test_ask_tell_equals_optimize(self):
        f = additive(SPACE, 2)
        cfg = small(seed=5, batch_size=3)
        opt = Optimizer(SPACE, cfg)
        while batch := opt.ask():
            opt.tell(batch, [f(z) for z in batch])
        assert opt.record.to_jsonl() == optimize(f, SPACE, cfg).to_jsonl()

    def test_budget_conservation(self):
        calls = []
        f = additive(CAT, 3)

        def counted(z):
            calls.append(z)
            return f(z)

        rec = optimize(counted, CAT, small(max_evals=60, fail_tol=2, batch_size=2))
        assert len(calls) == len(rec) == 60
        assert [e.point for e in rec.evaluations] == calls

    def test_monotone_incumbent_with_restarts(self):
        rec = optimize(additive(CAT, 4), CAT, small(max_evals=80, fail_tol=2))
        assert len(rec.restarts) >= 1
        inc = rec.incumbent_trajectory()
        assert np.all(np.diff(inc) >= 0)
        assert inc[-1] == rec.values.max()

    def test_minimize_sign(self):
        f = additive(CAT, 5)
        neg = optimize(lambda z: -f(z), CAT, small(maximize=False, seed=2))
        pos = optimize(f, CAT, small(seed=2))
        assert [e.point for e in neg.evaluations] == [e.point for e in pos.evaluations]
        inc = neg.incumbent_trajectory()
        assert np.all(np.diff(inc) <= 0)
        assert neg.best.value == neg.values.min()

    def test_exception_carries_partial_record(self):
        n = []

        def flaky(z):
            n.append(1)
            if len(n) > 7:
                raise RuntimeError("simulator crashed")
            return 0.0

        with pytest.raises(RuntimeError) as info:
            optimize(flaky, CAT, small())
        assert len(info.value.run_record) == 7

    def test_batches_log_only_real_evaluations(self):
        rec = optimize(additive(SPACE, 6), SPACE, small(batch_size=4, max_evals=21))
        assert len(rec) == 21
        assert sum(e.kind == "bo" for e in rec.evaluations) == 16

    def test_continuous_values_stay_normalized(self):
        rec = optimize(additive(SPACE, 7), SPACE, small())
        assert all(0.0 <= x <= 1.0 for e in rec.evaluations for x in e.point.conts)

    def test_without_trust_region_never_restarts(self):
        rec = optimize(additive(CAT, 8), CAT, small(use_trust_region=False, fail_tol=1, max_evals=30))
        assert rec.restarts == [] and rec.tr_events == []


class TestProtocol:
    def test_ask_twice(self):
        opt = Optimizer(CAT, small())
        opt.ask()
        with pytest.raises(ProtocolError):
            opt.ask()

    def test_tell_before_ask(self):
        with pytest.raises(ProtocolError):
            Optimizer(CAT, small()).tell([MixedPoint((0,) * 5)], [1.0])

    def test_tell_wrong_points(self):
        opt = Optimizer(CAT, small())
        batch = opt.ask()
        with pytest.raises(ProtocolError):
            opt.tell(batch[::-1], [0.0] * len(batch))

    def test_tell_wrong_arity_leaves_state(self):
        opt = Optimizer(CAT, small())
        batch = opt.ask()
        before = opt.state_dict()
        with pytest.raises(ProtocolError):
            opt.tell(batch, [0.0] * (len(batch) - 1))
        assert opt.state_dict() == before

    def test_nan_rejected(self):
        opt = Optimizer(CAT, small())
        batch = opt.ask()
        vals = [0.0] * len(batch)
        vals[2] = math.nan
        with pytest.raises(ValueError):
            opt.tell(batch, vals)
        assert len(opt.record) == 0
        opt.tell(batch, [0.0] * len(batch))
        assert len(opt.record) == len(batch)

    def test_exhausted_budget_returns_empty(self):
        opt = Optimizer(CAT, small(n_init=3, max_evals=3))
        batch = opt.ask()
        opt.tell(batch, [1.0, 2.0, 3.0])
        assert opt.ask() == []
        assert opt.ask() == []

    def test_state_round_trip_resumes_identically(self):
        f = additive(SPACE, 9)
        cfg = small(seed=11, max_evals=40, fail_tol=2)
        a = Optimizer(SPACE, cfg)
        for _ in range(12):
            batch = a.ask()
            a.tell(batch, [f(z) for z in batch])
        b = Optimizer.from_state_dict(a.state_dict())
        assert b.state_dict() == a.state_dict()
        for opt in (a, b):
            while batch := opt.ask():
                opt.tell(batch, [f(z) for z in batch])
        assert a.record.to_jsonl() == b.record.to_jsonl()


class TestRestarts:
    def test_gp_holds_only_current_restart(self):
        f = additive(CAT, 10)
        opt = Optimizer(CAT, small(max_evals=90, fail_tol=2))
        while batch := opt.ask():
            assert all(opt.record.evaluations[i].restart == opt.restart_index for i in opt.local)
            assert all(opt.record.evaluations[i].kind != "replacement" for i in opt.local)
            opt.tell(batch, [f(z) for z in batch])
        assert len(opt.record.restarts) >= 2

    def test_archive_has_one_entry_per_completed_restart(self):
        for seed in range(5):
            opt = Optimizer(CAT, small(max_evals=90, fail_tol=2, seed=seed))
            f = additive(CAT, 20 + seed)
            while batch := opt.ask():
                opt.tell(batch, [f(z) for z in batch])
            extra = len(opt.archive) - len(opt.record.restarts)
            assert extra in (0, 1)
            assert extra == 0 or opt.record.evaluations[-1].kind == "replacement"
            assert len({p for p, _ in opt.archive.entries}) == len(opt.archive)

    def test_restart_length_without_improvement(self):
        # no BO step can beat the initial design, so every restart takes exactly
        # fail_tol failures per shrink until the length reaches zero
        cfg = small(max_evals=200, fail_tol=3, n_init=4)
        L, shrinks = default_initial_length(CAT.d_h), 0
        while L > 0:
            L = math.floor(L * cfg.alpha_s)
            shrinks += 1
        rec = optimize(lambda z: 1.0, CAT, cfg)
        starts = [0] + [r["first_iteration"] for r in rec.restarts]
        for a, b in zip(starts, starts[1:]):
            bo = [e for e in rec.evaluations[a:b] if e.kind == "bo"]
            assert len(bo) == cfg.fail_tol * shrinks

    def test_restart_length_bounded(self):
        cfg = small(max_evals=150, fail_tol=2)
        rec = optimize(additive(CAT, 30), CAT, cfg)
        starts = [0] + [r["first_iteration"] for r in rec.restarts]
        m = math.ceil(math.log(default_initial_length(CAT.d_h)) / math.log(1 / cfg.alpha_s)) + 1
        for a, b in zip(starts, starts[1:]):
            seg = rec.evaluations[a:b]
            bo = [e for e in seg if e.kind == "bo"]
            expansions = sum(1 for x, y in zip(bo, bo[1:]) if y.L_h > x.L_h)
            improvements = sum(1 for x, y in zip(seg, seg[1:]) if y.kind == "bo" and y.value > max(
                e.value for e in seg[:seg.index(y)]))
            assert len(bo) <= improvements + cfg.fail_tol * (m + expansions + improvements)

    def test_theory_beta_schedule_runs(self):
        rec = optimize(additive(CAT, 11), CAT, small(beta_schedule="theory", fail_tol=2, max_evals=50))
        assert len(rec) == 50


@pytest.mark.slow
def test_enumerable_space_reaches_optimum():
    space = SearchSpace((3, 3, 3))
    hits = 0
    for seed in range(100):
        w = np.random.default_rng(2000 + seed).random((3, 3))

        def f(z):
            return float(sum(w[j, c] for j, c in enumerate(z.cats)))

        best = max(f(z) for z in space.enumerate())
        rec = optimize(f, space, OptimizerConfig(n_init=5, max_evals=27, fail_tol=3, seed=seed))
        hits += rec.best.value == best
    assert hits >= 95
