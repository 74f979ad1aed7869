import math
from collections import Counter

import numpy as np
import pytest
from scipy import stats

from conftest import gp
from planinfer.model import Hyperparams, PredicateUniverse, joint_log_posterior, StepPlan
from planinfer.simulator import (
    SimConfig,
    UniverseMismatch,
    enumerate_weak_orderings,
    generate_session,
    make_distractors,
)


def test_weak_orderings():
    assert enumerate_weak_orderings(1) == [(1,)]
    assert enumerate_weak_orderings(2) == [(1, 1), (1, 2), (2, 1)]
    assert len(enumerate_weak_orderings(3)) == 13
    with pytest.raises(ValueError):
        enumerate_weak_orderings(5)


def test_length_distribution():
    pmf = SimConfig().length_pmf()
    assert pmf.sum() == pytest.approx(1.0)
    assert (pmf * np.arange(1, 5)).sum() == pytest.approx(3.0, abs=1e-6)
    assert np.all(np.diff(pmf) > 0)  # mean above the midpoint needs an increasing pmf
    low = SimConfig(mean_length=1.5).length_pmf()
    assert (low * np.arange(1, 5)).sum() == pytest.approx(1.5, abs=1e-6) and np.all(np.diff(low) < 0)
    with pytest.raises(ValueError):
        SimConfig(max_length=5)
    with pytest.raises(ValueError):
        SimConfig(utterances=0)


def test_noiseless_limit(true_plan):
    cfg = SimConfig(utterances=300, hyperparams=Hyperparams(10, 60.0, 1.0), seed=1)
    session, truth = generate_session(true_plan, sorted({p for s in true_plan for p in s}), cfg)
    preds = {p for s in true_plan for p in s}
    step = {p: k for k, s in enumerate(true_plan, 1) for p in s}
    for utt, draw in zip(session.utterances, truth.draws):
        assert {p for p, _ in utt.flattened} <= preds
        for p, j, r, from_plan in draw:
            assert from_plan and step[p] == j
        ranks = {p: r for p, r in utt.flattened}
        for p, q in [(p, q) for p in ranks for q in ranks]:
            assert (step[p] < step[q]) == (ranks[p] < ranks[q])


def test_noise_fraction_is_binomial(true_plan):
    cfg = SimConfig(utterances=3400, seed=2)
    _, truth = generate_session(true_plan, sorted({p for s in true_plan for p in s}), cfg)
    flags = [fp for d in truth.draws for _, _, _, fp in d][:10000]
    assert len(flags) == 10000
    noise = 1 - sum(flags) / 10000
    assert abs(noise - 0.2) <= 3 * math.sqrt(0.2 * 0.8 / 10000)


def test_step_draws_follow_step_sizes(true_plan):
    cfg = SimConfig(utterances=34000, seed=3)
    _, truth = generate_session(true_plan, sorted({p for s in true_plan for p in s}), cfg)
    steps = [j for d in truth.draws for _, j, _, _ in d][:100000]
    assert len(steps) == 100000
    sizes = np.array([len(s) for s in true_plan], dtype=float)
    counts = Counter(steps)
    observed = [counts[j] for j in range(1, len(true_plan) + 1)]
    _, p = stats.chisquare(observed, sizes / sizes.sum() * len(steps))
    assert p > 0.01


def test_order_mismatch_rate(true_plan):
    hp = Hyperparams(10, 1.0, 0.8)
    cfg = SimConfig(utterances=20000, max_length=2, mean_length=2.0 - 1e-9, hyperparams=hp, seed=4)
    _, truth = generate_session(true_plan, sorted({p for s in true_plan for p in s}), cfg)
    from planinfer.model import relative_order
    pairs = [d for d in truth.draws if len(d) == 2]
    match = sum(tuple(r for *_, r, _ in d) == relative_order([j for _, j, _, _ in d]) for d in pairs)
    p = math.e / (math.e - 1 + 3)
    assert abs(match / len(pairs) - p) <= 4 * math.sqrt(p * (1 - p) / len(pairs))


def test_session_shape_and_truth(true_plan):
    preds = sorted({p for s in true_plan for p in s})
    rng = np.random.default_rng(0)
    universe = preds + make_distractors(preds, 4, rng)
    assert len(set(universe)) == 20
    session, truth = generate_session(true_plan, universe, SimConfig(seed=5))
    assert len(session.utterances) == 30
    uni = PredicateUniverse.from_session(session)
    for utt in session.utterances:
        assert all(g for g in utt.groups)
        assert sorted(set(utt.ranks)) == list(range(1, len(utt.groups) + 1))
        assert {p for p, _ in utt.flattened} <= set(universe)
    placed = StepPlan(len(uni))
    for k, s in enumerate(truth.true_plan, 1):
        for p in s:
            if p in uni:
                placed.place(uni.index[p], k)
    assert math.isfinite(joint_log_posterior(placed, truth.assignments, session, uni, Hyperparams(), True))
    j = truth.to_json()
    assert set(j) == {"true_plan", "universe", "utterances", "assignments"}


def test_deterministic(true_plan):
    preds = sorted({p for s in true_plan for p in s})
    a = generate_session(true_plan, preds, SimConfig(seed=9))[0]
    b = generate_session(true_plan, preds, SimConfig(seed=9))[0]
    c = generate_session(true_plan, preds, SimConfig(seed=10))[0]
    assert a == b and a != c


def test_universe_checks(true_plan):
    with pytest.raises(UniverseMismatch):
        generate_session(true_plan, [gp("inspect(rr,a)")], SimConfig())
    with pytest.raises(ValueError):
        generate_session((), [gp("x")], SimConfig())


def test_distractors_are_off_plan(true_plan):
    preds = sorted({p for s in true_plan for p in s})
    d = make_distractors(preds, 4, np.random.default_rng(1))
    assert len(set(d)) == 4 and not set(d) & set(preds)
    assert all(x.name in {"inspect", "assess", "fix"} for x in d)
    with pytest.raises(ValueError):
        make_distractors(preds, 10_000, np.random.default_rng(1))
