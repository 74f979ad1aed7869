"""Forward sampling of planning sessions with known ground truth."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import Hyperparams, PredicateUniverse, Session, Utterance, relative_order, weak_ordering_count
from .pddl import GroundedPredicate


class UniverseMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    utterances: int = 30
    mean_length: float = 3.0  # mean of the untruncated geometric
    max_length: int = 4
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    seed: int = 0

    def __post_init__(self):
        if self.utterances < 1:
            raise ValueError("a session needs at least one utterance")
        if not 1 <= self.max_length <= 4:
            raise ValueError("max_length must lie in [1, 4]")
        if self.mean_length < 1:
            raise ValueError("mean_length must be >= 1")

    def length_pmf(self) -> np.ndarray:
        """P(n) proportional to q**(n-1) on 1..max_length, q chosen so the mean is mean_length.

        q > 1 is allowed, which is how means above (max_length + 1) / 2 are reached.
        """
        n = np.arange(1, self.max_length + 1)
        if self.max_length == 1:
            return np.ones(1)
        target = min(self.mean_length, self.max_length - 1e-9)

        def mean(logq):
            w = np.exp(logq * (n - 1) - np.max(logq * (n - 1)))
            return float((w * n).sum() / w.sum())

        lo, hi = -50.0, 50.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mean(mid) < target:
                lo = mid
            else:
                hi = mid
        w = np.exp(lo * (n - 1) - np.max(lo * (n - 1)))
        return w / w.sum()


def enumerate_weak_orderings(n: int) -> list[tuple[int, ...]]:
    """All dense-rank vectors of length n (1, 3, 13, 75 for n = 1..4)."""
    if not 1 <= n <= 4:
        raise ValueError("n must lie in [1, 4]")
    out = set()
    for ranks in itertools.product(range(1, n + 1), repeat=n):
        if set(ranks) == set(range(1, max(ranks) + 1)):
            out.add(ranks)
    return sorted(out)


@dataclass
class GroundTruth:
    true_plan: tuple[frozenset, ...]
    universe: PredicateUniverse
    draws: list  # per utterance: list of (predicate, step, rank, from_plan)
    assignments: list  # per utterance, aligned with Utterance.flattened

    def to_json(self) -> dict:
        return {
            "true_plan": {"steps": [[p.as_list() for p in sorted(s)] for s in self.true_plan]},
            "universe": [p.as_list() for p in self.universe],
            "utterances": [
                [{"predicate": p.as_list(), "step": s, "rank": r, "from_plan": fp} for p, s, r, fp in d]
                for d in self.draws
            ],
            "assignments": [list(s) for s in self.assignments],
        }


def _choice(rng: np.random.Generator, items: Sequence, p=None):
    return items[int(rng.choice(len(items), p=p))]


def generate_session(true_plan: Sequence, universe: PredicateUniverse | Sequence[GroundedPredicate],
                     config: SimConfig) -> tuple[Session, GroundTruth]:
    """Run the generative model forward from ``true_plan``."""
    if not isinstance(universe, PredicateUniverse):
        universe = PredicateUniverse(universe)
    steps = [tuple(sorted(s)) for s in true_plan if s]
    if not steps:
        raise ValueError("true plan is empty")
    missing = {p for s in steps for p in s} - set(universe.predicates)
    if missing:
        raise UniverseMismatch(f"plan predicates outside the universe: {sorted(map(str, missing))}")
    hp = config.hyperparams
    rng = np.random.default_rng(config.seed)
    sizes = np.array([len(s) for s in steps], dtype=float)
    step_p = sizes / sizes.sum()
    len_p = config.length_pmf()
    orderings = {n: enumerate_weak_orderings(n) for n in range(1, config.max_length + 1)}
    utterances, draws, assignments = [], [], []
    for _ in range(config.utterances):
        n = int(rng.choice(len(len_p), p=len_p)) + 1
        s = [int(rng.choice(len(steps), p=step_p)) + 1 for _ in range(n)]
        preds, from_plan = [], []
        for j in s:
            if rng.random() < hp.w_p:
                preds.append(_choice(rng, steps[j - 1]))
                from_plan.append(True)
            else:
                preds.append(_choice(rng, universe.predicates))
                from_plan.append(False)
        true_order = relative_order(s)
        w = weak_ordering_count(n)
        p_match = 1.0 / (1.0 + (w - 1) * math.exp(-hp.beta))
        if rng.random() < p_match:
            observed = true_order
        else:
            others = [o for o in orderings[n] if o != true_order]
            observed = _choice(rng, others)
        groups: list[set] = [set() for _ in range(max(observed))]
        for p, r in zip(preds, observed):
            groups[r - 1].add(p)
        utt = Utterance(tuple(groups))
        utterances.append(utt)
        draw = list(zip(preds, s, observed, from_plan))
        draws.append(draw)
        # first draw that produced each (predicate, rank) of the collapsed utterance
        first = {}
        for p, j, r, _ in draw:
            first.setdefault((p, r), j)
        assignments.append(tuple(first[(p, r)] for p, r in utt.flattened))
    truth = GroundTruth(tuple(frozenset(s) for s in steps), universe, draws, assignments)
    return Session(tuple(utterances)), truth


def make_distractors(plan_predicates: Sequence[GroundedPredicate], k: int,
                     rng: np.random.Generator) -> list[GroundedPredicate]:
    """Plausible off-plan predicates: one argument swapped for another value
    seen in the same position of a same-named predicate."""
    preds = sorted(set(plan_predicates))
    values: dict = {}
    for p in preds:
        for pos, a in enumerate(p.args):
            values.setdefault((p.name, pos), set()).add(a)
    pool = set()
    for p in preds:
        for pos in range(len(p.args)):
            for v in values[(p.name, pos)]:
                args = list(p.args)
                args[pos] = v
                cand = GroundedPredicate(p.name, tuple(args))
                if cand not in preds:
                    pool.add(cand)
    pool = sorted(pool)
    if k > len(pool):
        raise ValueError(f"only {len(pool)} distinct distractors available")
    idx = rng.choice(len(pool), size=k, replace=False)
    return [pool[int(i)] for i in sorted(idx)]
