"""Plan accuracy metrics and the brute-force posterior used to check the sampler."""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

from .model import Hyperparams, PredicateUniverse, Session, weak_ordering_count
from .pddl import Domain, Problem
from .validator import UnknownActionPolicy, validate


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class Metrics:
    pct_inferred: float
    pct_noise_rej: float
    pct_seq: float
    overall: float

    @classmethod
    def of(cls, pct_inferred, pct_noise_rej, pct_seq) -> "Metrics":
        return cls(pct_inferred, pct_noise_rej, pct_seq, (pct_inferred + pct_noise_rej + pct_seq) / 3.0)

    def to_json(self) -> dict:
        return asdict(self)


def _preds(plan) -> set:
    return {p for step in plan for p in step}


def _step_index(plan) -> dict:
    return {p: k for k, step in enumerate(plan) for p in step}


def task_allocation(inferred, truth, mentioned: Iterable) -> tuple[float, float]:
    """(% of inferred predicates in the true plan, % of extraneous mentions left out)."""
    inf, tru = _preds(inferred), _preds(truth)
    if inf:
        pct_inferred = 100.0 * len(inf & tru) / len(inf)
    else:
        pct_inferred = 100.0 if not tru else 0.0
    extraneous = set(mentioned) - tru
    pct_noise = 100.0 * len(extraneous - inf) / len(extraneous) if extraneous else 100.0
    return pct_inferred, pct_noise


def recall(inferred, truth) -> float:
    """Share of true-plan predicates recovered. Diagnostic only, not a reported metric."""
    tru = _preds(truth)
    return 100.0 * len(_preds(inferred) & tru) / len(tru) if tru else 100.0


def _sign(x: int) -> int:
    return (x > 0) - (x < 0)


def sequence_accuracy(inferred, truth) -> float:
    """% of pairs of correctly inferred predicates whose before/same/after relation matches."""
    si, st = _step_index(inferred), _step_index(truth)
    common = sorted(set(si) & set(st))
    if len(common) < 2:
        return 100.0
    good = total = 0
    for u, v in itertools.combinations(common, 2):
        total += 1
        good += _sign(si[u] - si[v]) == _sign(st[u] - st[v])
    return 100.0 * good / total


def evaluate(inferred, truth, mentioned: Iterable) -> Metrics:
    pi, pn = task_allocation(inferred, truth, mentioned)
    return Metrics.of(pi, pn, sequence_accuracy(inferred, truth))


def mean_metrics(plans_with_weights: Iterable[tuple[object, float]], truth, mentioned) -> Metrics:
    """Weighted average of per-plan metrics (scoring over retained samples)."""
    mentioned = set(mentioned)
    acc = [0.0, 0.0, 0.0]
    total = 0.0
    for plan, w in plans_with_weights:
        m = evaluate(plan, truth, mentioned)
        acc[0] += w * m.pct_inferred
        acc[1] += w * m.pct_noise_rej
        acc[2] += w * m.pct_seq
        total += w
    if total <= 0:
        raise ValueError("no samples to score")
    return Metrics.of(*(a / total for a in acc))


# --------------------------------------------------------------------------
# exact posterior

def ordered_set_partitions(items: Sequence) -> list[tuple[frozenset, ...]]:
    """Every ordered tuple of non-empty disjoint blocks covering ``items``."""
    items = list(items)
    if not items:
        return [()]
    out = []
    # choose the first block, recurse on the rest
    for r in range(1, len(items) + 1):
        for first in itertools.combinations(items, r):
            rest = [x for x in items if x not in first]
            for tail in ordered_set_partitions(rest):
                out.append((frozenset(first), *tail))
    return out


def enumerate_plans(universe: Sequence) -> list[tuple[frozenset, ...]]:
    """All plans over subsets of ``universe``, empty plan included."""
    universe = list(universe)
    plans = []
    for k in range(len(universe) + 1):
        for subset in itertools.combinations(universe, k):
            plans.extend(ordered_set_partitions(subset))
    return plans


def _dense(s: Sequence[int]) -> tuple[int, ...]:
    values = sorted(set(s))
    return tuple(values.index(v) + 1 for v in s)


def _log_likelihood(plan: tuple[frozenset, ...], session: Session, n_universe: int, hp: Hyperparams) -> float:
    """log prod_t sum_{s_t} p(s_t | plan) p(p_t | plan, s_t) p(s'_t | s_t), normalised terms."""
    placed = sum(len(b) for b in plan)
    if placed == 0:
        return -math.inf
    total = 0.0
    for utt in session.utterances:
        flat = utt.flattened
        n = len(flat)
        observed = tuple(r for _, r in flat)
        z = math.exp(hp.beta) - 1.0 + weak_ordering_count(n)
        mass = 0.0
        for s in itertools.product(range(len(plan)), repeat=n):
            p = 1.0
            for (pred, _), j in zip(flat, s):
                block = plan[j]
                in_block = hp.w_p / len(block) if pred in block else 0.0
                p *= len(block) / placed * (in_block + (1.0 - hp.w_p) / n_universe)
            p *= (math.exp(hp.beta) if _dense(s) == observed else 1.0) / z
            mass += p
        if mass == 0.0:
            return -math.inf
        total += math.log(mass)
    return total


def exact_posterior(session: Session, universe: PredicateUniverse | None = None,
                    hyperparams: Hyperparams = Hyperparams(), domain: Domain | None = None,
                    problem: Problem | None = None,
                    validity: Callable[[tuple], bool] | None = None,
                    policy: UnknownActionPolicy = UnknownActionPolicy.STRICT) -> list[tuple[tuple, float]]:
    """Normalised posterior over every plan on a small universe, by enumeration.

    Validity comes from ``validity`` if given, else from the domain/problem
    pair; with neither, the plan prior is flat.
    """
    universe = universe or PredicateUniverse.from_session(session)
    if len(universe) > 4 or max(len(u) for u in session.utterances) > 3:
        raise TooLarge("exact posterior needs |universe| <= 4 and utterances of length <= 3")
    if validity is None and domain is not None and problem is not None:
        def validity(plan):
            return validate(domain, problem, plan, policy).valid
    alpha = hyperparams.alpha if validity is not None else 0.0
    plans = enumerate_plans(universe.predicates)
    logs = []
    for plan in plans:
        lp = _log_likelihood(plan, session, len(universe), hyperparams)
        if lp > -math.inf and alpha and validity(plan):
            lp += alpha
        logs.append(lp)
    top = max(logs)
    weights = [math.exp(x - top) if x > -math.inf else 0.0 for x in logs]
    z = sum(weights)
    return [(plan, w / z) for plan, w in zip(plans, weights)]


def total_variation(p: dict, q: dict) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
