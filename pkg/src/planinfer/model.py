"""Generative model of planning dialog: random variables and log-likelihoods.

A plan is an ordered tuple of sets of grounded predicates. Each utterance
samples a few predicates from the plan (step picked in proportion to its
size, predicate emitted from that step or, with small probability, from the
whole mention universe) and reports only their relative order, corrupted
with a flat weight when it disagrees with the true order.

Everything is computed in log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterable, Sequence

import numpy as np

from .pddl import GroundedPredicate
from .validator import ValidationResult, prior_log_weight

NEG_INF = float("-inf")


class EmptyPlan(ValueError):
    pass


class EmptySession(ValueError):
    pass


class LengthMismatch(ValueError):
    pass


def _log(x: float) -> float:
    return math.log(x) if x > 0 else NEG_INF


@dataclass(frozen=True)
class Hyperparams:
    alpha: float = 10.0
    beta: float = 5.0
    w_p: float = 0.8

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be non-negative")
        if not 0.0 <= self.w_p <= 1.0:
            raise ValueError("w_p must lie in [0, 1]")


@dataclass(frozen=True)
class Utterance:
    """One turn: an ordered tuple of sets of predicates (relative order only)."""

    groups: tuple[frozenset, ...]

    def __post_init__(self):
        groups = tuple(frozenset(g) for g in self.groups)
        if not groups or any(not g for g in groups):
            raise ValueError("an utterance needs at least one group and no empty groups")
        object.__setattr__(self, "groups", groups)

    @cached_property
    def flattened(self) -> tuple[tuple[GroundedPredicate, int], ...]:
        """(predicate, 1-based group rank) pairs; sorted within a group."""
        return tuple((p, r) for r, g in enumerate(self.groups, start=1) for p in sorted(g))

    @cached_property
    def ranks(self) -> tuple[int, ...]:
        return tuple(r for _, r in self.flattened)

    def __len__(self):
        return sum(len(g) for g in self.groups)


@dataclass(frozen=True)
class Session:
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        object.__setattr__(self, "utterances", tuple(self.utterances))
        if not self.utterances:
            raise EmptySession("a session needs at least one utterance")

    def mentions(self) -> list[GroundedPredicate]:
        return [p for u in self.utterances for p, _ in u.flattened]


class PredicateUniverse:
    """Distinct predicates of a session in first-mention order."""

    def __init__(self, predicates: Iterable[GroundedPredicate]):
        self.predicates = tuple(dict.fromkeys(predicates))
        self.index = {p: i for i, p in enumerate(self.predicates)}

    @classmethod
    def from_session(cls, session: Session) -> "PredicateUniverse":
        return cls(session.mentions())

    def __len__(self):
        return len(self.predicates)

    def __iter__(self):
        return iter(self.predicates)

    def __contains__(self, p):
        return p in self.index

    def __eq__(self, other):
        return isinstance(other, PredicateUniverse) and self.predicates == other.predicates

    def __repr__(self):
        return f"PredicateUniverse({[str(p) for p in self.predicates]})"


class StepPlan:
    """Fixed-capacity plan: ``capacity`` slots, each a set of predicate ids.

    Slots may be empty; a predicate occupies at most one slot. ``slot_of[i]``
    is the 1-based slot holding predicate ``i`` or 0 when it is unplaced.
    """

    __slots__ = ("slots", "slot_of")

    def __init__(self, n_predicates: int, capacity: int | None = None):
        capacity = n_predicates if capacity is None else capacity
        self.slots: list[set[int]] = [set() for _ in range(capacity)]
        self.slot_of: list[int] = [0] * n_predicates

    @classmethod
    def from_steps(cls, steps: Sequence[Iterable[int]], n_predicates: int,
                   capacity: int | None = None) -> "StepPlan":
        plan = cls(n_predicates, capacity)
        if len(steps) > plan.capacity:
            raise ValueError("more steps than slots")
        for j, step in enumerate(steps, start=1):
            for i in step:
                plan.place(i, j)
        return plan

    @property
    def capacity(self) -> int:
        return len(self.slots)

    def copy(self) -> "StepPlan":
        new = StepPlan.__new__(StepPlan)
        new.slots = [set(s) for s in self.slots]
        new.slot_of = list(self.slot_of)
        return new

    def place(self, i: int, j: int) -> None:
        if self.slot_of[i]:
            raise ValueError(f"predicate {i} already placed")
        self.slots[j - 1].add(i)
        self.slot_of[i] = j

    def remove(self, i: int) -> int:
        j = self.slot_of[i]
        if not j:
            raise ValueError(f"predicate {i} is not placed")
        self.slots[j - 1].discard(i)
        self.slot_of[i] = 0
        return j

    def move(self, i: int, j: int) -> None:
        self.remove(i)
        self.place(i, j)

    def swap(self, j: int, k: int) -> None:
        a, b = self.slots[j - 1], self.slots[k - 1]
        self.slots[j - 1], self.slots[k - 1] = b, a
        for i in b:
            self.slot_of[i] = j
        for i in a:
            self.slot_of[i] = k

    def size(self, j: int) -> int:
        return len(self.slots[j - 1])

    @property
    def n_placed(self) -> int:
        return sum(len(s) for s in self.slots)

    def nonempty(self) -> list[int]:
        return [j for j, s in enumerate(self.slots, start=1) if s]

    def compact(self) -> tuple[tuple[int, ...], ...]:
        """Non-empty slots in order, ids sorted within each step."""
        return tuple(tuple(sorted(s)) for s in self.slots if s)

    def key(self) -> tuple[int, ...]:
        """Canonical compact form: step rank per predicate id, 0 when absent."""
        rank = [0] * (self.capacity + 1)
        r = 0
        for j, s in enumerate(self.slots, start=1):
            if s:
                r += 1
                rank[j] = r
        return tuple(rank[j] for j in self.slot_of)

    def check_invariants(self) -> None:
        seen = set()
        for j, s in enumerate(self.slots, start=1):
            for i in s:
                assert 0 <= i < len(self.slot_of), "id out of range"
                assert i not in seen, "predicate placed twice"
                assert self.slot_of[i] == j, "slot index out of sync"
                seen.add(i)
        assert all((j == 0) == (i not in seen) for i, j in enumerate(self.slot_of))

    def to_predicates(self, universe: PredicateUniverse) -> tuple[frozenset, ...]:
        return tuple(frozenset(universe.predicates[i] for i in step) for step in self.compact())

    def __eq__(self, other):
        return isinstance(other, StepPlan) and self.slots == other.slots

    def __repr__(self):
        return f"StepPlan({[sorted(s) for s in self.slots]})"


# --------------------------------------------------------------------------
# likelihood terms

def relative_order(s: Sequence[int]) -> tuple[int, ...]:
    """Dense ranking: smallest distinct value -> 1, ties share a rank."""
    rank = {v: r for r, v in enumerate(sorted(set(s)), start=1)}
    return tuple(rank[v] for v in s)


@lru_cache(maxsize=None)
def weak_ordering_count(n: int) -> int:
    """Number of weak orderings of n items (ordered Bell / Fubini numbers)."""
    if n == 0:
        return 1
    return sum(math.comb(n, k) * weak_ordering_count(n - k) for k in range(1, n + 1))


def step_pick_logprob(plan: StepPlan, i: int) -> float:
    total = plan.n_placed
    if total == 0:
        raise EmptyPlan("no predicate placed")
    return _log(plan.size(i) / total)


def order_log_weight(observed: Sequence[int], s: Sequence[int], beta: float) -> float:
    """Unnormalised log p(observed order | absolute steps): beta on a match."""
    if len(observed) != len(s):
        raise LengthMismatch(f"{len(observed)} observed ranks for {len(s)} step indices")
    return float(beta) if tuple(observed) == relative_order(s) else 0.0


def order_log_normalizer(n: int, beta: float) -> float:
    """log(e^beta - 1 + W(n)); the same for every step vector of length n."""
    return float(beta) + math.log1p((weak_ordering_count(n) - 1) * math.exp(-beta))


def emission_logprob(plan: StepPlan, universe_size: int | PredicateUniverse, j: int, i: int,
                     w_p: float) -> float:
    """log p(predicate i | plan, step j): in-step uniform mixed with universe-uniform."""
    u = universe_size if isinstance(universe_size, int) else len(universe_size)
    c = plan.size(j)
    hit = w_p / c if c and i in plan.slots[j - 1] else 0.0
    return _log(hit + (1.0 - w_p) / u)


def layout_log_multiplicity(capacity: int, n_steps: int) -> float:
    """log C(capacity, n_steps): how many slot layouts compact to one plan.

    The sampler walks fixed-capacity layouts; dividing by this count makes
    its marginal over compact plans equal the model posterior.
    """
    return math.log(math.comb(capacity, n_steps))


def plan_log_marginal(steps: Sequence[Iterable[GroundedPredicate]], session: Session,
                      universe: PredicateUniverse, hyperparams: Hyperparams,
                      valid: ValidationResult | bool | None = None) -> float:
    """log p(plan | observations) up to a constant, step assignments summed out.

    Per utterance the sum over step vectors splits into an unrestricted part
    (a product of per-observation sums) and the part whose relative order
    matches the observed one; the latter is a sum over strictly increasing
    slot choices for the observed groups, done by a prefix-sum recursion.
    """
    steps = [frozenset(s) for s in steps if s]
    placed = sum(len(s) for s in steps)
    if placed == 0:
        return NEG_INF
    hp = hyperparams
    eps = (1.0 - hp.w_p) / len(universe)
    sizes = np.array([len(s) for s in steps], dtype=float)
    total = prior_log_weight(valid, hp.alpha) if valid is not None else 0.0
    e_beta = math.exp(hp.beta)
    for utt in session.utterances:
        flat = utt.flattened
        rows = np.empty((len(flat), len(steps)))
        for n, (pred, _) in enumerate(flat):
            member = np.array([pred in s for s in steps], dtype=float)
            rows[n] = sizes / placed * (hp.w_p * member / sizes + eps)
        free = float(np.prod(rows.sum(axis=1)))
        n_groups = len(utt.groups)
        group_rows = np.ones((n_groups, len(steps)))
        for (_, r), row in zip(flat, rows):
            group_rows[r - 1] *= row
        acc = group_rows[0]
        for r in range(1, n_groups):
            acc = group_rows[r] * np.concatenate(([0.0], np.cumsum(acc)[:-1]))
        match = float(acc.sum())
        mass = free + (e_beta - 1.0) * match
        if mass <= 0.0:
            return NEG_INF
        total += math.log(mass) - order_log_normalizer(len(flat), hp.beta)
    return total


def joint_log_posterior(plan: StepPlan, assignments: Sequence[Sequence[int]], session: Session,
                        universe: PredicateUniverse, hyperparams: Hyperparams,
                        validation: ValidationResult | bool | None) -> float:
    """Unnormalised log p(plan, s | observations); -inf for impossible states."""
    if len(assignments) != len(session.utterances):
        raise LengthMismatch("one assignment vector per utterance is required")
    total = prior_log_weight(validation, hyperparams.alpha) if validation is not None else 0.0
    placed = plan.n_placed
    for utt, s in zip(session.utterances, assignments):
        flat = utt.flattened
        if len(s) != len(flat):
            raise LengthMismatch("assignment length differs from utterance length")
        for (pred, _), j in zip(flat, s):
            if not 1 <= j <= plan.capacity or plan.size(j) == 0 or placed == 0:
                return NEG_INF
            total += step_pick_logprob(plan, j)
            total += emission_logprob(plan, len(universe), j, universe.index[pred], hyperparams.w_p)
        total += order_log_weight(utt.ranks, s, hyperparams.beta)
    return total
