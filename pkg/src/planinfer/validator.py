"""Validity of stepped parallel plans, and the plan prior built from it."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

from .pddl import (
    Domain,
    GroundedAction,
    GroundedPredicate,
    Problem,
    UnknownAction,
    applicable,
    apply,
    ground_action,
)

SteppedPlan = Sequence[Iterable[GroundedPredicate]]


class UnknownActionPolicy(enum.Enum):
    STRICT = "strict"
    IGNORE = "ignore"


class FailureReason(enum.Enum):
    UNKNOWN_ACTION = "UnknownAction"
    PRECONDITION_UNSATISFIED = "PreconditionUnsatisfied"
    MUTEX_CONFLICT = "MutexConflict"
    GOAL_UNSATISFIED = "GoalUnsatisfied"


@dataclass(frozen=True)
class Failure:
    step: int  # 1-based; len(plan) + 1 for the goal check
    reason: FailureReason
    detail: str = ""


@dataclass(frozen=True)
class ValidationResult:
    valid: bool
    failure: Failure | None = None

    def __post_init__(self):
        if self.valid != (self.failure is None):
            raise ValueError("valid results carry no failure and invalid ones must")

    def to_json(self) -> dict:
        if self.failure is None:
            return {"valid": True, "failure": None}
        f = self.failure
        return {"valid": False,
                "failure": {"step": f.step, "reason": f.reason.value, "detail": f.detail}}


VALID = ValidationResult(True)


def mutex(a: GroundedAction, b: GroundedAction) -> bool:
    """Pairwise interference of two actions scheduled in the same step.

    One deletes what the other adds or requires, or one adds what the other
    requires to be false.
    """
    if a == b:
        return bool(a.delete_effects)
    return bool(
        a.delete_effects & (b.add_effects | b.pos_pre)
        or b.delete_effects & (a.add_effects | a.pos_pre)
        or a.add_effects & b.neg_pre
        or b.add_effects & a.neg_pre
    )


def _fmt_atom(atom) -> str:
    return f"{atom[0]}({', '.join(atom[1:])})"


def validate(domain: Domain, problem: Problem, plan: SteppedPlan,
             policy: UnknownActionPolicy = UnknownActionPolicy.STRICT) -> ValidationResult:
    """Simulate ``plan`` step by step from the initial state.

    Within a step: every predicate must ground, every action must be
    applicable in the pre-step state and no two actions may be mutex.
    The first violation found is reported; actions in a step are examined in
    sorted order so the result does not depend on set iteration order.
    """
    state = problem.init
    for k, step in enumerate(plan, start=1):
        actions = []
        for pred in sorted(step):
            ga = ground_action(domain, pred, problem)
            if isinstance(ga, UnknownAction):
                if policy is UnknownActionPolicy.STRICT:
                    return ValidationResult(False, Failure(k, FailureReason.UNKNOWN_ACTION,
                                                           f"{pred}: {ga.reason}"))
                continue
            actions.append(ga)
        for ga in actions:
            if not applicable(state, ga):
                missing = sorted(ga.pos_pre - state) + sorted(ga.neg_pre & state)
                detail = f"{ga}: " + ", ".join(
                    _fmt_atom(m) if m in ga.pos_pre else f"not {_fmt_atom(m)}" for m in missing)
                return ValidationResult(False, Failure(k, FailureReason.PRECONDITION_UNSATISFIED, detail))
        for i, a in enumerate(actions):
            for b in actions[i + 1:]:
                if mutex(a, b):
                    return ValidationResult(False, Failure(k, FailureReason.MUTEX_CONFLICT, f"{a} / {b}"))
        state = apply(state, actions)
    unmet = [a for a in problem.goal_pos if a not in state]
    unmet_neg = [a for a in problem.goal_neg if a in state]
    if unmet or unmet_neg:
        detail = ", ".join([_fmt_atom(a) for a in sorted(unmet)]
                           + [f"not {_fmt_atom(a)}" for a in sorted(unmet_neg)])
        return ValidationResult(False, Failure(len(plan) + 1, FailureReason.GOAL_UNSATISFIED, detail))
    return VALID


def prior_log_weight(result: ValidationResult | bool, alpha: float) -> float:
    """Log of the unnormalised plan prior: ``alpha`` if valid, else 0."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    valid = result if isinstance(result, bool) else result.valid
    return float(alpha) if valid else 0.0


class CompiledValidator:
    """Bitmask validator over a fixed list of predicates, with memoisation.

    Plans are given as sequences of steps of predicate ids (indices into
    ``predicates``). Same semantics as :func:`validate`, only ``valid`` is
    returned.
    """

    def __init__(self, domain: Domain, problem: Problem, predicates: Sequence[GroundedPredicate],
                 policy: UnknownActionPolicy = UnknownActionPolicy.STRICT):
        self.policy = policy
        self._bit: dict = {}
        self.actions: list[tuple[int, int, int, int] | None] = []
        for pred in predicates:
            ga = ground_action(domain, pred, problem)
            if isinstance(ga, UnknownAction):
                self.actions.append(None)
            else:
                self.actions.append((self._mask(ga.pos_pre), self._mask(ga.neg_pre),
                                     self._mask(ga.add_effects), self._mask(ga.delete_effects)))
        self.init = self._mask(problem.init)
        self.goal_pos = self._mask(problem.goal_pos)
        self.goal_neg = self._mask(problem.goal_neg)
        self.memo: dict = {}
        self.calls = 0

    def _mask(self, atoms) -> int:
        m = 0
        for a in atoms:
            b = self._bit.get(a)
            if b is None:
                b = self._bit[a] = len(self._bit)
            m |= 1 << b
        return m

    def _mutex(self, x, y) -> bool:
        return bool(x[3] & (y[2] | y[0]) or y[3] & (x[2] | x[0]) or x[2] & y[1] or y[2] & x[1])

    def valid_steps(self, steps: Iterable[Iterable[int]]) -> bool:
        self.calls += 1
        state = self.init
        strict = self.policy is UnknownActionPolicy.STRICT
        for step in steps:
            acts = []
            for i in step:
                a = self.actions[i]
                if a is None:
                    if strict:
                        return False
                    continue
                if a[0] & ~state or a[1] & state:
                    return False
                acts.append(a)
            dels = adds = 0
            for x in range(len(acts)):
                ax = acts[x]
                for y in range(x + 1, len(acts)):
                    if self._mutex(ax, acts[y]):
                        return False
                dels |= ax[3]
                adds |= ax[2]
            state = (state & ~dels) | adds
        return (state & self.goal_pos) == self.goal_pos and not (state & self.goal_neg)

    def valid_key(self, key: tuple[int, ...]) -> bool:
        """Validity of a plan given as step rank per predicate id (0 = absent)."""
        v = self.memo.get(key)
        if v is None:
            nsteps = max(key, default=0)
            steps: list[list[int]] = [[] for _ in range(nsteps)]
            for i, r in enumerate(key):
                if r:
                    steps[r - 1].append(i)
            v = self.memo[key] = self.valid_steps(steps)
        return v
