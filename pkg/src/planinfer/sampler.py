"""MCMC over final plans.

Two kernels share the move set, Hastings ratios and sweep structure:

``gibbs``
    MH within Gibbs over (plan, step assignments). Each sweep runs a batch
    of MH moves on the plan with assignments held fixed, then redraws every
    utterance's assignment vector from its exact conditional.
``collapsed`` (default)
    The same MH moves scored against the plan posterior with assignments
    summed out. Fixed assignments pin predicates to the slots their mentions
    point at, so the Gibbs kernel barely moves on realistic sessions; the
    collapsed kernel targets the same plan posterior without that coupling.

Both target the posterior over fixed-capacity slot layouts divided by the
number of layouts that compact to the same plan, so retained compact plans
are draws from the model posterior.
"""

from __future__ import annotations

import enum
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import (
    NEG_INF,
    EmptyPlan,
    EmptySession,
    Hyperparams,
    PredicateUniverse,
    Session,
    StepPlan,
    joint_log_posterior,
    layout_log_multiplicity,
    order_log_normalizer,
    order_log_weight,
    relative_order,
)
from ._kernels import collapsed_loglik
from .pddl import Domain, Problem
from .validator import CompiledValidator, UnknownActionPolicy


KERNELS = ("collapsed", "gibbs")


@dataclass
class SamplerConfig:
    gibbs_steps: int = 3000
    mh_steps_per_gibbs: int = 400
    thin: int = 20
    burn_in_fraction: float = 0.5
    seed: int = 0
    enumeration_limit: int = 100_000
    unknown_action_policy: UnknownActionPolicy = UnknownActionPolicy.STRICT
    kernel: str = "collapsed"  # or "gibbs"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"kernel must be one of {KERNELS}")
        if self.thin < 1 or self.gibbs_steps < 1 or self.mh_steps_per_gibbs < 0:
            raise ValueError("thin and gibbs_steps must be >= 1")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")

    @property
    def burn_in_sweeps(self) -> int:
        return int(self.burn_in_fraction * self.gibbs_steps)


class MoveKind(enum.Enum):
    SHIFT_LEFT = "ShiftLeft"
    SHIFT_RIGHT = "ShiftRight"
    REMOVE = "Remove"
    INSERT = "Insert"
    SWAP = "SwapSlots"
    NOOP = "NoOp"


@dataclass(frozen=True)
class Move:
    kind: MoveKind
    subject: int | None = None
    slot: int | None = None  # source slot for shifts/remove, target for insert
    other: int | None = None  # second slot of a swap


NOOP = Move(MoveKind.NOOP)


class UniformStream:
    """Batched uniforms from a numpy Generator; cheap scalar draws in hot loops."""

    def __init__(self, rng: np.random.Generator, batch: int = 8192):
        self.rng = rng
        self.batch = batch
        self._buf: list[float] = []
        self._pos = 0

    def random(self) -> float:
        if self._pos >= len(self._buf):
            self._buf = self.rng.random(self.batch).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u


def _randrange(rng, n: int) -> int:
    return min(int(rng.random() * n), n - 1)


def draw_move(plan: StepPlan, rng) -> tuple[Move, float]:
    """Pick a move for ``plan`` and its log Hastings ratio log Q(x|x') - log Q(x'|x)."""
    n = len(plan.slot_of)
    cap = plan.capacity
    if rng.random() < 0.5:
        u = _randrange(rng, n)
        k = plan.slot_of[u]
        if k:
            c = _randrange(rng, 3)
            if c == 0:
                return (NOOP, 0.0) if k == 1 else (Move(MoveKind.SHIFT_LEFT, u, k), 0.0)
            if c == 1:
                return (NOOP, 0.0) if k == cap else (Move(MoveKind.SHIFT_RIGHT, u, k), 0.0)
            return Move(MoveKind.REMOVE, u, k), math.log(3.0 / cap)
        j = _randrange(rng, cap) + 1
        return Move(MoveKind.INSERT, u, j), math.log(cap / 3.0)
    if cap < 2:
        return NOOP, 0.0
    a = _randrange(rng, cap)
    b = _randrange(rng, cap - 1)
    if b >= a:
        b += 1
    a, b = min(a, b), max(a, b)
    return Move(MoveKind.SWAP, slot=a + 1, other=b + 1), 0.0


def apply_move(plan: StepPlan, move: Move) -> None:
    """Apply ``move`` to ``plan`` in place."""
    kind = move.kind
    if kind is MoveKind.SHIFT_LEFT:
        plan.move(move.subject, move.slot - 1)
    elif kind is MoveKind.SHIFT_RIGHT:
        plan.move(move.subject, move.slot + 1)
    elif kind is MoveKind.REMOVE:
        plan.remove(move.subject)
    elif kind is MoveKind.INSERT:
        plan.place(move.subject, move.slot)
    elif kind is MoveKind.SWAP:
        plan.swap(move.slot, move.other)


def inverse_move(move: Move) -> Move:
    kind = move.kind
    if kind is MoveKind.SHIFT_LEFT:
        return Move(MoveKind.SHIFT_RIGHT, move.subject, move.slot - 1)
    if kind is MoveKind.SHIFT_RIGHT:
        return Move(MoveKind.SHIFT_LEFT, move.subject, move.slot + 1)
    if kind is MoveKind.REMOVE:
        return Move(MoveKind.INSERT, move.subject, move.slot)
    if kind is MoveKind.INSERT:
        return Move(MoveKind.REMOVE, move.subject, move.slot)
    return move


def propose(plan: StepPlan, universe: PredicateUniverse | None, rng) -> tuple[Move, StepPlan, float]:
    """Draw a move and return it with the moved copy of ``plan``."""
    move, log_q = draw_move(plan, rng)
    new = plan.copy()
    apply_move(new, move)
    return move, new, log_q


# --------------------------------------------------------------------------
# step assignments

_mask_cache: dict = {}


def _order_mask(k: int, observed: tuple[int, ...]) -> np.ndarray:
    """Flat boolean mask over k**n step vectors whose relative order equals ``observed``."""
    key = (k, observed)
    mask = _mask_cache.get(key)
    if mask is None:
        n = len(observed)
        idx = np.indices((k,) * n).reshape(n, -1)
        mask = np.ones(idx.shape[1], dtype=bool)
        for a in range(n):
            for b in range(a + 1, n):
                want = np.sign(observed[a] - observed[b])
                mask &= np.sign(idx[a] - idx[b]) == want
        _mask_cache[key] = mask
    return mask


def _observation_rows(plan: StepPlan, preds: Sequence[int], nonempty: Sequence[int],
                      w_p: float, n_universe: int) -> np.ndarray:
    """Per observation and non-empty slot: log step-pick + log emission."""
    return _RowMaker(plan, nonempty, w_p, n_universe)(np.asarray(preds))


class _RowMaker:
    """Builds observation rows for many utterances against one plan."""

    def __init__(self, plan: StepPlan, nonempty: Sequence[int], w_p: float, n_universe: int):
        sizes = np.array([len(plan.slots[j - 1]) for j in nonempty], dtype=float)
        eps = (1.0 - w_p) / n_universe
        with np.errstate(divide="ignore"):
            base = np.log(sizes / sizes.sum())
            self.miss = base + (math.log(eps) if eps > 0 else NEG_INF)
            self.hit = base + np.log(w_p / sizes + eps)
        self.rank_of = np.full(len(plan.slot_of), -1)
        for r, j in enumerate(nonempty):
            for i in plan.slots[j - 1]:
                self.rank_of[i] = r

    def __call__(self, ids: np.ndarray) -> np.ndarray:
        rows = np.tile(self.miss, (len(ids), 1))
        pos = self.rank_of[ids]
        on = np.nonzero(pos >= 0)[0]
        rows[on, pos[on]] = self.hit[pos[on]]
        return rows


def _sample_index(logw: np.ndarray, u: float) -> int:
    top = logw.max()
    if top == NEG_INF:
        raise ValueError("no step assignment has positive probability")
    cdf = np.cumsum(np.exp(logw - top))
    return min(int(np.searchsorted(cdf, u * cdf[-1], side="right")), len(cdf) - 1)


def sample_utterance_assignment(rows: np.ndarray, observed: tuple[int, ...], nonempty: Sequence[int],
                                beta: float, enumeration_limit: int, rng,
                                current: Sequence[int] | None = None) -> tuple[int, ...]:
    """Draw one utterance's step vector from its conditional given the plan.

    Exact by enumeration when K**n fits the limit, otherwise one systematic
    scan of single-coordinate conditionals starting from ``current``.
    """
    n, k = rows.shape
    if k ** n <= enumeration_limit:
        grid = rows[0]
        for r in rows[1:]:
            grid = np.add.outer(grid, r)
        logw = grid.ravel() + beta * _order_mask(k, observed)
        flat = _sample_index(logw, rng.random())
        idx = np.unravel_index(flat, (k,) * n)
        return tuple(nonempty[int(x)] for x in idx)
    s = list(current)
    for a in range(n):
        logw = rows[a].copy()
        for r, j in enumerate(nonempty):
            s[a] = j
            if relative_order(s) == observed:
                logw[r] += beta
        s[a] = nonempty[_sample_index(logw, rng.random())]
    return tuple(s)


def resample_assignments(plan: StepPlan, session: Session, universe: PredicateUniverse,
                         hyperparams: Hyperparams, enumeration_limit: int, rng,
                         current: Sequence[Sequence[int]] | None = None,
                         observations: Sequence[np.ndarray] | None = None) -> list[tuple[int, ...]]:
    """Redraw every utterance's step vector given the plan.

    ``observations`` optionally caches the predicate ids of each utterance.
    """
    if plan.n_placed == 0:
        raise EmptyPlan("cannot assign steps in an empty plan")
    nonempty = plan.nonempty()
    make_rows = _RowMaker(plan, nonempty, hyperparams.w_p, len(universe))
    if observations is None:
        observations = [np.array([universe.index[p] for p, _ in u.flattened]) for u in session.utterances]
    out = []
    for t, (utt, ids) in enumerate(zip(session.utterances, observations)):
        cur = current[t] if current is not None else [plan.slot_of[i] or nonempty[0] for i in ids]
        out.append(sample_utterance_assignment(make_rows(ids), utt.ranks, nonempty, hyperparams.beta,
                                               enumeration_limit, rng, cur))
    return out


def initialize(session: Session, hyperparams: Hyperparams = Hyperparams(), rng=None,
               enumeration_limit: int = 100_000):
    """Singleton plan in first-mention order plus assignments drawn given it."""
    if not session.utterances:
        raise EmptySession("empty session")
    rng = np.random.default_rng(0) if rng is None else rng
    universe = PredicateUniverse.from_session(session)
    plan = StepPlan.from_steps([[i] for i in range(len(universe))], len(universe))
    assignments = resample_assignments(plan, session, universe, hyperparams, enumeration_limit, rng)
    return universe, plan, assignments


def mh_step(plan: StepPlan, assignments, session: Session, universe: PredicateUniverse,
            hyperparams: Hyperparams, validity: Callable[[StepPlan], bool] | None, rng):
    """One MH move on the plan, scored by full re-evaluation of the posterior.

    Reference implementation; :class:`Chain` does the same thing incrementally.
    ``validity`` maps a plan to its validity (None: uninformative prior).
    """
    def target(p: StepPlan) -> float:
        v = validity(p) if validity is not None else None
        lp = joint_log_posterior(p, assignments, session, universe, hyperparams, v)
        if lp == NEG_INF:
            return lp
        return lp - layout_log_multiplicity(p.capacity, len(p.nonempty()))

    move, new, log_q = propose(plan, universe, rng)
    if move.kind is MoveKind.NOOP:
        return plan, True
    cur = target(plan)
    prop = target(new)
    if prop == NEG_INF:
        return plan, False
    if math.log(max(rng.random(), 1e-300)) < prop - cur + log_q:
        return new, True
    return plan, False


# --------------------------------------------------------------------------
# the chain

class PlanScorer:
    """Plan log posterior with step assignments summed out, for compact plan keys.

    Same quantity as :func:`model.plan_log_marginal`. Observations are laid
    out as padded (utterance, rank group, member) index arrays for the
    compiled loop.
    """

    def __init__(self, session: Session, universe: PredicateUniverse, hyperparams: Hyperparams):
        self.hp = hyperparams
        self.eps = (1.0 - hyperparams.w_p) / len(universe)
        utts = session.utterances
        n_obs = max(len(u.flattened) for u in utts)
        n_groups = max(len(u.groups) for u in utts)
        width = max(len(g) for u in utts for g in u.groups)
        self.ids = np.zeros((len(utts), n_obs), dtype=np.intp)
        self.mask = np.zeros((len(utts), n_obs), dtype=bool)
        self.members = np.full((len(utts), n_groups, width), n_obs, dtype=np.intp)
        self.n_groups = np.array([len(u.groups) for u in utts])
        const = 0.0
        for t, u in enumerate(utts):
            fill = [0] * n_groups
            for o, (p, r) in enumerate(u.flattened):
                self.ids[t, o] = universe.index[p]
                self.mask[t, o] = True
                self.members[t, r - 1, fill[r - 1]] = o
                fill[r - 1] += 1
            const -= order_log_normalizer(len(u.flattened), hyperparams.beta)
        self.const = const
        self.e_beta_m1 = math.expm1(hyperparams.beta)

    def likelihood(self, key: Sequence[int]) -> float:
        """Everything except the validity prior."""
        lik = collapsed_loglik(np.asarray(key, dtype=np.int64), self.ids, self.mask, self.members,
                               self.n_groups, self.eps, self.hp.w_p, self.e_beta_m1)
        return lik if lik == NEG_INF else self.const + lik

    def __call__(self, key: Sequence[int], valid: bool | None = None) -> float:
        lik = self.likelihood(key)
        if lik == NEG_INF:
            return lik
        return lik + (self.hp.alpha if valid else 0.0)


@dataclass
class PosteriorSummary:
    universe: PredicateUniverse
    samples: list  # (compact plan key, plan log posterior) in retention order
    map_key: tuple
    map_log_posterior: float
    diagnostics: dict = field(default_factory=dict)

    def plan_of(self, key) -> tuple[frozenset, ...]:
        return key_to_plan(key, self.universe)

    @property
    def map_plan(self) -> tuple[frozenset, ...]:
        return self.plan_of(self.map_key)

    def plan_counts(self) -> Counter:
        return Counter(k for k, _ in self.samples)

    def distribution(self) -> dict:
        counts = self.plan_counts()
        total = sum(counts.values())
        return {k: c / total for k, c in counts.items()}

    def log_posteriors(self) -> dict:
        return {k: lp for k, lp in self.samples}

    @property
    def marginals(self) -> dict:
        """Per predicate: probability of each step rank, 0 meaning absent."""
        total = len(self.samples)
        acc = defaultdict(Counter)
        for key, c in self.plan_counts().items():
            for i, r in enumerate(key):
                acc[self.universe.predicates[i]][r] += c
        return {p: {r: c / total for r, c in sorted(acc[p].items())} for p in self.universe.predicates}


def key_to_plan(key: Sequence[int], universe: PredicateUniverse) -> tuple[frozenset, ...]:
    steps: list[set] = [set() for _ in range(max(key, default=0))]
    for i, r in enumerate(key):
        if r:
            steps[r - 1].add(universe.predicates[i])
    return tuple(frozenset(s) for s in steps)


class Chain:
    """One MH-within-Gibbs chain with incrementally maintained log target.

    For slot j with c_j predicates, M_j observations assigned to it and H_j of
    those naming a predicate inside it, the likelihood factorises as
    ``sum_j [M_j log c_j + H_j log(w/c_j + e) + (M_j - H_j) log e] - M log P``
    with e the noise floor and P the number of placed predicates, so every
    move touches at most two slot terms.
    """

    def __init__(self, session: Session, hyperparams: Hyperparams = Hyperparams(),
                 validator: CompiledValidator | None = None, config: SamplerConfig = SamplerConfig(),
                 universe: PredicateUniverse | None = None):
        self.session = session
        self.hp = hyperparams
        self.config = config
        self.universe = universe or PredicateUniverse.from_session(session)
        self.validator = validator if hyperparams.alpha > 0 else None
        seq = np.random.SeedSequence(config.seed)
        self.np_rng = np.random.default_rng(seq)
        self.rng = UniformStream(self.np_rng)
        n = len(self.universe)
        self.n = self.cap = n
        self.obs = [[self.universe.index[p] for p, _ in u.flattened] for u in session.utterances]
        self.obs_arrays = [np.array(o) for o in self.obs]
        self.ranks = [u.ranks for u in session.utterances]
        self.m_total = sum(len(o) for o in self.obs)

        w, eps = self.hp.w_p, (1.0 - self.hp.w_p) / n
        self.log_eps = math.log(eps) if eps > 0 else NEG_INF
        self.log_c = [NEG_INF] + [math.log(c) for c in range(1, n + 1)]
        self.log_hit = [NEG_INF] + [math.log(w / c + eps) for c in range(1, n + 1)]
        self.log_p = self.log_c
        self.log_layout = [layout_log_multiplicity(self.cap, k) for k in range(self.cap + 1)]

        self.plan = StepPlan.from_steps([[i] for i in range(n)], n)
        self.assign = resample_assignments(self.plan, session, self.universe, self.hp,
                                           config.enumeration_limit, self.rng)
        self._rebuild()
        self.accepted = 0
        self.proposed = 0
        self.scorer = PlanScorer(session, self.universe, hyperparams)
        self.lik_cache: dict = {}

    # -- bookkeeping ---------------------------------------------------------
    def _slot_term(self, m: int, h: int, c: int) -> float:
        if m == 0:
            return 0.0
        if c == 0:
            return NEG_INF
        t = m * self.log_c[c]
        if h:
            t += h * self.log_hit[c]
        if m - h:
            t += (m - h) * self.log_eps
        return t

    def _rebuild(self) -> None:
        cap, n = self.cap, self.n
        self.N = [[0] * n for _ in range(cap + 1)]
        self.M = [0] * (cap + 1)
        for preds, s in zip(self.obs, self.assign):
            for i, j in zip(preds, s):
                self.N[j][i] += 1
                self.M[j] += 1
        self.c = [0] + [len(s) for s in self.plan.slots]
        self.H = [0] * (cap + 1)
        for j in range(1, cap + 1):
            row = self.N[j]
            self.H[j] = sum(row[i] for i in self.plan.slots[j - 1])
        self.g = [0.0] + [self._slot_term(self.M[j], self.H[j], self.c[j]) for j in range(1, cap + 1)]
        self.P = sum(self.c)
        self.K = sum(1 for x in self.c[1:] if x)
        self.order_term = sum(order_log_weight(r, s, self.hp.beta) for r, s in zip(self.ranks, self.assign))
        self.valid = self.validator.valid_key(self.plan.key()) if self.validator is not None else False

    def _global(self, p: int) -> float:
        if p == 0:
            return NEG_INF if self.m_total else 0.0
        return -self.m_total * self.log_p[p]

    def log_target(self) -> float:
        """log posterior of the current layout (with the layout correction)."""
        lik = sum(self.g) + self._global(self.P)
        prior = self.hp.alpha if self.valid else 0.0
        return prior + lik + self.order_term - self.log_layout[self.K]

    def log_posterior(self) -> float:
        """Model log posterior of the current compact plan and assignments."""
        return self.log_target() + self.log_layout[self.K]

    def reference_log_target(self) -> float:
        v = self.valid if self.validator is not None else None
        lp = joint_log_posterior(self.plan, self.assign, self.session, self.universe, self.hp, v)
        return lp - self.log_layout[self.K]

    # -- kernels -------------------------------------------------------------
    def resample(self) -> None:
        self.assign = resample_assignments(self.plan, self.session, self.universe, self.hp,
                                           self.config.enumeration_limit, self.rng, self.assign,
                                           self.obs_arrays)
        self._rebuild()

    def mh(self, steps: int, on_step: Callable[[int], None] | None = None) -> None:
        rng = self.rng
        plan = self.plan
        slots, slot_of = plan.slots, plan.slot_of
        N, M, H, c, g = self.N, self.M, self.H, self.c, self.g
        term = self._slot_term
        alpha = self.hp.alpha
        validator = self.validator
        log_layout = self.log_layout
        for step in range(1, steps + 1):
            self.proposed += 1
            move, log_q = draw_move(plan, rng)
            kind = move.kind
            if kind is MoveKind.NOOP:
                self.accepted += 1
                if on_step is not None:
                    on_step(step)
                continue
            dP = 0
            if kind is MoveKind.SWAP:
                a, b = move.slot, move.other
                ha = sum(N[a][i] for i in slots[b - 1])
                hb = sum(N[b][i] for i in slots[a - 1])
                changes = ((a, c[b], ha), (b, c[a], hb))
                dK = 0
            else:
                u, k = move.subject, move.slot
                if kind is MoveKind.INSERT:
                    changes = ((k, c[k] + 1, H[k] + N[k][u]),)
                    dK = c[k] == 0
                    dP = 1
                else:
                    ch = [(k, c[k] - 1, H[k] - N[k][u])]
                    dK = -(c[k] == 1)
                    if kind is MoveKind.REMOVE:
                        dP = -1
                    else:
                        k2 = k - 1 if kind is MoveKind.SHIFT_LEFT else k + 1
                        ch.append((k2, c[k2] + 1, H[k2] + N[k2][u]))
                        dK += c[k2] == 0
                    changes = ch
            new_g = [term(M[j], h, cj) for j, cj, h in changes]
            if NEG_INF in new_g:
                if on_step is not None:
                    on_step(step)
                continue
            delta = sum(new_g) - sum(g[j] for j, _, _ in changes)
            if dP:
                new_global = self._global(self.P + dP)
                if new_global == NEG_INF:
                    if on_step is not None:
                        on_step(step)
                    continue
                delta += new_global - self._global(self.P)
            delta += log_layout[self.K] - log_layout[self.K + dK] + log_q
            log_u = math.log(rng.random() or 1e-300)
            accept = False
            if validator is None:
                accept = log_u < delta
                if accept:
                    apply_move(plan, move)
            else:
                upper = delta + (0.0 if self.valid else alpha)
                if log_u < upper:
                    apply_move(plan, move)
                    v = validator.valid_key(plan.key())
                    accept = log_u < delta + alpha * (v - self.valid)
                    if accept:
                        self.valid = v
                    else:
                        apply_move(plan, inverse_move(move))
            if accept:
                self.accepted += 1
                for (j, cj, h), gj in zip(changes, new_g):
                    c[j], H[j], g[j] = cj, h, gj
                self.P += dP
                self.K += dK
            if on_step is not None:
                on_step(step)

    def _collapsed_lik(self, key: tuple) -> float:
        cache = self.lik_cache
        lik = cache.get(key)
        if lik is None:
            if len(cache) >= 1_000_000:
                cache.clear()
            lik = cache[key] = self.scorer.likelihood(key) - self.log_layout[max(key)]
        return lik

    def mh_collapsed(self, steps: int, on_step: Callable[[int], None] | None = None) -> None:
        """MH on the plan alone, with step assignments summed out of the target."""
        rng = self.rng
        plan = self.plan
        alpha = self.hp.alpha
        validator = self.validator
        lik = self._collapsed_lik
        cur = lik(plan.key())
        for step in range(1, steps + 1):
            self.proposed += 1
            move, log_q = draw_move(plan, rng)
            if move.kind is MoveKind.NOOP:
                self.accepted += 1
                if on_step is not None:
                    on_step(step)
                continue
            apply_move(plan, move)
            key = plan.key()
            new = lik(key)
            accept = False
            if new != NEG_INF:
                delta = new - cur + log_q
                log_u = math.log(rng.random() or 1e-300)
                if validator is None:
                    accept = log_u < delta
                elif log_u < delta + (0.0 if self.valid else alpha):
                    v = validator.valid_key(key)
                    accept = log_u < delta + alpha * (v - self.valid)
                    if accept:
                        self.valid = v
            if accept:
                self.accepted += 1
                cur = new
            else:
                apply_move(plan, inverse_move(move))
            if on_step is not None:
                on_step(step)
        self.K = sum(1 for x in plan.slots if x)

    def run(self) -> PosteriorSummary:
        cfg = self.config
        keys: list = []
        thin = cfg.thin

        def retain(step: int) -> None:
            if step % thin == 0:
                keys.append(self.plan.key())

        collapsed = cfg.kernel == "collapsed"
        for sweep in range(cfg.gibbs_steps):
            keep = sweep >= cfg.burn_in_sweeps
            if collapsed:
                self.mh_collapsed(cfg.mh_steps_per_gibbs, retain if keep else None)
            else:
                self.mh(cfg.mh_steps_per_gibbs, retain if keep else None)
                self.resample()
        if not keys:  # nothing retained; report the final state
            keys.append(self.plan.key())
        scores = self.score(set(keys))
        samples = [(k, scores[k]) for k in keys]
        diagnostics = {
            "acceptance_rate": self.accepted / max(self.proposed, 1),
            "retained": len(samples),
            "proposed": self.proposed,
            "distinct_plans": len(scores),
        }
        if self.validator is not None:
            diagnostics["validator_calls"] = self.validator.calls
            diagnostics["validator_memo"] = len(self.validator.memo)
        return _summary(self.universe, samples, diagnostics)

    def score(self, keys) -> dict:
        """Plan log posterior (assignments summed out) for each compact key."""
        scorer = self.scorer
        out = {}
        for k in sorted(keys):
            valid = self.validator.valid_key(k) if self.validator is not None else None
            out[k] = scorer(k, valid)
        return out


def _summary(universe, samples, diagnostics) -> PosteriorSummary:
    best_key, best_lp = max(samples, key=lambda x: (x[1], x[0]))
    return PosteriorSummary(universe, samples, best_key, best_lp, diagnostics)


def infer(session: Session, domain: Domain | None = None, problem: Problem | None = None,
          hyperparams: Hyperparams = Hyperparams(), config: SamplerConfig = SamplerConfig(),
          chains: int = 1) -> PosteriorSummary:
    """Approximate the posterior over final plans for ``session``.

    Without a domain/problem pair the plan prior is flat (alpha taken as 0).
    Several chains use seeds spawned from ``config.seed`` and are merged.
    """
    universe = PredicateUniverse.from_session(session)
    if domain is None or problem is None:
        hyperparams = Hyperparams(0.0, hyperparams.beta, hyperparams.w_p)
        validator = None
    else:
        validator = CompiledValidator(domain, problem, universe.predicates, config.unknown_action_policy)
    if chains <= 1:
        return Chain(session, hyperparams, validator, config, universe).run()
    seeds = np.random.SeedSequence(config.seed).generate_state(chains, dtype=np.uint64)
    parts = []
    for s in seeds:
        cfg = SamplerConfig(**{**config.__dict__, "seed": int(s)})
        parts.append(Chain(session, hyperparams, validator, cfg, universe).run())
    samples = [x for p in parts for x in p.samples]
    proposed = sum(p.diagnostics["proposed"] for p in parts)
    diag = {
        "acceptance_rate": sum(p.diagnostics["acceptance_rate"] * p.diagnostics["proposed"] for p in parts)
        / max(proposed, 1),
        "retained": len(samples),
        "proposed": proposed,
        "distinct_plans": len({k for k, _ in samples}),
        "chains": chains,
    }
    return _summary(universe, samples, diag)
