"""``planinfer`` command line: validate, infer, simulate, evaluate, exact.

Exit codes: 0 success, 1 input error, 2 invalid plan (``validate`` only).
``PLANINFER_SEED`` overrides the default seed of ``infer`` and ``simulate``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import TooLarge, evaluate, exact_posterior, mean_metrics
from .formats import (
    SchemaError,
    apply_predicate_map,
    plan_from_json,
    plan_to_json,
    read_json,
    read_plan,
    read_session,
    session_to_json,
    write_json,
)
from .model import EmptySession, Hyperparams, PredicateUniverse
from .pddl import PDDLError, load_domain, load_problem
from .sampler import KERNELS, PosteriorSummary, SamplerConfig, infer
from .simulator import SimConfig, UniverseMismatch, generate_session, make_distractors
from .validator import UnknownActionPolicy, validate


class InputError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything ``infer`` needs; checked before any sampling starts."""

    session: Path
    domain: Path | None = None
    problem: Path | None = None
    output: Path | None = None
    no_pddl: bool = False
    hyperparams: Hyperparams = field(default_factory=Hyperparams)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    chains: int = 1
    predicate_map: Path | None = None
    max_samples: int = 100

    def __post_init__(self):
        has_pddl = self.domain is not None and self.problem is not None
        if self.no_pddl and (self.domain is not None or self.problem is not None):
            raise InputError("--no-pddl excludes --domain/--problem")
        if not self.no_pddl and not has_pddl:
            raise InputError("--domain and --problem are required unless --no-pddl is given")
        if self.predicate_map is not None and self.no_pddl:
            raise InputError("--predicate-map needs --domain/--problem to resolve argument types")
        if self.chains < 1:
            raise InputError("--chains must be >= 1")


def _default_seed() -> int:
    raw = os.environ.get("PLANINFER_SEED")
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"PLANINFER_SEED must be an integer, got {raw!r}") from None


def _emit(data, out: Path | None) -> None:
    if out is None:
        json.dump(data, sys.stdout, indent=1)
        sys.stdout.write("\n")
    else:
        write_json(out, data)


def _load_pddl(domain_path, problem_path):
    domain = load_domain(domain_path)
    return domain, load_problem(problem_path, domain)


# --------------------------------------------------------------------------
# subcommands

def cmd_validate(args) -> int:
    domain, problem = _load_pddl(args.domain, args.problem)
    plan = read_plan(args.plan)
    policy = UnknownActionPolicy.IGNORE if args.ignore_unknown else UnknownActionPolicy.STRICT
    result = validate(domain, problem, plan, policy)
    _emit(result.to_json(), None)
    return 0 if result.valid else 2


def summary_to_json(summary: PosteriorSummary, max_samples: int) -> dict:
    counts = summary.plan_counts()
    lps = summary.log_posteriors()
    ranked = sorted(counts.items(), key=lambda kc: (-kc[1], -lps[kc[0]], kc[0]))
    samples = [{"plan": plan_to_json(summary.plan_of(k)), "count": c, "log_posterior": lps[k]}
               for k, c in ranked[:max_samples]]
    marginals = [{"predicate": p.as_list(), "distribution": {str(r): q for r, q in dist.items()}}
                 for p, dist in summary.marginals.items()]
    return {
        "map_plan": plan_to_json(summary.map_plan),
        "map_log_posterior": summary.map_log_posterior,
        "samples": samples,
        "samples_total": len(summary.samples),
        "marginals": marginals,
        "diagnostics": summary.diagnostics,
    }


def cmd_infer(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    hp = Hyperparams(args.alpha, args.beta, args.wp)
    burn = args.burn_in / args.gibbs if args.burn_in is not None else 0.5
    policy = UnknownActionPolicy.IGNORE if args.ignore_unknown else UnknownActionPolicy.STRICT
    try:
        sampler = SamplerConfig(gibbs_steps=args.gibbs, mh_steps_per_gibbs=args.mh, thin=args.thin,
                                burn_in_fraction=burn, seed=seed, unknown_action_policy=policy,
                                kernel=args.kernel)
    except ValueError as e:
        raise InputError(str(e)) from None
    cfg = RunConfig(session=args.session, domain=args.domain, problem=args.problem, output=args.out,
                    no_pddl=args.no_pddl, hyperparams=hp, sampler=sampler, chains=args.chains,
                    predicate_map=args.predicate_map, max_samples=args.max_samples)
    session = read_session(cfg.session)
    domain = problem = None
    if not cfg.no_pddl:
        domain, problem = _load_pddl(cfg.domain, cfg.problem)
        if cfg.predicate_map is not None:
            session = apply_predicate_map(session, read_json(cfg.predicate_map), domain, problem)
    summary = infer(session, domain, problem, cfg.hyperparams, cfg.sampler, chains=cfg.chains)
    _emit(summary_to_json(summary, cfg.max_samples), cfg.output)
    return 0


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    plan = read_plan(args.plan)
    preds = sorted({p for step in plan for p in step})
    try:
        cfg = SimConfig(utterances=args.utterances, mean_length=args.mean_len, seed=seed)
        universe = list(preds)
        if args.distractors:
            universe += make_distractors(preds, args.distractors, np.random.default_rng([seed, 1]))
    except ValueError as e:
        raise InputError(str(e)) from None
    session, truth = generate_session(plan, universe, cfg)
    _emit(session_to_json(session), args.out_session)
    _emit(truth.to_json(), args.out_truth)
    return 0


def _weighted_plans(data) -> list:
    if not isinstance(data, dict) or not isinstance(data.get("samples"), list) or not data["samples"]:
        raise SchemaError("--score mean-over-samples needs an inference summary with samples")
    out = []
    for s in data["samples"]:
        if not isinstance(s, dict) or "plan" not in s:
            raise SchemaError("each sample needs a 'plan'")
        count = s.get("count", 1)
        if not isinstance(count, (int, float)) or count < 0:
            raise SchemaError("sample counts must be non-negative numbers")
        out.append((plan_from_json(s["plan"]), count))
    return out


def cmd_evaluate(args) -> int:
    truth = read_plan(args.truth)
    if not any(truth):
        raise InputError("truth plan is empty")
    mentioned = set(read_session(args.session).mentions())
    data = read_json(args.inferred)
    if args.score == "map":
        metrics = evaluate(plan_from_json(data), truth, mentioned)
    else:
        metrics = mean_metrics(_weighted_plans(data), truth, mentioned)
    _emit(metrics.to_json(), args.out)
    return 0


def cmd_exact(args) -> int:
    session = read_session(args.session)
    hp = Hyperparams(args.alpha, args.beta, args.wp)
    domain = problem = None
    if not args.no_pddl:
        if args.domain is None or args.problem is None:
            raise InputError("--domain and --problem are required unless --no-pddl is given")
        domain, problem = _load_pddl(args.domain, args.problem)
    else:
        hp = Hyperparams(0.0, hp.beta, hp.w_p)
    universe = PredicateUniverse.from_session(session)
    post = exact_posterior(session, universe, hp, domain, problem)
    ranked = sorted(post, key=lambda kv: -kv[1])
    _emit({"posterior": [{"plan": plan_to_json(p), "probability": q} for p, q in ranked]}, args.out)
    return 0


# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="planinfer", description="Infer a team's final plan from structured dialog.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def unknown_flags(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--strict-actions", action="store_true",
                       help="unknown actions make a plan invalid (default)")
        g.add_argument("--ignore-unknown", action="store_true", help="skip actions the domain cannot ground")

    def model_flags(p):
        p.add_argument("--alpha", type=float, default=10.0, help="log prior weight of a valid plan")
        p.add_argument("--beta", type=float, default=5.0, help="log weight of a matching order")
        p.add_argument("--wp", type=float, default=0.8, help="probability a mention comes from its step")

    p = sub.add_parser("validate", help="check a stepped plan against a domain and problem")
    p.add_argument("domain", type=Path)
    p.add_argument("problem", type=Path)
    p.add_argument("plan", type=Path)
    unknown_flags(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("infer", help="sample the posterior over final plans")
    p.add_argument("session", type=Path)
    p.add_argument("--domain", type=Path)
    p.add_argument("--problem", type=Path)
    p.add_argument("--no-pddl", action="store_true", help="uninformative plan prior")
    model_flags(p)
    p.add_argument("--gibbs", type=int, default=3000, help="Gibbs sweeps")
    p.add_argument("--mh", type=int, default=400, help="MH steps per sweep")
    p.add_argument("--thin", type=int, default=20, help="keep every n-th MH step after burn-in")
    p.add_argument("--burn-in", type=int, default=None, help="burn-in sweeps (default: half of --gibbs)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--chains", type=int, default=1)
    p.add_argument("--kernel", choices=KERNELS, default="collapsed",
                   help="collapsed: assignments summed out (default); gibbs: MH within Gibbs")
    p.add_argument("--predicate-map", type=Path)
    p.add_argument("--max-samples", type=int, default=100, help="distinct plans listed in the output")
    p.add_argument("--out", type=Path)
    unknown_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("simulate", help="generate a synthetic session from a plan")
    p.add_argument("plan", type=Path)
    p.add_argument("--utterances", type=int, default=30)
    p.add_argument("--mean-len", type=float, default=3.0)
    p.add_argument("--distractors", type=int, default=0)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-session", type=Path)
    p.add_argument("--out-truth", type=Path)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="score an inferred plan against the truth")
    p.add_argument("inferred", type=Path)
    p.add_argument("truth", type=Path)
    p.add_argument("session", type=Path)
    p.add_argument("--score", choices=("map", "mean-over-samples"), default="map")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("exact", help="brute-force posterior for tiny sessions")
    p.add_argument("session", type=Path)
    p.add_argument("--domain", type=Path)
    p.add_argument("--problem", type=Path)
    p.add_argument("--no-pddl", action="store_true")
    model_flags(p)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_exact)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, json.JSONDecodeError, SchemaError, PDDLError, InputError, EmptySession,
            UniverseMismatch, TooLarge, ValueError) as e:
        print(f"planinfer {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
