"""JSON file formats and bundled fixtures.

Session: ``{"utterances": [[[["name", "arg", ...], ...], ...], ...]}``
(utterance = list of groups, group = list of predicates).
Plan: ``{"steps": [[["name", "arg", ...], ...], ...]}``.
"""

from __future__ import annotations

import json
import os
import tempfile
from importlib import resources
from pathlib import Path

from .model import Session, Utterance
from .pddl import Domain, GroundedPredicate, Problem, load_domain, load_problem


class SchemaError(ValueError):
    pass


def _pred(obj) -> GroundedPredicate:
    if not isinstance(obj, list) or not obj or not all(isinstance(x, str) and x for x in obj):
        raise SchemaError(f"a predicate is a non-empty list of strings, got {obj!r}")
    return GroundedPredicate(obj[0], tuple(obj[1:]))


def _groups(obj, what: str) -> list[frozenset]:
    if not isinstance(obj, list):
        raise SchemaError(f"{what} must be a list of groups")
    groups = []
    for g in obj:
        if not isinstance(g, list) or not g:
            raise SchemaError(f"{what} groups must be non-empty lists of predicates")
        groups.append(frozenset(_pred(p) for p in g))
    return groups


def session_from_json(data) -> Session:
    if not isinstance(data, dict) or not isinstance(data.get("utterances"), list):
        raise SchemaError("session JSON needs an 'utterances' list")
    if not data["utterances"]:
        raise SchemaError("session has no utterances")
    utts = []
    for u in data["utterances"]:
        groups = _groups(u, "utterance")
        if not groups:
            raise SchemaError("empty utterance")
        utts.append(Utterance(tuple(groups)))
    return Session(tuple(utts))


def session_to_json(session: Session) -> dict:
    return {"utterances": [[[p.as_list() for p in sorted(g)] for g in u.groups] for u in session.utterances]}


def plan_from_json(data) -> tuple[frozenset, ...]:
    if isinstance(data, dict) and "true_plan" in data:
        data = data["true_plan"]
    if isinstance(data, dict) and "map_plan" in data:
        data = data["map_plan"]
    if not isinstance(data, dict) or not isinstance(data.get("steps"), list):
        raise SchemaError("plan JSON needs a 'steps' list")
    return tuple(_groups(data["steps"], "plan"))


def plan_to_json(plan) -> dict:
    return {"steps": [[p.as_list() for p in sorted(step)] for step in plan if step]}


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_json(path, data) -> None:
    """Write atomically: temp file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=1, sort_keys=False)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_session(path) -> Session:
    return session_from_json(read_json(path))


def read_plan(path) -> tuple[frozenset, ...]:
    return plan_from_json(read_json(path))


# --------------------------------------------------------------------------
# predicate maps: dialog shorthand -> domain actions

def apply_predicate_map(session: Session, mapping: dict, domain: Domain, problem: Problem) -> Session:
    """Rewrite shorthand predicates using the argument types of their objects.

    ``mapping`` is ``{"st": [{"types": ["robot", "room"], "action": "inspect"}, ...]}``;
    the first entry whose types accept the arguments wins. Unmapped
    predicates pass through unchanged.
    """
    otypes = problem.object_types(domain)
    rules = {k.lower(): v for k, v in mapping.items()}

    def rewrite(p: GroundedPredicate) -> GroundedPredicate:
        for rule in rules.get(p.name, ()):
            types = [t.lower() for t in rule["types"]]
            if len(types) == len(p.args) and all(
                    a in otypes and domain.is_subtype(otypes[a], t) for a, t in zip(p.args, types)):
                return GroundedPredicate(rule["action"], p.args)
        return p

    return Session(tuple(Utterance(tuple(frozenset(rewrite(p) for p in g) for g in u.groups))
                         for u in session.utterances))


# --------------------------------------------------------------------------
# bundled fixtures

def fixture_path(name: str) -> Path:
    return Path(str(resources.files("planinfer") / "fixtures" / name))


def rescue_domain(variant: str = "") -> Domain:
    return load_domain(fixture_path(f"rescue{variant}.domain.pddl"))


def rescue_problem(domain: Domain | None = None, variant: str = "") -> Problem:
    domain = domain or rescue_domain()
    return load_problem(fixture_path(f"rescue{variant}.problem.pddl"), domain)


def rescue_plan() -> tuple[frozenset, ...]:
    return read_plan(fixture_path("rescue.plan.json"))
