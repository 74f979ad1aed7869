"""Typed STRIPS subset of PDDL: parsing, printing, grounding and progression.

Atoms are plain tuples ``(predicate, arg1, arg2, ...)``. Lifted atoms carry
``?var`` arguments; ground atoms carry object names. Everything is lowercased
at parse time.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Union

Atom = tuple  # (name, *args)
State = frozenset  # of ground atoms, closed world

_IDENT = re.compile(r"^[a-z][a-z0-9_\-]*$")

_UNSUPPORTED_SECTIONS = {
    ":durative-action": "durative actions",
    ":functions": "numeric fluents",
    ":derived": "derived predicates",
    ":constraints": "trajectory constraints",
    ":metric": "plan metrics",
}
_UNSUPPORTED_FORMULAS = {
    "forall": "universal quantifiers",
    "exists": "existential quantifiers",
    "when": "conditional effects",
    "or": "disjunctive conditions",
    "imply": "implications",
    "=": "equality",
    "increase": "numeric effects",
    "decrease": "numeric effects",
    "assign": "numeric effects",
    "scale-up": "numeric effects",
    "scale-down": "numeric effects",
    "at": "timed literals",
    "over": "temporal conditions",
}


class PDDLError(Exception):
    pass


class ParseError(PDDLError):
    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.line = line
        self.column = column
        super().__init__(f"{line}:{column}: {message}" if line else message)


class UnsupportedFeature(PDDLError):
    def __init__(self, construct: str, line: int = 0, column: int = 0):
        self.construct = construct
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}unsupported PDDL feature: {construct}")


class TypeMismatch(PDDLError):
    pass


class UnknownPredicate(PDDLError):
    pass


# --------------------------------------------------------------------------
# s-expressions

@dataclass(frozen=True)
class Token:
    text: str
    line: int
    column: int

    def __str__(self):
        return self.text


class SList(list):
    """A parenthesised group remembering where it opened."""

    def __init__(self, items=(), line=0, column=0):
        super().__init__(items)
        self.line = line
        self.column = column


def tokenize(text: str) -> Iterator[Token]:
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line, col = line + 1, 1
            i += 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if c == ";":
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c in "()":
            yield Token(c, line, col)
            i += 1
            col += 1
            continue
        start, start_col = i, col
        while i < n and not text[i].isspace() and text[i] not in "();":
            i += 1
            col += 1
        yield Token(text[start:i].lower(), line, start_col)


def parse_sexpr(text: str) -> SList:
    """Parse exactly one top-level s-expression."""
    stack: list[SList] = []
    result = None
    last = Token("", 1, 1)
    for tok in tokenize(text):
        last = tok
        if result is not None:
            raise ParseError("expected end of input", tok.line, tok.column)
        if tok.text == "(":
            stack.append(SList(line=tok.line, column=tok.column))
        elif tok.text == ")":
            if not stack:
                raise ParseError("unbalanced ')'", tok.line, tok.column)
            done = stack.pop()
            if stack:
                stack[-1].append(done)
            else:
                result = done
        else:
            if not stack:
                raise ParseError("expected '('", tok.line, tok.column)
            stack[-1].append(tok)
    if stack:
        raise ParseError("expected ')' before end of input", last.line, last.column)
    if result is None:
        raise ParseError("expected '(' but input is empty", 1, 1)
    return result


def _where(node) -> tuple[int, int]:
    return node.line, node.column


def _sym(node, what: str) -> str:
    if not isinstance(node, Token) or node.text in "()":
        line, col = _where(node)
        raise ParseError(f"expected {what}", line, col)
    return node.text


def _ident(node, what: str = "identifier") -> str:
    text = _sym(node, what)
    if not _IDENT.match(text):
        raise ParseError(f"expected {what}, got {text!r}", node.line, node.column)
    return text


def _var(node) -> str:
    text = _sym(node, "variable")
    if not (text.startswith("?") and _IDENT.match(text[1:])):
        raise ParseError(f"expected variable, got {text!r}", node.line, node.column)
    return text


def _expect_list(node, what: str) -> SList:
    if not isinstance(node, SList):
        raise ParseError(f"expected {what}", *_where(node))
    return node


def _typed_list(items: list, element) -> list[tuple[str, str]]:
    """Parse ``a b - t c`` into [(a, t), (b, t), (c, object)]."""
    out: list[tuple[str, str]] = []
    pending: list[str] = []
    i = 0
    while i < len(items):
        node = items[i]
        if isinstance(node, Token) and node.text == "-":
            if not pending or i + 1 >= len(items):
                raise ParseError("expected names before and a type after '-'", *_where(node))
            tnode = items[i + 1]
            if isinstance(tnode, SList):
                if tnode and isinstance(tnode[0], Token) and tnode[0].text == "either":
                    raise UnsupportedFeature("either types", *_where(tnode))
                raise ParseError("expected type name", *_where(tnode))
            t = _ident(tnode, "type name")
            out.extend((p, t) for p in pending)
            pending = []
            i += 2
            continue
        pending.append(element(node))
        i += 1
    out.extend((p, "object") for p in pending)
    return out


# --------------------------------------------------------------------------
# domain model

@dataclass(frozen=True)
class TypeDecl:
    name: str
    parent: str | None = None


@dataclass(frozen=True)
class PredicateSchema:
    name: str
    params: tuple[tuple[str, str], ...] = ()

    @property
    def arity(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ActionSchema:
    name: str
    params: tuple[tuple[str, str], ...]
    pos_pre: tuple[Atom, ...] = ()
    neg_pre: tuple[Atom, ...] = ()
    add_effects: tuple[Atom, ...] = ()
    delete_effects: tuple[Atom, ...] = ()


@dataclass(frozen=True)
class Domain:
    name: str
    types: tuple[TypeDecl, ...] = ()
    predicates: tuple[PredicateSchema, ...] = ()
    actions: tuple[ActionSchema, ...] = ()
    constants: tuple[tuple[str, str], ...] = ()
    requirements: tuple[str, ...] = ()

    def __post_init__(self):
        names = [p.name for p in self.predicates]
        if len(set(names)) != len(names):
            raise ParseError("duplicate predicate name")
        anames = [a.name for a in self.actions]
        if len(set(anames)) != len(anames):
            raise ParseError("duplicate action name")
        clash = set(names) & set(anames)
        if clash:
            raise ParseError(f"names used as both action and predicate: {sorted(clash)}")
        parents = {t.name: t.parent for t in self.types}
        for t in parents:
            seen = {t}
            p = parents.get(t)
            while p is not None and p != "object":
                if p in seen:
                    raise ParseError(f"cyclic type hierarchy at {t!r}")
                seen.add(p)
                p = parents.get(p)

    @property
    def predicate_map(self) -> dict[str, PredicateSchema]:
        return {p.name: p for p in self.predicates}

    @property
    def action_map(self) -> dict[str, ActionSchema]:
        return {a.name: a for a in self.actions}

    def type_names(self) -> set[str]:
        return {"object"} | {t.name for t in self.types}

    def is_subtype(self, child: str, ancestor: str) -> bool:
        if ancestor == "object":
            return True
        parents = {t.name: t.parent for t in self.types}
        seen = set()
        while child is not None and child not in seen:
            if child == ancestor:
                return True
            seen.add(child)
            child = parents.get(child)
        return False


@dataclass(frozen=True)
class Problem:
    name: str
    domain_name: str
    objects: tuple[tuple[str, str], ...] = ()
    init: frozenset = frozenset()
    goal_pos: tuple[Atom, ...] = ()
    goal_neg: tuple[Atom, ...] = ()

    def object_types(self, domain: Domain | None = None) -> dict[str, str]:
        types = dict(domain.constants) if domain is not None else {}
        types.update(self.objects)
        return types

    def goal_holds(self, state) -> bool:
        return all(a in state for a in self.goal_pos) and not any(a in state for a in self.goal_neg)


@dataclass(frozen=True, order=True)
class GroundedPredicate:
    """An action name applied to concrete objects, e.g. ``inspect(rr, a)``."""

    name: str
    args: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "name", self.name.lower())
        object.__setattr__(self, "args", tuple(a.lower() for a in self.args))

    @classmethod
    def parse(cls, text: str) -> "GroundedPredicate":
        m = re.fullmatch(r"\s*([^\s(),]+)\s*(?:\(([^()]*)\))?\s*", text)
        if not m:
            raise ValueError(f"not a grounded predicate: {text!r}")
        args = [a.strip() for a in (m.group(2) or "").split(",") if a.strip()]
        return cls(m.group(1), tuple(args))

    def as_list(self) -> list[str]:
        return [self.name, *self.args]

    def __str__(self):
        return f"{self.name}({', '.join(self.args)})"


@dataclass(frozen=True)
class GroundedAction:
    name: str
    args: tuple[str, ...]
    pos_pre: frozenset = frozenset()
    neg_pre: frozenset = frozenset()
    add_effects: frozenset = frozenset()
    delete_effects: frozenset = frozenset()

    @property
    def predicate(self) -> GroundedPredicate:
        return GroundedPredicate(self.name, self.args)

    def __str__(self):
        return str(self.predicate)


@dataclass(frozen=True)
class UnknownAction:
    """Marker for a dialog predicate that binds to no action schema."""

    predicate: GroundedPredicate
    reason: str = ""

    def __bool__(self):
        return False


# --------------------------------------------------------------------------
# parsing

def _check_header(node, keyword: str) -> str:
    hdr = _expect_list(node, f"({keyword} <name>)")
    if len(hdr) != 2 or not isinstance(hdr[0], Token) or hdr[0].text != keyword:
        raise ParseError(f"expected ({keyword} <name>)", *_where(hdr))
    return _ident(hdr[1], f"{keyword} name")


def _sections(root: SList, kind: str):
    if not root or not isinstance(root[0], Token) or root[0].text != "define":
        raise ParseError("expected 'define'", *_where(root))
    if len(root) < 2:
        raise ParseError(f"expected ({kind} <name>)", *_where(root))
    name = _check_header(root[1], kind)
    sections = []
    for sec in root[2:]:
        sec = _expect_list(sec, "section")
        if not sec or not isinstance(sec[0], Token) or not sec[0].text.startswith(":"):
            raise ParseError("expected section keyword", *_where(sec))
        key = sec[0].text
        if key in _UNSUPPORTED_SECTIONS:
            raise UnsupportedFeature(f"{key} ({_UNSUPPORTED_SECTIONS[key]})", sec[0].line, sec[0].column)
        sections.append((key, sec))
    return name, sections


def _parse_atom(node, element, what="atom") -> Atom:
    lst = _expect_list(node, what)
    if not lst:
        raise ParseError(f"expected {what}", *_where(lst))
    head = _sym(lst[0], "predicate name")
    if head in _UNSUPPORTED_FORMULAS:
        raise UnsupportedFeature(f"{head} ({_UNSUPPORTED_FORMULAS[head]})", lst[0].line, lst[0].column)
    _ident(lst[0], "predicate name")
    return (head, *(element(a) for a in lst[1:]))


def _parse_literals(node, element, what) -> tuple[list[Atom], list[Atom]]:
    """Flatten a conjunction of literals into (positive, negative)."""
    pos: list[Atom] = []
    neg: list[Atom] = []
    lst = _expect_list(node, what)
    if not lst:
        return pos, neg
    head = _sym(lst[0], "connective or predicate")
    if head == "and":
        for sub in lst[1:]:
            p, n = _parse_literals(sub, element, what)
            pos += p
            neg += n
        return pos, neg
    if head == "not":
        if len(lst) != 2:
            raise ParseError("expected (not <atom>)", *_where(lst))
        inner = _expect_list(lst[1], "atom")
        if inner and isinstance(inner[0], Token) and inner[0].text in ("and", "not"):
            raise UnsupportedFeature("negation of compound formula", *_where(inner))
        neg.append(_parse_atom(inner, element))
        return pos, neg
    pos.append(_parse_atom(lst, element))
    return pos, neg


def _term(node) -> str:
    text = _sym(node, "term")
    if text.startswith("?"):
        return _var(node)
    return _ident(node, "term")


def _check_atom(atom: Atom, preds: dict[str, PredicateSchema], arg_type, where: str,
                is_subtype) -> None:
    schema = preds.get(atom[0])
    if schema is None:
        raise UnknownPredicate(f"{where}: unknown predicate {atom[0]!r}")
    if len(atom) - 1 != schema.arity:
        raise TypeMismatch(f"{where}: {atom[0]} expects {schema.arity} arguments, got {len(atom) - 1}")
    for arg, (_, ptype) in zip(atom[1:], schema.params):
        t = arg_type(arg)
        if not is_subtype(t, ptype):
            raise TypeMismatch(f"{where}: argument {arg!r} of type {t!r} is not a {ptype!r} in {atom[0]}")


def _parse_action(sec: SList, preds, constants, is_subtype, type_names) -> ActionSchema:
    if len(sec) < 2:
        raise ParseError("expected action name", *_where(sec))
    name = _ident(sec[1], "action name")
    fields: dict[str, object] = {}
    i = 2
    while i < len(sec):
        key = _sym(sec[i], "action keyword")
        if key not in (":parameters", ":precondition", ":effect"):
            raise ParseError(f"expected :parameters, :precondition or :effect, got {key!r}",
                             sec[i].line, sec[i].column)
        if i + 1 >= len(sec):
            raise ParseError(f"missing value for {key}", sec[i].line, sec[i].column)
        fields[key] = sec[i + 1]
        i += 2
    params = _typed_list(list(_expect_list(fields.get(":parameters", SList()), "parameter list")), _var)
    pnames = [p for p, _ in params]
    if len(set(pnames)) != len(pnames):
        raise ParseError(f"duplicate parameter in action {name!r}", *_where(sec))
    for _, t in params:
        if t not in type_names:
            raise TypeMismatch(f"action {name}: unknown type {t!r}")
    ptypes = dict(params)

    def arg_type(a):
        if a.startswith("?"):
            if a not in ptypes:
                raise ParseError(f"free variable {a} in action {name!r}", *_where(sec))
            return ptypes[a]
        if a not in constants:
            raise TypeMismatch(f"action {name}: unknown constant {a!r}")
        return constants[a]

    pos_pre, neg_pre = ([], [])
    if ":precondition" in fields:
        pos_pre, neg_pre = _parse_literals(fields[":precondition"], _term, "precondition")
    adds, dels = ([], [])
    if ":effect" in fields:
        adds, dels = _parse_literals(fields[":effect"], _term, "effect")
    for atom in pos_pre + neg_pre + adds + dels:
        _check_atom(atom, preds, arg_type, f"action {name}", is_subtype)
    # An atom both deleted and re-added is only meaningful as a lock that the
    # action also requires; anything else is a schema error.
    for atom in set(adds) & set(dels):
        if atom not in pos_pre:
            raise ParseError(f"action {name!r} both adds and deletes {_fmt_atom(atom)}", *_where(sec))
    return ActionSchema(name, tuple(params), tuple(pos_pre), tuple(neg_pre),
                        tuple(dict.fromkeys(adds)), tuple(dict.fromkeys(dels)))


def parse_domain(text: str) -> Domain:
    """Parse domain text in the typed STRIPS subset."""
    root = parse_sexpr(text)
    name, sections = _sections(root, "domain")
    requirements: list[str] = []
    types: list[TypeDecl] = []
    constants: list[tuple[str, str]] = []
    predicates: list[PredicateSchema] = []
    raw_actions = []
    for key, sec in sections:
        if key == ":requirements":
            requirements += [_sym(t, "requirement") for t in sec[1:]]
        elif key == ":types":
            for child, parent in _typed_list(sec[1:], lambda n: _ident(n, "type name")):
                types.append(TypeDecl(child, None if parent == "object" else parent))
        elif key == ":constants":
            constants += _typed_list(sec[1:], lambda n: _ident(n, "constant"))
        elif key == ":predicates":
            for p in sec[1:]:
                p = _expect_list(p, "predicate declaration")
                if not p:
                    raise ParseError("expected predicate name", *_where(p))
                pname = _ident(p[0], "predicate name")
                params = _typed_list(list(p[1:]), _var)
                if len({v for v, _ in params}) != len(params):
                    raise ParseError(f"duplicate parameter in predicate {pname!r}", *_where(p))
                predicates.append(PredicateSchema(pname, tuple(params)))
        elif key == ":action":
            raw_actions.append(sec)
        else:
            raise ParseError(f"unexpected section {key!r}", sec[0].line, sec[0].column)
    declared = {t.name for t in types} | {"object"}
    for t in list(types):
        if t.parent is not None and t.parent not in declared:
            # a type used only as a parent is implicitly an object subtype
            types.append(TypeDecl(t.parent, None))
            declared.add(t.parent)
    shell = Domain(name, tuple(types), tuple(predicates), (), tuple(constants), tuple(requirements))
    type_names = shell.type_names()
    for t in types:
        if t.parent is not None and t.parent not in type_names:
            raise TypeMismatch(f"type {t.name!r} has undeclared parent {t.parent!r}")
    for p in predicates:
        for _, t in p.params:
            if t not in type_names:
                raise TypeMismatch(f"predicate {p.name}: unknown type {t!r}")
    consts = dict(constants)
    preds = shell.predicate_map
    actions = tuple(_parse_action(sec, preds, consts, shell.is_subtype, type_names) for sec in raw_actions)
    return Domain(name, tuple(types), tuple(predicates), actions, tuple(constants), tuple(requirements))


def parse_problem(text: str, domain: Domain) -> Problem:
    root = parse_sexpr(text)
    name, sections = _sections(root, "problem")
    domain_name = None
    objects: list[tuple[str, str]] = []
    init_nodes = []
    goal_node = None
    for key, sec in sections:
        if key == ":domain":
            if len(sec) != 2:
                raise ParseError("expected (:domain <name>)", *_where(sec))
            domain_name = _ident(sec[1], "domain name")
        elif key == ":objects":
            objects += _typed_list(sec[1:], lambda n: _ident(n, "object name"))
        elif key == ":init":
            init_nodes = list(sec[1:])
        elif key == ":goal":
            if len(sec) != 2:
                raise ParseError("expected (:goal <formula>)", *_where(sec))
            goal_node = sec[1]
        elif key == ":requirements":
            continue
        else:
            raise ParseError(f"unexpected section {key!r}", sec[0].line, sec[0].column)
    if domain_name is None:
        raise ParseError("missing (:domain <name>)", *_where(root))
    if domain_name != domain.name:
        raise TypeMismatch(f"problem targets domain {domain_name!r}, not {domain.name!r}")
    type_names = domain.type_names()
    for obj, t in objects:
        if t not in type_names:
            raise TypeMismatch(f"object {obj!r} has unknown type {t!r}")
    names = [o for o, _ in objects] + [c for c, _ in domain.constants]
    if len(set(names)) != len(names):
        raise ParseError("duplicate object name")
    otypes = dict(domain.constants)
    otypes.update(objects)

    def arg_type(a):
        if a not in otypes:
            raise TypeMismatch(f"unknown object {a!r}")
        return otypes[a]

    preds = domain.predicate_map
    init = []
    for node in init_nodes:
        atom = _parse_atom(node, lambda n: _ident(n, "object name"), "ground atom")
        _check_atom(atom, preds, arg_type, "init", domain.is_subtype)
        init.append(atom)
    gpos: list[Atom] = []
    gneg: list[Atom] = []
    if goal_node is not None:
        gpos, gneg = _parse_literals(goal_node, lambda n: _ident(n, "object name"), "goal")
        for atom in gpos + gneg:
            _check_atom(atom, preds, arg_type, "goal", domain.is_subtype)
    return Problem(name, domain_name, tuple(objects), frozenset(init), tuple(gpos), tuple(gneg))


def load_domain(path) -> Domain:
    with open(path, encoding="utf-8") as fh:
        return parse_domain(fh.read())


def load_problem(path, domain: Domain) -> Problem:
    with open(path, encoding="utf-8") as fh:
        return parse_problem(fh.read(), domain)


# --------------------------------------------------------------------------
# printing

def _fmt_atom(atom: Atom) -> str:
    return "(" + " ".join(atom) + ")"


def _fmt_typed(items) -> str:
    return " ".join(f"{n} - {t}" for n, t in items)


def _fmt_conj(pos, neg) -> str:
    parts = [_fmt_atom(a) for a in pos] + [f"(not {_fmt_atom(a)})" for a in neg]
    return "(and " + " ".join(parts) + ")" if parts else "(and)"


def format_domain(domain: Domain) -> str:
    lines = [f"(define (domain {domain.name})"]
    if domain.requirements:
        lines.append(f"  (:requirements {' '.join(domain.requirements)})")
    if domain.types:
        lines.append("  (:types " + " ".join(f"{t.name} - {t.parent or 'object'}" for t in domain.types) + ")")
    if domain.constants:
        lines.append(f"  (:constants {_fmt_typed(domain.constants)})")
    lines.append("  (:predicates")
    for p in domain.predicates:
        inner = " ".join([p.name] + [f"{v} - {t}" for v, t in p.params])
        lines.append(f"    ({inner})")
    lines.append("  )")
    for a in domain.actions:
        lines.append(f"  (:action {a.name}")
        lines.append(f"    :parameters ({_fmt_typed(a.params)})")
        lines.append(f"    :precondition {_fmt_conj(a.pos_pre, a.neg_pre)}")
        lines.append(f"    :effect {_fmt_conj(a.add_effects, a.delete_effects)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


def format_problem(problem: Problem) -> str:
    lines = [f"(define (problem {problem.name})", f"  (:domain {problem.domain_name})"]
    if problem.objects:
        lines.append(f"  (:objects {_fmt_typed(problem.objects)})")
    lines.append("  (:init " + " ".join(_fmt_atom(a) for a in sorted(problem.init)) + ")")
    lines.append(f"  (:goal {_fmt_conj(problem.goal_pos, problem.goal_neg)})")
    lines.append(")")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# grounding and progression

def _bind(atom: Atom, binding: dict[str, str]) -> Atom:
    return (atom[0], *(binding.get(a, a) for a in atom[1:]))


def ground_action(domain: Domain, pred: GroundedPredicate,
                  problem: Problem) -> Union[GroundedAction, UnknownAction]:
    """Bind a dialog predicate to its action schema.

    Returns an :class:`UnknownAction` marker (not an exception) when there is
    no schema of that name or the arguments do not fit its parameters.
    """
    schema = domain.action_map.get(pred.name)
    if schema is None:
        return UnknownAction(pred, "no such action")
    if len(pred.args) != len(schema.params):
        return UnknownAction(pred, f"expects {len(schema.params)} arguments")
    otypes = problem.object_types(domain)
    binding = {}
    for arg, (var, ptype) in zip(pred.args, schema.params):
        t = otypes.get(arg)
        if t is None:
            return UnknownAction(pred, f"unknown object {arg!r}")
        if not domain.is_subtype(t, ptype):
            return UnknownAction(pred, f"{arg!r} is not a {ptype}")
        binding[var] = arg
    return GroundedAction(
        pred.name,
        pred.args,
        frozenset(_bind(a, binding) for a in schema.pos_pre),
        frozenset(_bind(a, binding) for a in schema.neg_pre),
        frozenset(_bind(a, binding) for a in schema.add_effects),
        frozenset(_bind(a, binding) for a in schema.delete_effects),
    )


def applicable(state, action: GroundedAction) -> bool:
    return action.pos_pre <= state and not (action.neg_pre & state)


def apply(state, actions: Iterable[GroundedAction]) -> frozenset:
    """Apply a set of non-interfering actions jointly: deletes, then adds."""
    actions = list(actions)
    deletes = set().union(*(a.delete_effects for a in actions))
    adds = set().union(*(a.add_effects for a in actions))
    return frozenset((set(state) - deletes) | adds)
