import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import gp
from planinfer.pddl import (
    GroundedAction,
    GroundedPredicate,
    ParseError,
    TypeMismatch,
    UnknownAction,
    UnknownPredicate,
    UnsupportedFeature,
    applicable,
    apply,
    format_domain,
    format_problem,
    ground_action,
    parse_domain,
    parse_problem,
)


def test_fixture_domain_has_three_actions(domain):
    assert sorted(domain.action_map) == ["assess", "fix", "inspect"]
    assert domain.is_subtype("robot", "agent")
    assert not domain.is_subtype("room", "agent")


def test_fixture_problem(domain, problem):
    otypes = problem.object_types(domain)
    assert sorted(o for o, t in otypes.items() if t == "room") == list("abcdefgh")
    assert {o for o, t in otypes.items() if t == "robot"} == {"rr", "br"}
    assert {o for o, t in otypes.items() if t == "medic"} == {"rm", "bm"}
    assert otypes["mech"] == "mechanic"
    goal = set(problem.goal_pos)
    assert {("inspected", r) for r in "abcdefgh"} <= goal
    assert {("assessed", r) for r in "acfh"} <= goal
    assert {("fixed", r) for r in "bdeg"} <= goal
    assert len(goal) == 16 and not problem.goal_neg


def test_empty_action_list_is_valid():
    d = parse_domain("(define (domain empty) (:predicates (p)))")
    assert d.actions == ()


@pytest.mark.parametrize("text,construct", [
    ("(define (domain x) (:durative-action a))", "durative"),
    ("(define (domain x) (:functions (f)))", "functions"),
    ("(define (domain x) (:predicates (p ?a)) (:action a :parameters (?a)"
     " :precondition (forall (?b) (p ?b)) :effect (p ?a)))", "forall"),
    ("(define (domain x) (:predicates (p ?a)) (:action a :parameters (?a)"
     " :precondition (p ?a) :effect (when (p ?a) (p ?a))))", "when"),
])
def test_unsupported_features(text, construct):
    with pytest.raises(UnsupportedFeature, match=construct):
        parse_domain(text)


def test_parse_error_has_position():
    with pytest.raises(ParseError) as e:
        parse_domain("(define (domain x)\n  (:predicates (p ?a)")
    assert e.value.line >= 1 and e.value.column >= 1
    with pytest.raises(ParseError):
        parse_domain("(define (domain x)) )")


def test_schema_checks():
    base = "(define (domain x) (:predicates (p ?a) (q ?a)) (:action a :parameters (?a) {})"
    with pytest.raises(UnknownPredicate):
        parse_domain(base.format(":precondition (r ?a) :effect (p ?a))"))
    with pytest.raises(TypeMismatch):
        parse_domain(base.format(":precondition (p ?a ?a) :effect (p ?a))"))
    with pytest.raises(ParseError, match="free variable"):
        parse_domain(base.format(":precondition (p ?b) :effect (p ?a))"))
    # add and delete of one atom is only allowed as a lock on a positive precondition
    with pytest.raises(ParseError, match="both adds and deletes"):
        parse_domain(base.format(":precondition (p ?a) :effect (and (q ?a) (not (q ?a))))"))
    parse_domain(base.format(":precondition (p ?a) :effect (and (p ?a) (not (p ?a))))"))


def test_problem_checks(domain):
    head = "(define (problem p) (:domain rescue) (:objects a - room rr - robot) "
    with pytest.raises(UnknownPredicate):
        parse_problem(head + "(:init) (:goal (zap a)))", domain)
    with pytest.raises(TypeMismatch):
        parse_problem(head + "(:init (free a)) (:goal (and)))", domain)
    with pytest.raises(TypeMismatch):
        parse_problem(head + "(:init (inspected a rr)) (:goal (and)))", domain)
    with pytest.raises(TypeMismatch):
        parse_problem(head.replace("rescue", "other") + "(:init) (:goal (and)))", domain)
    with pytest.raises(UnsupportedFeature):
        parse_problem(head + "(:init) (:goal (and)) (:metric minimize (total-time)))", domain)


def test_empty_goal_is_trivially_satisfied(domain):
    p = parse_problem("(define (problem p) (:domain rescue) (:objects a - room) (:init) (:goal (and)))", domain)
    assert p.goal_holds(frozenset())


def test_case_folding_and_comments():
    d = parse_domain("; comment\n(DEFINE (DOMAIN Mixed) (:PREDICATES (P ?A)) ; trailing\n"
                     "(:ACTION Go :PARAMETERS (?A) :PRECONDITION (NOT (P ?A)) :EFFECT (P ?A)))")
    assert d.name == "mixed"
    a = d.action_map["go"]
    assert a.neg_pre == (("p", "?a"),) and a.add_effects == (("p", "?a"),)
    assert GroundedPredicate("Inspect", ("RR", "A")) == gp("inspect(rr, a)")


def test_round_trip_fixture(domain, problem):
    d2 = parse_domain(format_domain(domain))
    assert d2 == domain
    assert parse_problem(format_problem(problem), d2) == problem


names = st.sampled_from(["p", "q", "r", "s"])


@st.composite
def domains(draw):
    arity = {n: draw(st.integers(0, 2)) for n in ["p", "q", "r", "s"]}
    preds = " ".join(f"({n} {' '.join(f'?x{i}' for i in range(k))})" for n, k in arity.items())
    actions = []
    for ai in range(draw(st.integers(0, 3))):
        nparams = draw(st.integers(0, 2))
        params = [f"?v{i}" for i in range(nparams)]

        def atom(n):
            return f"({n} {' '.join(draw(st.sampled_from(params)) for _ in range(arity[n]))})"

        usable = [n for n in arity if arity[n] == 0 or params]
        if not usable:
            continue
        pos = [atom(n) for n in draw(st.lists(st.sampled_from(usable), max_size=2, unique=True))]
        neg = [f"(not {atom(n)})" for n in draw(st.lists(st.sampled_from(usable), max_size=1, unique=True))]
        adds = [atom(n) for n in draw(st.lists(st.sampled_from(usable), max_size=2, unique=True))]
        pre = " ".join(pos + neg)
        eff = " ".join(adds) or "(and)"
        actions.append(f"(:action a{ai} :parameters ({' '.join(params)}) "
                       f":precondition (and {pre}) :effect (and {eff}))")
    return f"(define (domain gen) (:requirements :strips) (:predicates {preds}) {' '.join(actions)})"


@given(domains())
def test_round_trip_generated(text):
    try:
        d = parse_domain(text)
    except ParseError:
        return  # a generated schema that adds and deletes the same atom
    assert parse_domain(format_domain(d)) == d


def test_ground_action_examples(domain, problem):
    ga = ground_action(domain, gp("inspect(rr,a)"), problem)
    assert isinstance(ga, GroundedAction)
    assert ga.pos_pre == {("free", "rr")}
    assert ("inspected", "a") in ga.add_effects
    assert ga.add_effects - {("free", "rr")} == {("inspected", "a")}
    assert isinstance(ground_action(domain, gp("inspect(rr)"), problem), UnknownAction)
    assert isinstance(ground_action(domain, gp("teleport(rr,a)"), problem), UnknownAction)
    assert isinstance(ground_action(domain, gp("inspect(rm,a)"), problem), UnknownAction)  # medic is no robot
    assert isinstance(ground_action(domain, gp("inspect(rr,zz)"), problem), UnknownAction)
    assert not ground_action(domain, gp("teleport(rr,a)"), problem)


AGENTS = {"inspect": ["rr", "br", "rm", "mech", "x"], "assess": ["rm", "bm", "rr"], "fix": ["mech", "br"]}
action_preds = st.builds(
    lambda name, i, room: GroundedPredicate(name, (AGENTS[name][i % len(AGENTS[name])], room)),
    st.sampled_from(sorted(AGENTS)), st.integers(0, 10), st.sampled_from(list("abcdefghz")))


@given(action_preds)
def test_grounding_binds_every_variable(pred):
    from planinfer.formats import rescue_domain, rescue_problem
    d = rescue_domain()
    ga = ground_action(d, pred, rescue_problem(d))
    if isinstance(ga, GroundedAction):
        atoms = ga.pos_pre | ga.neg_pre | ga.add_effects | ga.delete_effects
        assert not any(a.startswith("?") for atom in atoms for a in atom[1:])


def test_applicable_examples(domain, problem):
    assess = ground_action(domain, gp("assess(rm,a)"), problem)
    state = frozenset({("inspected", "a"), ("free", "rm"), ("has-patient", "a")})
    assert applicable(state, assess)
    assert not applicable(frozenset(), assess)
    assert applicable(frozenset(), GroundedAction("noop", ()))
    neg = GroundedAction("n", (), neg_pre=frozenset({("p",)}))
    assert applicable(frozenset(), neg) and not applicable(frozenset({("p",)}), neg)


def test_apply_examples(domain, problem):
    assert apply(problem.init, []) == problem.init
    inspect = ground_action(domain, gp("inspect(rr,a)"), problem)
    assert apply(problem.init, [inspect]) == problem.init | {("inspected", "a")}


atoms = st.frozensets(st.sampled_from([("p", x) for x in "abcdef"]), max_size=6)
actions = st.builds(lambda pre, add, dele: GroundedAction("g", (), pre, frozenset(), add, dele),
                    atoms, atoms, atoms)


@given(atoms, st.lists(actions, max_size=4), st.randoms())
def test_apply_ignores_action_order(state, acts, rnd):
    shuffled = list(acts)
    rnd.shuffle(shuffled)
    assert apply(state, acts) == apply(state, shuffled)


@given(atoms, atoms, actions)
def test_applicable_monotone_without_negative_preconditions(s1, extra, action):
    if applicable(s1, action):
        assert applicable(s1 | extra, action)


@pytest.mark.parametrize("text,expected", [
    ("inspect(rr, a)", GroundedPredicate("inspect", ("rr", "a"))),
    ("NOOP", GroundedPredicate("noop", ())),
    (" fix ( mech , b ) ", GroundedPredicate("fix", ("mech", "b"))),
])
def test_grounded_predicate_parse(text, expected):
    assert GroundedPredicate.parse(text) == expected
    assert GroundedPredicate.parse(str(expected)) == expected
