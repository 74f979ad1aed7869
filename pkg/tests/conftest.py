import os

import pytest
from hypothesis import HealthCheck, settings

from planinfer.formats import rescue_domain, rescue_plan, rescue_problem
from planinfer.pddl import GroundedPredicate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def domain():
    return rescue_domain()


@pytest.fixture(scope="session")
def problem(domain):
    return rescue_problem(domain)


@pytest.fixture(scope="session")
def true_plan():
    return rescue_plan()


def gp(text: str) -> GroundedPredicate:
    return GroundedPredicate.parse(text)


def plan_of(*steps: str):
    """``plan_of("inspect(rr,a) inspect(br,e)", "assess(rm,a)")``"""
    return tuple(frozenset(gp(t) for t in step.split()) for step in steps)


# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'}  {detail}")
