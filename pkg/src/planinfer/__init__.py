"""Infer a team's final plan from structured planning dialog.

A Bayesian model couples a PDDL-validity prior over stepped plans with a
noisy model of how predicates and their relative order are mentioned, and
samples the plan posterior with Metropolis-Hastings within Gibbs.
"""

__version__ = "0.1.0"

from .model import Hyperparams, PredicateUniverse, Session, Utterance
from .pddl import GroundedPredicate, load_domain, load_problem
from .sampler import PosteriorSummary, SamplerConfig, infer
from .validator import UnknownActionPolicy, ValidationResult, validate

__all__ = [
    "GroundedPredicate", "Hyperparams", "PosteriorSummary", "PredicateUniverse", "SamplerConfig",
    "Session", "UnknownActionPolicy", "Utterance", "ValidationResult", "infer", "load_domain",
    "load_problem", "validate",
]
