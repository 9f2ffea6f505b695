"""Probabilistic Event Calculus domains compiled to MDPs."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CapacityError,
    CProposition,
    Domain,
    FluentDecl,
    FluentState,
    IProposition,
    PartialFluentState,
    PecError,
    PProposition,
    ValidationError,
    ValidationReport,
    entails,
    validate,
)
from .parser import ParseError, SourceSpan, parse_domain, parse_file, render_domain  # noqa: E402
from .compiler import PecMdp, compile_domain  # noqa: E402
from .projection import Query, StateDistribution, ZeroConditionProbability, project, propagate  # noqa: E402
from .planning import PolicyTable, RewardSpec, build_reward, simulate, solve_finite_horizon, solve_stationary  # noqa: E402
from .decompiler import PPropSet, RequiresDeterministic, decompile, roundtrip_check  # noqa: E402
from .oracle import enumerate_worlds, oracle_project  # noqa: E402

__all__ = [
    "CProposition", "CapacityError", "Domain", "FluentDecl", "FluentState", "IProposition",
    "PPropSet", "PProposition", "ParseError", "PartialFluentState", "PecError", "PecMdp", "PolicyTable",
    "Query", "RequiresDeterministic", "RewardSpec", "SourceSpan", "StateDistribution", "ValidationError",
    "ValidationReport", "ZeroConditionProbability", "build_reward", "compile_domain", "decompile",
    "entails", "enumerate_worlds", "oracle_project", "parse_domain", "parse_file", "project", "propagate",
    "render_domain", "roundtrip_check", "simulate", "solve_finite_horizon", "solve_stationary", "validate",
]
