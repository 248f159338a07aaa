"""Automated market makers as level sets: stable points, operators, composition."""
from __future__ import annotations

from .compose import (
    ParComposed,
    SeqComposed,
    SplitResult,
    demonstrate_naive_ambiguity,
    optimal_split,
    optimal_split_detail,
    par_compose,
    seq_compose_2d,
    seq_compose_many_to_many,
    seq_compose_many_to_one,
    split_return,
)
from .config import NetworkConfig, load_config, parse_config
from .core import (
    DEFAULT_TOL,
    AmmDef,
    AmmInstance,
    ConstantMean,
    ConstantProduct,
    ExplicitGraph,
    Linear,
    ProfitLoss,
    Relabeled,
    StateVector,
    Tolerances,
    Valuation,
    evaluate,
    gradient,
    implicit_solve,
    solve_coordinate,
    trade,
)
from .errors import (
    AmmError,
    ConfigError,
    ConvergenceError,
    DimensionError,
    DomainError,
    InfeasibleError,
    NonConformingError,
    OffManifoldError,
)
from .fees import FeeAmm, with_fee
from .operators import (
    VirtualizationSpec,
    devirtualize,
    inherit_valuation,
    project,
    solve_along_valuation,
    virtualize,
)
from .axioms import check_axioms
from .report import Case, VerifyReport
from .stable import StablePointResult, brute_force_stable, equivalence_map, stable_point, valuation_of
from .verify import run_axiom_suite, run_builtin, run_theorem_suite

__version__ = "0.1.0"
