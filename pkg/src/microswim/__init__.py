"""Planar two-link magnetic swimmer: model, series analysis, loop search."""

from .errors import (
    DegenerateParams,
    InconsistentMethods,
    MicroswimError,
    NonFiniteState,
    NonPositiveParameter,
    OracleMismatch,
    PoorFit,
    SingularResistance,
    StepSizeUnderflow,
    UndefinedRatio,
    ZeroMagnetization,
)
from .controllability import (
    Classification,
    ControllabilityClass,
    InequalityReport,
    LoopResult,
    SweepResult,
    SweepRow,
    classify,
    epsilon_sweep,
    lemma_bounds_check,
    loop_search,
)
from .expansion import TaylorReport, closed_form_constants, expansion_report
from .model import (
    ControlInput,
    FieldEval,
    PhysParams,
    SwimmerState,
    dynamics,
    f_table,
    field_eval,
    resistance_system,
    validate_params,
)
from .simulator import ControlSignal, Trajectory, equivariance_check, integrate
from .transform import (
    DerivedConstants,
    NormalState,
    ObstructionRatio,
    c0_closed_form,
    derived_constants,
    from_normal,
    identify_c123,
    obstruction_ratio,
    stlc_threshold,
    to_normal,
    zeta,
)

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "ControlInput",
    "ControlSignal",
    "ControllabilityClass",
    "DegenerateParams",
    "DerivedConstants",
    "FieldEval",
    "InconsistentMethods",
    "InequalityReport",
    "LoopResult",
    "MicroswimError",
    "NonFiniteState",
    "NonPositiveParameter",
    "NormalState",
    "ObstructionRatio",
    "OracleMismatch",
    "PhysParams",
    "PoorFit",
    "SingularResistance",
    "StepSizeUnderflow",
    "SweepResult",
    "SweepRow",
    "SwimmerState",
    "TaylorReport",
    "Trajectory",
    "UndefinedRatio",
    "ZeroMagnetization",
    "c0_closed_form",
    "classify",
    "closed_form_constants",
    "derived_constants",
    "dynamics",
    "epsilon_sweep",
    "equivariance_check",
    "expansion_report",
    "f_table",
    "field_eval",
    "from_normal",
    "identify_c123",
    "integrate",
    "lemma_bounds_check",
    "loop_search",
    "obstruction_ratio",
    "resistance_system",
    "stlc_threshold",
    "to_normal",
    "validate_params",
    "zeta",
]
