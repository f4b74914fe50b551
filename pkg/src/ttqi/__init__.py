"""Quantum-information observables for top-quark pair spin states.

Fano coefficients and density matrices (:mod:`ttqi.fano`), correlation
markers (:mod:`ttqi.observables`), profile-likelihood inference
(:mod:`ttqi.inference`), brute-force reference oracles
(:mod:`ttqi.oracles`) and batch reports (:mod:`ttqi.report`).
"""

from .errors import (
    ConvergenceError,
    DomainError,
    GridTooNarrowError,
    InfeasibleTargetError,
    SchemaError,
    TtqiError,
    UnphysicalStateError,
    ValidationError,
)
from .fano import (
    BasisKind,
    BinKinematics,
    DensityMatrix4,
    FanoCoefficients,
    PhysicalityReport,
    SingleQubitState,
    SpinBasis,
    assemble_density,
    extract_fano,
    partial_transpose,
    reduced_state,
    rotate_basis,
    validate_physicality,
    von_neumann_entropy,
)
from .inference import (
    GridSpec,
    MeasurementRecord,
    Observable,
    PenaltySchedule,
    ScanOptions,
    ScanResult,
    chi2,
    fit_central,
    profile_at,
    scan_observable,
    standard_observable,
    threshold_significance,
)
from .observables import (
    DiscordOptions,
    DiscordResult,
    HierarchyFlags,
    HierarchyOptions,
    HierarchyReport,
    QuadratureSpec,
    chsh_marker,
    classify_hierarchy,
    discord,
    discord_difference,
    entanglement_marker,
    hierarchy_flags,
    magic,
    post_measurement_state,
    steering_marker,
)
from .oracles import NamedState, analytic_state, dense_profile_oracle, grid_discord, mc_steering
from .report import (
    AnalysisOptions,
    AnalysisRequest,
    BinReportRow,
    ObservableSummary,
    emit_report,
    parse_input,
    run_analysis,
)

__version__ = "0.1.0"
