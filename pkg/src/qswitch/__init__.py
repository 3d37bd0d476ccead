"""Quantized switching-controller synthesis on lattice abstractions.

Pipeline: time-sampled successor tables over an integer lattice, safety /
reachability synthesis on the abstraction, refinement through the relation
ball into a quantized concrete controller, determinization into a compact
axis-aligned decision tree, and closed-loop validation.
"""

from .abstraction import OUT, SymbolicModel, build_abstraction, successor
from .config import ProblemConfig, canonical_text, load_config, parse_config
from .determinize import (
    DecisionTree,
    determinize_reach,
    determinize_safety,
    evaluate_tree,
    lookup,
    read_qst1,
    verify_determinization,
    write_qst1,
)
from .errors import (
    ConfigError,
    DomainError,
    EmptySpecError,
    FormatError,
    GuaranteeError,
    IntegrationOverflowError,
    NotIncrementallyStableError,
    PrecisionError,
    QswitchError,
    VerificationError,
)
from .lattice import (
    Box,
    CellRange,
    Lattice,
    RelationBall,
    ball_offsets,
    cell_range,
    inner_cell_range,
    rel_ball,
)
from .runtime import (
    BLOCKED,
    INF,
    Controller,
    Trajectory,
    entry_time,
    monte_carlo_validate,
    run_closed_loop,
    step,
    write_trajectory_csv,
)
from .synthesis import (
    INF_TIME,
    ControllerMeta,
    ReachResult,
    RefinedController,
    SafetyResult,
    contract_box,
    read_qsc1,
    refine_reach,
    refine_safety,
    synthesize_reach,
    synthesize_safety,
    write_qsc1,
)
from .system import (
    LyapunovCertificate,
    ModeDynamics,
    PowerKInf,
    SamplingParams,
    SwitchedSystem,
    check_precision,
    estimate_kappa,
    flow_exact,
    flow_rk4,
    max_eta,
    precision_threshold,
    validate_certificate,
)

__version__ = "0.1.0"
