"""Simulator for quantum-dot registers dispersively coupled to one lossy mode.

The package is organized around the model tiers: ``operators`` provides the
tensor-product substrate, ``model`` the physical parameters and Hamiltonian
builders, ``evolve`` the propagation engines, ``gates`` the selective
controlled-phase scheduling and verification, ``entangle`` the graph- and
cluster-state constructions, and ``cli`` the experiment runner.
"""

from .operators import (
    HilbertSpace,
    LinearOperator,
    QuantumState,
    SpaceMismatchError,
    cavity_ops,
    dot_operator,
    embed,
    fidelity,
    partial_trace,
)
from .model import (
    DEFAULT_LAMBDA0,
    DerivedCouplings,
    DotParams,
    EffectiveDot,
    HBAR_MEV_NS,
    RegimeReport,
    RegimeThresholds,
    build_eff1_hamiltonian,
    build_eff_hamiltonian,
    build_full_hamiltonian,
    derive_couplings,
    eta_coeff,
    lambda_coeff,
    validate_regime,
)
from .evolve import (
    BlockwiseAudit,
    DecayModel,
    DriveSegment,
    EvolutionSpec,
    FockConvergenceReport,
    NumericalFailure,
    blockwise_decoherence_evolve,
    blockwise_fidelity,
    diagonal_propagate,
    fock_convergence_check,
    lindblad_evolve,
    schrodinger_evolve,
)
from .gates import (
    DotDrive,
    DriveSchedule,
    GateResult,
    LeakageError,
    ScheduleSegment,
    calibrate_cz_schedule,
    cz_truth_table,
    extract_conditional_phase,
    local_phase_correction,
    null_gate_check,
    plan_scz,
    plan_uniform_scz,
)
from .entangle import (
    GraphSpec,
    LatticeSpec,
    NczReport,
    cluster_1d_schedule,
    cluster_2d_schedule,
    complete_graph_schedule,
    decoherence_fidelity,
    graph_state_schedule,
    ideal_graph_state,
    lattice_schedule,
    ncz_schedule,
    run_schedules_eff,
)

__version__ = "0.1.0"
