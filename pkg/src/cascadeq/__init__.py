"""Quantum-trajectory simulation of cascaded microwave-optical photon conversion."""

__version__ = "0.1.0"

from .analytic import (
    AnalyticParams, DeviceParams, coupling_report, coupling_strength, efficiency, mean_output_field,
    optimal_gamma_eg, vacuum_field_impedance, vacuum_field_thermo,
)
from .hilbert import (
    HilbertSpec, OperatorMatrix, StateVector, annihilation_op, apply, basis_state, expectation, transition_op,
)
from .lindblad import compare_with_oracle, lindblad_oracle
from .mcwf import (
    CollapseChannel, DriveEnvelope, EffectiveModel, EnsembleResult, TrajectoryRecord, estimate_rate, run_ensemble,
    run_trajectory,
)
from .models import M2OParams, O2MParams, build_m2o, build_o2m, m2o_efficiency, o2m_efficiency
from .transfer import ProtocolParams, TimeBinQubit, TransferOutcome, erasure_herald, run_transfer

__all__ = [
    "AnalyticParams", "DeviceParams", "coupling_report", "coupling_strength", "efficiency", "mean_output_field",
    "optimal_gamma_eg", "vacuum_field_impedance", "vacuum_field_thermo",
    "HilbertSpec", "OperatorMatrix", "StateVector", "annihilation_op", "apply", "basis_state", "expectation",
    "transition_op",
    "compare_with_oracle", "lindblad_oracle",
    "CollapseChannel", "DriveEnvelope", "EffectiveModel", "EnsembleResult", "TrajectoryRecord", "estimate_rate",
    "run_ensemble", "run_trajectory",
    "M2OParams", "O2MParams", "build_m2o", "build_o2m", "m2o_efficiency", "o2m_efficiency",
    "ProtocolParams", "TimeBinQubit", "TransferOutcome", "erasure_herald", "run_transfer",
]
