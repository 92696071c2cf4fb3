"""Simulation and estimation toolkit for a tunable TMD entangled photon-pair source."""

__version__ = "0.1.0"

from .states import (  # noqa: E402
    BELL_STATES,
    MAXIMALLY_MIXED,
    PHI_MINUS,
    PHI_PLUS,
    PSI_MINUS,
    PSI_PLUS,
    DensityMatrix,
    PreconditionError,
    PumpAngle,
    TwoQubitKet,
    apply_local_jones,
    concurrence,
    density_from_ket,
    fidelity,
    tmd_state,
)
from .chi2 import AnalyzerConfig, AnalyzerMode, ChiTensor, chi2_contract, projected_pair_rate, shg_intensity  # noqa: E402
