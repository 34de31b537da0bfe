"""delaysync: synchronization transitions in two delay-coupled oscillators.

Submodules
----------
phase_model    closed-form analysis of the multi-harmonic phase-difference flow
phase_sweep    quasi-static sweeps and (r, s) criticality maps
dde            constant-delay RK4 integrator, peak detection, summaries
brusselator    oscillator model, limit cycle, PRC, coupling design
branch_tracker delay sweeps, bistability detection, (K, tau) attractor maps
cli            command-line interface over all of the above
"""

from .phase_model import (
    ApproxBifurcation,
    CriticalityClass,
    CriticalityTag,
    HarmonicCoupling,
    approx_bifurcation,
    classify_criticality,
    d1,
    d3,
    eval_phase_diff_rhs,
    find_all_bifurcations,
    find_bifurcation_alpha,
    nearest_bifurcation,
)
from .phase_sweep import SweepProtocol, criticality_map, pseudocontinuation_sweep
from .dde import (
    DelaySystem,
    HistoryBuffer,
    SummaryStats,
    Trajectory,
    detect_peaks,
    integrate_dde,
    summarize,
)
from .brusselator import (
    BrusselatorParams,
    EngineeredCoupling,
    HmmTarget,
    LimitCycle,
    PhaseResponseCurve,
    brusselator_rhs,
    compute_prc,
    engineer_coupling,
    find_limit_cycle,
    fourier_coeffs,
    fourier_shift,
    validate_interaction,
)
from .branch_tracker import (
    AttractorClass,
    BistabilityReport,
    BranchSummary,
    Direction,
    TwoParamMap,
    detect_bistability,
    mean_field_feedback_sim,
    tau_sweep,
    two_param_map,
)

__version__ = "0.1.0"
