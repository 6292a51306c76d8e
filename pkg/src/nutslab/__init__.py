"""nutslab: No-U-Turn sampler variants, their idealized reductions, and a
desk-scale verification harness for contraction, mixing and ergodicity."""

__version__ = "0.1.0"

from .backend import backend_name, use_numba
from .integrator import (
    DivergenceError,
    GradientCounter,
    gaussian_step_angle,
    leapfrog_iterate,
    leapfrog_step,
)
from .index_select import (
    IndexPmf,
    bps_pmf,
    bps_sample_online,
    multinomial_pmf,
    progress_ratio,
)
from .orbit import (
    IndexInterval,
    Orbit,
    OrbitWorkspace,
    index_set_from_bits,
    orbit_pmf,
    sample_orbit,
    u_turn_triggered,
)
from .samplers import (
    ChainTrace,
    KernelConfig,
    StepDiagnostics,
    StreamSet,
    hmc_step,
    ideal_step,
    nuts_step,
    run_chain,
)
from .targets import (
    AssumptionProfile,
    PhasePoint,
    Target,
    diag_gaussian,
    hamiltonian,
    perturbed_gaussian,
    potential_eval,
    potential_grad,
    power_law,
    std_gaussian,
)
from .theory import (
    ConcentrationParams,
    MixingBudget,
    TheoryConstants,
    concentration_check,
    contraction_rho,
    creg_constants,
    delta_Delta,
    mixing_budget,
    predict_kstar,
    theory_constants,
    time_law_limit_density,
    time_law_pmf,
)
