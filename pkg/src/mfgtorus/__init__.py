"""Stationary mean field games on the flat torus.

Coupled ergodic HJB / stationary Fokker-Planck solver with local power
couplings (focusing or defocusing), blow-up rescaling diagnostics, a
ground-state cross-validation route for quadratic costs, and stochastic
particle validation of the invariant density.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .errors import ConfigError, ConvergenceError, SolverError
from .fokker_planck import (
    DriftField,
    InvariantMeasure,
    assemble_fp_operator,
    fp_residual,
    solve_invariant_measure,
)
from .grid import (
    Mollifier,
    ScalarField,
    TorusGrid,
    VectorField,
    divergence,
    dump_field,
    gradient,
    integrate,
    laplacian,
    load_field,
    lp_norm,
    mollify,
)
from .hjb import ErgodicHJBProblem, ErgodicSolution, hjb_residual, solve_ergodic_hjb
from .mfg import (
    MFGProblem,
    MFGSolution,
    RescaledSolution,
    SweepReport,
    energy_functional,
    rescale_blowup,
    rescaling_residual,
    solve_fixed_point,
    sweep_alpha,
)
from .model import (
    CouplingSpec,
    CriticalExponents,
    HamiltonianSpec,
    PotentialSpec,
    audit_assumptions,
    conjugate_exponent,
    cosine_potential,
    critical_exponents,
    f_eval,
    F_eval,
    h_eval,
    h_grad,
    pohozaev_supercriticality,
    zero_potential,
)
from .validation import (
    CrossValidationReport,
    EnergyReport,
    GroundState,
    InequalityAudit,
    MassScalingReport,
    ParticleReport,
    PohozaevReport,
    audit_energy_inequality,
    cross_validate_quadratic,
    energy_report,
    hopf_cole_forward,
    mass_scaling_check,
    nls_residual,
    pohozaev_residual,
    simulate_particles,
    solve_ground_state_on_period,
    solve_nls_ground_state,
)

__all__ = [name for name in dir() if not name.startswith("_")]
