"""Coupled fixed-point solver, blow-up rescaling and the alpha sweep.

One outer iteration builds the smoothed coupling, solves the ergodic
HJB equation for the value/multiplier pair, pushes the optimal drift
through the stationary Kolmogorov solve, and relaxes the density with a
damping factor. Divergence of the outer loop is a legitimate outcome in
the supercritical regime and is returned as data, not raised.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import SolverError
from .fokker_planck import DriftField, fp_residual, solve_invariant_measure
from .grid import (
    Mollifier,
    ScalarField,
    TorusGrid,
    VectorField,
    gradient,
    integrate,
    lp_norm,
    mollify,
    mollify_with_weights,
)
from .hjb import ErgodicHJBProblem, hjb_residual, solve_ergodic_hjb
from .model import (
    FOCUSING,
    CouplingSpec,
    HamiltonianSpec,
    PotentialSpec,
    critical_exponents,
    f_eval,
    h_eval,
    h_grad,
    optimal_drift,
)

logger = logging.getLogger(__name__)

DIVERGENCE_FACTOR = 10.0
CONCENTRATION_GROWTH = 1.5


@dataclass
class MFGProblem:
    grid: TorusGrid
    hamiltonian: HamiltonianSpec
    coupling: CouplingSpec
    potential: PotentialSpec
    mollifier: Mollifier
    theta: float = 0.5
    tol: float = 1e-7
    max_outer_iters: int = 300
    hjb_dt: float = None
    hjb_tol: float = None
    hjb_max_steps: int = 400_000
    fp_tol: float = 1e-12
    fp_max_iters: int = 50

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"damping theta must lie in (0, 1], got {self.theta}")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        # fail early if the smoothing kernel does not fit the grid
        self.mollifier.kernel(self.grid)


@dataclass
class MFGSolution:
    problem: MFGProblem
    u: ScalarField
    lam: float
    m: ScalarField
    outer_iters: int
    hjb_res: float
    fp_res: float
    coupling_res: float
    converged: bool
    diverged: bool = False
    residual_history: list = field(default_factory=list)


def optimal_drift_field(hamiltonian: HamiltonianSpec, u: ScalarField) -> DriftField:
    """Feedback drift of a value function, with its potential when quadratic."""
    b = optimal_drift(hamiltonian, gradient(u))
    pot = u if hamiltonian.gamma == 2.0 else None
    return DriftField(b, potential=pot)


def coupling_rhs(problem: MFGProblem, V: ScalarField, m: ScalarField) -> np.ndarray:
    """Right-hand side of the value equation for the current density."""
    smoothed = mollify(m, problem.mollifier)
    fm = f_eval(problem.coupling, smoothed.values)
    if problem.coupling.sign == FOCUSING:
        return V.values - fm
    # defocusing couples through a second smoothing pass
    fm_smoothed = mollify(ScalarField(problem.grid, fm), problem.mollifier)
    return V.values + fm_smoothed.values


def solve_fixed_point(problem: MFGProblem, m0: ScalarField = None) -> MFGSolution:
    """Damped fixed-point iteration for the stationary system.

    Returns a solution object whose ``converged`` flag reflects whether
    both the density defect and the PDE residuals dropped below
    ``problem.tol``; a diverging iterate (density peak above 10x its
    initial value, or non-finite coupling) sets ``diverged`` and stops
    early. Inner-solver failures propagate as exceptions.
    """
    grid = problem.grid
    V = problem.potential.field(grid)
    if m0 is None:
        m = ScalarField.constant(grid, 1.0 / grid.period**grid.dim)
    else:
        if m0.values.min() <= 0:
            raise ValueError("initial density must be strictly positive")
        if abs(integrate(m0) - 1.0) > 1e-8:
            raise ValueError("initial density must have unit mass")
        m = m0.copy()

    hjb_tol = problem.hjb_tol if problem.hjb_tol is not None else min(0.05 * problem.tol, 1e-8)
    theta = problem.theta
    initial_max = float(m.values.max())
    history = []
    u_prev = None
    u = ScalarField.constant(grid, 0.0)
    lam = 0.0
    m_new = m
    hjb_res = fp_res = np.inf
    converged = False
    diverged = False
    iters = 0

    for iters in range(1, problem.max_outer_iters + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            R_vals = coupling_rhs(problem, V, m)
        if not np.all(np.isfinite(R_vals)):
            diverged = True
            logger.info("coupling overflowed at outer iteration %d", iters)
            break
        R = ScalarField(grid, R_vals)
        hjb_sol = solve_ergodic_hjb(
            ErgodicHJBProblem(grid, problem.hamiltonian, R),
            dt=problem.hjb_dt, tol=hjb_tol, max_steps=problem.hjb_max_steps, v0=u_prev,
        )
        u, lam = hjb_sol.u, hjb_sol.lam
        drift = optimal_drift_field(problem.hamiltonian, u)
        inv = solve_invariant_measure(drift, tol=problem.fp_tol, max_iters=problem.fp_max_iters)
        m_new = inv.m

        defect = lp_norm(ScalarField(grid, m_new.values - m.values), 1)
        history.append(defect)
        peak = float(m_new.values.max())
        logger.debug("outer %d: defect %.3e peak %.3f lambda %.6f", iters, defect, peak, lam)

        if peak > DIVERGENCE_FACTOR * max(initial_max, 1.0):
            diverged = True
            logger.info("density peak %.2f exceeds %.0fx initial; stopping", peak,
                        DIVERGENCE_FACTOR)
            break

        if defect <= problem.tol:
            R_new = ScalarField(grid, coupling_rhs(problem, V, m_new))
            hjb_res = hjb_residual(u, lam, R_new, problem.hamiltonian)
            fp_res = inv.residual_inf
            if max(hjb_res, fp_res) <= problem.tol:
                converged = True
                m = m_new
                break

        if len(history) >= 3 and history[-1] > history[-2] > history[-3]:
            theta = max(theta / 2.0, 0.05)
            logger.debug("oscillation detected; damping reduced to %.3f", theta)

        m = ScalarField(grid, (1.0 - theta) * m.values + theta * m_new.values)
        u_prev = u

    if not converged:
        m = m_new
        if np.all(np.isfinite(m.values)) and m.values.min() > 0:
            with np.errstate(over="ignore", invalid="ignore"):
                R_vals = coupling_rhs(problem, V, m)
            if np.all(np.isfinite(R_vals)):
                hjb_res = hjb_residual(u, lam, ScalarField(grid, R_vals), problem.hamiltonian)
                fp_res = fp_residual(m, optimal_drift_field(problem.hamiltonian, u))

    smoothed = mollify(m, problem.mollifier)
    with np.errstate(over="ignore", invalid="ignore"):
        coupling_res = float(np.max(np.abs(
            f_eval(problem.coupling, smoothed.values) - f_eval(problem.coupling, m.values)
        )))

    return MFGSolution(
        problem=problem, u=u, lam=float(lam), m=m, outer_iters=iters,
        hjb_res=float(hjb_res), fp_res=float(fp_res), coupling_res=coupling_res,
        converged=converged, diverged=diverged, residual_history=history,
    )


def energy_functional(m: ScalarField, b_or_u, coupling: CouplingSpec,
                      gamma_conj: float) -> float:
    """System energy ``(1/gc) int |A|^gc m - (c_f/beta) int m^beta``.

    ``b_or_u`` is either the drift vector field A or the value function,
    from which the feedback drift is derived.
    """
    grid = m.grid
    if isinstance(b_or_u, VectorField):
        A = b_or_u.values
    else:
        gamma = gamma_conj / (gamma_conj - 1.0)
        A = -h_grad(HamiltonianSpec(gamma), gradient(b_or_u).values)
    amag = np.sqrt(np.einsum("d...,d...->...", A, A))
    beta = coupling.alpha + 1.0
    cell = grid.h**grid.dim
    kinetic = (amag**gamma_conj * m.values).sum() * cell / gamma_conj
    self_interaction = coupling.c_f / beta * (m.values**beta).sum() * cell
    return float(kinetic - self_interaction)


# ---------------------------------------------------------------------------
# Blow-up rescaling around the density peak
# ---------------------------------------------------------------------------

@dataclass
class RescaledSolution:
    """Zoomed solution around the density peak at scale ``a = M^(-alpha/gc)``.

    ``v`` and ``mu`` live on a lattice whose spacing is the original one
    divided by ``a``, with the peak moved to index 0; the transformed
    coefficient descriptors keep the system form invariant.
    """

    v: ScalarField
    mu: ScalarField
    Lambda: float
    a: float
    M: float
    x0_index: tuple
    hamiltonian: HamiltonianSpec
    coupling_scaled: CouplingSpec
    potential_scaled: ScalarField
    kernel_weights: np.ndarray
    sign: str


def transformed_hamiltonian(h: HamiltonianSpec, a: float):
    """Evaluator ``p -> a^gc H(a^(1-gc) p)``; identical to ``H`` for power laws."""
    gc = h.gamma_conj

    def ev(p):
        return a**gc * h_eval(h, a ** (1.0 - gc) * np.asarray(p, dtype=float))

    return ev


def rescale_blowup(s: MFGSolution, coupling: CouplingSpec,
                   hamiltonian: HamiltonianSpec) -> RescaledSolution:
    """Peak-normalized zoom of a solution; ``mu`` is 1 at the peak node."""
    M = float(s.m.values.max())
    if M <= 0:
        raise ValueError(f"density peak must be positive, got {M}")
    grid = s.m.grid
    x0 = np.unravel_index(int(np.argmax(s.m.values)), grid.shape)
    gc = hamiltonian.gamma_conj
    a = M ** (-coupling.alpha / gc)

    zoomed = TorusGrid(grid.dim, grid.n, period=grid.period / a)
    shifts = tuple(-int(i) for i in x0)

    def recenter(vals):
        out = vals
        for d, sh in enumerate(shifts):
            out = np.roll(out, sh, axis=d)
        return out

    v = ScalarField(zoomed, a ** (gc - 2.0) * recenter(s.u.values))
    mu = ScalarField(zoomed, recenter(s.m.values) / M)
    V = s.problem.potential.field(grid)
    W = ScalarField(zoomed, a**gc * recenter(V.values))
    c_f_scaled = coupling.c_f * a**gc * M**coupling.alpha
    coupling_scaled = replace(coupling, c_f=c_f_scaled)
    weights = s.problem.mollifier.kernel(grid)

    return RescaledSolution(
        v=v, mu=mu, Lambda=float(a**gc * s.lam), a=float(a), M=M, x0_index=x0,
        hamiltonian=hamiltonian, coupling_scaled=coupling_scaled,
        potential_scaled=W, kernel_weights=weights, sign=coupling.sign,
    )


def rescaling_residual(r: RescaledSolution) -> tuple:
    """Sup-norm residuals of the zoomed value and density equations."""
    smoothed = mollify_with_weights(r.mu, r.kernel_weights)
    fm = f_eval(r.coupling_scaled, smoothed.values)
    if r.sign == FOCUSING:
        R_vals = r.potential_scaled.values - fm
    else:
        R_vals = r.potential_scaled.values + mollify_with_weights(
            ScalarField(r.mu.grid, fm), r.kernel_weights).values
    R = ScalarField(r.mu.grid, R_vals)
    hjb_res = hjb_residual(r.v, r.Lambda, R, r.hamiltonian)
    fp_res = fp_residual(r.mu, optimal_drift_field(r.hamiltonian, r.v))
    return hjb_res, fp_res


# ---------------------------------------------------------------------------
# Sweep over the coupling exponent
# ---------------------------------------------------------------------------

@dataclass
class SweepRow:
    alpha: float
    converged: bool
    diverged: bool
    lam: float
    max_m: float
    energy: float
    mass_power: float
    outer_iters: int
    regime: str
    concentrating: bool = False
    max_m_fine: float = None
    growth: float = None
    error: str = None


@dataclass
class SweepReport:
    rows: list
    n: int
    dim: int
    gamma: float
    alpha1: float
    alpha2: float


def _row_from_solution(alpha, sol, regime):
    vals = sol.m.values
    finite = bool(np.all(np.isfinite(vals)))
    energy = mass_power = float("nan")
    if finite:
        energy = energy_functional(sol.m, sol.u, sol.problem.coupling,
                                   sol.problem.hamiltonian.gamma_conj)
        beta = alpha + 1.0
        mass_power = float((vals**beta).sum() * sol.m.grid.h**sol.m.grid.dim)
    return SweepRow(
        alpha=alpha, converged=sol.converged, diverged=sol.diverged, lam=sol.lam,
        max_m=float(vals.max()) if finite else float("nan"),
        energy=energy, mass_power=mass_power, outer_iters=sol.outer_iters,
        regime=regime, concentrating=sol.diverged,
    )


def sweep_alpha(template: MFGProblem, alphas, refine: bool = False,
                m0_fn=None) -> SweepReport:
    """Run the fixed point for each exponent, optionally at two resolutions.

    A row is flagged CONCENTRATING when the density peak grows by a
    factor of 1.5 or more under one halving of the spacing, or when the
    iteration diverges. Per-row failures are recorded, never raised.
    """
    if len(alphas) == 0:
        raise ValueError("alphas must be nonempty")
    exps = critical_exponents(template.hamiltonian.gamma, template.grid.dim)
    rows = []
    for alpha in sorted(alphas):
        regime = exps.regime(alpha)
        if regime == "critical":
            regime = "UNKNOWN-REGIME"
        prob = replace(template, coupling=replace(template.coupling, alpha=alpha))
        try:
            sol = solve_fixed_point(prob, _initial_density(prob.grid, m0_fn))
            row = _row_from_solution(alpha, sol, regime)
        except SolverError as exc:
            rows.append(SweepRow(alpha=alpha, converged=False, diverged=True,
                                 lam=float("nan"), max_m=float("nan"), energy=float("nan"),
                                 mass_power=float("nan"), outer_iters=0, regime=regime,
                                 concentrating=True, error=str(exc)))
            continue

        if refine and np.isfinite(row.max_m):
            fine = replace(prob, grid=TorusGrid(prob.grid.dim, 2 * prob.grid.n,
                                                prob.grid.period))
            try:
                fine_sol = solve_fixed_point(fine, _initial_density(fine.grid, m0_fn))
                row.max_m_fine = float(np.nanmax(fine_sol.m.values))
                row.growth = row.max_m_fine / row.max_m if row.max_m > 0 else float("inf")
                if fine_sol.diverged or row.growth >= CONCENTRATION_GROWTH:
                    row.concentrating = True
            except SolverError as exc:
                row.concentrating = True
                row.error = f"refinement failed: {exc}"
        rows.append(row)

    return SweepReport(rows=rows, n=template.grid.n, dim=template.grid.dim,
                       gamma=template.hamiltonian.gamma,
                       alpha1=exps.alpha1, alpha2=exps.alpha2)


def _initial_density(grid: TorusGrid, m0_fn) -> ScalarField:
    if m0_fn is None:
        return None
    f = ScalarField.from_function(grid, m0_fn)
    if f.values.min() <= 0:
        raise ValueError("initial density function must be positive")
    return ScalarField(grid, f.values / integrate(f))
