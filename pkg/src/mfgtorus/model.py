"""Problem data: Hamiltonian, coupling, potential and criticality thresholds.

Only power laws are implemented in closed form; more general nonlinearities
enter exclusively through the assumption audit, which checks user-supplied
evaluators pointwise on a sample set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import ScalarField, TorusGrid, VectorField

FOCUSING = "focusing"
DEFOCUSING = "defocusing"


def conjugate_exponent(gamma: float) -> float:
    """Holder conjugate ``gamma / (gamma - 1)``; requires ``gamma > 1``."""
    if not gamma > 1:
        raise ValueError(f"gamma must exceed 1, got {gamma}")
    return gamma / (gamma - 1.0)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Power-law Hamiltonian ``H(p) = |p|^gamma / gamma``.

    ``c_h`` is the structure constant used only by the assumption audit;
    the default is large enough for the audit bounds to hold on moderate
    samples when ``gamma`` is quadratic-like.
    """

    gamma: float
    c_h: float = None

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError(f"gamma must exceed 1, got {self.gamma}")
        if self.c_h is None:
            object.__setattr__(self, "c_h", max(1.0, 1.0 / self.gamma, self.gamma - 1.0) + 1.0)
        elif not self.c_h > 0:
            raise ValueError(f"c_h must be positive, got {self.c_h}")

    @property
    def gamma_conj(self) -> float:
        return conjugate_exponent(self.gamma)


def h_eval(spec: HamiltonianSpec, p: np.ndarray) -> np.ndarray:
    """``|p|^gamma / gamma`` for a single vector or a stacked component array."""
    p = np.asarray(p, dtype=float)
    mag = np.sqrt(np.sum(p * p, axis=0)) if p.ndim > 0 else np.abs(p)
    return mag**spec.gamma / spec.gamma


def h_grad(spec: HamiltonianSpec, p: np.ndarray) -> np.ndarray:
    """``|p|^(gamma-2) p`` with the continuous extension 0 at the origin."""
    p = np.asarray(p, dtype=float)
    mag = np.sqrt(np.sum(p * p, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(mag > 0.0, mag ** (spec.gamma - 2.0), 0.0)
    return scale * p


def hamiltonian_field(spec: HamiltonianSpec, grad_u: VectorField) -> ScalarField:
    return ScalarField(grad_u.grid, h_eval(spec, grad_u.values))

def optimal_drift(spec: HamiltonianSpec, grad_u: VectorField) -> VectorField:
    """Feedback drift ``-|p|^(gamma-2) p`` evaluated at the gradient field."""
    return VectorField(grad_u.grid, -h_grad(spec, grad_u.values))


@dataclass(frozen=True)
class CouplingSpec:
    """Local power coupling ``f(m) = c_f m^alpha`` with a focusing or
    defocusing sign convention for how it enters the running cost."""

    alpha: float
    c_f: float = 1.0
    sign: str = FOCUSING

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not self.c_f > 0:
            raise ValueError(f"c_f must be positive, got {self.c_f}")
        if self.sign not in (FOCUSING, DEFOCUSING):
            raise ValueError(f"sign must be '{FOCUSING}' or '{DEFOCUSING}', got {self.sign!r}")


def f_eval(coupling: CouplingSpec, m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("coupling argument must be nonnegative")
    return coupling.c_f * m**coupling.alpha


def F_eval(coupling: CouplingSpec, m) -> np.ndarray:
    """Antiderivative ``c_f m^(alpha+1) / (alpha+1)`` with ``F(0) = 0``."""
    m = np.asarray(m, dtype=float)
    if np.any(m < 0):
        raise ValueError("coupling argument must be nonnegative")
    return coupling.c_f * m ** (coupling.alpha + 1.0) / (coupling.alpha + 1.0)


@dataclass(frozen=True)
class PotentialSpec:
    """Bounded nonnegative potential, given as a callable or a fixed field."""

    evaluator: object = None  # callable of node coordinates, ScalarField, or None for zero
    c_v: float = 0.0

    def field(self, grid: TorusGrid) -> ScalarField:
        if self.evaluator is None:
            return ScalarField.constant(grid, 0.0)
        if isinstance(self.evaluator, ScalarField):
            if self.evaluator.grid.shape != grid.shape:
                raise ValueError("potential field shape does not match grid")
            return ScalarField(grid, self.evaluator.values)
        return ScalarField.from_function(grid, self.evaluator)

    def check_bounds(self, grid: TorusGrid) -> bool:
        v = self.field(grid).values
        return bool(np.all(v >= 0.0) and np.all(v <= self.c_v + 1e-12))


def zero_potential() -> PotentialSpec:
    return PotentialSpec(None, 0.0)


def cosine_potential(amplitude: float, modes: int = 1) -> PotentialSpec:
    """``V = (a / (2 dim)) * sum_d (1 - cos(2 pi modes x_d))``, range ``[0, a]``."""
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")

    def ev(*coords):
        acc = np.zeros_like(coords[0])
        for x in coords:
            acc = acc + (1.0 - np.cos(2.0 * np.pi * modes * x))
        return amplitude / (2.0 * len(coords)) * acc

    return PotentialSpec(ev, amplitude)


@dataclass(frozen=True)
class CriticalExponents:
    """Criticality thresholds for the coupling growth in dimension ``n``."""

    alpha1: float
    alpha2: float  # may be +inf
    gamma_conj: float

    def regime(self, alpha: float) -> str:
        if alpha < self.alpha1:
            return "subcritical"
        if alpha == self.alpha2:
            return "critical"
        if alpha < self.alpha2:
            return "intermediate"
        return "supercritical"


def critical_exponents(gamma: float, dim_n: int) -> CriticalExponents:
    """Mass- and energy-critical exponents ``gc/N`` and ``gc/(N - gc)``.

    The second threshold is infinite when the conjugate exponent reaches
    the dimension.
    """
    if dim_n < 1:
        raise ValueError(f"dimension must be at least 1, got {dim_n}")
    gc = conjugate_exponent(gamma)
    alpha1 = gc / dim_n
    alpha2 = np.inf if gc >= dim_n else gc / (dim_n - gc)
    return CriticalExponents(alpha1, alpha2, gc)


def pohozaev_supercriticality(coupling: CouplingSpec, gamma: float, dim_n: int,
                              m_samples=None) -> bool:
    """Whether ``(N - gc) f(m) m - N F(m) > 0`` for all positive ``m``.

    For the power law this reduces to the closed-form test
    ``gc < N  and  alpha > gc / (N - gc)``; ``m_samples`` is accepted for
    interface symmetry with the audit but the closed form decides.
    """
    gc = conjugate_exponent(gamma)
    if gc >= dim_n:
        return False
    return coupling.alpha > gc / (dim_n - gc)


@dataclass
class AssumptionCheck:
    name: str
    passed: bool
    worst_margin: float


@dataclass
class AssumptionAudit:
    checks: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> AssumptionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def audit_assumptions(h: HamiltonianSpec, coupling: CouplingSpec, potential: PotentialSpec,
                      p_samples: np.ndarray, m_samples=None,
                      grid: TorusGrid = None) -> AssumptionAudit:
    """Check the structural growth bounds on finite sample sets.

    ``p_samples`` has one vector per column (shape ``(dim, k)``). Margins
    are the worst (most negative) slack of each inequality; a check passes
    when its margin is nonnegative.
    """
    p = np.atleast_2d(np.asarray(p_samples, dtype=float))
    mag = np.sqrt(np.sum(p * p, axis=0))
    H = h_eval(h, p)
    gradH = h_grad(h, p)
    gradH_mag = np.sqrt(np.sum(gradH * gradH, axis=0))

    audit = AssumptionAudit()

    lower = H - (mag**h.gamma / h.c_h - h.c_h)
    upper = h.c_h * (mag**h.gamma + 1.0) - H
    audit.checks.append(AssumptionCheck("H_lower", bool(np.all(lower >= 0)), float(lower.min())))
    audit.checks.append(AssumptionCheck("H_upper", bool(np.all(upper >= 0)), float(upper.min())))

    gbound = h.c_h * (mag ** (h.gamma - 1.0) + 1.0) - gradH_mag
    audit.checks.append(AssumptionCheck("gradH_growth", bool(np.all(gbound >= 0)), float(gbound.min())))

    coercive = (np.sum(gradH * p, axis=0) - H) - (mag**h.gamma / h.c_h - h.c_h)
    audit.checks.append(AssumptionCheck("H_coercivity", bool(np.all(coercive >= 0)),
                                        float(coercive.min())))

    if m_samples is None:
        m_samples = np.linspace(0.0, 10.0, 101)
    m = np.asarray(m_samples, dtype=float)
    fv = f_eval(coupling, m)
    fbound = coupling.c_f * (m**coupling.alpha + 1.0) - fv
    audit.checks.append(AssumptionCheck("f_bounds",
                                        bool(np.all(fv >= 0) and np.all(fbound >= 0)),
                                        float(min(fv.min(), fbound.min()))))

    if grid is not None:
        v = potential.field(grid).values
        vmargin = min(float(v.min()), float(potential.c_v - v.max()))
        audit.checks.append(AssumptionCheck("V_bounds", vmargin >= 0, vmargin))

    return audit
