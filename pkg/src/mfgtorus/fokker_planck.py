"""Stationary Kolmogorov equation: invariant density of the controlled drift.

The flux between neighboring nodes is discretized by exponential fitting
(Scharfetter-Gummel): with ``B(z) = z / (e^z - 1)``,

    flux = (1/h) * [B(-h b) m_left - B(h b) m_right],

where ``b`` is the drift at the face. The resulting operator has zero
column sums (discrete mass conservation) and nonpositive off-diagonal
entries with a positive diagonal, so its one-dimensional null space is
spanned by a strictly positive vector at any drift strength.

When the drift is the negative gradient of a potential, taking the face
drift as the potential difference across the face makes the discrete
Gibbs density an exact null vector in one dimension; in two dimensions
the face drift is the average of the adjacent nodal values and the Gibbs
density is recovered to second order.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from .errors import ConvergenceError, SolverError
from .grid import ScalarField, TorusGrid, VectorField, integrate

logger = logging.getLogger(__name__)


@dataclass
class DriftField:
    """Nodal drift vector field, optionally backed by its potential.

    ``potential`` is set when the drift is exactly ``-grad(potential)``
    (quadratic Hamiltonian); the assembly then uses exact face potential
    differences in 1D.
    """

    b: VectorField
    potential: ScalarField = None

    @property
    def grid(self) -> TorusGrid:
        return self.b.grid


@dataclass
class InvariantMeasure:
    m: ScalarField
    residual_inf: float


def bernoulli(z: np.ndarray) -> np.ndarray:
    """``z / (e^z - 1)`` with the limits ``B(0) = 1``, ``B(+inf) = 0``."""
    z = np.asarray(z, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        den = np.expm1(z)
        out = np.where(z == 0.0, 1.0, z / np.where(den == 0.0, 1.0, den))
    return out


def _face_drifts(drift: DriftField) -> tuple:
    """Drift values at the ``i -> i+1`` faces, one array per axis."""
    g = drift.grid
    h = g.h
    if drift.potential is not None and g.dim == 1:
        u = drift.potential.values
        return ((np.roll(u, -1) - u) * (-1.0 / h),)
    return tuple(
        0.5 * (drift.b.values[d] + np.roll(drift.b.values[d], -1, axis=d))
        for d in range(g.dim)
    )


def assemble_fp_operator(drift: DriftField) -> sparse.csc_matrix:
    """Flux-balance operator whose null vector is the invariant density."""
    g = drift.grid
    h = g.h
    inv_h2 = 1.0 / h**2
    faces = _face_drifts(drift)

    peclet = max(float(np.max(np.abs(f))) for f in faces) * h / 2.0
    if peclet >= 1.0:
        warnings.warn(
            f"mesh Peclet number {peclet:.2f} >= 1: drift under-resolved on this grid "
            "(positivity and conservation still hold)",
            RuntimeWarning,
            stacklevel=2,
        )

    N = g.num_nodes
    flat = np.arange(N).reshape(g.shape)
    rows, cols, data = [], [], []
    diag = np.zeros(g.shape)
    for d in range(g.dim):
        z = h * faces[d]
        bp = bernoulli(-z)   # multiplies the lower node of the face
        bm = bernoulli(z)    # multiplies the upper node of the face
        up = np.roll(flat, -1, axis=d)
        # row lower-node, col upper-node and vice versa, one entry per face
        rows.append(flat.ravel())
        cols.append(up.ravel())
        data.append((-bm * inv_h2).ravel())
        rows.append(up.ravel())
        cols.append(flat.ravel())
        data.append((-bp * inv_h2).ravel())
        diag += bp * inv_h2 + np.roll(bm, 1, axis=d) * inv_h2
    rows.append(flat.ravel())
    cols.append(flat.ravel())
    data.append(diag.ravel())
    op = sparse.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N),
    )
    return op.tocsc()


def solve_invariant_measure(drift: DriftField, tol: float = 1e-12,
                            max_iters: int = 50, x0: np.ndarray = None) -> InvariantMeasure:
    """Positive unit-mass null vector via shifted inverse-power iteration.

    The shift is ``1e-8 * ||op||_inf``, the start vector is uniform
    unless ``x0`` is given, and the iteration stops when successive
    normalized iterates agree to ``tol``. A nonpositive entry after
    normalization is a scheme violation and raises :class:`SolverError`.
    """
    g = drift.grid
    op = assemble_fp_operator(drift)
    norm_inf = float(np.max(np.abs(op).sum(axis=1)))
    shift = 1e-8 * norm_inf
    shifted = (op - shift * sparse.identity(op.shape[0], format="csc")).tocsc()
    lu = splu(shifted, permc_spec="MMD_AT_PLUS_A", options=dict(SymmetricMode=True))

    if x0 is None:
        x = np.full(op.shape[0], 1.0 / op.shape[0])
    else:
        x = np.asarray(x0, dtype=float).ravel().copy()
        x /= np.abs(x).sum()
    converged = False
    for _ in range(max_iters):
        y = lu.solve(x)
        if y.sum() < 0:
            y = -y
        y /= np.abs(y).sum()
        delta = float(np.max(np.abs(y - x)))
        x = y
        if delta <= tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"inverse-power iteration stalled (last delta {delta:.3e} > tol {tol})",
            residual=delta,
        )

    m = ScalarField(g, x.reshape(g.shape))
    mass = integrate(m)
    m = ScalarField(g, m.values / mass)
    if m.values.min() <= 0.0:
        raise SolverError(
            f"invariant density lost positivity (min {m.values.min():.3e}); "
            "scheme violation"
        )
    residual = float(np.max(np.abs(op @ m.values.ravel())))
    return InvariantMeasure(m=m, residual_inf=residual)


def fp_residual(m: ScalarField, drift: DriftField) -> float:
    """Sup norm of the assembled operator applied to ``m``."""
    op = assemble_fp_operator(drift)
    return float(np.max(np.abs(op @ m.values.ravel())))
