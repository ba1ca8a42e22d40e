"""Periodic uniform-grid calculus in one and two dimensions.

Fields live on a node-centered lattice over the flat torus. All
differential operators are second-order centered differences, quadrature
is a plain scaled sum (exact for trigonometric polynomials below the
Nyquist mode), and smoothing is done by discrete convolution with a
compactly supported bump kernel.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic lattice with ``n`` nodes per axis.

    The default torus has period 1 per axis, so the spacing is ``1/n``.
    A non-unit ``period`` is used internally by the blow-up rescaling and
    the large-domain ground-state runs; it scales the spacing to
    ``period/n``.
    """

    dim: int
    n: int
    period: float = 1.0

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8:
            raise ValueError(f"need at least 8 nodes per axis, got {self.n}")
        if not (np.isfinite(self.period) and self.period > 0):
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def h(self) -> float:
        return self.period / self.n

    @property
    def shape(self) -> tuple:
        return (self.n,) * self.dim

    @property
    def num_nodes(self) -> int:
        return self.n**self.dim

    def axis_coords(self) -> np.ndarray:
        """Node coordinates along one axis: ``x_j = j*h``."""
        return np.arange(self.n) * self.h

    def meshgrid(self) -> tuple:
        """Node coordinate arrays, one per axis, each of shape ``self.shape``."""
        x = self.axis_coords()
        if self.dim == 1:
            return (x,)
        return tuple(np.meshgrid(x, x, indexing="ij"))


def _check_values(grid: TorusGrid, values: np.ndarray, expected_shape: tuple):
    if values.shape != expected_shape:
        raise ValueError(f"values shape {values.shape} does not match grid {expected_shape}")
    if not np.all(np.isfinite(values)):
        raise ValueError("field contains non-finite values")


@dataclass
class ScalarField:
    """One real value per grid node, stored with C index order."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        _check_values(self.grid, self.values, self.grid.shape)

    @classmethod
    def constant(cls, grid: TorusGrid, c: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(c)))

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "ScalarField":
        return cls(grid, np.asarray(fn(*grid.meshgrid()), dtype=float))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """One real ``dim``-vector per node; component ``d`` is ``values[d]``."""

    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        _check_values(self.grid, self.values, (self.grid.dim,) + self.grid.shape)

    @classmethod
    def zero(cls, grid: TorusGrid) -> "VectorField":
        return cls(grid, np.zeros((grid.dim,) + grid.shape))


def gradient(f: ScalarField) -> VectorField:
    """Centered periodic gradient, second order."""
    g = f.grid
    inv2h = 1.0 / (2.0 * g.h)
    comps = [
        (np.roll(f.values, -1, axis=d) - np.roll(f.values, 1, axis=d)) * inv2h
        for d in range(g.dim)
    ]
    return VectorField(g, np.stack(comps))


def laplacian(f: ScalarField) -> ScalarField:
    """Standard 3-point (1D) or 5-point (2D) periodic Laplacian."""
    g = f.grid
    inv_h2 = 1.0 / g.h**2
    out = np.zeros_like(f.values)
    for d in range(g.dim):
        out += np.roll(f.values, -1, axis=d) - 2.0 * f.values + np.roll(f.values, 1, axis=d)
    return ScalarField(g, out * inv_h2)


def divergence(v: VectorField) -> ScalarField:
    """Centered periodic divergence, the negative adjoint of ``gradient``."""
    g = v.grid
    inv2h = 1.0 / (2.0 * g.h)
    out = np.zeros(g.shape)
    for d in range(g.dim):
        out += (np.roll(v.values[d], -1, axis=d) - np.roll(v.values[d], 1, axis=d)) * inv2h
    return ScalarField(g, out)


def integrate(f: ScalarField) -> float:
    """Quadrature ``h^dim * sum(values)``; exact for resolved Fourier modes."""
    return float(f.values.sum() * f.grid.h**f.grid.dim)


def lp_norm(f: ScalarField, p) -> float:
    """L^p norm over the torus, ``p >= 1`` or ``inf``."""
    if p == np.inf or p == "inf":
        return float(np.max(np.abs(f.values)))
    p = float(p)
    if p < 1:
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    return float((np.abs(f.values) ** p).sum() * f.grid.h**f.grid.dim) ** (1.0 / p)


def dot(v: VectorField, w: VectorField) -> ScalarField:
    return ScalarField(v.grid, np.einsum("d...,d...->...", v.values, w.values))


def magnitude(v: VectorField) -> ScalarField:
    return ScalarField(v.grid, np.sqrt(np.einsum("d...,d...->...", v.values, v.values)))


@dataclass(frozen=True)
class Mollifier:
    """Radial bump kernel with unit mass and support radius ``1/k``.

    Profile ``(1 - (k r)^2)^3`` on ``r < 1/k``, sampled at the lattice
    nodes and renormalized so the discrete weights sum to one exactly.
    """

    k: int

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("mollifier index k must be at least 2 (support within a half period)")

    def support_radius(self) -> float:
        return 1.0 / self.k

    def kernel(self, grid: TorusGrid) -> np.ndarray:
        return kernel_weights(grid, self.support_radius())


def kernel_weights(grid: TorusGrid, radius: float) -> np.ndarray:
    """Discrete bump-kernel weights on the lattice for a given support radius.

    Raises if the support spans fewer than 3 nodes per axis or does not fit
    inside half a period.
    """
    h = grid.h
    if radius > grid.period / 2.0 + 1e-13:
        raise ValueError(f"kernel radius {radius} exceeds half the period {grid.period / 2.0}")
    r_nodes = int(np.floor(radius / h + 1e-12))
    if 2 * r_nodes + 1 < 3:
        raise ValueError(
            f"kernel support underresolved: radius {radius} spans fewer than 3 nodes at h={h}"
        )
    offs = np.arange(-r_nodes, r_nodes + 1) * h
    if grid.dim == 1:
        rr = np.abs(offs)
    else:
        ox, oy = np.meshgrid(offs, offs, indexing="ij")
        rr = np.sqrt(ox**2 + oy**2)
    s = rr / radius
    w = np.where(s < 1.0, (1.0 - s**2) ** 3, 0.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("degenerate kernel: no interior nodes in support")
    return w / total


def convolve_periodic(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Direct periodic convolution with a small kernel (wraparound boundary)."""
    return ndimage.convolve(values, weights, mode="wrap")


def mollify(f: ScalarField, psi: Mollifier) -> ScalarField:
    """Periodic smoothing of a field; preserves mass, bounds and sign."""
    return ScalarField(f.grid, convolve_periodic(f.values, psi.kernel(f.grid)))


def mollify_with_weights(f: ScalarField, weights: np.ndarray) -> ScalarField:
    return ScalarField(f.grid, convolve_periodic(f.values, weights))


# ---------------------------------------------------------------------------
# Field persistence: one row per node "index,x[,y],value". Values are written
# with 17 significant digits so the round trip is bit exact.
# ---------------------------------------------------------------------------

def dump_field(f: ScalarField, path) -> None:
    g = f.grid
    header = f"# {g.dim},{g.n}" if g.period == 1.0 else f"# {g.dim},{g.n},{g.period!r}"
    coords = g.meshgrid()
    flat = f.values.reshape(-1)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        if g.dim == 1:
            xs = coords[0].tolist()
            vals = flat.tolist()
            for i in range(g.n):
                fh.write(f"{i},{xs[i]!r},{vals[i]!r}\n")
        else:
            xs = coords[0].reshape(-1).tolist()
            ys = coords[1].reshape(-1).tolist()
            vals = flat.tolist()
            for i in range(len(vals)):
                fh.write(f"{i},{xs[i]!r},{ys[i]!r},{vals[i]!r}\n")


def load_field(path) -> ScalarField:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("#"):
            raise ValueError(f"missing field header in {path}")
        parts = header.lstrip("# ").split(",")
        dim, n = int(parts[0]), int(parts[1])
        period = float(parts[2]) if len(parts) > 2 else 1.0
        grid = TorusGrid(dim, n, period)
        flat = np.empty(grid.num_nodes)
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cols = line.split(",")
            flat[int(cols[0])] = float(cols[-1])
    return ScalarField(grid, flat.reshape(grid.shape))


def roll_field(f: ScalarField, shifts) -> ScalarField:
    """Translate a field by whole lattice steps (periodically)."""
    shifts = np.atleast_1d(shifts).astype(int)
    vals = f.values
    for d, s in enumerate(shifts):
        vals = np.roll(vals, s, axis=d)
    return ScalarField(f.grid, vals)


def replace_grid(f: ScalarField, grid: TorusGrid) -> ScalarField:
    """Reinterpret the same node values on another grid of equal shape."""
    if grid.shape != f.grid.shape:
        raise ValueError("grids have different shapes")
    return dataclasses.replace(f, grid=grid)
