"""Global Maxwellian, Gaussian-moment quadrature and the macroscopic projection."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .geometry import VelocityGrid

TWO_PI = 2.0 * np.pi

# Default velocity grid.  v_max = 7 keeps order-6 truncated moments inside
# 1e-6 relative; see the decisions ledger.
DEFAULT_N_V = 16
DEFAULT_V_MAX = 7.0


def maxwellian(v) -> np.ndarray:
    """``mu(v) = (2 pi)^{-3/2} exp(-|v|^2 / 2)``, evaluated on the last axis of ``v``."""
    v = np.asarray(v, dtype=float)
    return TWO_PI**-1.5 * np.exp(-0.5 * np.sum(v * v, axis=-1))


def sqrt_maxwellian(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return TWO_PI**-0.75 * np.exp(-0.25 * np.sum(v * v, axis=-1))


def bracket(v) -> np.ndarray:
    """Japanese bracket ``<v> = sqrt(1 + |v|^2)``."""
    v = np.asarray(v, dtype=float)
    return np.sqrt(1.0 + np.sum(v * v, axis=-1))


def default_grid() -> VelocityGrid:
    return VelocityGrid(DEFAULT_N_V, DEFAULT_V_MAX)


# -- Gaussian moments --------------------------------------------------------

def _gauss_1d(k: int) -> float:
    """``int v^k exp(-v^2/2) dv / sqrt(2 pi)``: (k-1)!! for even k, else 0."""
    if k % 2:
        return 0.0
    out = 1.0
    for j in range(k - 1, 0, -2):
        out *= j
    return out


def exact_gauss_moment(poly: Mapping[tuple[int, int, int], float]) -> float:
    """Closed-form ``int p(v) mu(v) dv`` for a polynomial given as ``{exponents: coeff}``."""
    return float(sum(c * _gauss_1d(a) * _gauss_1d(b) * _gauss_1d(d) for (a, b, d), c in poly.items()))


def poly_degree(poly: Mapping[tuple[int, int, int], float]) -> int:
    return max(sum(e) for e in poly) if poly else 0


def eval_poly(poly: Mapping[tuple[int, int, int], float], v: np.ndarray) -> np.ndarray:
    out = np.zeros(v.shape[:-1])
    for (a, b, d), c in poly.items():
        out = out + c * v[..., 0] ** a * v[..., 1] ** b * v[..., 2] ** d
    return out


def gauss_moment(poly, grid: VelocityGrid | None = None, degree: int | None = None) -> float:
    """Grid quadrature of ``p(v) mu(v)``.

    ``poly`` is either a mapping ``{(a, b, c): coeff}`` for the polynomial
    ``sum coeff v1^a v2^b v3^c`` or a callable of the node array ``v``
    (shape ``(..., 3)``).  Polynomials of degree above 6 trigger a warning
    since the truncated grid is only validated up to that order.
    """
    grid = grid or default_grid()
    if callable(poly):
        values = poly(grid.v)
    else:
        degree = poly_degree(poly)
        values = eval_poly(poly, grid.v)
    if degree is not None and degree > 6:
        warnings.warn(f"moment of degree {degree} exceeds the validated order 6", stacklevel=2)
    return float(grid.integrate(values * maxwellian(grid.v)))


def _sym(*terms):
    out = {}
    for coeff, exps in terms:
        out[exps] = out.get(exps, 0.0) + coeff
    return out


# (name, polynomial, exact value); j = 1, m = 2 where two indices are needed.
MOMENT_FIXTURES = [
    ("v_j^2", _sym((1.0, (2, 0, 0))), 1.0),
    ("|v|^2 v_j^2", _sym((1.0, (4, 0, 0)), (1.0, (2, 2, 0)), (1.0, (2, 0, 2))), 5.0),
    ("|v|^4 v_j^2", _sym((1.0, (6, 0, 0)), (1.0, (2, 4, 0)), (1.0, (2, 0, 4)),
                         (2.0, (4, 2, 0)), (2.0, (4, 0, 2)), (2.0, (2, 2, 2))), 35.0),
    ("v_m^2 (v_m^2 - 1)", _sym((1.0, (0, 4, 0)), (-1.0, (0, 2, 0))), 2.0),
    ("v_m^2 (v_j^2 - 1)", _sym((1.0, (2, 2, 0)), (-1.0, (0, 2, 0))), 0.0),
    ("v_m^2 v_j^2 |v|^2", _sym((1.0, (4, 2, 0)), (1.0, (2, 4, 0)), (1.0, (2, 2, 2))), 7.0),
    ("v_j^2 - 1", _sym((1.0, (2, 0, 0)), (-1.0, (0, 0, 0))), 0.0),
    ("|v|^2", _sym((1.0, (2, 0, 0)), (1.0, (0, 2, 0)), (1.0, (0, 0, 2))), 3.0),
    ("|v|^4", _sym((1.0, (4, 0, 0)), (1.0, (0, 4, 0)), (1.0, (0, 0, 4)),
                   (2.0, (2, 2, 0)), (2.0, (2, 0, 2)), (2.0, (0, 2, 2))), 15.0),
]


def moment_fixture_errors(grid: VelocityGrid | None = None):
    """Return ``[(name, quadrature, exact, error)]``.

    The error is relative for nonzero exact values and absolute for the
    zero-valued fixtures.
    """
    out = []
    for name, poly, exact in MOMENT_FIXTURES:
        q = gauss_moment(poly, grid)
        err = abs(q - exact) / abs(exact) if exact else abs(q)
        out.append((name, q, exact, err))
    return out


# -- projection ----------------------------------------------------------------

@dataclass
class MomentSet:
    """Macroscopic coefficients as spatial fields (leading axis = cell)."""

    a_plus: np.ndarray
    a_minus: np.ndarray
    b: np.ndarray  # (n_cells, 3)
    c: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [self.a_plus[:, None], self.a_minus[:, None], self.b, self.c[:, None]], axis=1
        )


@dataclass
class FluidMoments:
    theta: np.ndarray  # (n_cells, 3, 3)
    lam: np.ndarray  # (n_cells, 3)
    g_vec: np.ndarray  # (n_cells, 3)
    h: np.ndarray | None = None  # h_+- on the phase grid when L f is supplied


class Projector:
    """Gram-corrected orthogonal projection onto the six-dimensional kernel.

    Basis ordering: ``[1,0] mu^1/2``, ``[0,1] mu^1/2``, ``[1,1] v_j mu^1/2``
    (j = 1..3) and ``[1,1] (|v|^2 - 3) mu^1/2``.  The coefficients of ``P f``
    in this basis are ``(a_+, a_-, b_1, b_2, b_3, c)``.
    """

    def __init__(self, grid: VelocityGrid):
        self.grid = grid
        m12 = sqrt_maxwellian(grid.v)
        self.sqrt_mu = m12
        basis = np.zeros((6, 2) + grid.shape)
        basis[0, 0] = m12
        basis[1, 1] = m12
        for j in range(3):
            basis[2 + j, :] = grid.v[..., j] * m12
        basis[5, :] = (grid.vsq - 3.0) * m12
        self.basis = basis
        flat = basis.reshape(6, -1)
        self.gram = flat @ flat.T * grid.quadrature_weight
        self._gram_inv = np.linalg.inv(self.gram)

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """Coefficients per cell, shape ``(n_cells, 6)``; ``f`` is ``(2, n_cells, n, n, n)``."""
        nc = f.shape[1]
        rhs = np.einsum("asv,scv->ca", self.basis.reshape(6, 2, -1), f.reshape(2, nc, -1))
        rhs *= self.grid.quadrature_weight
        return rhs @ self._gram_inv.T

    def expand(self, coeff: np.ndarray) -> np.ndarray:
        nc = coeff.shape[0]
        out = np.einsum("ca,asv->scv", coeff, self.basis.reshape(6, 2, -1))
        return out.reshape((2, nc) + self.grid.shape)

    def project(self, f: np.ndarray):
        """Return ``(MomentSet, P f, (I - P) f)``."""
        coeff = self.coefficients(f)
        pf = self.expand(coeff)
        ms = MomentSet(coeff[:, 0].copy(), coeff[:, 1].copy(), coeff[:, 2:5].copy(), coeff[:, 5].copy())
        return ms, pf, f - pf


def project_P(f: np.ndarray, grid: VelocityGrid, projector: Projector | None = None):
    """Project ``f`` (shape ``(2, n_cells, n, n, n)``) onto the kernel of ``L``.

    Returns ``(MomentSet, P f, (I - P) f)``.
    """
    projector = projector or Projector(grid)
    return projector.project(f)


def densities(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """Direct quadrature ``int f_+- mu^1/2 dv`` per species and cell, shape ``(2, n_cells)``."""
    return grid.integrate(f * sqrt_maxwellian(grid.v))


def charge_density(f: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """``a_+ - a_-`` by direct quadrature, the right-hand side of the Poisson equation."""
    return grid.integrate((f[0] - f[1]) * sqrt_maxwellian(grid.v))


def theta_moment(g: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """``Theta_jm(g) = (g, (v_j v_m - 1) mu^1/2)`` over the trailing velocity axes."""
    m12 = sqrt_maxwellian(grid.v)
    v = grid.v
    out = np.empty(g.shape[:-3] + (3, 3))
    for j in range(3):
        for m in range(j, 3):
            val = grid.integrate(g * ((v[..., j] * v[..., m] - 1.0) * m12))
            out[..., j, m] = val
            out[..., m, j] = val
    return out


def lambda_moment(g: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """``Lambda_j(g) = (1/10) (g, (|v|^2 - 5) v_j mu^1/2)``."""
    m12 = sqrt_maxwellian(grid.v)
    w = (grid.vsq - 5.0) * m12
    return np.stack([grid.integrate(g * (w * grid.v[..., j])) for j in range(3)], axis=-1) / 10.0


def velocity_moment(g: np.ndarray, grid: VelocityGrid) -> np.ndarray:
    """``(g, v mu^1/2)`` as a trailing 3-vector."""
    m12 = sqrt_maxwellian(grid.v)
    return np.stack([grid.integrate(g * (grid.v[..., j] * m12)) for j in range(3)], axis=-1)


def fluid_moments(f: np.ndarray, grid: VelocityGrid, L_of_f: np.ndarray | None = None,
                  streaming_of_micro: Callable[[np.ndarray], np.ndarray] | None = None,
                  projector: Projector | None = None) -> FluidMoments:
    """Moments of the microscopic part used by the fluid-type system.

    ``theta`` and ``lam`` act on ``(I - P) f . [1, 1]``; ``g_vec`` is
    ``((I - P) f . [1, -1], v mu^1/2)``.  When ``L_of_f`` is given together
    with ``streaming_of_micro`` (the map ``g -> -v . grad_x g``), ``h_+-`` is
    returned as well.
    """
    _, _, micro = project_P(f, grid, projector)
    s = micro[0] + micro[1]
    d = micro[0] - micro[1]
    out = FluidMoments(theta_moment(s, grid), lambda_moment(s, grid), velocity_moment(d, grid))
    if L_of_f is not None:
        h = L_of_f.copy()
        if streaming_of_micro is not None:
            h = h + streaming_of_micro(micro)
        out.h = h
    return out
