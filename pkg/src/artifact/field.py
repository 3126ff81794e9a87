"""Pure Neumann Poisson problem for the self-consistent potential."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg

from .errors import SolvabilityError, SolverError
from .geometry import SpatialDomain

COMPAT_TOL = 1e-8
CG_RTOL = 1e-10


@dataclass
class FieldState:
    """Potential and field on the cells; ``e_field`` has shape ``(n_cells, 3)``."""

    phi: np.ndarray
    e_field: np.ndarray
    mean_phi: float = 0.0

    @classmethod
    def zeros(cls, n_cells: int) -> "FieldState":
        return cls(np.zeros(n_cells), np.zeros((n_cells, 3)), 0.0)

    def copy(self) -> "FieldState":
        return FieldState(self.phi.copy(), self.e_field.copy(), self.mean_phi)


def neumann_laplacian(domain: SpatialDomain) -> sp.csr_matrix:
    """Symmetric positive semi-definite ``-Delta_h`` with zero flux through boundary faces."""
    rows, cols, vals = [], [], []
    diag = np.zeros(domain.n_cells)
    for i in range(domain.active_dims):
        right = domain.neighbour[i, :, 1]
        inner = np.flatnonzero(right >= 0)
        w = 1.0 / domain.h[i] ** 2
        a, b = inner, right[inner]
        rows += [a, b]
        cols += [b, a]
        vals += [np.full(len(a), -w), np.full(len(a), -w)]
        np.add.at(diag, a, w)
        np.add.at(diag, b, w)
    rows.append(np.arange(domain.n_cells))
    cols.append(np.arange(domain.n_cells))
    vals.append(diag)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(domain.n_cells, domain.n_cells),
    )


class PoissonSolver:
    """Conjugate gradients on the Neumann Laplacian with the constants deflated."""

    def __init__(self, domain: SpatialDomain, rtol: float = CG_RTOL):
        self.domain = domain
        self.matrix = neumann_laplacian(domain)
        self.rtol = rtol

    def remove_mean(self, rho: np.ndarray) -> np.ndarray:
        return rho - rho.mean()

    def solve(self, rho: np.ndarray, scale: float | None = None) -> FieldState:
        """Solve ``-Delta phi = rho`` with ``d_n phi = 0`` and zero mean.

        The compatibility tolerance is relative to ``max(RMS(rho), scale)``.
        Pass the species density magnitude as ``scale`` when ``rho`` is a
        difference of nearly equal densities.
        """
        rho = np.asarray(rho, dtype=float)
        nc = self.domain.n_cells
        if self.domain.active_dims == 0 or nc == 0:
            return FieldState.zeros(nc)
        mean = float(rho.mean())
        scale = max(float(np.sqrt(np.mean(rho * rho))), scale or 0.0)
        if abs(mean) > COMPAT_TOL * scale:
            raise SolvabilityError(mean, COMPAT_TOL * scale)
        rhs = rho - mean
        if not np.any(rhs):
            return FieldState.zeros(nc)
        phi, info = cg(self.matrix, rhs, rtol=self.rtol, atol=0.0, maxiter=10 * nc + 100)
        phi -= phi.mean()
        res = float(np.linalg.norm(self.matrix @ phi - rhs) / np.linalg.norm(rhs))
        if info != 0 and res > 10 * self.rtol:
            raise SolverError("Poisson CG did not converge", res)
        return FieldState(phi, gradient(self.domain, -phi), float(phi.mean()))


def gradient(domain: SpatialDomain, u: np.ndarray) -> np.ndarray:
    """Centred cell gradient with mirror ghosts (zero normal derivative at walls).

    ``u`` has the cell axis first; the result appends a trailing axis of 3.
    """
    out = np.zeros(u.shape + (3,))
    for i in range(domain.active_dims):
        left = neighbour_values(domain, u, i, 0)
        right = neighbour_values(domain, u, i, 1)
        out[..., i] = (right - left) / (2.0 * domain.h[i])
    return out


def neighbour_values(domain: SpatialDomain, u: np.ndarray, axis: int, side: int) -> np.ndarray:
    """Values of a scalar field at the neighbouring cell, mirrored across walls."""
    nb = domain.neighbour[axis, :, side]
    idx = np.where(nb >= 0, nb, np.arange(domain.n_cells))
    return u[idx]


def solve_poisson(rho: np.ndarray, domain: SpatialDomain) -> FieldState:
    return PoissonSolver(domain).solve(rho)


def field_energy(state: FieldState, domain: SpatialDomain) -> float:
    """``int |E|^2 dx`` by cell quadrature."""
    return float(np.sum(state.e_field**2) * domain.cell_volume)
