"""Free streaming with specular walls, the field terms and the field source."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .field import FieldState
from .geometry import BoundaryFace, SpatialDomain, VelocityGrid
from .maxwellian import sqrt_maxwellian


@dataclass(frozen=True)
class GhostLayer:
    """Ghost data for one wall face: the mirrored cell and the velocity reflection.

    ``velocity_map`` is the index map ``k -> n_v - 1 - k`` along ``axis``.
    """

    face: BoundaryFace
    mirror_cell: int
    axis: int
    velocity_map: np.ndarray


def build_ghost_layers(domain: SpatialDomain, grid: VelocityGrid) -> list[GhostLayer]:
    vmap = np.arange(grid.n_v)[::-1].copy()
    return [
        GhostLayer(face, domain.mirror_cell(face.cell, face.axis, face.sign), face.axis, vmap)
        for face in domain.faces
        if face.axis < domain.active_dims
    ]


def check_cfl(dt: float, domain: SpatialDomain, grid: VelocityGrid, factor: float = 0.9):
    """Raise ``ConfigError`` unless ``dt <= factor * h_x / v_max`` on every resolved axis."""
    if domain.active_dims == 0:
        return
    hmin = float(np.min(domain.h[: domain.active_dims]))
    limit = factor * hmin / grid.v_max
    if dt > limit:
        raise ConfigError(f"CFL violated: dt={dt} exceeds {limit:.6g} = {factor} h_x / v_max", key="dt")


def _field_matrix(grid: VelocityGrid) -> np.ndarray:
    """``mu^{-1/2} B mu^{1/2}`` along one axis, where ``B`` differences face averages
    of ``mu^{1/2} f`` with zero flux through the outer velocity faces."""
    n = grid.n_v
    h = grid.h_v
    B = np.zeros((n, n))
    for k in range(n):
        if k + 1 < n:
            B[k, k] += 0.5 / h
            B[k, k + 1] += 0.5 / h
        if k - 1 >= 0:
            B[k, k] -= 0.5 / h
            B[k, k - 1] -= 0.5 / h
    p = grid.points
    return B * np.exp(0.25 * (p[:, None] ** 2 - p[None, :] ** 2))


class Transport:
    """Stencils for the collisionless part of the perturbation equation."""

    def __init__(self, domain: SpatialDomain, grid: VelocityGrid):
        self.domain = domain
        self.grid = grid
        self.ghosts = build_ghost_layers(domain, grid)
        self.sqrt_mu = sqrt_maxwellian(grid.v)
        self._fmat = _field_matrix(grid)
        v = grid.points
        self._vplus = np.maximum(v, 0.0)
        self._vminus = np.minimum(v, 0.0)

    def _bcast(self, vec: np.ndarray, axis: int) -> np.ndarray:
        shape = [1, 1, 1]
        shape[axis] = self.grid.n_v
        return vec.reshape(shape)

    def neighbour(self, f: np.ndarray, axis: int, side: int) -> np.ndarray:
        """``f`` at the neighbouring cell along ``axis`` (side 0: -e_i, 1: +e_i).

        Across a wall the ghost value ``f(x_mirror, R v)`` is used.  ``f`` has
        shape ``(..., n_cells, n, n, n)``.
        """
        nb = self.domain.neighbour[axis, :, side]
        inside = nb >= 0
        out = f[..., np.where(inside, nb, 0), :, :, :]
        if not inside.all():
            walls = np.flatnonzero(~inside)
            sign = -1 if side == 0 else 1
            mirrors = [self.domain.mirror_cell(int(c), axis, sign) for c in walls]
            out[..., walls, :, :, :] = self.grid.reflect_array(f[..., mirrors, :, :, :], axis)
        return out

    def streaming_rhs(self, f: np.ndarray) -> np.ndarray:
        """``-v . grad_x f`` by first-order upwinding on every resolved axis."""
        out = np.zeros_like(f)
        for i in range(self.domain.active_dims):
            left = self.neighbour(f, i, 0)
            right = self.neighbour(f, i, 1)
            vp = self._bcast(self._vplus, i)
            vm = self._bcast(self._vminus, i)
            out -= (vp * (f - left) + vm * (right - f)) / self.domain.h[i]
        return out

    def wall_flux(self, f: np.ndarray, face: BoundaryFace) -> np.ndarray:
        """Net mass flux ``int (v . n) f_face mu^{1/2} dv`` through one face, per species.

        The face state is the upwind value: the wall cell for outgoing
        velocities and its specular ghost for incoming ones.
        """
        i, sign = face.axis, face.sign
        fc = f[:, face.cell]
        ghost = self.grid.reflect_array(f[:, self.domain.mirror_cell(face.cell, i, sign)], i)
        vn = sign * self._bcast(self.grid.points, i)
        face_val = np.where(vn > 0, fc, ghost)
        return self.grid.integrate(vn * face_val * self.sqrt_mu)

    def grad_v_weighted(self, f: np.ndarray, axis: int) -> np.ndarray:
        """``mu^{-1/2} d_{v_axis} (mu^{1/2} f)`` in conservative flux form."""
        pos = f.ndim - 3 + axis
        ft = np.moveaxis(f, pos, -1)
        return np.moveaxis(ft @ self._fmat.T, -1, pos)

    def field_terms_rhs(self, f: np.ndarray, field: FieldState) -> np.ndarray:
        """``-+ (1/2) grad phi . v f_+- +- grad phi . grad_v f_+-`` moved to the right side.

        Equal to ``-+ E . mu^{-1/2} grad_v (mu^{1/2} f_+-)``.
        """
        out = np.zeros_like(f)
        E = field.e_field
        for i in range(self.domain.active_dims):
            if not np.any(E[:, i]):
                continue
            gi = self.grad_v_weighted(f, i)
            out -= E[:, i][None, :, None, None, None] * gi
        out[1] *= -1.0
        return out

    def source_rhs(self, field: FieldState) -> np.ndarray:
        """``-+ grad phi . v mu^{1/2}`` per species, i.e. ``+- E . v mu^{1/2}``."""
        ev = np.einsum("ci,...i->c...", field.e_field, self.grid.v) * self.sqrt_mu
        return np.stack([ev, -ev], axis=0)
