"""Spatial domains built from axis-aligned boxes, the velocity grid and the
specular reflection map.

Phase-space arrays use the layout ``(species, cell, v1, v2, v3)`` where the
cell axis enumerates the active lattice cells in C order of ``(x1, x2, x3)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError

_LATTICE_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-aligned box ``[lo_1, hi_1] x [lo_2, hi_2] x [lo_3, hi_3]``."""

    lo: tuple[float, float, float]
    hi: tuple[float, float, float]

    def __post_init__(self):
        lo = tuple(float(x) for x in self.lo)
        hi = tuple(float(x) for x in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise ConfigError("box corners must be 3-vectors", key="boxes")
        for i in range(3):
            if not hi[i] > lo[i]:
                raise ConfigError(f"box {lo}-{hi} has non-positive extent on axis {i + 1}", key="boxes")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def overlaps(self, other: "Box") -> bool:
        """True when the open interiors intersect."""
        return all(self.lo[i] < other.hi[i] and other.lo[i] < self.hi[i] for i in range(3))


@dataclass(frozen=True)
class BoundaryFace:
    """A lattice face on the domain boundary.

    ``cell`` is the compact index of the interior cell owning the face,
    ``axis`` the normal axis (0, 1 or 2) and ``sign`` the orientation of the
    outward normal ``sign * e_axis``.
    """

    cell: int
    ijk: tuple[int, int, int]
    axis: int
    sign: int
    center: tuple[float, float, float]
    area: float

    @property
    def normal(self) -> np.ndarray:
        n = np.zeros(3)
        n[self.axis] = self.sign
        return n

    @property
    def tangents(self) -> tuple[np.ndarray, np.ndarray]:
        a, b = [k for k in range(3) if k != self.axis]
        return np.eye(3)[a], np.eye(3)[b]


class VelocityGrid:
    """Cell-centred tensor grid on ``[-v_max, v_max]^3`` with an even node count.

    Parameters
    ----------
    n_v : int
        Nodes per axis, must be even so that ``v -> -v`` maps nodes to nodes.
    v_max : float
        Truncation radius per axis.
    """

    def __init__(self, n_v: int, v_max: float):
        if int(n_v) != n_v or n_v < 2:
            raise ConfigError(f"n_v must be a positive even integer, got {n_v}", key="n_v")
        if n_v % 2:
            raise ConfigError(f"n_v must be even, got {n_v}", key="n_v")
        if not v_max > 0:
            raise ConfigError(f"v_max must be positive, got {v_max}", key="v_max")
        self.n_v = int(n_v)
        self.v_max = float(v_max)
        self.h_v = 2.0 * self.v_max / self.n_v
        self.points = (np.arange(self.n_v) + 0.5) * self.h_v - self.v_max
        self.quadrature_weight = self.h_v**3
        v1, v2, v3 = np.meshgrid(self.points, self.points, self.points, indexing="ij")
        self.v = np.stack([v1, v2, v3], axis=-1)
        self.vsq = v1**2 + v2**2 + v3**2

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_v,) * 3

    def reflect_index(self, k: int) -> int:
        """Index of the node at ``-v_k`` along one axis."""
        return self.n_v - 1 - k

    def reflect_array(self, f: np.ndarray, axis: int) -> np.ndarray:
        """Return ``f(R v)`` for the reflection negating velocity component ``axis``.

        The velocity axes are the trailing three axes of ``f``.
        """
        return np.flip(f, axis=f.ndim - 3 + axis)

    def integrate(self, g: np.ndarray) -> np.ndarray:
        """Quadrature over the trailing three (velocity) axes."""
        return g.sum(axis=(-3, -2, -1)) * self.quadrature_weight

    def __repr__(self):
        return f"VelocityGrid(n_v={self.n_v}, v_max={self.v_max})"


class SpatialDomain:
    """Union of boxes discretised on a common lattice of mesh size ``h_x``.

    Axes beyond ``active_dims`` are unresolved: they carry a single cell
    spanning the full extent and every field is homogeneous along them.
    """

    def __init__(self, boxes: Sequence[Box], h_x, active_dims: int = 3):
        if not boxes:
            raise ConfigError("at least one box is required", key="boxes")
        if active_dims not in (1, 2, 3):
            raise ConfigError(f"active_dims must be 1, 2 or 3, got {active_dims}", key="active_dims")
        self.boxes = [b if isinstance(b, Box) else Box(*b) for b in boxes]
        self.active_dims = int(active_dims)
        hx = np.broadcast_to(np.asarray(h_x, dtype=float), (3,)).copy()
        if np.any(hx <= 0):
            raise ConfigError(f"h_x must be positive, got {h_x}", key="h_x")

        for a in range(len(self.boxes)):
            for b in range(a + 1, len(self.boxes)):
                if self.boxes[a].overlaps(self.boxes[b]):
                    raise ConfigError(
                        f"boxes {a} {self.boxes[a].lo}-{self.boxes[a].hi} and "
                        f"{b} {self.boxes[b].lo}-{self.boxes[b].hi} overlap in their interiors",
                        key="boxes",
                    )

        lo = np.min([b.lo for b in self.boxes], axis=0)
        hi = np.max([b.hi for b in self.boxes], axis=0)
        shape = []
        cell_size = np.empty(3)
        for i in range(3):
            if i < self.active_dims:
                n = (hi[i] - lo[i]) / hx[i]
                if abs(n - round(n)) > _LATTICE_TOL * max(1.0, n):
                    raise ConfigError(f"domain extent on axis {i + 1} is not a multiple of h_x", key="h_x")
                for k, b in enumerate(self.boxes):
                    for edge in (b.lo[i], b.hi[i]):
                        m = (edge - lo[i]) / hx[i]
                        if abs(m - round(m)) > _LATTICE_TOL * max(1.0, abs(m)):
                            raise ConfigError(
                                f"box {k} edge {edge} on axis {i + 1} is not on the h_x lattice",
                                key="boxes",
                            )
                shape.append(int(round(n)))
                cell_size[i] = hx[i]
            else:
                for k, b in enumerate(self.boxes):
                    if abs(b.lo[i] - lo[i]) > _LATTICE_TOL or abs(b.hi[i] - hi[i]) > _LATTICE_TOL:
                        raise ConfigError(
                            f"box {k} does not span the full extent of unresolved axis {i + 1}",
                            key="boxes",
                        )
                shape.append(1)
                cell_size[i] = hi[i] - lo[i]

        self.origin = lo
        self.extent = hi - lo
        self.shape = tuple(shape)
        self.h = cell_size
        self.h_x = hx
        self.cell_volume = float(np.prod(cell_size))

        mask = np.zeros(self.shape, dtype=bool)
        for b in self.boxes:
            sl = []
            for i in range(3):
                if i < self.active_dims:
                    a0 = int(round((b.lo[i] - lo[i]) / hx[i]))
                    a1 = int(round((b.hi[i] - lo[i]) / hx[i]))
                    sl.append(slice(a0, a1))
                else:
                    sl.append(slice(0, 1))
            mask[tuple(sl)] = True
        self.mask = mask
        self.cell_ijk = np.argwhere(mask)
        self.n_cells = len(self.cell_ijk)
        self.index_of = -np.ones(self.shape, dtype=np.int64)
        self.index_of[mask] = np.arange(self.n_cells)
        self.centers = self.origin + (self.cell_ijk + 0.5) * self.h

        # neighbour[i] has shape (n_cells, 2): compact index of the cell at
        # -e_i and +e_i, or -1 across a boundary face.
        self.neighbour = np.full((3, self.n_cells, 2), -1, dtype=np.int64)
        for i in range(self.active_dims):
            for s, step in enumerate((-1, 1)):
                nb = self.cell_ijk.copy()
                nb[:, i] += step
                inside = (nb[:, i] >= 0) & (nb[:, i] < self.shape[i])
                idx = np.full(self.n_cells, -1, dtype=np.int64)
                idx[inside] = self.index_of[tuple(nb[inside].T)]
                self.neighbour[i, :, s] = idx

        self.faces = self._enumerate_faces()

    def _enumerate_faces(self) -> list[BoundaryFace]:
        faces = []
        for c, ijk in enumerate(self.cell_ijk):
            for i in range(3):
                for s, sign in enumerate((-1, 1)):
                    if i < self.active_dims and self.neighbour[i, c, s] >= 0:
                        continue
                    center = self.centers[c].copy()
                    center[i] += sign * 0.5 * self.h[i]
                    area = float(np.prod([self.h[k] for k in range(3) if k != i]))
                    faces.append(BoundaryFace(c, tuple(int(x) for x in ijk), i, sign, tuple(center), area))
        return faces

    @property
    def cells(self) -> np.ndarray:
        return self.cell_ijk

    def faces_on(self, axis: int) -> list[BoundaryFace]:
        """Faces belonging to the boundary component Gamma_axis."""
        return [f for f in self.faces if f.axis == axis]

    def mirror_cell(self, cell: int, axis: int, sign: int, layer: int = 1) -> int:
        """Interior cell whose reflection fills ghost ``layer`` beyond a wall.

        The ghost at distance ``layer`` outside the face of ``cell`` with
        outward normal ``sign * e_axis`` mirrors the cell ``layer - 1`` steps
        inward; when that cell is not in the domain the wall cell is used.
        """
        ijk = self.cell_ijk[cell].copy()
        ijk[axis] -= sign * (layer - 1)
        if 0 <= ijk[axis] < self.shape[axis] and self.mask[tuple(ijk)]:
            return int(self.index_of[tuple(ijk)])
        return int(cell)

    def to_lattice(self, arr: np.ndarray, cell_axis: int = 0) -> np.ndarray:
        """Scatter an array with a compact cell axis onto the full lattice (zeros outside)."""
        moved = np.moveaxis(arr, cell_axis, 0)
        out = np.zeros(self.shape + moved.shape[1:], dtype=arr.dtype)
        out[self.mask] = moved
        return np.moveaxis(out, [0, 1, 2], [cell_axis, cell_axis + 1, cell_axis + 2])

    def from_lattice(self, arr: np.ndarray, cell_axis: int = 0) -> np.ndarray:
        """Gather the active cells from an array on the full lattice."""
        moved = np.moveaxis(arr, list(range(cell_axis, cell_axis + 3)), [0, 1, 2])
        out = moved[self.mask]
        return np.moveaxis(out, 0, cell_axis)

    def integrate(self, g: np.ndarray) -> np.ndarray:
        """Cell quadrature over the leading (cell) axis."""
        return np.sum(g, axis=0) * self.cell_volume

    def __repr__(self):
        return f"SpatialDomain(shape={self.shape}, active_dims={self.active_dims}, n_cells={self.n_cells})"


@dataclass
class DistState:
    """Two-species perturbation ``f = [f_+, f_-]`` on the phase grid.

    ``f`` has shape ``(2, n_cells, n_v, n_v, n_v)``.
    """

    f: np.ndarray
    t: float = 0.0
    meta: dict = field(default_factory=dict)

    def copy(self) -> "DistState":
        return DistState(self.f.copy(), self.t, dict(self.meta))

    @classmethod
    def zeros(cls, domain: SpatialDomain, grid: VelocityGrid, t: float = 0.0) -> "DistState":
        return cls(np.zeros((2, domain.n_cells) + grid.shape), t)


def build_domain(boxes, h_x, n_v: int, v_max: float, active_dims: int = 3):
    """Validate the geometry and return ``(SpatialDomain, VelocityGrid)``."""
    grid = VelocityGrid(n_v, v_max)
    domain = SpatialDomain(boxes, h_x, active_dims)
    return domain, grid


def _axis_normal(n) -> tuple[int, int]:
    n = np.asarray(n, dtype=float)
    if n.shape != (3,):
        raise ValueError("normal must be a 3-vector")
    nz = np.flatnonzero(n)
    if len(nz) != 1 or abs(n[nz[0]]) != 1.0:
        raise ValueError(f"normal must be one of +-e_i, got {n}")
    return int(nz[0]), int(np.sign(n[nz[0]]))


def reflect(v, n) -> np.ndarray:
    """Specular reflection ``R v = v - 2 n (n . v)`` for an axis normal ``n``."""
    axis, _ = _axis_normal(n)
    out = np.array(v, dtype=float, copy=True)
    out[..., axis] = -out[..., axis]
    return out


def classify_face_velocity(face, v) -> str:
    """Return ``'incoming'``, ``'outgoing'`` or ``'grazing'`` from the sign of ``v . n``."""
    n = face.normal if isinstance(face, BoundaryFace) else np.asarray(face, dtype=float)
    vn = float(np.dot(np.asarray(v, dtype=float), n))
    if vn < 0:
        return "incoming"
    if vn > 0:
        return "outgoing"
    return "grazing"
