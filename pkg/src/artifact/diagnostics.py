"""Energy and dissipation functionals, conserved quantities, decay fits,
fluid-system residuals and boundary-compatibility measurements."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ConfigError
from .field import FieldState, field_energy
from .geometry import SpatialDomain, VelocityGrid
from .landau import LandauOperator, WeightSpec, _apply_axis, weight_eval
from .maxwellian import (
    Projector,
    lambda_moment,
    maxwellian,
    sqrt_maxwellian,
    theta_moment,
    velocity_moment,
)
from .transport import Transport

MAX_DIAG_ORDER = 3


# -- data types -------------------------------------------------------------------

@dataclass
class EnergyReport:
    """Diagnostic record for one time level."""

    t: float
    e_nu: float
    d_nu: float
    e_plain: float
    mass_plus: float
    mass_minus: float
    total_energy: float
    min_F: float
    x_functional: float = float("nan")
    e_field_quartic: float = 0.0

    CSV_FIELDS = ("t", "mass_plus", "mass_minus", "total_energy", "e_nu", "d_nu", "e_plain", "min_F")

    def row(self) -> tuple:
        return tuple(getattr(self, k) for k in self.CSV_FIELDS)


@dataclass
class DecayFit:
    """Least-squares fit of ``log E(t) = log E_0 - delta t^p``."""

    delta: float
    p_exponent: float
    r_squared: float
    window: tuple[float, float]
    log_e0: float = 0.0


@dataclass
class ResidualReport:
    """L^2_x residuals of the balance laws and boundary maxima per wall component."""

    residuals: dict = field(default_factory=dict)
    boundary_maxima: dict = field(default_factory=dict)
    phi_third: dict = field(default_factory=dict)


# -- spatial derivatives with reflection ghosts -------------------------------------

def _shift_map(domain: SpatialDomain, axis: int, k: int):
    """Source cell and reflection flag for the value ``k`` cells along ``axis``.

    Beyond a wall the ghost at depth ``m`` mirrors the cell ``m - 1`` steps
    inward from the wall cell.
    """
    nc = domain.n_cells
    src = np.arange(nc)
    refl = np.zeros(nc, dtype=bool)
    side = 1 if k > 0 else 0
    sign = 1 if k > 0 else -1
    for c in range(nc):
        cur = c
        for step in range(abs(k)):
            nb = domain.neighbour[axis, cur, side]
            if nb < 0:
                src[c] = domain.mirror_cell(cur, axis, sign, abs(k) - step)
                refl[c] = True
                break
            cur = nb
        else:
            src[c] = cur
    return src, refl


class SpatialStencil:
    """Centred x-derivatives of arbitrary order (up to 3) per axis.

    Kinetic arrays ``(..., n_cells, n, n, n)`` use the specular ghost
    ``f(x_mirror, R v)``; cell fields ``(n_cells, ...)`` use even or odd
    mirror extension.
    """

    _STENCILS = {
        1: {-1: -0.5, 1: 0.5},
        2: {-1: 1.0, 0: -2.0, 1: 1.0},
        3: {-2: -0.5, -1: 1.0, 1: -1.0, 2: 0.5},
    }

    def __init__(self, domain: SpatialDomain, grid: VelocityGrid | None = None):
        self.domain = domain
        self.grid = grid
        self._maps = {}

    def _map(self, axis, k):
        if (axis, k) not in self._maps:
            self._maps[(axis, k)] = _shift_map(self.domain, axis, k)
        return self._maps[(axis, k)]

    def _shifted(self, u, axis, k, kind, cell_axis):
        src, refl = self._map(axis, k)
        out = np.take(u, src, axis=cell_axis)
        if not refl.any():
            return out
        idx = [slice(None)] * u.ndim
        idx[cell_axis] = refl
        idx = tuple(idx)
        if kind == "kinetic":
            out[idx] = self.grid.reflect_array(out[idx], axis)
        elif kind == "odd":
            out[idx] = -out[idx]
        return out

    def derivative(self, u, axis: int, order: int, kind: str = "kinetic", cell_axis: int | None = None):
        if order == 0 or axis >= self.domain.active_dims:
            return u if order == 0 else np.zeros_like(u)
        if cell_axis is None:
            cell_axis = u.ndim - 4 if kind == "kinetic" else 0
        h = self.domain.h[axis]
        out = np.zeros_like(u)
        for k, c in self._STENCILS[order].items():
            out += c * (u if k == 0 else self._shifted(u, axis, k, kind, cell_axis))
        return out / h**order

    def apply(self, u, alpha, kind="kinetic", odd_axis: int | None = None):
        """``d^alpha u``; with ``kind='field'`` the component is odd across walls normal to ``odd_axis``."""
        for axis, order in enumerate(alpha):
            if order == 0:
                continue
            k = kind
            if kind == "field":
                k = "odd" if axis == odd_axis else "even"
            u = self.derivative(u, axis, order, k)
        return u


def velocity_derivative(op: LandauOperator, u: np.ndarray, beta) -> np.ndarray:
    """``d_v^beta u`` with the same one-sided-closed centred matrix as the collision operator."""
    for axis, order in enumerate(beta):
        for _ in range(order):
            u = _apply_axis(op.D, u, axis)
    return u


def multi_indices(order: int, dims: int = 3):
    """All multi-indices of total order ``<= order`` on ``dims`` axes (others zero)."""
    out = []
    for tot in range(order + 1):
        for combo in itertools.product(range(tot + 1), repeat=dims):
            if sum(combo) == tot:
                out.append(tuple(combo) + (0,) * (3 - dims))
    return out


# -- functionals -------------------------------------------------------------------

def energy_functional(f: np.ndarray, fs: FieldState, domain: SpatialDomain, op: LandauOperator,
                      weight: WeightSpec, diag_order: int = 1, with_dissipation: bool = True,
                      stencil: SpatialStencil | None = None):
    """Return ``(E_nu, D_nu)`` for the state ``(f, fs)``.

    Sums over ``|alpha| + |beta| <= diag_order``; the field term
    ``||d^alpha E||^2`` enters once per ``(alpha, beta)`` pair.
    """
    if not 0 <= diag_order <= MAX_DIAG_ORDER:
        raise ConfigError(f"diag_order must lie in 0..{MAX_DIAG_ORDER}, got {diag_order}", key="diag_order")
    stencil = stencil or SpatialStencil(domain, op.grid)
    vol = domain.cell_volume
    hw = op.grid.quadrature_weight
    dims = domain.active_dims
    e_nu = 0.0
    d_nu = 0.0
    field_cache = {}
    for alpha in multi_indices(diag_order, dims):
        da = stencil.apply(f, alpha) if any(alpha) else f
        if alpha not in field_cache:
            field_cache[alpha] = sum(
                float(np.sum(stencil.apply(fs.e_field[:, i], alpha, "field", odd_axis=i) ** 2)) * vol
                for i in range(3)
            )
        e_term = field_cache[alpha]
        for beta in multi_indices(diag_order - sum(alpha)):
            w = weight.with_orders(sum(alpha), sum(beta))
            dab = velocity_derivative(op, da, beta) if any(beta) else da
            wv = weight_eval(w, op.grid.v)
            e_nu += float(np.sum((wv * dab) ** 2)) * hw * vol + e_term
            if with_dissipation:
                d_nu += op.norm_D(dab, w) * vol + e_term
    return e_nu, d_nu


def conserved_quantities(f: np.ndarray, fs: FieldState, domain: SpatialDomain, grid: VelocityGrid):
    """``(mass_+, mass_-, total_energy)`` with total energy
    ``int int (f_+ + f_-) |v|^2 mu^1/2 + int |E|^2``."""
    m12 = sqrt_maxwellian(grid.v)
    mass = domain.integrate(grid.integrate(f * m12).T)
    kinetic = float(np.sum(grid.integrate((f[0] + f[1]) * (grid.vsq * m12)))) * domain.cell_volume
    return float(mass[0]), float(mass[1]), kinetic + field_energy(fs, domain)


def min_F(f: np.ndarray, grid: VelocityGrid) -> float:
    """Minimum of ``F = mu + mu^1/2 f`` over the phase grid."""
    return float(np.min(maxwellian(grid.v) + sqrt_maxwellian(grid.v) * f))


def x_functional(series, delta: float, p: float) -> np.ndarray:
    """``X(t) = sup e^{delta tau^p} E(tau) + sup E_nu(tau)`` along ``[(t, E, E_nu), ...]``."""
    arr = np.asarray(series, dtype=float)
    if arr.size == 0:
        return arr
    t, e, enu = arr[:, 0], arr[:, 1], arr[:, 2]
    return np.maximum.accumulate(np.exp(delta * t**p) * e) + np.maximum.accumulate(enu)


class Diagnostics:
    """Callable producing ``EnergyReport`` records during a run."""

    def __init__(self, domain: SpatialDomain, op: LandauOperator, l: float = 0.0, nu: float = 0.05,
                 diag_order: int = 1, with_dissipation: bool = True):
        self.domain = domain
        self.op = op
        self.grid = op.grid
        self.weight = WeightSpec.for_potential(op.params, l, nu)
        self.plain = WeightSpec.for_potential(op.params, l, 0.0)
        self.diag_order = diag_order
        self.with_dissipation = with_dissipation
        self.stencil = SpatialStencil(domain, op.grid)

    def __call__(self, state, fs: FieldState) -> EnergyReport:
        f = state.f
        if not np.any(f) and not np.any(fs.e_field):
            return EnergyReport(state.t, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, min_F(f, self.grid))
        e_nu, d_nu = energy_functional(f, fs, self.domain, self.op, self.weight, self.diag_order,
                                       self.with_dissipation, self.stencil)
        if self.weight.soft and self.weight.nu:
            e_plain, _ = energy_functional(f, fs, self.domain, self.op, self.plain, self.diag_order,
                                           False, self.stencil)
        else:
            e_plain = e_nu
        mp, mm, en = conserved_quantities(f, fs, self.domain, self.grid)
        quartic = field_energy(fs, self.domain) ** 2
        return EnergyReport(state.t, e_nu, d_nu, e_plain, mp, mm, en, min_F(f, self.grid),
                            e_field_quartic=quartic)


# -- decay fit ----------------------------------------------------------------------

def _linear_fit(tp: np.ndarray, y: np.ndarray):
    A = np.stack([np.ones_like(tp), -tp], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return coef[0], coef[1], r2


def fit_decay(series, mode: str = "fixed", p: float = 1.0, window=None) -> DecayFit:
    """Fit ``log E = c - delta t^p`` over ``window``.

    ``mode='fixed'`` fits ``delta`` for the given ``p``; ``mode='free'``
    also searches ``p`` in ``(0, 1]`` by maximising ``r^2`` of the inner
    linear fit.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError("series must be a sequence of (t, E) pairs")
    t, e = arr[:, 0], arr[:, 1]
    lo, hi = (float(t.min()), float(t.max())) if window is None else map(float, window)
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    t, e = t[sel], e[sel]
    if len(t) < 10:
        raise ValueError(f"decay fit needs at least 10 points in the window, got {len(t)}")
    if np.any(e <= 0):
        raise ValueError("decay fit requires E > 0 on the whole window")
    if np.ptp(t) <= 0:
        raise ValueError("degenerate fit window")
    y = np.log(e)
    if mode == "fixed":
        if not 0 < p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {p}")
        c, delta, r2 = _linear_fit(t**p, y)
        return DecayFit(float(delta), float(p), float(r2), (lo, hi), float(c))
    if mode != "free":
        raise ValueError(f"unknown fit mode {mode!r}")

    def loss(pp):
        return float(np.sum((y - _fit_values(t**pp, y)) ** 2))

    grid_p = np.linspace(0.02, 1.0, 50)
    best = grid_p[int(np.argmin([loss(pp) for pp in grid_p]))]
    a = max(1e-3, best - 0.02)
    b = min(1.0, best + 0.02)
    res = minimize_scalar(loss, bounds=(a, b), method="bounded", options={"xatol": 1e-10})
    pp = float(res.x) if res.fun <= loss(best) else float(best)
    c, delta, r2 = _linear_fit(t**pp, y)
    return DecayFit(float(delta), pp, float(r2), (lo, hi), float(c))


def _fit_values(tp, y):
    c, delta, _ = _linear_fit(tp, y)
    return c - delta * tp


# -- fluid-type system ------------------------------------------------------------------

class FluidSystem:
    """Residuals of the local balance laws for the macroscopic coefficients."""

    def __init__(self, domain: SpatialDomain, op: LandauOperator, projector: Projector | None = None):
        self.domain = domain
        self.op = op
        self.grid = op.grid
        self.projector = projector or Projector(op.grid)
        self.stencil = SpatialStencil(domain, op.grid)
        self.m12 = sqrt_maxwellian(self.grid.v)
        self.transport = Transport(domain, op.grid)

    def _div_x(self, u):
        """``sum_i d_i`` of a kinetic array weighted by ``v_i`` (the streaming operator sign +)."""
        out = np.zeros_like(u)
        for i in range(self.domain.active_dims):
            alpha = [0, 0, 0]
            alpha[i] = 1
            out += self.grid.v[..., i] * self.stencil.apply(u, tuple(alpha))
        return out

    def _dx(self, u, i):
        alpha = [0, 0, 0]
        alpha[i] = 1
        return self.stencil.apply(u, tuple(alpha))

    def g_term(self, f: np.ndarray, fs: FieldState, nonlinear: bool = True):
        """``g_+- = +- grad phi . grad_v f -+ (1/2) grad phi . v f + Gamma(f, f)``."""
        if not nonlinear:
            return np.zeros_like(f)
        return self.transport.field_terms_rhs(f, fs) + self.op.apply_Gamma(f, f)

    def residuals(self, prev, cur, dt: float, nonlinear: bool = True) -> dict:
        """L^2_x norms of each balance-law residual.

        Time derivatives are backward differences of the two states; all
        other terms are evaluated at their midpoint.
        """
        (f0, fs0), (f1, fs1) = prev, cur
        grid, P = self.grid, self.projector
        fm = 0.5 * (f0 + f1)
        fsm = FieldState(0.5 * (fs0.phi + fs1.phi), 0.5 * (fs0.e_field + fs1.e_field))
        c0, c1, cm = P.coefficients(f0), P.coefficients(f1), P.coefficients(fm)
        micro0, micro1 = f0 - P.expand(c0), f1 - P.expand(c1)
        micro = fm - P.expand(cm)
        s0, s1, sm = micro0[0] + micro0[1], micro1[0] + micro1[1], micro[0] + micro[1]
        dm = micro[0] - micro[1]
        dtc = (c1 - c0) / dt
        dims = self.domain.active_dims

        # d_i of a coefficient field is the coefficient of d_i f
        dC = [P.coefficients(self._dx(fm, i)) for i in range(dims)]

        def dcoef(coef_index, i):
            return dC[i][:, coef_index]

        Lf = self.op.apply_L(fm)
        g = self.g_term(fm, fsm, nonlinear)
        stream_micro = -self._div_x(micro)
        h = stream_micro + Lf
        theta_s = [theta_moment(self._dx(sm, i), grid) for i in range(dims)]
        lam_s = [lambda_moment(self._dx(sm, i), grid) for i in range(dims)]

        vol = self.domain.cell_volume
        out = {}

        def norm(r):
            return float(np.sqrt(np.sum(np.asarray(r) ** 2) * vol))

        # mass and momentum balances
        div_b = sum(dcoef(2 + i, i) for i in range(dims)) if dims else 0.0
        out["mass"] = norm(0.5 * (dtc[:, 0] + dtc[:, 1]) + div_b)

        gs = g[0] + g[1]
        mom_src = 0.5 * velocity_moment(gs, grid)
        r2 = np.zeros((self.domain.n_cells, 3))
        for j in range(3):
            r2[:, j] = dtc[:, 2 + j] - mom_src[:, j]
            if j < dims:
                r2[:, j] += 0.5 * (dcoef(0, j) + dcoef(1, j)) + 2.0 * dcoef(5, j)
            for m in range(dims):
                r2[:, j] += 0.5 * theta_s[m][:, j, m]
        out["momentum"] = norm(r2)

        w3 = (grid.vsq - 3.0) * self.m12
        en_src = grid.integrate(gs * w3) / 12.0
        r3 = dtc[:, 5] - en_src
        for i in range(dims):
            r3 = r3 + dcoef(2 + i, i) / 3.0 + (5.0 / 6.0) * lam_s[i][:, i]
        out["energy"] = norm(r3)

        # stress balance
        th_dt = (theta_moment(s1, grid) - theta_moment(s0, grid)) / dt
        gh = g[0] + g[1] + h[0] + h[1]
        th_src = 0.5 * theta_moment(gh, grid)
        r4 = 0.5 * th_dt - th_src
        for j in range(3):
            r4[:, j, j] += 2.0 * dtc[:, 5]
            for m in range(3):
                if j < dims:
                    r4[:, j, m] += dcoef(2 + m, j)
                if m < dims:
                    r4[:, j, m] += dcoef(2 + j, m)
        out["stress"] = norm(r4)

        # heat-flux balance
        lam_dt = (lambda_moment(s1, grid) - lambda_moment(s0, grid)) / dt
        r5 = 0.5 * lam_dt - 0.5 * lambda_moment(gh, grid)
        for j in range(dims):
            r5[:, j] += dcoef(5, j)
        out["heat_flux"] = norm(r5)

        # charge and current balances
        G0 = velocity_moment(micro0[0] - micro0[1], grid)
        G1 = velocity_moment(micro1[0] - micro1[1], grid)
        divG = sum(velocity_moment(self._dx(dm, i), grid)[:, i] for i in range(dims)) if dims else 0.0
        out["charge"] = norm((dtc[:, 0] - dtc[:, 1]) + divG)

        gl = (g[0] + Lf[0]) - (g[1] + Lf[1])
        r7 = (G1 - G0) / dt - 2.0 * fsm.e_field - velocity_moment(gl, grid)
        for j in range(dims):
            r7[:, j] += dcoef(0, j) - dcoef(1, j)
        for m in range(dims):
            r7 += theta_moment(self._dx(dm, m), grid)[:, :, m]
        out["current"] = norm(r7)
        return out


def fluid_residuals(prev, cur, dt: float, domain: SpatialDomain, op: LandauOperator,
                    nonlinear: bool = True, projector: Projector | None = None) -> ResidualReport:
    """Balance-law residuals from two consecutive ``(f, FieldState)`` pairs."""
    sysm = FluidSystem(domain, op, projector)
    return ResidualReport(residuals=sysm.residuals(prev, cur, dt, nonlinear))


# -- boundary compatibility ----------------------------------------------------------------

def _wall_profile(domain: SpatialDomain, face, depth: int = 4):
    """Cells inward from a wall face and their signed distances from it."""
    cells = [face.cell]
    side = 0 if face.sign > 0 else 1
    while len(cells) < depth:
        nb = domain.neighbour[face.axis, cells[-1], side]
        if nb < 0:
            break
        cells.append(int(nb))
    h = domain.h[face.axis]
    # coordinate along +e_axis measured from the wall
    x = -face.sign * (np.arange(len(cells)) + 0.5) * h
    return cells, x


def _wall_derivatives(values: np.ndarray, x: np.ndarray, max_order: int = 3) -> np.ndarray:
    """Value and derivatives at ``x = 0`` of the interpolating polynomial.

    ``values`` has the sample axis first; returns ``(max_order + 1, ...)``.
    """
    deg = len(x) - 1
    V = np.vander(x, deg + 1, increasing=True)
    coef = np.linalg.solve(V, values.reshape(len(x), -1))
    out = np.zeros((max_order + 1,) + values.shape[1:])
    fact = 1.0
    for k in range(max_order + 1):
        if k > 0:
            fact *= k
        if k <= deg:
            out[k] = (fact * coef[k]).reshape(values.shape[1:])
    return out


def boundary_compatibility(f: np.ndarray, fs: FieldState, domain: SpatialDomain, grid: VelocityGrid,
                           projector: Projector | None = None, depth: int = 4) -> ResidualReport:
    """Max over each wall component of the quantities that vanish there.

    Wall values and normal derivatives come from the polynomial through the
    first ``depth`` interior cell centres.
    """
    P = projector or Projector(grid)
    coef = P.coefficients(f)  # (a+, a-, b1, b2, b3, c)
    rep = ResidualReport()
    for i in range(domain.active_dims):
        faces = domain.faces_on(i)
        acc: dict[str, float] = {}

        def upd(key, val):
            acc[key] = max(acc.get(key, 0.0), float(np.max(np.abs(val))))

        phi3 = 0.0
        for face in faces:
            cells, x = _wall_profile(domain, face, depth)
            d = _wall_derivatives(coef[cells], x)
            dphi = _wall_derivatives(fs.phi[cells], x)
            upd(f"b_{i + 1}", d[0, 2 + i])
            upd(f"d{i + 1} a_plus", d[1, 0])
            upd(f"d{i + 1} a_minus", d[1, 1])
            upd(f"d{i + 1} c", d[1, 5])
            for j in range(3):
                if j != i:
                    upd(f"d{i + 1} b_{j + 1}", d[1, 2 + j])
                    upd(f"d{i + 1}^3 b_{j + 1}", d[3, 2 + j])
            upd(f"d{i + 1}^2 b_{i + 1}", d[2, 2 + i])
            upd(f"d{i + 1}^3 c", d[3, 5])
            upd(f"d{i + 1}^3 a_plus", d[3, 0])
            upd(f"d{i + 1}^3 a_minus", d[3, 1])
            phi3 = max(phi3, abs(float(dphi[3])))
        rep.boundary_maxima[i] = acc
        rep.phi_third[i] = phi3
    return rep


def laplacian_identity_ratio(u: np.ndarray, domain: SpatialDomain) -> float:
    """``sum_ij ||d_ij u||^2 / ||Delta u||^2`` for a cell field with even mirror extension."""
    st = SpatialStencil(domain)
    dims = domain.active_dims
    num = 0.0
    lap = np.zeros_like(u)
    for i in range(dims):
        for j in range(dims):
            alpha = [0, 0, 0]
            alpha[i] += 1
            alpha[j] += 1
            dij = st.apply(u, tuple(alpha), "field", odd_axis=None)
            num += float(np.sum(dij**2))
            if i == j:
                lap += dij
    den = float(np.sum(lap**2))
    return num / den if den > 0 else float("nan")
