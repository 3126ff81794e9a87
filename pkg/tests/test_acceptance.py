"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed together in the
terminal summary (see ``conftest.py``) and also when this file is run as a
script.  Long runs are cached so criteria sharing a run pay for it once.
"""

from collections import deque
from functools import lru_cache

import numpy as np
import pytest

from artifact.diagnostics import (
    Diagnostics,
    boundary_compatibility,
    conserved_quantities,
    fit_decay,
    fluid_residuals,
    laplacian_identity_ratio,
)
from artifact.cli import initial_state
from artifact.geometry import Box, DistState, SpatialDomain, VelocityGrid
from artifact.integrator import StepConfig, Stepper, run
from artifact.landau import LandauOperator, PotentialParams
from artifact.maxwellian import DEFAULT_N_V, DEFAULT_V_MAX, Projector, sqrt_maxwellian
from artifact.verification import (
    PropertyResult,
    check_dissipativity,
    check_gamma,
    check_kernel,
    check_moments,
    check_norm_equivalence,
    check_poisson,
    check_reflection,
    check_self_adjoint,
    check_split,
)

SEED = 20240601
V_MAX = DEFAULT_V_MAX
LENGTH = 4.0
RESULTS: dict[str, str] = {}


def record(number, res: PropertyResult) -> PropertyResult:
    tag = f"{number:2d}" if isinstance(number, int) else number
    line = f"[{tag}] {res.line()}"
    RESULTS[number] = line
    print(line)
    return res


@lru_cache(maxsize=None)
def operator(n_v: int, gamma: float = 0.0) -> LandauOperator:
    return LandauOperator(VelocityGrid(n_v, V_MAX), PotentialParams(gamma))


def line_domain(nx: int) -> SpatialDomain:
    return SpatialDomain([Box((0, 0, 0), (LENGTH, 1, 1))], LENGTH / nx, active_dims=1)


def profiles(domain: SpatialDomain):
    x = domain.centers[:, 0]
    cx = np.cos(np.pi * x / LENGTH)[:, None, None, None]
    sx = np.sin(np.pi * x / LENGTH)[:, None, None, None]
    return cx, sx


def perturbed_data(domain: SpatialDomain, grid: VelocityGrid, eps: float = 1e-3) -> np.ndarray:
    """Small data with nonzero mean masses and a mix of macroscopic and microscopic modes."""
    cx, sx = profiles(domain)
    v, m12 = grid.v, sqrt_maxwellian(grid.v)
    f = np.zeros((2, domain.n_cells) + grid.shape)
    f[0] = eps * (1 + 0.5 * cx + 0.3 * sx * v[..., 0] + 0.2 * cx * (grid.vsq - 3) + 0.2 * sx * v[..., 0] * v[..., 1]) * m12
    f[1] = eps * (1 - 0.3 * cx + 0.2 * cx * (v[..., 1] ** 2 - 1)) * m12
    return f


def decay_data(domain: SpatialDomain, grid: VelocityGrid, eps: float = 1e-3) -> np.ndarray:
    """Small data with zero mean masses, momentum and energy, so E can decay to zero."""
    cx, sx = profiles(domain)
    v, m12 = grid.v, sqrt_maxwellian(grid.v)
    f = np.zeros((2, domain.n_cells) + grid.shape)
    f[0] = eps * (0.5 * cx + 0.3 * sx * v[..., 0] + 0.2 * cx * (grid.vsq - 3) + 0.4 * cx * (v[..., 1] ** 2 - 1)
                  + 0.2 * sx * v[..., 0] * v[..., 1]) * m12
    f[1] = eps * (-0.3 * cx + 0.2 * sx * v[..., 0] * v[..., 2] + 0.3 * (v[..., 2] ** 2 - v[..., 1] ** 2)) * m12
    return f


def cfl_step(h: float, t_end: float) -> float:
    dt = 0.9 * h / V_MAX
    return t_end / np.ceil(t_end / dt)


@lru_cache(maxsize=None)
def decay_run(gamma: float, l: float, t_end: float = 2.0, nx: int = 32):
    """Linear run returning ``(t, E)`` with ``E`` the unexponentiated energy functional."""
    dom = line_domain(nx)
    op = operator(DEFAULT_N_V, gamma)
    st = Stepper(dom, op.grid, op, StepConfig(dt=cfl_step(dom.h[0], t_end), t_end=t_end, nonlinear=False))
    diag = Diagnostics(dom, op, l=l, diag_order=1, with_dissipation=False)
    res = run(DistState(decay_data(dom, op.grid)), st, lambda s, fs: (s.t, diag(s, fs).e_plain))
    return np.array(res.records)


@lru_cache(maxsize=None)
def boundary_run(nx: int, t_end: float = 0.25):
    """Nonlinear specular run; returns the last two states and the step size."""
    dom = line_domain(nx)
    op = operator(DEFAULT_N_V)
    dt = dom.h[0] / 8
    st = Stepper(dom, op.grid, op, StepConfig(dt=dt, t_end=t_end))
    last = deque(maxlen=2)
    run(DistState(perturbed_data(dom, op.grid)), st, lambda s, fs: last.append((s.f.copy(), fs.copy())))
    return dom, op, tuple(last), dt


# -- operator-level criteria ----------------------------------------------------------

def test_01_kernel():
    res = record(1, check_kernel(operator(12), operator(24)))
    assert res.passed


def test_02_self_adjoint():
    res = record(2, check_self_adjoint(operator(DEFAULT_N_V), SEED, count=100))
    assert res.passed


def test_03_dissipativity():
    res = record(3, check_dissipativity(operator(16), operator(24), SEED, count=100, spread=0.25))
    assert res.passed


def test_04_split_identity():
    res = record(4, check_split(operator(DEFAULT_N_V), SEED, splits=((0.1, 3.6), (0.2, 4.8)), tol=1e-10))
    assert res.passed


def test_05_gamma_invariants():
    res = record(5, check_gamma(operator(DEFAULT_N_V), SEED, tol=1e-8))
    assert res.passed


def test_06_gaussian_moments():
    res = record(6, check_moments(VelocityGrid(DEFAULT_N_V, V_MAX), tol=1e-6))
    assert res.passed


# -- dynamics --------------------------------------------------------------------------

@pytest.mark.slow
def test_07_conservation():
    dom = line_domain(32)
    op = operator(DEFAULT_N_V)
    st = Stepper(dom, op.grid, op, StepConfig(dt=1 / 64, t_end=1.0))
    rec = run(DistState(perturbed_data(dom, op.grid)), st,
              lambda s, fs: conserved_quantities(s.f, fs, dom, op.grid)).records
    q = np.array(rec)
    mass = max(np.max(np.abs(q[:, k] - q[0, k])) / abs(q[0, k]) for k in (0, 1))
    energy = float(np.max(np.abs(q[:, 2] - q[0, 2])))
    ok = mass <= 1e-8 and energy <= 1e-6
    res = record(7, PropertyResult("conservation, nonlinear gamma=0 over [0, 1]", ok, max(mass, energy),
                                   "mass <= 1e-8 rel, energy <= 1e-6 abs",
                                   f"mass drift {mass:.2e}, energy drift {energy:.2e}, {len(q) - 1} steps"))
    assert res.passed


@pytest.mark.slow
def test_08_equilibrium():
    dom = line_domain(32)
    op = operator(DEFAULT_N_V)
    st = Stepper(dom, op.grid, op, StepConfig(dt=1 / 64))
    state = DistState.zeros(dom, op.grid)
    fs = st.field_of(state.f)
    worst = 0.0
    for _ in range(100):
        state, fs = st.step(state, fs)
        worst = max(worst, float(np.max(np.abs(state.f))), float(np.max(np.abs(fs.e_field))),
                    float(np.max(np.abs(fs.phi))))
    res = record(8, PropertyResult("zero data stays zero for 100 steps", worst <= 1e-13, worst, "<= 1e-13"))
    assert res.passed


@pytest.mark.slow
def test_09_decay_hard():
    r = decay_run(0.0, 3.0)
    t, e = r[:, 0], r[:, 1]
    rise = float(np.max(np.diff(e[5:]) / e[5:-1]))
    fit = fit_decay(r, "fixed", 1.0, (0.2, 2.0))
    ok = rise <= 0.0 and fit.delta > 0 and fit.r_squared >= 0.98
    res = record(9, PropertyResult("decay, gamma=0, fixed p=1", ok, fit.r_squared,
                                   "monotone after step 5, delta > 0, r^2 >= 0.98",
                                   f"delta {fit.delta:.4f}, max relative step change {rise:.2e}, "
                                   f"{len(t) - 1} steps"))
    assert res.passed


@pytest.mark.slow
def test_10_decay_coulomb():
    r = decay_run(-3.0, 21.0)
    e = r[:, 1]
    rise = float(np.max(np.diff(e) / e[:-1]))
    fit = fit_decay(r, "free", window=(0.2, 2.0))
    ok = rise <= 0.0 and fit.p_exponent < 1.0
    res = record(10, PropertyResult("decay, gamma=-3, free p", ok, fit.p_exponent, "monotone, p < 1",
                                    f"delta {fit.delta:.4f}, r^2 {fit.r_squared:.4f}, "
                                    f"max relative step change {rise:.2e}; t^p rate is asymptotic"))
    assert res.passed


@pytest.mark.slow
def test_11_boundary_compatibility():
    worst = []
    for nx in (16, 32):
        dom, op, last, _ = boundary_run(nx)
        f, fs = last[-1]
        m = boundary_compatibility(f, fs, dom, op.grid).boundary_maxima[0]
        worst.append((m["b_1"], m["d1 c"]))
    fb, fc = worst[0][0] / worst[1][0], worst[0][1] / worst[1][1]
    res = record(11, PropertyResult("boundary compatibility under h_x halving", min(fb, fc) >= 1.5, min(fb, fc),
                                    ">= 1.5", f"|b_1| {worst[0][0]:.2e} -> {worst[1][0]:.2e}, "
                                    f"|d1 c| {worst[0][1]:.2e} -> {worst[1][1]:.2e}"))
    assert res.passed


@pytest.mark.slow
def test_12_fluid_residual():
    resid = []
    for nx in (16, 32, 64):
        dom, op, (prev, cur), dt = boundary_run(nx)
        resid.append(fluid_residuals(prev, cur, dt, dom, op).residuals["mass"])
    orders = [float(np.log2(resid[k] / resid[k + 1])) for k in range(len(resid) - 1)]
    res = record(12, PropertyResult("mass-balance residual order", min(orders) >= 0.8, min(orders), ">= 0.8",
                                    "residuals " + ", ".join(f"{r:.2e}" for r in resid)))
    assert res.passed


# -- field and boundary ----------------------------------------------------------------

def test_13_poisson():
    res = record(13, check_poisson(3.2, 4.8))
    assert res.passed


def test_14_specular():
    res = record(14, check_reflection(VelocityGrid(DEFAULT_N_V, V_MAX), SEED, tol=1e-14))
    assert res.passed


def test_15_norm_equivalence():
    res = record(15, check_norm_equivalence(operator(16), operator(24), SEED, count=100, spread=0.2))
    assert res.passed


# -- supplementary checks (not numbered criteria) ------------------------------------------

@pytest.mark.slow
def test_s1_full_order_functional():
    dom = line_domain(16)
    op = operator(DEFAULT_N_V)
    st = Stepper(dom, op.grid, op, StepConfig(dt=dom.h[0] / 8, t_end=dom.h[0]))
    full = Diagnostics(dom, op, l=3.0, diag_order=3)
    low = Diagnostics(dom, op, l=3.0, diag_order=1)
    rec = run(DistState(perturbed_data(dom, op.grid)), st, lambda s, fs: (full(s, fs), low(s, fs)), cadence=4).records
    ok = all(np.isfinite(a.e_nu) and a.e_nu >= b.e_nu > 0 and a.d_nu >= b.d_nu > 0 for a, b in rec)
    ratio = max(a.e_nu / b.e_nu for a, b in rec)
    res = record("S1", PropertyResult("diag_order=3 run", ok, ratio, "finite, E and D dominate order 1",
                                      f"{len(rec)} records"))
    assert res.passed


@pytest.mark.slow
def test_s2_laplacian_identity():
    # in 1-D the identity is a tautology, so this uses an evolved 2-D field
    dom = SpatialDomain([Box((0, 0, 0), (1, 1, 1))], 1 / 8, active_dims=2)
    op = operator(DEFAULT_N_V)
    st = Stepper(dom, op.grid, op, StepConfig(dt=1 / 64, t_end=0.125))
    final = run(initial_state(dom, op.grid, "wave", 1e-3), st).state
    coef = Projector(op.grid).coefficients(final.f)
    ratios = [laplacian_identity_ratio(coef[:, k], dom) for k in (0, 1, 5)]
    ok = all(0.9 <= r <= 1.1 for r in ratios)
    res = record("S2", PropertyResult("Laplacian identity on evolved 2-D a+, a-, c", ok,
                                      max(abs(r - 1) for r in ratios), "|ratio - 1| <= 0.1",
                                      "ratios " + ", ".join(f"{r:.4f}" for r in ratios)))
    assert res.passed


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
