"""Operator property suites shared by ``artifact verify`` and the acceptance tests."""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np
from numpy.polynomial.hermite_e import hermeval

from .errors import SolvabilityError
from .field import PoissonSolver
from .geometry import Box, SpatialDomain, VelocityGrid, reflect
from .landau import LandauOperator, PotentialParams, SplitParams
from .maxwellian import Projector, moment_fixture_errors, sqrt_maxwellian
from .transport import Transport

# Residuals below this are at the roundoff floor of the double-precision operator.
ROUNDOFF_FLOOR = 1e-12


@dataclass
class PropertyResult:
    name: str
    passed: bool
    value: float
    threshold: str
    detail: str = ""

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{tag} {self.name}: measured {self.value:.6g}, required {self.threshold}{extra}"


def make_rng(seed: int) -> np.random.Generator:
    """Named 64-bit-seeded generator used for every randomized property."""
    return np.random.Generator(np.random.PCG64(seed))


# -- random inputs ---------------------------------------------------------------------

def hermite_coefficients(rng: np.random.Generator, count: int, degree: int = 4) -> tuple[list, np.ndarray]:
    """Multi-indices of total degree ``<= degree`` and normal coefficients ``(2, count, n_terms)``."""
    idx = [(a, b, c) for a in range(degree + 1) for b in range(degree + 1 - a) for c in range(degree + 1 - a - b)]
    coef = rng.standard_normal((2, count, len(idx)))
    return idx, coef


def hermite_inputs(grid: VelocityGrid, idx, coef) -> np.ndarray:
    """Grid samples of ``mu^1/2 sum c_k He_k1(v1) He_k2(v2) He_k3(v3) / sqrt(k!)``.

    The functions do not depend on the grid, so constants measured on them
    can be compared across resolutions.
    """
    p = grid.points
    deg = max(max(k) for k in idx)
    he = np.stack([hermeval(p, np.eye(deg + 1)[k]) / np.sqrt(factorial(k)) for k in range(deg + 1)])
    basis = np.stack([he[a][:, None, None] * he[b][None, :, None] * he[c][None, None, :] for a, b, c in idx])
    return np.tensordot(coef, basis, axes=([2], [0])) * sqrt_maxwellian(grid.v)


def smooth_inputs(grid: VelocityGrid, seed: int, count: int = 100, degree: int = 4) -> np.ndarray:
    idx, coef = hermite_coefficients(make_rng(seed), count, degree)
    return hermite_inputs(grid, idx, coef)


def noise_inputs(grid: VelocityGrid, seed: int, count: int = 100) -> np.ndarray:
    """Batches are laid out like cells: ``(2, count, n, n, n)``."""
    return make_rng(seed).standard_normal((2, count) + grid.shape)


# -- operator properties ------------------------------------------------------------------

def kernel_functions(grid: VelocityGrid) -> dict[str, np.ndarray]:
    m12 = sqrt_maxwellian(grid.v)
    z = np.zeros_like(m12)
    out = {"[1,0]": np.stack([m12, z]), "[0,1]": np.stack([z, m12])}
    for j in range(3):
        u = grid.v[..., j] * m12
        out[f"[1,1]v{j + 1}"] = np.stack([u, u])
    u = grid.vsq * m12
    out["[1,1]|v|^2"] = np.stack([u, u])
    return out


def kernel_residuals(op: LandauOperator) -> dict[str, float]:
    """``||L k|| / ||k||`` for every kernel basis function."""
    return {
        name: float(np.linalg.norm(op.apply_L(k)) / np.linalg.norm(k))
        for name, k in kernel_functions(op.grid).items()
    }


def check_kernel(coarse: LandauOperator, fine: LandauOperator, abs_tol: float = 1e-2,
                 factor: float = 3.0) -> PropertyResult:
    """Residual must drop by ``factor`` under refinement or already sit at the roundoff floor."""
    rc, rf = kernel_residuals(coarse), kernel_residuals(fine)
    ok = True
    worst_ratio = np.inf
    for name in rc:
        ratio = rc[name] / rf[name] if rf[name] > 0 else np.inf
        worst_ratio = min(worst_ratio, ratio)
        converged = ratio >= factor or max(rc[name], rf[name]) <= ROUNDOFF_FLOOR
        ok &= converged and rf[name] <= abs_tol
    worst = max(rf.values())
    return PropertyResult(
        "kernel of L", bool(ok), worst, f"<= {abs_tol} at n_v={fine.n} and drop >= {factor}",
        f"min drop {worst_ratio:.3g}; max residual n_v={coarse.n}: {max(rc.values()):.3g}, "
        f"n_v={fine.n}: {worst:.3g}; roundoff floor {ROUNDOFF_FLOOR:g}",
    )


def self_adjoint_defect(op: LandauOperator, seed: int, count: int = 100) -> float:
    f = noise_inputs(op.grid, seed, count)
    g = noise_inputs(op.grid, seed + 1, count)
    Lf, Lg = op.apply_L(f), op.apply_L(g)
    hw = op.grid.quadrature_weight
    axes = (0, 2, 3, 4)
    lhs = np.sum(Lf * g, axis=axes) * hw
    rhs = np.sum(f * Lg, axis=axes) * hw
    nrm = lambda u: np.sqrt(np.sum(u * u, axis=axes) * hw)  # noqa: E731
    scale = nrm(Lf) * nrm(g) + nrm(f) * nrm(Lg)
    return float(np.max(np.abs(lhs - rhs) / scale))


def check_self_adjoint(op: LandauOperator, seed: int, count: int = 100, tol: float = 1e-10) -> PropertyResult:
    d = self_adjoint_defect(op, seed, count)
    return PropertyResult("self-adjointness of L", d <= tol, d, f"<= {tol:g}",
                          f"{count} inputs, relative to |Lf||g| + |f||Lg|")


def coercivity(op: LandauOperator, f: np.ndarray, projector: Projector | None = None):
    """Per-input ``(<L f, f>, -<L f, f> / |(I - P) f|_D^2)``."""
    P = projector or Projector(op.grid)
    form = np.sum(op.apply_L(f) * f, axis=(0, 2, 3, 4)) * op.grid.quadrature_weight
    micro = f - P.expand(P.coefficients(f))
    dnorm = op.norm_D(micro, per_batch=True)
    return form, -form / dnorm


def check_dissipativity(coarse: LandauOperator, fine: LandauOperator, seed: int, count: int = 100,
                        spread: float = 0.25) -> PropertyResult:
    f_c = smooth_inputs(coarse.grid, seed, count)
    f_f = smooth_inputs(fine.grid, seed, count)
    form_c, c_c = coercivity(coarse, f_c)
    form_f, c_f = coercivity(fine, f_f)
    sign_ok = bool(np.all(form_c <= 0) and np.all(form_f <= 0))
    cc, cf = float(np.min(c_c)), float(np.min(c_f))
    change = abs(cc - cf) / max(cc, cf)
    ok = sign_ok and cc > 0 and cf > 0 and change < spread
    return PropertyResult(
        "dissipativity of L", ok, change, f"c > 0 on both grids, relative change < {spread}",
        f"c(n_v={coarse.n}) = {cc:.6g}, c(n_v={fine.n}) = {cf:.6g}, max <Lf,f> = "
        f"{max(form_c.max(), form_f.max()):.3g}",
    )


def split_defect(op: LandauOperator, split: SplitParams, seed: int, count: int = 20) -> float:
    f = noise_inputs(op.grid, seed, count)
    A, K = op.split_AK(f, split)
    L = op.apply_L(f)
    return float(np.linalg.norm(-A + K - L) / np.linalg.norm(L))


def check_split(op: LandauOperator, seed: int, splits=((0.1, 3.6), (0.2, 4.8)), tol: float = 1e-10):
    worst = max(split_defect(op, SplitParams(e, R), seed) for e, R in splits)
    return PropertyResult("split -A + K = L", worst <= tol, worst, f"<= {tol:g}", f"(eps, R) in {list(splits)}")


def gamma_invariant_defect(op: LandauOperator, seed: int, count: int = 20) -> float:
    g = noise_inputs(op.grid, seed, count)
    h = noise_inputs(op.grid, seed + 1, count)
    G = np.moveaxis(op.apply_Gamma(g, h), 1, 0)
    grid = op.grid
    m12 = sqrt_maxwellian(grid.v)
    hw = grid.quadrature_weight
    mom = [np.sum(G[:, 0] * m12, axis=(1, 2, 3)), np.sum(G[:, 1] * m12, axis=(1, 2, 3))]
    S = G[:, 0] + G[:, 1]
    mom += [np.sum(S * grid.v[..., j] * m12, axis=(1, 2, 3)) for j in range(3)]
    mom.append(np.sum(S * grid.vsq * m12, axis=(1, 2, 3)))
    scale = np.sqrt(np.sum(g * g, axis=(0, 2, 3, 4)) * np.sum(h * h, axis=(0, 2, 3, 4))) * hw
    return float(max(np.max(np.abs(m) * hw / scale) for m in mom))


def check_gamma(op: LandauOperator, seed: int, tol: float = 1e-8) -> PropertyResult:
    d = gamma_invariant_defect(op, seed)
    return PropertyResult("Gamma collision invariants", d <= tol, d, f"<= {tol:g} ||g|| ||h||")


def check_moments(grid: VelocityGrid, tol: float = 1e-6) -> PropertyResult:
    errs = moment_fixture_errors(grid)
    worst = max(e[3] for e in errs)
    return PropertyResult("Gaussian moment fixtures", worst <= tol, worst, f"<= {tol:g}",
                          f"{len(errs)} fixtures at n_v={grid.n_v}, v_max={grid.v_max}")


def norm_ratio_bounds(op: LandauOperator, f: np.ndarray) -> tuple[float, float]:
    r = op.norm_D(f, per_batch=True) / op.norm_D_pv(f, per_batch=True)
    return float(r.min()), float(r.max())


def check_norm_equivalence(coarse: LandauOperator, fine: LandauOperator, seed: int, count: int = 100,
                           spread: float = 0.2) -> PropertyResult:
    c1a, c2a = norm_ratio_bounds(coarse, smooth_inputs(coarse.grid, seed, count))
    c1b, c2b = norm_ratio_bounds(fine, smooth_inputs(fine.grid, seed, count))
    change = max(abs(c1a - c1b) / max(c1a, c1b), abs(c2a - c2b) / max(c2a, c2b))
    return PropertyResult(
        "L2_D norm equivalence", change < spread and c1a > 0 and c1b > 0, change, f"relative change < {spread}",
        f"[c1, c2] = [{c1a:.4g}, {c2a:.4g}] at n_v={coarse.n}, [{c1b:.4g}, {c2b:.4g}] at n_v={fine.n}",
    )


# -- field and geometry ------------------------------------------------------------------

def poisson_errors(resolutions=(16, 32, 64, 128)) -> list[float]:
    """L^2 errors of the manufactured solution ``phi = cos(pi x)`` on ``[0, 1]``."""
    errs = []
    for n in resolutions:
        dom = SpatialDomain([Box((0, 0, 0), (1, 1, 1))], 1.0 / n, active_dims=1)
        x = dom.centers[:, 0]
        fs = PoissonSolver(dom).solve(np.pi**2 * np.cos(np.pi * x))
        errs.append(float(np.sqrt(np.sum((fs.phi - np.cos(np.pi * x)) ** 2) * dom.cell_volume)))
    return errs


def check_poisson(lo: float = 3.2, hi: float = 4.8) -> PropertyResult:
    errs = poisson_errors()
    ratios = [errs[k] / errs[k + 1] for k in range(len(errs) - 1)]
    dom = SpatialDomain([Box((0, 0, 0), (1, 1, 1))], 1.0 / 16, active_dims=1)
    try:
        PoissonSolver(dom).solve(np.ones(dom.n_cells))
        rejected = False
    except SolvabilityError:
        rejected = True
    ok = rejected and all(lo <= r <= hi for r in ratios)
    return PropertyResult("Poisson manufactured solution", ok, min(ratios), f"ratios in [{lo}, {hi}]",
                          f"ratios {[round(r, 4) for r in ratios]}, incompatible rho rejected: {rejected}")


def reflection_involution(grid: VelocityGrid, seed: int) -> bool:
    """Double reflection is the identity on velocities and on grid functions."""
    f = make_rng(seed).standard_normal(grid.shape)
    v = grid.v.reshape(-1, 3)
    for axis in range(3):
        for sign in (1.0, -1.0):
            n = np.zeros(3)
            n[axis] = sign
            if not np.array_equal(reflect(reflect(v, n), n), v):
                return False
        if not np.array_equal(grid.reflect_array(grid.reflect_array(f, axis), axis), f):
            return False
    return True


def max_wall_flux(domain: SpatialDomain, grid: VelocityGrid, f: np.ndarray) -> float:
    """``max |wall flux| / ||f||`` over every face and species."""
    tr = Transport(domain, grid)
    norm = float(np.linalg.norm(f))
    worst = 0.0
    for face in domain.faces:
        if face.axis >= domain.active_dims:
            continue
        worst = max(worst, float(np.max(np.abs(tr.wall_flux(f, face)))) / norm)
    return worst


def check_reflection(grid: VelocityGrid, seed: int, tol: float = 1e-14) -> PropertyResult:
    dom = SpatialDomain([Box((0, 0, 0), (1, 1, 1))], 0.25, active_dims=3)
    f = make_rng(seed).standard_normal((2, dom.n_cells) + grid.shape)
    flux = max_wall_flux(dom, grid, f)
    inv = reflection_involution(grid, seed)
    return PropertyResult("specular reflection", inv and flux <= tol, flux, f"<= {tol:g} ||f|| per face",
                          f"double reflection identity on indices: {inv}")


def run_suite(cfg, quick: bool = False) -> list[PropertyResult]:
    """All operator-level properties for the configured exponent and split."""
    params = PotentialParams(cfg.gamma)
    grid = VelocityGrid(cfg.n_v, cfg.v_max)
    op = LandauOperator(grid, params)
    seed = cfg.seed
    out = []
    if not quick:
        out.append(check_kernel(LandauOperator(VelocityGrid(12, cfg.v_max), params),
                                LandauOperator(VelocityGrid(24, cfg.v_max), params)))
    out.append(check_self_adjoint(op, seed))
    if not quick:
        out.append(check_dissipativity(LandauOperator(VelocityGrid(16, cfg.v_max), params),
                                       LandauOperator(VelocityGrid(24, cfg.v_max), params), seed))
    splits = [(0.1, 3.6), (0.2, 4.8)]
    if (cfg.eps, cfg.R) not in splits:
        splits.append((cfg.eps, cfg.R))
    out.append(check_split(op, seed, [s for s in splits if s[1] <= cfg.v_max]))
    out.append(check_gamma(op, seed))
    out.append(check_moments(grid))
    out.append(check_poisson())
    out.append(check_reflection(grid, seed))
    if not quick:
        out.append(check_norm_equivalence(LandauOperator(VelocityGrid(16, cfg.v_max), params),
                                          LandauOperator(VelocityGrid(24, cfg.v_max), params), seed))
    return out
