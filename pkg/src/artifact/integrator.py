"""Time stepping: explicit transport, implicit A-part of the collision operator
and a fixed-point loop over the lagged terms.

Each step solves, by Picard iteration over ``k``,

    (I + dt A) f^{k+1} = f^n + dt [ -v . grad_x f^n + field terms(f^k, phi^k)
                                     + source(phi^k) + K f^k + Gamma(f^k, f^k) ]

followed by a Poisson solve for ``phi^{k+1}``.  At the fixed point the
collision operator is treated by backward Euler, so the scheme inherits the
exact conservation of the discrete operator.

The lagged ``K f^k`` term makes the map contract at a rate of roughly
``dt |(I + dt A)^{-1} K|``, about 0.3 at CFL-sized steps on coarse velocity
grids.  Iterates are therefore combined by Anderson mixing; every accepted
state is still a plain evaluation of the Picard map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ConfigError, SolverError
from .field import FieldState, PoissonSolver
from .geometry import DistState, SpatialDomain, VelocityGrid
from .landau import LandauOperator, SplitParams
from .maxwellian import Projector, densities
from .transport import Transport, check_cfl


class PicardError(SolverError):
    """Fixed-point iteration failed to converge within ``picard_max`` sweeps."""


@dataclass
class StepConfig:
    dt: float
    t_end: float = 1.0
    picard_tol: float = 1e-9
    picard_max: int = 10
    scheme: str = "imex_ak"
    nonlinear: bool = True
    streaming: bool = True
    solver: str = "direct"
    cg_tol: float = 1e-12
    cg_max: int = 500
    extrapolate: bool = True
    # Anderson mixing depth over the Picard map (0 gives plain Picard)
    anderson: int = 3

    def validate(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}", key="dt")
        if not 0 < self.picard_tol <= 1e-2:
            raise ConfigError(f"picard_tol must lie in (0, 1e-2], got {self.picard_tol}", key="picard_tol")
        if self.picard_max < 1:
            raise ConfigError("picard_max must be at least 1", key="picard_max")
        if self.anderson < 0:
            raise ConfigError("anderson depth must be non-negative", key="anderson")
        if self.scheme not in ("imex_ak", "fully_explicit"):
            raise ConfigError(f"unknown scheme {self.scheme!r}", key="scheme")
        if self.solver not in ("direct", "cg"):
            raise ConfigError(f"unknown solver {self.solver!r}", key="solver")
        return self


# -- reflection-sector block structure -------------------------------------------

class SectorBasis:
    """Orthogonal change of basis splitting velocity functions into the eight
    parity classes under ``v_i -> -v_i``.

    Every operator commuting with the axis reflections is block diagonal in
    this basis, with blocks of size ``(n_v / 2)^3``.
    """

    def __init__(self, n: int):
        half = n // 2
        Q = np.zeros((n, n))
        r = 1.0 / np.sqrt(2.0)
        for j in range(half):
            Q[j, j] = Q[j, n - 1 - j] = r
            Q[half + j, j] = r
            Q[half + j, n - 1 - j] = -r
        self.n = n
        self.half = half
        self.Q = Q
        self.sectors = [(a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)]

    def _transform(self, u: np.ndarray, M: np.ndarray) -> np.ndarray:
        for ax in range(3):
            pos = u.ndim - 3 + ax
            u = np.moveaxis(np.moveaxis(u, pos, -1) @ M.T, -1, pos)
        return u

    def fold(self, u: np.ndarray) -> np.ndarray:
        """``(..., n, n, n) -> (8, ..., half^3)``."""
        t = self._transform(u, self.Q)
        h = self.half
        lead = u.shape[:-3]
        out = np.empty((8,) + lead + (h**3,))
        for s, (a, b, c) in enumerate(self.sectors):
            out[s] = t[..., a * h:(a + 1) * h, b * h:(b + 1) * h, c * h:(c + 1) * h].reshape(lead + (h**3,))
        return out

    def unfold(self, blocks: np.ndarray) -> np.ndarray:
        h = self.half
        lead = blocks.shape[1:-1]
        t = np.empty(lead + (self.n,) * 3)
        for s, (a, b, c) in enumerate(self.sectors):
            t[..., a * h:(a + 1) * h, b * h:(b + 1) * h, c * h:(c + 1) * h] = blocks[s].reshape(lead + (h,) * 3)
        return self._transform(t, self.Q.T)

    def assemble(self, apply: Callable[[np.ndarray], np.ndarray], chunk: int = 256) -> np.ndarray:
        """Diagonal blocks ``(8, half^3, half^3)`` of a reflection-invariant linear map."""
        h3 = self.half**3
        blocks = np.zeros((8, h3, h3))
        for s in range(8):
            for start in range(0, h3, chunk):
                stop = min(start + chunk, h3)
                e = np.zeros((8, stop - start, h3))
                e[s, np.arange(stop - start), np.arange(start, stop)] = 1.0
                out = self.fold(apply(self.unfold(e)))
                blocks[s][:, start:stop] = out[s].T
        return blocks

    def blocks_of(self, M: np.ndarray) -> np.ndarray:
        """Diagonal sector blocks of a dense ``n^3 x n^3`` reflection-invariant matrix."""
        n, h = self.n, self.half
        N = n**3
        X = self._transform(M.reshape((N, n, n, n)), self.Q).reshape(N, N)
        X = self._transform(X.T.reshape((N, n, n, n)), self.Q).reshape(N, N).T
        blocks = np.empty((8, h**3, h**3))
        lin = np.arange(N).reshape(n, n, n)
        for s, (a, b, c) in enumerate(self.sectors):
            idx = lin[a * h:(a + 1) * h, b * h:(b + 1) * h, c * h:(c + 1) * h].ravel()
            blocks[s] = X[np.ix_(idx, idx)]
        return blocks

    def matvec(self, blocks: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Apply assembled blocks to ``u`` of shape ``(B, n, n, n)``."""
        x = self.fold(u)
        y = np.einsum("sij,sbj->sbi", blocks, x)
        return self.unfold(y)


class ImplicitCollision:
    """``(I + dt A)^{-1}`` and ``K`` for the two-species operator.

    Works in sum/difference coordinates ``S = f_+ + f_-`` and
    ``D = f_+ - f_-``: the difference block of ``A`` is purely local while
    the sum block also carries the convolution part.
    """

    def __init__(self, op: LandauOperator, split: SplitParams, dt: float, solver: str = "direct",
                 cg_tol: float = 1e-12, cg_max: int = 500, blocks=None):
        self.op = op
        self.split = split.validate(op.grid.v_max)
        self.dt = dt
        self.solver = solver
        self.cg_tol = cg_tol
        self.cg_max = cg_max
        self.ind = op.indicator(split.R)
        self.tind = op.T * self.ind
        self.sectors = SectorBasis(op.n)
        self.last_cg_iterations = 0
        if solver == "direct":
            self.blocks = blocks if blocks is not None else assemble_collision_blocks(op, split)
            eye = np.eye(self.blocks["A_S"].shape[-1])
            self._chol = {
                key: [cho_factor(eye + dt * b) for b in self.blocks[key]] for key in ("A_S", "A_D")
            }
        else:
            self.blocks = None

    # matrix-free pieces in S/D coordinates
    def _conv_a(self, s):
        near, far = self.op.split_kernels(self.split.eps)
        return self.op.conv_L(s) - self.op._conv_part(s * self.ind, far) * self.ind

    def _k_conv(self, s):
        _, far = self.op.split_kernels(self.split.eps)
        return self.op._conv_part(s * self.ind, far) * self.ind

    def apply_A_SD(self, s, d):
        a_s = -self.op.local_L(s) + self.tind * s - 2.0 * self._conv_a(s)
        a_d = -self.op.local_L(d) + self.tind * d
        return a_s, a_d

    def apply_K(self, f: np.ndarray) -> np.ndarray:
        """``K f`` on two-species input ``(2, B, n, n, n)``."""
        if self.blocks is not None:
            s = f[0] + f[1]
            d = f[0] - f[1]
            ks = self.sectors.matvec(self.blocks["K_S"], s)
            kd = self.tind * d
            return np.stack([0.5 * (ks + kd), 0.5 * (ks - kd)], axis=0)
        kc = self._k_conv(f[0] + f[1])
        return np.stack([self.tind * f[0] + kc, self.tind * f[1] + kc], axis=0)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``(I + dt A) f = rhs`` cell by cell."""
        s = rhs[0] + rhs[1]
        d = rhs[0] - rhs[1]
        if self.solver == "direct":
            xs = self._block_solve("A_S", s)
            xd = self._block_solve("A_D", d)
        else:
            xs, xd = self._cg(s, d)
        return np.stack([0.5 * (xs + xd), 0.5 * (xs - xd)], axis=0)

    def _block_solve(self, key, u):
        x = self.sectors.fold(u)
        out = np.empty_like(x)
        for k, fac in enumerate(self._chol[key]):
            out[k] = cho_solve(fac, x[k].T).T
        return self.sectors.unfold(out)

    def _cg(self, s, d):
        """Batched conjugate gradients, one independent system per cell."""
        dt = self.dt

        def apply(x):
            a_s, a_d = self.apply_A_SD(x[0], x[1])
            return x + dt * np.stack([a_s, a_d], axis=0)

        b = np.stack([s, d], axis=0)
        axes = (0, 2, 3, 4)
        x = np.zeros_like(b)
        r = b.copy()
        p = r.copy()
        rr = np.sum(r * r, axis=axes)
        bnorm = np.sqrt(np.sum(b * b, axis=axes))
        target = self.cg_tol * np.where(bnorm > 0, bnorm, 1.0)
        for it in range(self.cg_max):
            if np.all(np.sqrt(rr) <= target):
                self.last_cg_iterations = it
                return x[0], x[1]
            Ap = apply(p)
            pAp = np.sum(p * Ap, axis=axes)
            alpha = np.where(pAp > 0, rr / np.where(pAp > 0, pAp, 1.0), 0.0)
            x += alpha[None, :, None, None, None] * p
            r -= alpha[None, :, None, None, None] * Ap
            rr_new = np.sum(r * r, axis=axes)
            beta = np.where(rr > 0, rr_new / np.where(rr > 0, rr, 1.0), 0.0)
            p = r + beta[None, :, None, None, None] * p
            rr = rr_new
        res = float(np.max(np.sqrt(rr) / np.where(bnorm > 0, bnorm, 1.0)))
        raise SolverError("inner CG for the A-solve did not converge", res)


def assemble_collision_blocks(op: LandauOperator, split: SplitParams) -> dict:
    """Reflection-sector blocks of ``A`` and ``K`` in sum/difference coordinates."""
    sb = SectorBasis(op.n)
    ind = op.indicator(split.R).ravel()
    tind = np.diag(op.T.ravel() * ind)
    full = op.conv_matrix()
    far = op.conv_matrix(op.far_kernel(split.eps))
    far *= ind[:, None]
    far *= ind[None, :]
    base = tind - op.local_matrix().toarray()
    blocks = {
        "A_S": sb.blocks_of(base - 2.0 * (full - far)),
        "A_D": sb.blocks_of(base),
        "K_S": sb.blocks_of(tind + 2.0 * far),
    }
    for key in ("A_S", "A_D", "K_S"):
        blocks[key] = 0.5 * (blocks[key] + np.transpose(blocks[key], (0, 2, 1)))
    return blocks


_BLOCK_CACHE: dict = {}


def collision_blocks(op: LandauOperator, split: SplitParams) -> dict:
    """Cached ``assemble_collision_blocks`` keyed by grid, exponent and split."""
    key = (op.grid.n_v, op.grid.v_max, op.params.gamma, split.eps, split.R)
    if key not in _BLOCK_CACHE:
        if len(_BLOCK_CACHE) >= 4:
            _BLOCK_CACHE.pop(next(iter(_BLOCK_CACHE)))
        _BLOCK_CACHE[key] = assemble_collision_blocks(op, split)
    return _BLOCK_CACHE[key]


# -- stepping ----------------------------------------------------------------------

class _Anderson:
    """Type-II Anderson mixing for the fixed point ``x = G(x)``.

    Mixing weights sum to one, so the global species masses shared by all
    Picard evaluations (and hence charge neutrality) carry over to the mix.
    """

    def __init__(self, depth: int):
        self.depth = depth
        self.xs: list[np.ndarray] = []
        self.gs: list[np.ndarray] = []

    def update(self, x: np.ndarray, gx: np.ndarray) -> np.ndarray:
        if self.depth == 0:
            return gx
        self.xs.append(x)
        self.gs.append(gx)
        if len(self.xs) > self.depth + 1:
            self.xs.pop(0)
            self.gs.pop(0)
        if len(self.xs) == 1:
            return gx
        res = [(g - x).ravel() for x, g in zip(self.xs, self.gs)]
        dF = np.stack([res[k + 1] - res[k] for k in range(len(res) - 1)], axis=1)
        dG = np.stack([(self.gs[k + 1] - self.gs[k]).ravel() for k in range(len(res) - 1)], axis=1)
        coef, *_ = np.linalg.lstsq(dF, res[-1], rcond=None)
        return gx - (dG @ coef).reshape(gx.shape)


@dataclass
class StepStats:
    picard_iterations: int = 0
    picard_change: float = 0.0


class Stepper:
    """Advance ``(DistState, FieldState)`` pairs on one phase grid."""

    def __init__(self, domain: SpatialDomain, grid: VelocityGrid, op: LandauOperator,
                 cfg: StepConfig, split: SplitParams | None = None):
        self.domain = domain
        self.grid = grid
        self.op = op
        self.cfg = cfg.validate()
        check_cfl(cfg.dt, domain, grid)
        self.split = split or SplitParams.default(grid.v_max)
        self.transport = Transport(domain, grid)
        self.poisson = PoissonSolver(domain)
        self.projector = Projector(grid)
        self.stats = StepStats()
        self._prev = None
        if cfg.scheme == "imex_ak":
            blocks = collision_blocks(op, self.split) if cfg.solver == "direct" else None
            self.implicit = ImplicitCollision(op, self.split, cfg.dt, cfg.solver, cfg.cg_tol, cfg.cg_max, blocks)
        else:
            self.implicit = None

    def field_of(self, f: np.ndarray) -> FieldState:
        dens = densities(f, self.grid)
        scale = float(np.sqrt(np.mean(dens[0] ** 2)) + np.sqrt(np.mean(dens[1] ** 2)))
        return self.poisson.solve(dens[0] - dens[1], scale=scale)

    def _explicit_lagged(self, f: np.ndarray, fs: FieldState) -> np.ndarray:
        rhs = self.transport.source_rhs(fs)
        if self.cfg.nonlinear and np.any(f):
            rhs += self.transport.field_terms_rhs(f, fs)
            rhs += self.op.apply_Gamma(f, f)
        return rhs

    def step(self, state: DistState, fs: FieldState):
        """One time step; returns the new ``(DistState, FieldState)``."""
        cfg = self.cfg
        dt = cfg.dt
        f = state.f
        base = f.copy()
        if cfg.streaming:
            base += dt * self.transport.streaming_rhs(f)

        if cfg.scheme == "fully_explicit":
            new = base + dt * (self._explicit_lagged(f, fs) + self.op.apply_L(f))
            self.stats = StepStats(1, 0.0)
            return DistState(new, state.t + dt), self.field_of(new)

        if cfg.extrapolate and self._prev is not None and np.isclose(self._prev[0], state.t, rtol=0, atol=1e-9 * cfg.dt):
            fk = 2.0 * f - self._prev[1]
            phik = self.field_of(fk)
        else:
            fk = f
            phik = fs
        change = np.inf
        mixer = _Anderson(cfg.anderson)
        for it in range(1, cfg.picard_max + 1):
            explicit = base + dt * self._explicit_lagged(fk, phik)
            fnew = self.implicit.solve(explicit + dt * self.implicit.apply_K(fk))
            # The collision increment dt (K f^k - A f^{k+1}) only conserves the
            # collision invariants at the fixed point; drop its macroscopic part
            # so mass, momentum and energy are exact at any Picard tolerance.
            fnew -= self.projector.expand(self.projector.coefficients(fnew - explicit))
            diff = float(np.linalg.norm(fnew - fk))
            scale = float(np.linalg.norm(fnew))
            change = diff / scale if scale > 0 else diff
            if diff == 0.0 or change <= cfg.picard_tol:
                fk = fnew
                break
            fk = mixer.update(fk, fnew)
            phik = self.field_of(fk)
        else:
            raise PicardError("Picard iteration did not converge", change)
        self.stats = StepStats(it, change)
        self._prev = (state.t + dt, f)
        return DistState(fk, state.t + dt), self.field_of(fk)


def step(state, cfg: StepConfig, stepper: Stepper):
    """Functional wrapper: advance ``(DistState, FieldState)`` by one step."""
    return stepper.step(*state)


@dataclass
class RunResult:
    records: list = field(default_factory=list)
    state: DistState | None = None
    field_state: FieldState | None = None
    states: list = field(default_factory=list)


def run(initial: DistState, stepper: Stepper, diag: Callable | None = None, cadence: int = 1,
        snapshot_times: Iterable[float] = (), snapshot_hook: Callable | None = None,
        keep_states: bool = False, t_end: float | None = None) -> RunResult:
    """Advance to ``t_end`` calling ``diag(state, field)`` every ``cadence`` steps.

    The initial field is always recomputed from the initial moments.
    """
    cfg = stepper.cfg
    t_end = cfg.t_end if t_end is None else t_end
    state = initial.copy()
    fs = stepper.field_of(state.f)
    result = RunResult()
    if diag is not None:
        result.records.append(diag(state, fs))
    if keep_states:
        result.states.append((state.copy(), fs.copy()))
    pending = sorted(float(t) for t in snapshot_times)
    # a snapshot fires at the first state within half a step of its time
    slack = 0.5 * cfg.dt
    while pending and pending[0] <= state.t + slack:
        if snapshot_hook is not None:
            snapshot_hook(state, fs)
        pending.pop(0)
    nsteps = int(round(t_end / cfg.dt)) if t_end > 0 else 0
    for n in range(1, nsteps + 1):
        state, fs = stepper.step(state, fs)
        state.t = n * cfg.dt
        if diag is not None and (n % cadence == 0 or n == nsteps):
            result.records.append(diag(state, fs))
        if keep_states:
            result.states.append((state.copy(), fs.copy()))
        while pending and pending[0] <= state.t + slack:
            if snapshot_hook is not None:
                snapshot_hook(state, fs)
            pending.pop(0)
    result.state = state
    result.field_state = fs
    return result
