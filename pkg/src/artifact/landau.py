"""Discrete Landau collision machinery.

The linearised operator and the bilinear term are built from one discrete
weak form.  With ``u = mu^{-1/2} f`` and a discrete gradient ``D`` that is
exact on quadratics, the collision form reads

    <psi, Q_h(G, F)> = - sum_{k,k'} (D psi)_k . Phi(v_k - v_k') mu_k mu_k'
                         [u^G_k' (D u^F)_k - u^F_k (D u^G)_k'] h^6

so the discrete operator conserves mass, momentum and energy, its kernel is
spanned exactly by the six two-species collision invariants, and the linearisation is
symmetric and non-positive.  Convolutions against ``Phi`` are evaluated with
zero-padded FFTs, which reproduces the direct quadrature sum exactly up to
roundoff.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import fft as sfft

from .errors import ConfigError, TableError
from .geometry import VelocityGrid
from .maxwellian import bracket, maxwellian, sqrt_maxwellian

_PAIRS = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
_PAIR_INDEX = {}
for _n, (_i, _j) in enumerate(_PAIRS):
    _PAIR_INDEX[(_i, _j)] = _n
    _PAIR_INDEX[(_j, _i)] = _n


# -- parameters -----------------------------------------------------------------

@dataclass(frozen=True)
class PotentialParams:
    """Landau interaction exponent ``gamma`` with ``s = 1``."""

    gamma: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if not -3.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [-3, 1], got {self.gamma}", key="gamma")
        if self.s != 1.0:
            raise ConfigError("only the Landau case s = 1 is supported", key="s")

    @property
    def hard(self) -> bool:
        return self.gamma >= -2.0

    @property
    def hardness(self) -> str:
        return "hard" if self.hard else "soft"


def weight_exponents(gamma: float, s: float = 1.0) -> tuple[float, float]:
    """Derivative penalties ``(r, q)``: 1 for hard potentials, the soft formula otherwise."""
    if gamma >= -2.0:
        return 1.0, 1.0
    r = -gamma - 2.0 * gamma * (1.0 - s) / s + 1.0
    q = -2.0 * gamma / s + 1.0
    return r, q


def decay_exponent(gamma: float) -> float:
    """Theoretical time exponent ``p``: 1 when hard, ``1 / (-gamma - 1)`` when soft."""
    if gamma >= -2.0:
        return 1.0
    return 1.0 / (-gamma - 2.0 + 1.0)


@dataclass(frozen=True)
class WeightSpec:
    """Velocity weight ``<v>^{l - r|alpha| - q|beta|}``, times ``exp(nu <v>)`` when soft."""

    l: float
    nu: float = 0.0
    r: float = 1.0
    q: float = 1.0
    alpha_order: int = 0
    beta_order: int = 0
    soft: bool = False

    def __post_init__(self):
        if self.nu < 0:
            raise ConfigError(f"nu must be non-negative, got {self.nu}", key="nu")

    @classmethod
    def for_potential(cls, params: PotentialParams, l: float, nu: float = 0.0,
                      alpha_order: int = 0, beta_order: int = 0) -> "WeightSpec":
        r, q = weight_exponents(params.gamma, params.s)
        return cls(l, nu, r, q, alpha_order, beta_order, soft=not params.hard)

    def with_orders(self, alpha_order: int, beta_order: int) -> "WeightSpec":
        return WeightSpec(self.l, self.nu, self.r, self.q, alpha_order, beta_order, self.soft)

    @property
    def exponent(self) -> float:
        return self.l - self.r * self.alpha_order - self.q * self.beta_order


def weight_eval(spec: WeightSpec, v) -> np.ndarray:
    """Evaluate ``w_{l,nu}(alpha, beta)`` on the last axis of ``v``."""
    b = bracket(v)
    w = b**spec.exponent
    if spec.soft and spec.nu:
        w = w * np.exp(spec.nu * b)
    return w


@dataclass(frozen=True)
class SplitParams:
    """Cut-off radii for the ``-A + K`` decomposition."""

    eps: float = 0.1
    R: float = 4.2

    def validate(self, v_max: float | None = None) -> "SplitParams":
        if not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}", key="eps")
        if not self.eps < self.R:
            raise ConfigError(f"eps ({self.eps}) must be smaller than R ({self.R})", key="R")
        if v_max is not None and self.R > v_max:
            raise ConfigError(f"R ({self.R}) must not exceed v_max ({v_max})", key="R")
        return self

    @classmethod
    def default(cls, v_max: float) -> "SplitParams":
        return cls(0.1, 0.6 * v_max)


def smooth_cutoff(r, eps: float) -> np.ndarray:
    """Smooth bump: 1 for ``r <= eps``, 0 for ``r >= 2 eps``."""
    r = np.asarray(r, dtype=float)

    def psi(t):
        out = np.zeros_like(t)
        pos = t > 0
        out[pos] = np.exp(-1.0 / t[pos])
        return out

    a = psi((2.0 * eps - r) / eps)
    b = psi((r - eps) / eps)
    return a / (a + b)


# -- kernel -----------------------------------------------------------------------

def phi_matrix(v, params: PotentialParams) -> np.ndarray:
    """Landau kernel ``(I - v v^T / |v|^2) |v|^{gamma + 2}`` on the last axis of ``v``.

    Raises ``ValueError`` at ``v = 0`` when ``gamma + 2 < 0``.
    """
    v = np.asarray(v, dtype=float)
    r2 = np.sum(v * v, axis=-1)
    zero = r2 == 0
    if np.any(zero) and params.gamma + 2.0 < 0:
        raise ValueError("phi is singular at v = 0 for gamma < -2")
    safe = np.where(zero, 1.0, r2)
    proj = np.eye(3) - v[..., :, None] * v[..., None, :] / safe[..., None, None]
    mag = np.where(zero, 0.0, safe ** (0.5 * (params.gamma + 2.0)))
    return proj * mag[..., None, None]


def _gauss_square(n: int, a: float):
    x, w = np.polynomial.legendre.leggauss(n)
    x = x * a
    w = w * a
    return x, w


def cube_average_power(a: float, p: float, order: int = 24) -> float:
    """Mean of ``|z|^p`` over the cube ``[-a, a]^3`` (pyramid decomposition)."""
    x, w = _gauss_square(order, a)
    y, z = np.meshgrid(x, x, indexing="ij")
    face = np.sum(np.outer(w, w) * (a * a + y * y + z * z) ** (0.5 * p))
    return 6.0 * a / (p + 3.0) * face / (8.0 * a**3)


def cell_integral_phi(center, a: float, params: PotentialParams, order: int = 16) -> np.ndarray:
    """``int phi(z) dz`` over the cube ``center + [-a, a]^3``.

    Uses the Euler identity ``div(z F) = (p + 3) F`` for ``F`` homogeneous of
    degree ``p = gamma + 2``, reducing the volume integral to smooth face
    integrals.  Valid wherever the singular point lies.
    """
    p = params.gamma + 2.0
    c = np.asarray(center, dtype=float)
    x, w = _gauss_square(order, a)
    s, t = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w)
    total = np.zeros((3, 3))
    for axis in range(3):
        others = [k for k in range(3) if k != axis]
        for sign in (-1.0, 1.0):
            d = sign * c[axis] + a
            if d == 0.0:
                continue
            pts = np.empty(s.shape + (3,))
            pts[..., axis] = c[axis] + sign * a
            pts[..., others[0]] = c[others[0]] + s
            pts[..., others[1]] = c[others[1]] + t
            total += d * np.einsum("ab,abij->ij", ww, phi_matrix(pts, params))
    return total / (p + 3.0)


def derivative_matrix(n: int, h: float) -> np.ndarray:
    """Second-order first-derivative matrix, exact on quadratics at every node.

    Centred differences inside, three-point one-sided differences at both ends.
    """
    D = np.zeros((n, n))
    for k in range(1, n - 1):
        D[k, k - 1] = -0.5
        D[k, k + 1] = 0.5
    D[0, :3] = [-1.5, 2.0, -0.5]
    D[n - 1, n - 3:] = [0.5, -2.0, 1.5]
    return D / h


def _apply_axis(M: np.ndarray, u: np.ndarray, axis: int) -> np.ndarray:
    pos = u.ndim - 3 + axis
    ut = np.moveaxis(u, pos, -1)
    return np.moveaxis(ut @ M.T, -1, pos)


# -- tables -----------------------------------------------------------------------------

@dataclass
class CollisionTables:
    """``sigma^{ij}``, ``sigma^i`` and ``d_k sigma^{ij}`` on the velocity nodes.

    Shapes: ``sigma`` ``(n, n, n, 3, 3)``, ``sigma_vec`` ``(n, n, n, 3)``,
    ``dsigma`` ``(n, n, n, 3, 3, 3)`` indexed ``[..., k, i, j]``.
    """

    sigma: np.ndarray
    sigma_vec: np.ndarray
    dsigma: np.ndarray
    v: np.ndarray

    @property
    def div_sigma_vec(self) -> np.ndarray:
        """``d_i sigma^i = (d_i sigma^{ij}) v_j / 2 + tr(sigma) / 2`` per node."""
        return 0.5 * np.einsum("...iij,...j->...", self.dsigma, self.v) + 0.5 * np.einsum(
            "...ii->...", self.sigma
        )


class LandauOperator:
    """Discrete Landau operators on one velocity grid.

    Parameters
    ----------
    grid : VelocityGrid
        Velocity grid.
    params : PotentialParams
        Interaction exponent.

    Notes
    -----
    Two-species inputs have shape ``(2, ..., n, n, n)``; any extra leading
    axes (cells, samples) are carried through.  ``apply_L`` is returned in
    the dissipative orientation: ``<L f, f> <= 0``.
    """

    def __init__(self, grid: VelocityGrid, params: PotentialParams | None = None, *, self_test: bool = True):
        self.grid = grid
        self.params = params or PotentialParams()
        n = grid.n_v
        h = grid.h_v
        self.n = n
        self.m = 2 * n
        self.hw = grid.quadrature_weight
        self.mu = maxwellian(grid.v)
        self.sqrt_mu = sqrt_maxwellian(grid.v)
        pts = grid.points
        self.D = derivative_matrix(n, h)
        ratio = np.exp(0.25 * (pts[None, :] ** 2 - pts[:, None] ** 2))
        self.Dw = self.D * ratio  # mu^1/2 D mu^-1/2 along one axis
        self._offsets = (np.arange(self.m) + self.m // 2) % self.m - self.m // 2
        self.self_weight = (2.0 / 3.0) * cube_average_power(0.5 * h, self.params.gamma + 2.0)
        self.kernel = self._kernel_array()
        self._khat = self._fft_kernel(self.kernel)
        self._split_cache = {}
        self._split_real = {}
        self.tables = self._build_tables()
        if self_test:
            self._self_test()

    # kernel arrays on the padded offset lattice
    def _offset_vectors(self) -> np.ndarray:
        o = self._offsets * self.grid.h_v
        o1, o2, o3 = np.meshgrid(o, o, o, indexing="ij")
        z = np.stack([o1, o2, o3], axis=-1)
        valid = np.abs(self._offsets) <= self.n - 1
        mask = valid[:, None, None] & valid[None, :, None] & valid[None, None, :]
        return z, mask

    def _kernel_array(self, radial=None) -> np.ndarray:
        z, mask = self._offset_vectors()
        zero = np.all(z == 0, axis=-1)
        safe = z.copy()
        safe[zero] = 1.0
        phi = phi_matrix(safe, self.params)
        phi[zero] = self.self_weight * np.eye(3)
        if radial is not None:
            phi = phi * radial(np.linalg.norm(z, axis=-1))[..., None, None]
        phi[~mask] = 0.0
        return np.stack([phi[..., i, j] for i, j in _PAIRS], axis=0)

    def _fft_kernel(self, karr: np.ndarray) -> np.ndarray:
        return sfft.rfftn(karr, axes=(-3, -2, -1))

    def split_kernels(self, eps: float):
        """FFT kernels for ``phi chi`` and ``phi (1 - chi)``."""
        if eps not in self._split_cache:
            near = self._kernel_array(lambda r: smooth_cutoff(r, eps))
            far = self.kernel - near
            self._split_real[eps] = (near, far)
            self._split_cache[eps] = (self._fft_kernel(near), self._fft_kernel(far))
        return self._split_cache[eps]

    def far_kernel(self, eps: float) -> np.ndarray:
        """Real-space ``phi (1 - chi)`` kernel components ``(6, m, m, m)``."""
        self.split_kernels(eps)
        return self._split_real[eps][1]

    # dense and sparse matrix forms (used for assembly and test oracles)
    def sparse_grad_w(self):
        """``Dw_i`` as sparse ``n^3 x n^3`` matrices."""
        import scipy.sparse as sps

        n = self.n
        eye = sps.identity(n, format="csr")
        Dw = sps.csr_matrix(self.Dw)
        return [
            sps.kron(sps.kron(Dw, eye), eye, format="csr"),
            sps.kron(sps.kron(eye, Dw), eye, format="csr"),
            sps.kron(sps.kron(eye, eye), Dw, format="csr"),
        ]

    def local_matrix(self):
        """Sparse matrix of the local part ``-2 Dw^T sigma Dw`` on one species."""
        import scipy.sparse as sps

        G = self.sparse_grad_w()
        sig = self.tables.sigma.reshape(-1, 3, 3)
        out = None
        for i in range(3):
            for j in range(3):
                term = G[i].T @ sps.diags(sig[:, i, j]) @ G[j]
                out = term if out is None else out + term
        return (-2.0 * out).tocsr()

    def conv_matrix(self, kernel: np.ndarray | None = None) -> np.ndarray:
        """Dense matrix of ``s -> Dw^T [mu^1/2 Phi * (mu^1/2 Dw s)] h^3``."""
        kernel = self.kernel if kernel is None else kernel
        n, m = self.n, self.m
        N = n**3
        k = np.arange(n)
        off = (k[:, None] - k[None, :]) % m
        shape = (N, n, n, n)

        def right(Z, j):
            # Z -> Z M Dw_j, acting on the column index
            return _apply_axis(self.Dw.T, Z.reshape(shape) * self.sqrt_mu, j).reshape(N, N)

        out = np.zeros((N, N))
        for i in range(3):
            acc = np.zeros((N, N))
            for j in range(3):
                comp = kernel[_PAIR_INDEX[(i, j)]]
                phi = comp[off[:, None, None, :, None, None], off[None, :, None, None, :, None],
                           off[None, None, :, None, None, :]].reshape(N, N)
                acc += right(phi, j)
            out += right(np.ascontiguousarray(acc.T), i).T
        return out * self.hw

    # convolution primitives
    def _fwd(self, u):
        return sfft.rfftn(u, s=(self.m,) * 3, axes=(-3, -2, -1))

    def _inv(self, U):
        n = self.n
        return sfft.irfftn(U, s=(self.m,) * 3, axes=(-3, -2, -1))[..., :n, :n, :n]

    def conv_vector(self, u: np.ndarray, khat=None) -> np.ndarray:
        """``(Phi * u)_i = sum_j sum_k' Phi_ij(v - v_k') u_j(v_k') h^3``; ``u`` has a leading axis of 3."""
        khat = self._khat if khat is None else khat
        U = [self._fwd(u[j]) for j in range(3)]
        out = []
        for i in range(3):
            acc = khat[_PAIR_INDEX[(i, 0)]] * U[0]
            acc += khat[_PAIR_INDEX[(i, 1)]] * U[1]
            acc += khat[_PAIR_INDEX[(i, 2)]] * U[2]
            out.append(self._inv(acc))
        return np.stack(out, axis=0) * self.hw

    def conv_scalar(self, u: np.ndarray, khat=None) -> np.ndarray:
        """Matrix field ``Phi * u`` with trailing ``(3, 3)`` axes."""
        khat = self._khat if khat is None else khat
        U = self._fwd(u)
        comps = [self._inv(khat[p] * U) for p in range(6)]
        out = np.empty(u.shape + (3, 3))
        for p, (i, j) in enumerate(_PAIRS):
            out[..., i, j] = comps[p]
            out[..., j, i] = comps[p]
        return out * self.hw

    # derivatives
    def grad_w(self, f: np.ndarray) -> np.ndarray:
        """``mu^1/2 D (mu^-1/2 f)`` with a new leading axis of 3."""
        return np.stack([_apply_axis(self.Dw, f, i) for i in range(3)], axis=0)

    def div_w(self, g: np.ndarray) -> np.ndarray:
        """Transpose of ``grad_w``: ``sum_i Dw_i^T g_i``."""
        return sum(_apply_axis(self.Dw.T, g[i], i) for i in range(3))

    def grad(self, f: np.ndarray) -> np.ndarray:
        return np.stack([_apply_axis(self.D, f, i) for i in range(3)], axis=0)

    # tables
    def _build_tables(self) -> CollisionTables:
        sigma = self.conv_scalar(self.mu)
        v = self.grid.v
        vm = np.stack([v[..., j] * self.mu for j in range(3)], axis=0)
        sigma_vec = 0.5 * np.moveaxis(self.conv_vector(vm), 0, -1)
        dsigma = np.empty(self.grid.shape + (3, 3, 3))
        for k in range(3):
            dsigma[..., k, :, :] = -self.conv_scalar(vm[k])
        return CollisionTables(sigma, sigma_vec, dsigma, v)

    def sigma_at_point(self, v, near: float = 2.0) -> np.ndarray:
        """``sigma^{ij}(v)`` at an arbitrary point by product integration.

        Cells within ``near`` spacings of the singular point use the exact
        cell integral of ``phi`` against the nodal Maxwellian.
        """
        v = np.asarray(v, dtype=float)
        h = self.grid.h_v
        z = v - self.grid.v
        dist = np.max(np.abs(z), axis=-1)
        far = dist > near * h
        out = np.zeros((3, 3))
        zf = z[far]
        out += np.einsum("k,kij->ij", self.mu[far], phi_matrix(zf, self.params)) * self.hw
        for idx in np.argwhere(~far):
            out += self.mu[tuple(idx)] * cell_integral_phi(z[tuple(idx)], 0.5 * h, self.params)
        return out

    def _self_test(self):
        s0 = self.sigma_at_point(np.zeros(3))
        diag = np.diag(s0)
        scale = np.max(np.abs(diag))
        dev = max(np.max(np.abs(diag - diag.mean())), np.max(np.abs(s0 - np.diag(diag))))
        if not scale > 0 or dev > 1e-3 * scale:
            raise TableError(f"isotropy self-test failed at v = 0: deviation {dev / scale:.3e}")

    @cached_property
    def T(self) -> np.ndarray:
        """``2 d_i sigma^i`` per node."""
        return 2.0 * self.tables.div_sigma_vec

    # operators
    def _local(self, f: np.ndarray) -> np.ndarray:
        """``-2 Dw^T sigma Dw f``, the local part of ``L``."""
        g = self.grad_w(f)
        return -2.0 * self.div_w(_mat_field(self.tables.sigma, g))

    def _conv_part(self, s: np.ndarray, khat=None) -> np.ndarray:
        """``Dw^T [mu^1/2 Phi * (mu^1/2 Dw s)]`` for a one-species function ``s``."""
        g = self.grad_w(s) * self.sqrt_mu
        return self.div_w(self.conv_vector(g, khat) * self.sqrt_mu)

    def apply_L(self, f: np.ndarray) -> np.ndarray:
        """Linearised collision operator ``[L_+ f, L_- f]``."""
        f = np.asarray(f, dtype=float)
        c = self._conv_part(f[0] + f[1])
        return np.stack([self._local(f[0]) + c, self._local(f[1]) + c], axis=0)

    def local_L(self, f1: np.ndarray) -> np.ndarray:
        """Local (sparse) part of ``L`` on one species."""
        return self._local(f1)

    def conv_L(self, s: np.ndarray) -> np.ndarray:
        """Convolution part of ``L`` on the species sum ``s``."""
        return self._conv_part(s)

    def _gamma_raw(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        sg = g[0] + g[1]
        Sig = self.conv_scalar(self.sqrt_mu * sg)
        V = self.conv_vector(self.grad_w(sg) * self.sqrt_mu)
        out = []
        for s in range(2):
            dh = self.grad_w(h[s])
            flux = _mat_field(Sig, dh) - h[s] * V
            out.append(-self.div_w(flux))
        return np.stack(out, axis=0)

    def apply_Gamma(self, g: np.ndarray, h: np.ndarray, symmetric: bool = True) -> np.ndarray:
        """Bilinear collision term ``Gamma(g, h)``.

        With ``symmetric=True`` (default) the result is
        ``(Gamma(g, h) + Gamma(h, g)) / 2``, which coincides with the raw
        form on the diagonal ``g = h`` and conserves all six collision
        invariants for every pair.
        """
        g = np.asarray(g, dtype=float)
        h = np.asarray(h, dtype=float)
        if not symmetric:
            return self._gamma_raw(g, h)
        if g is h or np.array_equal(g, h):
            return self._gamma_raw(g, g)
        return 0.5 * (self._gamma_raw(g, h) + self._gamma_raw(h, g))

    def split_AK(self, f: np.ndarray, split: SplitParams):
        """Return ``(A f, K f)`` with ``L = -A + K``."""
        split.validate(self.grid.v_max)
        f = np.asarray(f, dtype=float)
        near, far = self.split_kernels(split.eps)
        ind = self.indicator(split.R)
        s = f[0] + f[1]
        far_in = self._conv_part(s * ind, far) * ind
        conv_a = self._conv_part(s, near) + self._conv_part(s, far) - far_in
        tind = self.T * ind
        A = np.stack([-self._local(f[k]) + tind * f[k] - conv_a for k in range(2)], axis=0)
        K = np.stack([tind * f[k] + far_in for k in range(2)], axis=0)
        return A, K

    def indicator(self, R: float) -> np.ndarray:
        return (np.sqrt(self.grid.vsq) <= R).astype(float)

    # norms
    def norm_D(self, f: np.ndarray, weight: WeightSpec | None = None, per_batch: bool = False):
        """Squared sigma-form dissipation norm ``|f|^2_{L^2_{D,w}}``.

        Sums over species and every leading axis unless ``per_batch``, in
        which case the species axis is summed and the remaining leading axes
        are kept.
        """
        f = np.asarray(f, dtype=float)
        w2 = 1.0 if weight is None else weight_eval(weight, self.grid.v) ** 2
        g = self.grad(f)
        sig = self.tables.sigma
        quad = np.einsum("i...,...ij,j...->...", g, sig, g, optimize=True)
        vsv = np.einsum("...i,...ij,...j->...", self.grid.v, sig, self.grid.v) / 4.0
        dens = w2 * (quad + vsv * f * f)
        return self._reduce(dens, per_batch)

    def norm_D_pv(self, f: np.ndarray, weight: WeightSpec | None = None, per_batch: bool = False):
        """Squared projector form ``|w<v>^{g/2} P_v grad f|^2 + |w<v>^{(g+2)/2}((I-P_v) grad f, f)|^2``."""
        f = np.asarray(f, dtype=float)
        gam = self.params.gamma
        w2 = 1.0 if weight is None else weight_eval(weight, self.grid.v) ** 2
        b = bracket(self.grid.v)
        g = self.grad(f)
        vhat = self.grid.v / np.sqrt(self.grid.vsq)[..., None]
        radial = np.einsum("i...,...i->...", g, vhat)
        tang2 = np.sum(g * g, axis=0) - radial**2
        dens = w2 * (b**gam * radial**2 + b ** (gam + 2.0) * (tang2 + f * f))
        return self._reduce(dens, per_batch)

    def _reduce(self, dens, per_batch):
        if per_batch:
            return dens.sum(axis=0).sum(axis=(-3, -2, -1)) * self.hw
        return float(dens.sum() * self.hw)

    def inner(self, f: np.ndarray, g: np.ndarray) -> float:
        """Discrete ``L^2_v`` inner product summed over species and leading axes."""
        return float(np.sum(f * g) * self.hw)


def _mat_field(M: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``(M g)_i = sum_j M_ij g_j`` with ``M`` ``(..., 3, 3)`` trailing and ``g`` ``(3, ...)`` leading."""
    return np.stack([M[..., i, 0] * g[0] + M[..., i, 1] * g[1] + M[..., i, 2] * g[2] for i in range(3)], axis=0)


def assemble_dense(apply, shape) -> np.ndarray:
    """Dense matrix of a linear map on arrays of the given shape (test oracle)."""
    size = int(np.prod(shape))
    cols = []
    eye = np.eye(size)
    for start in range(0, size, 256):
        block = eye[start:start + 256].reshape((-1,) + tuple(shape))
        out = np.stack([apply(b) for b in block], axis=0)
        cols.append(out.reshape(len(block), size))
    return np.concatenate(cols, axis=0).T
