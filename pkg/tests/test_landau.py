import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from artifact.errors import ConfigError
from artifact.geometry import VelocityGrid
from artifact.landau import (
    LandauOperator,
    PotentialParams,
    SplitParams,
    WeightSpec,
    assemble_dense,
    phi_matrix,
    smooth_cutoff,
    weight_eval,
    weight_exponents,
)
from artifact.maxwellian import Projector, bracket, sqrt_maxwellian
from artifact.verification import kernel_functions, kernel_residuals, noise_inputs, smooth_inputs


class TestPhiMatrix:
    def test_coulomb_axis(self):
        np.testing.assert_allclose(phi_matrix([1.0, 0.0, 0.0], PotentialParams(-3.0)), np.diag([0, 1, 1]))

    def test_maxwell_component(self):
        assert phi_matrix([0.0, 3.0, 4.0], PotentialParams(0.0))[1, 1] == pytest.approx(16.0)

    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3).filter(lambda v: np.linalg.norm(v) > 1e-3),
           st.sampled_from([-3.0, -2.0, 0.0, 1.0]))
    def test_annihilates_v_and_is_psd(self, v, gamma):
        phi = phi_matrix(v, PotentialParams(gamma))
        scale = np.linalg.norm(v) ** (gamma + 2)
        np.testing.assert_allclose(phi @ np.asarray(v), 0.0, atol=1e-12 * scale * np.linalg.norm(v))
        np.testing.assert_allclose(phi, phi.T)
        assert np.linalg.eigvalsh(phi).min() >= -1e-12 * scale

    def test_singular_origin(self):
        with pytest.raises(ValueError):
            phi_matrix([0.0, 0.0, 0.0], PotentialParams(-3.0))


class TestParameters:
    def test_gamma_range(self):
        with pytest.raises(ConfigError):
            PotentialParams(-3.5)

    def test_hardness(self):
        assert PotentialParams(-2.0).hardness == "hard"
        assert PotentialParams(-3.0).hardness == "soft"

    def test_exponents(self):
        assert weight_exponents(-3.0) == (4.0, 7.0)
        assert weight_exponents(0.0) == (1.0, 1.0)

    def test_split_validation(self):
        with pytest.raises(ConfigError):
            SplitParams(0.5, 0.5).validate(6.0)
        with pytest.raises(ConfigError):
            SplitParams(0.1, 6.5).validate(6.0)
        assert SplitParams.default(7.0).R == pytest.approx(4.2)

    def test_cutoff_profile(self):
        r = np.array([0.0, 0.05, 0.1, 0.15, 0.2, 0.3])
        chi = smooth_cutoff(r, 0.1)
        np.testing.assert_array_equal(chi[:3], 1.0)
        np.testing.assert_array_equal(chi[4:], 0.0)
        assert 0 < chi[3] < 1


class TestWeights:
    def test_hard_first_order(self):
        w = WeightSpec.for_potential(PotentialParams(0.0), 3.0, alpha_order=1)
        assert weight_eval(w, np.zeros(3)) == pytest.approx(1.0)

    def test_soft_value(self):
        w = WeightSpec.for_potential(PotentialParams(-3.0), 21.0, nu=0.1)
        v = np.array([np.sqrt(3.0), 0.0, 0.0])
        assert bracket(v) == pytest.approx(2.0)
        assert weight_eval(w, v) == pytest.approx(oracles.WEIGHT_SOFT_L21, rel=1e-12)

    def test_orders_lower_exponent(self):
        w = WeightSpec.for_potential(PotentialParams(-3.0), 21.0)
        assert w.with_orders(1, 2).exponent == 21 - 4 - 14

    def test_negative_nu_rejected(self):
        with pytest.raises(ConfigError):
            WeightSpec(1.0, nu=-0.1)


class TestTables:
    @pytest.mark.parametrize("gamma, frozen", [(-3.0, oracles.SIGMA0_COULOMB), (0.0, oracles.SIGMA0_MAXWELL)])
    def test_sigma_at_origin_converges_to_radial_oracle(self, gamma, frozen):
        errs = []
        for n in (16, 24):
            s0 = LandauOperator(VelocityGrid(n, 7.0), PotentialParams(gamma)).sigma_at_point(np.zeros(3))
            np.testing.assert_allclose(s0 - np.diag(np.diag(s0)), 0.0, atol=1e-12)
            errs.append(abs(s0[0, 0] - frozen) / frozen)
        assert errs[1] < 0.02
        # second order: (24/16)^2 = 2.25
        assert errs[0] / errs[1] > 1.8

    def test_sigma_vector_identity(self, op16):
        t = op16.tables
        expect = 0.5 * np.einsum("...ij,...j->...i", t.sigma, t.v)
        np.testing.assert_allclose(t.sigma_vec, expect, atol=1e-12 * np.abs(t.sigma_vec).max())

    def test_sigma_symmetric_psd(self, op16_coulomb):
        s = op16_coulomb.tables.sigma
        np.testing.assert_allclose(s, np.swapaxes(s, -1, -2))
        assert np.linalg.eigvalsh(s).min() > 0

    @pytest.mark.parametrize("fixture", ["op16", "op16_coulomb"])
    def test_large_velocity_growth(self, fixture, request):
        op = request.getfixturevalue(fixture)
        g = op.params.gamma
        ratio = np.abs(op.tables.sigma) / (1 + np.sqrt(op.grid.vsq))[..., None, None] ** (g + 2)
        assert ratio.max() < 2.0


class TestLinearOperator:
    def test_zero(self, op8):
        assert not np.any(op8.apply_L(np.zeros((2,) + op8.grid.shape)))

    def test_kernel_elements(self, op16):
        res = kernel_residuals(op16)
        assert len(res) == 6
        assert max(res.values()) <= 1e-12

    @pytest.mark.parametrize("n", [6, 8])
    @pytest.mark.parametrize("gamma", [0.0, -3.0])
    def test_dense_spectrum(self, n, gamma):
        op = LandauOperator(VelocityGrid(n, 7.0), PotentialParams(gamma))
        L = assemble_dense(op.apply_L, (2,) + op.grid.shape)
        scale = np.abs(L).max()
        assert np.abs(L - L.T).max() <= 1e-10 * scale
        sym = 0.5 * (L + L.T)
        assert np.linalg.eigvalsh(sym).max() <= 1e-10 * scale
        _, s, vt = np.linalg.svd(L)
        # six collision invariants for two species: a_+, a_-, b_1..3, c
        assert s[-6:].max() < 0.1 * s[-7]
        q, _ = np.linalg.qr(Projector(op.grid).basis.reshape(6, -1).T)
        cosines = np.linalg.svd(q.T @ vt[-6:].T, compute_uv=False)
        assert np.degrees(np.arccos(min(1.0, cosines.min()))) < 5.0

    def test_self_adjoint(self, op8):
        f = noise_inputs(op8.grid, 3, 20)
        g = noise_inputs(op8.grid, 4, 20)
        lhs = np.sum(op8.apply_L(f) * g)
        rhs = np.sum(f * op8.apply_L(g))
        assert abs(lhs - rhs) <= 1e-10 * np.linalg.norm(f) * np.linalg.norm(g) * np.abs(op8.T).max()

    def test_dissipative(self, op8):
        f = smooth_inputs(op8.grid, 5, 30)
        form = np.sum(op8.apply_L(f) * f, axis=(0, 2, 3, 4))
        assert np.all(form <= 0)

    def test_species_batch_axes(self, op8, rng):
        f = rng.standard_normal((2, 3) + op8.grid.shape)
        batched = op8.apply_L(f)
        single = op8.apply_L(f[:, 1])
        np.testing.assert_allclose(batched[:, 1], single, atol=1e-13 * np.abs(single).max())


class TestGamma:
    def test_bilinear_zeros(self, op8, rng):
        h = rng.standard_normal((2,) + op8.grid.shape)
        z = np.zeros_like(h)
        assert not np.any(op8.apply_Gamma(z, h))
        assert not np.any(op8.apply_Gamma(h, z))

    def test_mass_per_species(self, op8, rng):
        g = rng.standard_normal((2,) + op8.grid.shape)
        h = rng.standard_normal((2,) + op8.grid.shape)
        m12 = sqrt_maxwellian(op8.grid.v)
        for sym in (True, False):
            G = op8.apply_Gamma(g, h, symmetric=sym)
            mass = np.sum(G * m12, axis=(1, 2, 3))
            assert np.abs(mass).max() <= 1e-12 * np.linalg.norm(g) * np.linalg.norm(h)

    def test_maxwellian_is_annihilated(self, op16):
        m12 = sqrt_maxwellian(op16.grid.v)
        g = np.stack([m12, m12])
        G = op16.apply_Gamma(g, g)
        assert np.abs(G).max() <= 1e-12 * np.abs(op16.apply_Gamma(g, noise_inputs(op16.grid, 1, 1)[:, 0])).max()

    def test_symmetrised_diagonal_matches_raw(self, op8, rng):
        g = rng.standard_normal((2,) + op8.grid.shape)
        np.testing.assert_allclose(op8.apply_Gamma(g, g), op8.apply_Gamma(g, g, symmetric=False), rtol=0,
                                   atol=1e-12 * np.abs(op8.apply_Gamma(g, g)).max())

    def test_linearisation_identity(self, op8, rng):
        # Gamma(m, f) + Gamma(f, m) with m = mu^1/2 [1, 1] reproduces L
        m12 = sqrt_maxwellian(op8.grid.v)
        m = np.stack([m12, m12])
        f = rng.standard_normal((2,) + op8.grid.shape)
        lin = 2.0 * op8.apply_Gamma(m, f)
        np.testing.assert_allclose(lin, op8.apply_L(f), atol=1e-10 * np.abs(lin).max())


class TestSplit:
    def test_zero(self, op8):
        A, K = op8.split_AK(np.zeros((2,) + op8.grid.shape), SplitParams(0.1, 4.2))
        assert not np.any(A) and not np.any(K)

    def test_identity(self, op8, rng):
        f = rng.standard_normal((2, 4) + op8.grid.shape)
        A, K = op8.split_AK(f, SplitParams(0.2, 4.8))
        L = op8.apply_L(f)
        assert np.linalg.norm(-A + K - L) <= 1e-10 * np.linalg.norm(L)

    def test_eps_above_R_rejected(self, op8):
        with pytest.raises(ConfigError):
            op8.split_AK(np.zeros((2,) + op8.grid.shape), SplitParams(5.0, 4.0))

    def test_K_small_on_far_support(self, op16):
        split = SplitParams(0.1, 3.6)
        f = noise_inputs(op16.grid, 9, 1)[:, 0]
        far = np.sqrt(op16.grid.vsq) > split.R + 2.0
        f = f * far
        _, K = op16.split_AK(f, split)
        weighted = np.linalg.norm(f * sqrt_maxwellian(op16.grid.v) ** 0.2)  # mu^{1/10}
        _, K_ref = op16.split_AK(noise_inputs(op16.grid, 9, 1)[:, 0], split)
        assert np.linalg.norm(K) <= 1e-3 * np.linalg.norm(K_ref)
        assert np.linalg.norm(K) <= 10.0 * weighted


class TestNorms:
    def test_zero(self, op8):
        z = np.zeros((2,) + op8.grid.shape)
        assert op8.norm_D(z) == 0.0
        assert op8.norm_D_pv(z) == 0.0

    def test_nonnegative(self, op8):
        f = noise_inputs(op8.grid, 2, 10)
        assert np.all(op8.norm_D(f, per_batch=True) >= 0)

    def test_weighted_dominates_unweighted(self, op8):
        f = smooth_inputs(op8.grid, 2, 5)
        w = WeightSpec.for_potential(op8.params, 3.0)
        assert np.all(op8.norm_D(f, w, per_batch=True) >= op8.norm_D(f, per_batch=True))

    def test_equivalence_ratio_bounded(self, op16):
        f = smooth_inputs(op16.grid, 11, 20)
        r = op16.norm_D(f, per_batch=True) / op16.norm_D_pv(f, per_batch=True)
        assert 0.1 < r.min() <= r.max() < 10.0
