"""Kernel constants, dissipation quadrature, and the pointwise/Poincare checks."""

import numpy as np
import pytest
from scipy.special import gamma

from critsqg.kernels import (
    KernelSpec,
    QuadratureSpec,
    c_alpha,
    dissipation_convergence,
    dissipation_density,
    dissipation_field,
    kernel_value,
    lp_poincare_check,
    lp_poincare_constant,
    nonlinear_lower_bound_check,
    pointwise_identity_residual,
    spectral_identity_rhs,
)
from critsqg.spectral import SpectralField, TorusGrid
from critsqg.solver import random_band_field

from conftest import cos_x1, meshes


class TestCAlpha:
    def test_alpha_one_is_inverse_two_pi(self):
        assert c_alpha(1.0) == pytest.approx(1.0 / (2 * np.pi), rel=1e-14)

    def test_gamma_oracle(self):
        # 2 * Gamma(3/2) / (|Gamma(-1/2)| * pi) with Gamma(3/2) = sqrt(pi)/2,
        # |Gamma(-1/2)| = 2 sqrt(pi)
        expected = 2.0 * (np.sqrt(np.pi) / 2) / (2 * np.sqrt(np.pi) * np.pi)
        assert c_alpha(1.0) == pytest.approx(expected, rel=1e-14)
        for a in (0.3, 0.8, 1.4, 1.9):
            expected = 2**a * gamma(1 + a / 2) / (abs(gamma(-a / 2)) * np.pi)
            assert c_alpha(a) == pytest.approx(expected, rel=1e-13)

    def test_vanishing_limits(self):
        assert c_alpha(1e-6) < 1e-5
        assert c_alpha(2 - 1e-6) < 1e-5

    def test_domain(self):
        for bad in (0.0, 2.0, -0.5, 2.5):
            with pytest.raises(ValueError):
                c_alpha(bad)


class TestKernelLattice:
    def test_lattice_radius_convergence(self):
        # doubling the image radius moves K by <= 1e-6 relative for |y| <= pi
        y = np.array([[0.5, 0.3], [np.pi * 0.8, -np.pi * 0.5], [-1.0, 2.0], [np.pi * 0.99, 0.0]])
        for a in (0.5, 1.0, 1.5):
            k1 = kernel_value(y, KernelSpec(alpha=a, lattice_radius=6))
            k2 = kernel_value(y, KernelSpec(alpha=a, lattice_radius=12))
            assert (np.abs(k1 - k2) / np.abs(k2)).max() < 1e-6

    def test_dominated_by_free_space_singularity(self):
        y = np.array([[0.05, 0.0]])
        a = 1.0
        free = c_alpha(a) / 0.05**3
        val = float(kernel_value(y, KernelSpec(alpha=a))[0])
        assert val > free
        assert val < free * 1.01

    def test_validation(self):
        with pytest.raises(ValueError):
            KernelSpec(alpha=1.0, lattice_radius=1)
        with pytest.raises(ValueError):
            KernelSpec(alpha=2.5)


class TestDissipation:
    def test_cosine_is_one_everywhere(self, grid64):
        D = dissipation_field(cos_x1(grid64), 1.0)
        assert np.abs(D - 1.0).max() < 1e-3

    def test_zero_field(self, grid64):
        D = dissipation_field(SpectralField.zeros(grid64), 1.0)
        assert np.abs(D).max() == 0.0

    def test_nonnegative_on_random_fields(self, grid64):
        for seed in range(4):
            phi = random_band_field(grid64, 8, 1.0, seed)
            for a in (0.5, 1.0, 1.5):
                D = dissipation_field(phi, a)
                assert D.min() > -1e-10

    def test_two_mode_cross_check_at_origin(self, grid64):
        X, Y = meshes(grid64)
        phi = SpectralField.from_values(grid64, np.cos(X) + np.cos(Y))
        rhs = spectral_identity_rhs(phi, 1.0)
        val = dissipation_density(phi, 1.0, (0, 0))
        assert val == pytest.approx(rhs[0, 0], abs=1e-3 * max(abs(rhs[0, 0]), 1.0))

    def test_refinement_self_check(self, grid64):
        phi = random_band_field(grid64, 6, 1.0, 3)
        assert dissipation_convergence(phi, 1.0) < 1e-3

    def test_scaling_relation(self):
        # D_a[phi(2.)](x) = 2^a D_a[phi](2x) for the whole-space functional
        g = TorusGrid(2, 64)
        x = g.coords
        X, Y = np.meshgrid(x, x, indexing="ij")
        rng = np.random.default_rng(5)
        modes = [(1, 0, 0.7), (0, 1, -0.4), (1, 1, 0.3), (2, 1, 0.2)]
        vals = sum(a * np.cos(kx * X + ky * Y + rng.uniform(0, 2 * np.pi)) for kx, ky, a in modes)
        phi = SpectralField.from_values(g, vals, demean=True)
        lam = 2
        squeezed = SpectralField.from_values(g, _squeeze(phi, lam), demean=True)
        for a in (0.5, 1.0):
            D_sq = dissipation_field(squeezed, a)
            D = dissipation_field(phi, a)
            # compare at collocation points x with 2x on the grid: index doubling
            n = g.n
            idx = np.arange(n)
            D_at_2x = D[np.ix_((2 * idx) % n, (2 * idx) % n)]
            rel = np.abs(D_sq - lam**a * D_at_2x).max() / np.abs(D).max()
            assert rel < 0.05

    def test_resolution_guard(self):
        g = TorusGrid(2, 32)
        phi = random_band_field(g, 12, 1.0, 1)
        with pytest.raises(ValueError):
            dissipation_field(phi, 1.0)

    def test_quadrature_spec_validation(self, grid64):
        with pytest.raises(ValueError):
            QuadratureSpec(pv_inner_radius=0.0)
        with pytest.raises(ValueError):
            QuadratureSpec(pv_inner_radius=0.01, outer_radius=np.pi)
        # inner radius must stay below the grid spacing
        bad = QuadratureSpec(pv_inner_radius=1.0)
        with pytest.raises(ValueError):
            dissipation_field(cos_x1(grid64), 1.0, bad)


def _squeeze(phi, lam):
    """Values of x -> phi(lam * x) on the same grid (lam integer)."""
    n = phi.grid.n
    idx = (lam * np.arange(n)) % n
    return phi.values()[np.ix_(idx, idx)]


class TestPointwiseIdentity:
    def test_cosine_residual_everywhere(self, grid64):
        resid = pointwise_identity_residual(cos_x1(grid64), 1.0)
        assert resid.max() < 1e-3

    def test_zero_field_exact(self, grid64):
        resid = pointwise_identity_residual(SpectralField.zeros(grid64), 1.0)
        assert resid.max() == 0.0

    def test_corpus_mean_residual(self, grid64):
        for seed in (0, 7, 19):
            phi = random_band_field(grid64, 8, 1.0, seed)
            linf_sq = np.abs(phi.values()).max() ** 2
            for a in (0.5, 1.0, 1.5):
                resid = pointwise_identity_residual(phi, a)
                assert resid.mean() <= 1e-2 * linf_sq

    def test_single_point_variant(self, grid64):
        phi = random_band_field(grid64, 6, 1.0, 2)
        full = pointwise_identity_residual(phi, 1.0)
        at = pointwise_identity_residual(phi, 1.0, x=(3, 5))
        assert at == pytest.approx(full[3, 5], rel=1e-12)


class TestLpPoincare:
    def test_pinned_critical_constant(self):
        assert lp_poincare_constant(1.0, 2) == 2**9 * np.pi**2

    def test_zero_field(self, grid64):
        lhs, (r1, r2) = lp_poincare_check(SpectralField.zeros(grid64), 4, 1.0)
        assert lhs == 0.0 and r1 == 0.0 and r2 == 0.0

    def test_cosine_with_slack(self, grid64):
        lhs, (r1, r2) = lp_poincare_check(cos_x1(grid64), 4, 1.0)
        assert lhs >= r1 + r2
        assert lhs > (r1 + r2) * 1.05  # strict slack

    @pytest.mark.parametrize("p", [4, 8])
    def test_random_corpus(self, grid64, p):
        for seed in (1, 5, 9):
            phi = random_band_field(grid64, 8, 1.0, seed)
            lhs, (r1, r2) = lp_poincare_check(phi, p, 1.0)
            assert lhs >= r1 + r2

    def test_bad_p(self, grid64):
        with pytest.raises(ValueError):
            lp_poincare_check(cos_x1(grid64), 6, 1.0)

    def test_lhs_quadrature_is_alias_free(self, grid64):
        # oracle: for theta = cos(x1), int theta^{p-1} Lambda theta = int cos^p
        # = 2*pi * 2*pi * binom(p, p/2)/2^p
        from math import comb

        p = 8
        lhs, _ = lp_poincare_check(cos_x1(grid64), p, 1.0)
        exact = (2 * np.pi) ** 2 * comb(p, p // 2) / 2**p
        assert lhs == pytest.approx(exact, rel=1e-12)


class TestNonlinearLowerBound:
    def test_cosine_with_spec_shift(self, grid64):
        from critsqg.diagnostics import load_constants

        c2 = load_constants().c2
        rep = nonlinear_lower_bound_check(cos_x1(grid64), (np.pi / 8, 0.0), c2)
        assert not rep.empty
        assert rep.min_ratio >= 1.0

    def test_degenerate_shift_field(self, grid64):
        # delta_h theta vanishes identically when h is a full period of the mode
        phi = cos_x1(grid64)
        rep = nonlinear_lower_bound_check(phi, (2 * np.pi, 0.0), c2=1.0)
        assert rep.empty
        assert rep.min_ratio == np.inf

    def test_zero_shift_rejected(self, grid64):
        with pytest.raises(ValueError):
            nonlinear_lower_bound_check(cos_x1(grid64), (0.0, 0.0), c2=1.0)

    def test_ratio_definition(self, grid64):
        # r(x) = D * c2 * ||theta||_inf * |h| / |delta_h theta|^3 doubles with c2
        phi = random_band_field(grid64, 6, 1.0, 4)
        r1 = nonlinear_lower_bound_check(phi, (np.pi / 4, 0.0), c2=1.0)
        r2 = nonlinear_lower_bound_check(phi, (np.pi / 4, 0.0), c2=2.0)
        m = r1.valid_mask
        assert np.allclose(r2.ratios[m], 2 * r1.ratios[m], rtol=1e-12)
