"""Grid tables, transforms, derivatives, heat flow, projections and products."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slowflow.spectral import (
    ScalarField,
    VectorField,
    derivative,
    divergence,
    heat_propagate,
    inner,
    make_grid,
    multiply_dealiased,
    stack_to_volume,
    to_physical,
    to_spectral,
    transform,
    volume_to_stack,
    weighted_leray_project,
)

TWO_PI = 2 * math.pi


def _field(grid, f):
    x1, x2, x3 = grid.mesh()
    return ScalarField.from_physical(grid, f(x1, x2, x3))


def _random_real(grid, rng, ncomp=None):
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    return rng.standard_normal(shape)


class TestGrid:
    def test_2d_table_order(self):
        g = make_grid(8, 8, 1)
        assert g.k1.tolist() == [0, 1, 2, 3, -4, -3, -2, -1]
        assert g.dim == 2
        assert g.spectral_shape == (8, 8, 1)

    def test_3d_tables_identical(self):
        g = make_grid(8, 8, 8)
        np.testing.assert_array_equal(g.k1, g.k2)
        np.testing.assert_array_equal(g.k1, g.k3)

    def test_longer_vertical_box_scales_table(self):
        g = make_grid(8, 8, 8, L3=4 * math.pi)
        np.testing.assert_allclose(g.k3, 0.5 * g.k1)

    @pytest.mark.parametrize("n", [6, 12, 0, 4])
    def test_bad_counts(self, n):
        with pytest.raises(ValueError):
            make_grid(n, 8, 8)

    def test_nonpositive_length(self):
        with pytest.raises(ValueError):
            make_grid(8, 8, 8, L2=0.0)
        with pytest.raises(ValueError):
            make_grid(8, 8, 8, L3=-1.0)

    @given(st.sampled_from([8, 16, 32]), st.integers(1, 31))
    def test_conjugate_pairing(self, n, m):
        # the Nyquist entry is its own partner (stored as -n/2), so it is excluded
        m = m % n
        if m in (0, n // 2):
            return
        g = make_grid(n, 8, 1)
        assert g.k1[m] == -g.k1[n - m]

    def test_odd_derivative_table_has_no_nyquist(self):
        g = make_grid(8, 8, 8)
        assert g.Kd[0].ravel()[4] == 0.0
        assert g.Kd[2].ravel()[4] == 0.0
        assert g.K[0].ravel()[4] == -4.0


class TestTransform:
    def test_sine_mass(self, g2):
        f = _field(g2, lambda x1, x2, x3: np.sin(x1))
        c = f.coeffs
        assert c[1, 0, 0] == pytest.approx(-0.5j, abs=1e-14)
        assert c[-1, 0, 0] == pytest.approx(0.5j, abs=1e-14)
        c2 = c.copy()
        c2[1, 0, 0] = c2[-1, 0, 0] = 0
        assert np.abs(c2).max() < 1e-14

    def test_constant(self, g3):
        c = to_spectral(g3, np.ones(g3.shape))
        assert c[0, 0, 0] == pytest.approx(1.0)
        c[0, 0, 0] = 0
        assert np.abs(c).max() < 1e-15

    @pytest.mark.parametrize("shape", [(16, 16, 1), (16, 8, 32), (8, 16, 8)])
    def test_round_trip(self, shape, rng):
        g = make_grid(*shape)
        u = _random_real(g, rng, 3)
        back = transform(g, transform(g, u, "forward"), "backward")
        assert np.abs(back - u).max() / np.abs(u).max() < 1e-12

    def test_bad_direction(self, g2):
        with pytest.raises(ValueError):
            transform(g2, np.zeros(g2.shape), "sideways")

    def test_size_mismatch(self, g3):
        with pytest.raises(ValueError):
            to_spectral(g3, np.zeros((8, 8, 8)))

    def test_2d_spectrum_is_hermitian(self, g2, rng):
        c = to_spectral(g2, _random_real(g2, rng))[..., 0]
        idx = (-np.arange(16)) % 16
        np.testing.assert_allclose(c[np.ix_(idx, idx)], np.conj(c), atol=1e-15)

    def test_plancherel(self, g3, rng):
        u = _random_real(g3, rng, 3)
        c = to_spectral(g3, u)
        assert inner(g3, c, c) == pytest.approx((u**2).sum() * g3.cell_volume, rel=1e-12)

    def test_stack_volume_round_trip(self, rng):
        g = make_grid(16, 16, 8)
        u = _random_real(g, rng, 2)
        stack = to_spectral(g.horizontal(), u)
        vol = stack_to_volume(g, stack)
        np.testing.assert_allclose(vol, to_spectral(g, u), atol=1e-14)
        np.testing.assert_allclose(volume_to_stack(g, vol), stack, atol=1e-14)


class TestDerivative:
    def test_sin_x1(self, g2):
        d = derivative(_field(g2, lambda x1, x2, x3: np.sin(x1)), 1)
        x1, _, _ = g2.mesh()
        np.testing.assert_allclose(d.physical(), np.cos(x1), atol=1e-13)

    def test_cos_2x3(self, g3):
        d = derivative(_field(g3, lambda x1, x2, x3: np.cos(2 * x3)), 3)
        _, _, x3 = g3.mesh()
        np.testing.assert_allclose(d.physical(), -2 * np.sin(2 * x3), atol=1e-13)

    @pytest.mark.parametrize("axis", [1, 2, 3])
    def test_constant(self, g3, axis):
        d = derivative(ScalarField.from_physical(g3, np.full(g3.shape, 3.0)), axis)
        assert np.abs(d.coeffs).max() == 0.0

    def test_inactive_axis(self, g2):
        with pytest.raises(ValueError):
            derivative(_field(g2, lambda x1, x2, x3: np.sin(x1)), 3)


class TestHeat:
    def test_half_life(self, g3):
        f = _field(g3, lambda x1, x2, x3: np.cos(x1))
        out = heat_propagate(f, math.log(2))
        np.testing.assert_allclose(out.physical(), 0.5 * f.physical(), atol=1e-14)

    def test_identity_at_zero(self, g3, rng):
        f = ScalarField.from_physical(g3, _random_real(g3, rng))
        np.testing.assert_array_equal(heat_propagate(f, 0.0).coeffs, f.coeffs)

    @given(st.floats(0, 2), st.floats(0, 2), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_semigroup(self, s, t, w1, w2, w3):
        g = make_grid(8, 8, 8)
        f = ScalarField.from_physical(g, np.random.default_rng(0).standard_normal(g.shape))
        w = (w1, w2, w3)
        a = heat_propagate(heat_propagate(f, s, w), t, w).coeffs
        b = heat_propagate(f, s + t, w).coeffs
        assert np.abs(a - b).max() < 1e-13

    def test_product_factorizes(self, g3):
        x1, x2, x3 = g3.mesh()
        fh = np.cos(x1) * np.sin(2 * x2) + 0.3 * np.cos(3 * x1 + x2)
        gv = np.cos(x3) + 0.5 * np.sin(4 * x3)
        t = 0.37
        full = heat_propagate(ScalarField.from_physical(g3, fh * gv), t).physical()
        fpart = heat_propagate(ScalarField.from_physical(g3, fh), t, (1, 1, 0)).physical()
        gpart = heat_propagate(ScalarField.from_physical(g3, np.broadcast_to(gv, g3.shape)), t, (0, 0, 1)).physical()
        assert np.abs(full - fpart * gpart).max() < 1e-13

    def test_errors(self, g3):
        f = _field(g3, lambda x1, x2, x3: np.cos(x1))
        with pytest.raises(ValueError):
            heat_propagate(f, -1.0)
        with pytest.raises(ValueError):
            heat_propagate(f, 1.0, (1, -1, 1))


class TestWeightedLeray:
    @pytest.mark.parametrize("m", [1.0, 1 / 16, 4.0])
    def test_gradient_annihilated(self, g3, rng, m):
        phi = to_spectral(g3, _random_real(g3, rng)) * g3.dealias_mask
        K1, K2, K3 = g3.Kd
        grad = np.stack([1j * K1 * phi, 1j * K2 * phi, m * 1j * K3 * phi])
        out = weighted_leray_project(VectorField(g3, grad), m)
        assert np.abs(out.coeffs).max() < 1e-12 * np.abs(grad).max()

    @pytest.mark.parametrize("m", [1.0, 0.01])
    def test_solenoidal_and_idempotent(self, g3, rng, m):
        u = VectorField(g3, to_spectral(g3, _random_real(g3, rng, 3)))
        p = weighted_leray_project(u, m)
        assert np.abs(divergence(g3, p.coeffs)).max() < 1e-12
        pp = weighted_leray_project(p, m)
        assert np.abs(pp.coeffs - p.coeffs).max() < 1e-13

    def test_single_mode_unchanged(self, g3):
        x1, x2, x3 = g3.mesh()
        u = VectorField.from_physical(g3, np.stack([np.cos(x2), 0 * x2, 0 * x2]))
        out = weighted_leray_project(u, 0.3)
        np.testing.assert_allclose(out.coeffs, u.coeffs, atol=1e-15)

    def test_bad_metric(self, g3):
        u = VectorField(g3, np.zeros((3,) + g3.spectral_shape))
        with pytest.raises(ValueError):
            weighted_leray_project(u, 0.0)

    def test_solenoidal_flag_checked(self, g3):
        x1, _, _ = g3.mesh()
        with pytest.raises(ValueError):
            VectorField.from_physical(g3, np.stack([np.sin(x1), 0 * x1, 0 * x1]), solenoidal=True)


class TestProducts:
    def test_unit_factor_truncates(self, g2, rng):
        b = ScalarField.from_physical(g2, _random_real(g2, rng))
        one = ScalarField.from_physical(g2, np.ones(g2.shape))
        out = multiply_dealiased(one, b)
        np.testing.assert_allclose(out.coeffs, b.coeffs * g2.dealias_mask, atol=1e-14)

    def test_sine_squared(self, g2):
        s = _field(g2, lambda x1, x2, x3: np.sin(x1))
        out = multiply_dealiased(s, s)
        x1, _, _ = g2.mesh()
        np.testing.assert_allclose(out.physical(), 0.5 * (1 - np.cos(2 * x1)), atol=1e-14)

    def test_sum_mode_above_cutoff_removed(self):
        g = make_grid(16, 16, 1)
        # |m| < 16/3: modes 4 and 5 survive, their sum 9 and difference 1 behave differently
        a = _field(g, lambda x1, x2, x3: np.cos(4 * x1))
        b = _field(g, lambda x1, x2, x3: np.cos(5 * x1))
        c = multiply_dealiased(a, b).coeffs
        assert abs(c[1, 0, 0]) == pytest.approx(0.25)
        assert abs(c[9, 0, 0]) == 0.0 and abs(c[-9 % 16, 0, 0]) == 0.0

    @given(st.integers(0, 2**31 - 1))
    def test_commutative_bilinear(self, seed):
        g = make_grid(8, 8, 8)
        rng = np.random.default_rng(seed)
        a, b, c = (ScalarField.from_physical(g, rng.standard_normal(g.shape)) for _ in range(3))
        ab = multiply_dealiased(a, b).coeffs
        assert np.abs(ab - multiply_dealiased(b, a).coeffs).max() < 1e-14
        lhs = multiply_dealiased(ScalarField(g, 2 * a.coeffs + c.coeffs), b).coeffs
        rhs = 2 * ab + multiply_dealiased(c, b).coeffs
        assert np.abs(lhs - rhs).max() < 1e-13

    def test_grid_mismatch(self, g2, g3):
        with pytest.raises(ValueError):
            multiply_dealiased(ScalarField(g2, np.zeros(g2.spectral_shape)), ScalarField(g3, np.zeros(g3.spectral_shape)))


class TestFields:
    def test_conjugate_symmetry_physical_real(self, g3, rng):
        f = ScalarField.from_physical(g3, _random_real(g3, rng))
        assert np.isrealobj(f.physical())

    def test_zero_mean(self, g3):
        f = ScalarField.from_physical(g3, np.full(g3.shape, 2.0), zero_mean=True)
        assert f.coeffs[0, 0, 0] == 0
        with pytest.raises(ValueError):
            ScalarField(g3, np.ones(g3.spectral_shape), zero_mean=True)

    def test_immutable(self, g3):
        f = ScalarField(g3, np.zeros(g3.spectral_shape))
        with pytest.raises(ValueError):
            f.coeffs[0, 0, 0] = 1.0
