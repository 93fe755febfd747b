"""Three-dimensional stepping, the remainder equation and its weights."""
import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slowflow.remainder import (
    BackgroundFields,
    Ns3dStepper,
    RemainderStepper,
    VappTrajectory,
    cumulative_trapezoid,
    h12_dissipation_rate,
    h12_sq,
    ns3d_step,
    remainder_rhs,
    solve_remainder,
    veps_value,
    weight_Veps,
    write_remainder_csv,
)
from slowflow.ns2d import SliceFamily, solve_slice_family
from slowflow.norms import random_bandlimited
from slowflow.spectral import VectorField, leray, make_grid, to_spectral
from slowflow.transport import TransportState, solve_transport

G = make_grid(16, 16, 16)


def vec(grid, f):
    x1, x2, x3 = grid.mesh()
    return VectorField.from_physical(grid, np.stack(f(x1, x2, x3)))


def abc(x1, x2, x3):
    return [np.sin(x3) + np.cos(x2), np.sin(x1) + np.cos(x3), np.sin(x2) + np.cos(x1)]


def energy(grid, c):
    return float(grid.volume * (grid.multiplicity * np.abs(c) ** 2).sum())


class TestOnTheFlyNorms:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_h12_single_mode(self, k):
        u = vec(G, lambda x1, x2, x3: [np.sin(k * x1), 0 * x1, 0 * x1])
        # |k| times the squared L2 norm
        assert h12_sq(G, u.coeffs) == pytest.approx(k * (2 * math.pi) ** 3 / 2, rel=1e-13)
        assert h12_dissipation_rate(G, u.coeffs) == pytest.approx(k**3 * (2 * math.pi) ** 3 / 2, rel=1e-13)

    def test_mean_mode_excluded(self):
        u = vec(G, lambda x1, x2, x3: [1 + 0 * x1, 0 * x1, 0 * x1])
        assert h12_sq(G, u.coeffs) == 0.0

    def test_veps_shear(self):
        u = vec(G, lambda x1, x2, x3: [np.sin(x2), 0 * x1, 0 * x1])
        # sup |u|^2 = 1, every horizontal plane carries int cos^2 = 2 pi^2
        assert veps_value(G, u.coeffs) == pytest.approx(1 + 2 * math.pi**2, rel=1e-12)

    def test_veps_vertical_profile(self):
        u = vec(G, lambda x1, x2, x3: [np.sin(x2) * np.cos(x3), 0 * x1, 0 * x1])
        # the largest plane integral sits on cos(x3) = +-1: ∂2 gives 2 pi^2, ∂3 vanishes there
        assert veps_value(G, u.coeffs) == pytest.approx(1 + 2 * math.pi**2, rel=1e-12)


class TestNs3d:
    def test_abc_decays_exactly(self):
        u = vec(G, abc)
        dt, n = 0.01, 20
        c = np.array(u.coeffs)
        st = Ns3dStepper(G, dt)
        for i in range(n):
            c = st.step(c, i * dt)
        np.testing.assert_allclose(c, u.coeffs * math.exp(-dt * n), atol=1e-13)

    def test_taylor_green_columns(self):
        u = vec(G, lambda x1, x2, x3: [np.sin(x1) * np.cos(x2), -np.cos(x1) * np.sin(x2), 0 * x1])
        out = ns3d_step(u, 0.05)
        np.testing.assert_allclose(out.coeffs, u.coeffs * math.exp(-0.1), atol=1e-14)

    @given(st.integers(0, 10_000))
    def test_energy_decreases(self, seed):
        rng = np.random.default_rng(seed)
        u = random_bandlimited(G, 3, 3, rng, solenoidal=True)
        c = 0.3 * u / math.sqrt(energy(G, u) / G.volume)
        st = Ns3dStepper(G, 0.01)
        e = [energy(G, c)]
        for i in range(5):
            c = st.step(c, i * 0.01)
            e.append(energy(G, c))
        assert all(b < a for a, b in zip(e, e[1:]))

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            Ns3dStepper(G, 0.0)
        g2 = make_grid(8, 8, 1)
        with pytest.raises(ValueError):
            ns3d_step(VectorField(g2, np.zeros((3,) + g2.spectral_shape)), 0.1)

    def test_nan_raises(self):
        from slowflow.errors import NumericalError

        c = np.array(vec(G, abc).coeffs)
        c[0, 1, 1, 1] = np.nan
        with pytest.raises(NumericalError):
            Ns3dStepper(G, 0.01).step(c)


class TestFluxForm:
    @given(st.integers(0, 10_000))
    def test_matches_convective_form(self, seed):
        from slowflow.assembly import convective
        from slowflow.remainder import flux_divergence
        from slowflow.spectral import to_physical

        rng = np.random.default_rng(seed)
        a = random_bandlimited(G, 3, 4, rng, solenoidal=True)
        b = random_bandlimited(G, 3, 4, rng, solenoidal=True)
        pa, pb = (to_physical(G, x * G.dealias_mask) for x in (a, b))
        # a . grad a + b . grad a + a . grad b
        expect = convective(G, a, a) + convective(G, b, a) + convective(G, a, b)
        got = flux_divergence(G, pa, pa + pb, pb, pa)
        np.testing.assert_allclose(got, expect, atol=1e-13 * np.abs(expect).max())


class TestRemainderRhs:
    def test_zero_remainder(self):
        z = VectorField(G, np.zeros((3,) + G.spectral_shape))
        F = vec(G, lambda x1, x2, x3: [np.sin(x2), np.cos(x1), np.sin(x3)])
        out = remainder_rhs(z, vec(G, abc), F)
        np.testing.assert_allclose(out.coeffs, -leray(G, F.coeffs), atol=1e-15)

    def test_zero_background_is_navier_stokes(self):
        rng = np.random.default_rng(3)
        R = VectorField(G, random_bandlimited(G, 3, 3, rng, solenoidal=True))
        z = VectorField(G, np.zeros((3,) + G.spectral_shape))
        out = remainder_rhs(R, z, z)
        expect, _ = Ns3dStepper(G, 0.1).rhs(np.asarray(R.coeffs))
        np.testing.assert_allclose(out.coeffs, expect, atol=1e-15)

    def test_bilinear_symmetry(self):
        # rhs(R; V) = N(R + V) - N(V), with N the projected nonlinearity of NS
        rng = np.random.default_rng(4)
        R = VectorField(G, random_bandlimited(G, 3, 3, rng, solenoidal=True))
        V = VectorField(G, random_bandlimited(G, 3, 3, rng, solenoidal=True))
        z = VectorField(G, np.zeros((3,) + G.spectral_shape))
        ns = Ns3dStepper(G, 0.1)
        out = remainder_rhs(R, V, z)
        expect = ns.rhs(np.asarray(R.coeffs) + V.coeffs)[0] - ns.rhs(np.asarray(V.coeffs))[0]
        np.testing.assert_allclose(out.coeffs, expect, atol=1e-13)

    def test_grid_mismatch(self):
        other = make_grid(8, 8, 8)
        z = VectorField(G, np.zeros((3,) + G.spectral_shape))
        with pytest.raises(ValueError):
            remainder_rhs(z, VectorField(other, np.zeros((3,) + other.spectral_shape)), z)

    def test_stepper_matches_direct_when_background_vanishes(self):
        R = np.asarray(vec(G, abc).coeffs) * 0.5 + np.asarray(
            vec(G, lambda x1, x2, x3: [np.sin(x2 + x3), np.cos(x1 + x3), np.sin(x1 + x2)]).coeffs)
        z = np.zeros_like(R)
        bg = BackgroundFields.from_arrays(G, 0.0, z, z)
        a = RemainderStepper(G, 0.01).step(R, bg, bg)
        b = Ns3dStepper(G, 0.01).step(R)
        np.testing.assert_allclose(a, b, atol=1e-15)


class TestWeights:
    def test_trapezoid_linear_exact(self):
        t = np.linspace(0, 2, 11)
        np.testing.assert_allclose(cumulative_trapezoid(t, 3 * t + 1), 1.5 * t**2 + t, atol=1e-14)
        assert cumulative_trapezoid(t[:1], t[:1]).tolist() == [0.0]

    def test_constant_background(self):
        u = vec(G, lambda x1, x2, x3: [np.sin(x2), 0 * x1, 0 * x1])
        times = np.linspace(0, 1, 5)
        ws = weight_Veps(VappTrajectory(G, times, np.stack([u.coeffs] * 5)), 0.5)
        V = 1 + 2 * math.pi**2
        np.testing.assert_allclose(ws.I, V * times, rtol=1e-12)
        np.testing.assert_allclose(ws.weighted(np.ones(5)), np.exp(-0.5 * V * times), rtol=1e-12)
        with pytest.raises(ValueError):
            weight_Veps(VappTrajectory(G, times, np.stack([u.coeffs] * 5)), 0.0)


def _trajs(amp=0.5, eps=0.5, T=0.1, dt=0.01):
    slow = G
    g2 = slow.horizontal()
    x1, x2, y3 = slow.mesh()
    v = amp * np.stack([np.sin(x1) * np.cos(x2) * np.cos(y3) + 0.4 * np.cos(x2 + y3),
                        -np.cos(x1) * np.sin(x2) * np.cos(y3)])
    v0 = SliceFamily(g2, to_spectral(g2, v), slow.L3)
    w0 = vec(slow, lambda a, b, c: [amp * np.sin(b + c), amp * np.cos(a + c), amp * np.sin(a + b)])
    vt = solve_slice_family(v0, T, dt)
    wt = solve_transport(TransportState(0.0, w0, eps), vt, T, dt)
    return vt, wt


class TestSolveRemainder:
    def test_two_dimensional_regime_stays_zero(self):
        g2 = G.horizontal()
        x1, x2, _ = G.mesh()
        v = np.stack([np.sin(x1) * np.cos(x2), -np.cos(x1) * np.sin(x2)])
        vt = solve_slice_family(SliceFamily(g2, to_spectral(g2, v), G.L3), 0.05, 0.01)
        wt = solve_transport(TransportState(0.0, VectorField(G, np.zeros((3,) + G.spectral_shape)), 0.5), vt, 0.05, 0.01)
        rt = solve_remainder(vt, wt, 0.5, 0.05, 0.01)
        assert rt.sup_norm_h12 < 1e-14 and not rt.blowup
        assert len(rt.times) == 6

    def test_cross_validation_second_order(self):
        errs = []
        for dt in (0.01, 0.005):
            vt, wt = _trajs(dt=dt)
            rt = solve_remainder(vt, wt, 0.5, 0.1, dt, cross_validate=True)
            assert rt.crosscheck[0] == 0.0
            errs.append(rt.crosscheck[-1])
        assert errs[1] < 1e-3
        assert 3.0 < errs[0] / errs[1] < 5.0

    def test_tolerance_and_ceiling(self):
        vt, wt = _trajs()
        with pytest.raises(AssertionError):
            solve_remainder(vt, wt, 0.5, 0.1, 0.01, cross_validate=True, tol=1e-12)
        rt = solve_remainder(vt, wt, 0.5, 0.1, 0.01, ceiling=1e-6)
        assert rt.blowup and rt.times[-1] < 0.1
        assert rt.norm_h12[-1] > rt.ceiling

    def test_states_and_csv(self, tmp_path):
        vt, wt = _trajs()
        rt = solve_remainder(vt, wt, 0.5, 0.1, 0.01, save_every=5)
        np.testing.assert_allclose(rt.state_times, [0.0, 0.05, 0.1])
        s = rt.state(2)
        assert s.norm_h12 == pytest.approx(rt.norm_h12[-1])
        assert np.all(np.diff(rt.dissipation_h12) >= 0)
        path = tmp_path / "r.csv"
        write_remainder_csv(rt, path, lam=2.0)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["t", "norm_h12", "dissipation_h12", "weight", "weighted_norm"]
        assert len(rows) == len(rt.times) + 1
        last = [float(x) for x in rows[-1]]
        assert last[4] == pytest.approx(last[1] * last[3])
        with pytest.raises(OSError):
            write_remainder_csv(rt, tmp_path / "missing" / "r.csv")
