"""Sobolev, anisotropic, heat-Besov and Carleson norms plus the inequality audits."""
import csv
import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slowflow.norms import (
    AUDIT_KINDS,
    NormRecord,
    aniso_norms,
    besov_heat_norm,
    bmo_inverse_norm,
    carleson_term,
    embed_modes,
    heat_sup_curve,
    hs_norm,
    inequality_audit,
    random_bandlimited,
    write_audit_csv,
    write_norm_records,
)
from slowflow.spectral import ScalarField, VectorField, divergence, make_grid, to_physical

G3 = make_grid(16, 16, 16)
G2 = make_grid(16, 16, 1)
VOL = (2 * math.pi) ** 3


def scalar(grid, f):
    return ScalarField.from_physical(grid, f(*grid.mesh()))


class TestSobolev:
    @pytest.mark.parametrize("k", [1, 2, 3])
    @pytest.mark.parametrize("s", [-1.0, -0.5, 0.0, 0.5, 1.0])
    def test_single_mode(self, k, s):
        f = scalar(G3, lambda x1, x2, x3: np.sin(k * x3))
        assert hs_norm(f, s) == pytest.approx(math.sqrt(VOL / 2) * k**s, rel=1e-13)

    def test_horizontal_mode(self):
        f = scalar(G3, lambda x1, x2, x3: np.sin(2 * x1) * np.cos(3 * x3))
        assert hs_norm(f, 1.0, mode="horizontal") == pytest.approx(2 * math.sqrt(VOL / 4), rel=1e-13)
        assert hs_norm(f, 1.0) == pytest.approx(math.sqrt(13) * math.sqrt(VOL / 4), rel=1e-13)

    def test_rejections(self):
        with pytest.raises(ValueError):
            hs_norm(scalar(G3, lambda x1, x2, x3: 1 + np.sin(x1)), -0.5)
        with pytest.raises(ValueError):
            hs_norm(scalar(G3, lambda x1, x2, x3: np.sin(x3)), -0.5, mode="horizontal")
        with pytest.raises(ValueError):
            hs_norm(scalar(G3, lambda x1, x2, x3: np.sin(x3)), 3.0)
        with pytest.raises(ValueError):
            hs_norm(scalar(G3, lambda x1, x2, x3: np.sin(x3)), 0.0, mode="diagonal")

    def test_vector_sums_components(self):
        x1, x2, x3 = G3.mesh()
        u = VectorField.from_physical(G3, np.stack([np.sin(x2), np.sin(2 * x3), 0 * x1]))
        assert hs_norm(u, 1.0) == pytest.approx(math.sqrt(VOL / 2 * (1 + 4)), rel=1e-13)


class TestAnisotropic:
    @pytest.mark.parametrize("s", [-0.5, 0.5, 1.0])
    def test_separable(self, s):
        f = scalar(G3, lambda x1, x2, x3: np.sin(2 * x1) * np.cos(x3))
        a, b, c = aniso_norms(f, s)
        assert a == pytest.approx(2**s * math.sqrt(VOL / 4), rel=1e-13)
        # on the planes cos(x3) = +-1
        assert b == pytest.approx(math.sqrt(2 * math.pi**2), rel=1e-13)
        assert c == pytest.approx(2**s * math.sqrt(2 * math.pi**2), rel=1e-13)

    def test_horizontal_mean_policy(self):
        f = scalar(G3, lambda x1, x2, x3: np.sin(x1) + np.cos(x3))
        with pytest.raises(ValueError):
            aniso_norms(f, -0.5)
        a, _, _ = aniso_norms(f, -0.5, horizontal_mean="drop")
        assert a == pytest.approx(math.sqrt(VOL / 2), rel=1e-13)
        with pytest.raises(ValueError):
            aniso_norms(f, 0.5, horizontal_mean="keep")

    def test_two_dimensional(self):
        f = scalar(G2, lambda x1, x2, x3: np.sin(3 * x2))
        a, b, c = aniso_norms(f, 1.0)
        assert a == pytest.approx(3 * math.pi * math.sqrt(2), rel=1e-13)
        assert b == pytest.approx(math.pi * math.sqrt(2), rel=1e-13)

    @given(st.integers(0, 10_000), st.sampled_from([0.25, 0.5, 1.0]))
    def test_plancherel_and_hs_agree(self, seed, s):
        c = random_bandlimited(G3, 3, 5, np.random.default_rng(seed))
        u = VectorField(G3, c)
        a, _, _ = aniso_norms(u, s)
        assert a == pytest.approx(hs_norm(u, s, mode="horizontal"), rel=1e-12)
        assert a <= hs_norm(u, s) * (1 + 1e-12)


class TestEmbed:
    @given(st.integers(0, 10_000))
    def test_refine_then_coarsen(self, seed):
        c = random_bandlimited(G3, 1, 7, np.random.default_rng(seed))
        fine = make_grid(32, 32, 32)
        up = embed_modes(G3, fine, c)
        np.testing.assert_allclose(embed_modes(fine, G3, up)[..., :8], c[..., :8], atol=1e-15)
        # the fine interpolant agrees with the coarse samples
        np.testing.assert_allclose(to_physical(fine, up)[:, ::2, ::2, ::2], to_physical(G3, c), atol=1e-13)

    def test_nyquist_split(self):
        f = scalar(G2, lambda x1, x2, x3: np.cos(8 * x1))
        fine = make_grid(32, 32, 1)
        up = embed_modes(G2, fine, f.coeffs[None])[0]
        np.testing.assert_allclose(to_physical(fine, up)[::2, ::2], f.physical(), atol=1e-14)

    def test_box_mismatch(self):
        with pytest.raises(ValueError):
            embed_modes(G3, make_grid(16, 16, 16, L3=4 * math.pi), np.zeros(G3.spectral_shape))
        with pytest.raises(ValueError):
            embed_modes(G3, G2, np.zeros(G3.spectral_shape))


class TestBesov:
    @pytest.mark.parametrize("k", [1, 2, 4])
    @pytest.mark.parametrize("amp", [0.5, 2.0])
    def test_cosine_closed_form(self, k, amp):
        f = scalar(G3, lambda x1, x2, x3: amp * np.cos(k * x3))
        val, t = besov_heat_norm(f)
        assert val == pytest.approx(amp / (k * math.sqrt(2 * math.e)), rel=1e-7)
        assert t == pytest.approx(1 / (2 * k * k), rel=1e-3)

    def test_refinement_only_increases(self):
        f = scalar(G3, lambda x1, x2, x3: np.cos(x1 + x3) + 0.3 * np.sin(3 * x2))
        tg = np.geomspace(1e-3, 10, 9)
        coarse, _ = besov_heat_norm(f, tg, refine=False)
        fine, _ = besov_heat_norm(f, tg)
        assert fine >= coarse
        assert coarse == pytest.approx(heat_sup_curve(f, tg).max())

    def test_homogeneity(self):
        f = scalar(G3, lambda x1, x2, x3: np.sin(x1) * np.cos(2 * x2 + x3))
        g = ScalarField(G3, -3 * f.coeffs)
        assert besov_heat_norm(g)[0] == pytest.approx(3 * besov_heat_norm(f)[0], rel=1e-9)

    def test_oversampled_sup_not_smaller(self):
        f = scalar(G3, lambda x1, x2, x3: np.sin(x1) * np.cos(2 * x2 + x3) + np.cos(3 * x1 + x2))
        a, _ = besov_heat_norm(f, refine=False)
        b, _ = besov_heat_norm(f, refine=False, oversample=True)
        assert b >= a * (1 - 1e-12)

    def test_errors(self):
        with pytest.raises(ValueError):
            besov_heat_norm(scalar(G3, lambda x1, x2, x3: 1 + np.sin(x1)))
        with pytest.raises(ValueError):
            besov_heat_norm(scalar(G3, lambda x1, x2, x3: np.sin(x1)), [])
        with pytest.raises(ValueError):
            besov_heat_norm(scalar(G3, lambda x1, x2, x3: np.sin(x1)), [0.0, 1.0])


def _carleson_brute(grid, R, stride, modes):
    """Direct ball sums with the time integral done in closed form.

    ``modes`` lists ``(amp, k1, k2, phase)``; each term is ``amp cos(k.x + phase)``.
    """
    x1, x2, _ = grid.mesh()
    x1, x2 = x1[..., 0], x2[..., 0]
    # int_0^{R^2} e^{-t(|k|^2 + |q|^2)} dt for each pair of modes
    best = 0.0
    h = grid.L1 / grid.n1
    for i in range(0, grid.n1, stride):
        for j in range(0, grid.n2, stride):
            dx = np.minimum(np.abs(x1 - x1[i, j]), 2 * math.pi - np.abs(x1 - x1[i, j]))
            dy = np.minimum(np.abs(x2 - x2[i, j]), 2 * math.pi - np.abs(x2 - x2[i, j]))
            ball = dx**2 + dy**2 <= R * R
            total = 0.0
            for a, p1, q1, ph1 in modes:
                for b, p2, q2, ph2 in modes:
                    rate = p1 * p1 + q1 * q1 + p2 * p2 + q2 * q2
                    tint = R * R if rate == 0 else (1 - math.exp(-rate * R * R)) / rate
                    prod = a * b * np.cos(p1 * x1 + q1 * x2 + ph1) * np.cos(p2 * x1 + q2 * x2 + ph2)
                    total += tint * prod[ball].sum() * h * h
            best = max(best, total / R**2)
    return best


class TestCarleson:
    MODES = [(1.0, 1, 0, 0.0), (0.5, 0, 2, -math.pi / 2), (0.3, 1, 1, 0.4)]

    def field(self):
        return scalar(G2, lambda x1, x2, x3: sum(a * np.cos(p * x1 + q * x2 + ph) for a, p, q, ph in self.MODES))

    @pytest.mark.parametrize("R", [math.pi, math.pi / 2, math.pi / 4])
    def test_matches_direct_sum(self, R):
        val, arg = carleson_term(self.field(), [R], stride=4, n_t=1025)
        assert arg["R"] == R
        assert val == pytest.approx(_carleson_brute(G2, R, 4, self.MODES), rel=2e-4)

    def test_trapezoid_converges(self):
        exact = _carleson_brute(G2, math.pi / 2, 4, self.MODES)
        e1 = abs(carleson_term(self.field(), [math.pi / 2], n_t=17)[0] - exact)
        e2 = abs(carleson_term(self.field(), [math.pi / 2], n_t=33)[0] - exact)
        assert 3.5 < e1 / e2 < 4.5

    def test_default_radii_and_scaling(self):
        f = scalar(G3, lambda x1, x2, x3: np.cos(x1) * np.sin(x3))
        val, arg = carleson_term(f)
        assert arg["R"] in (math.pi, math.pi / 2, math.pi / 4)
        g = ScalarField(G3, 2 * f.coeffs)
        assert carleson_term(g)[0] == pytest.approx(4 * val, rel=1e-12)

    def test_errors(self):
        f = self.field()
        with pytest.raises(ValueError):
            carleson_term(f, [4.0])
        with pytest.raises(ValueError):
            carleson_term(f, [])
        with pytest.raises(ValueError):
            carleson_term(f, [1.0], n_t=1)

    def test_bmo_dominates_besov(self):
        f = self.field()
        assert bmo_inverse_norm(f) >= besov_heat_norm(f)[0]


class TestRandomFields:
    @given(st.integers(0, 10_000), st.integers(1, 5))
    def test_band_and_mean(self, seed, band):
        c = random_bandlimited(G3, 3, band, np.random.default_rng(seed), solenoidal=True)
        m1, m2, m3 = G3.mode_index
        outside = (np.abs(m1) > band) | (np.abs(m2) > band) | (np.abs(m3) > band)
        assert np.abs(c[:, outside]).max() == 0
        assert np.abs(c[:, 0, 0, 0]).max() == 0
        assert np.abs(divergence(G3, c)).max() < 1e-12
        assert np.isrealobj(to_physical(G3, c))

    def test_resolution_independent(self):
        a = random_bandlimited(G2, 1, 3, np.random.default_rng(5))
        fine = make_grid(32, 32, 1)
        b = random_bandlimited(fine, 1, 3, np.random.default_rng(5))
        np.testing.assert_allclose(embed_modes(G2, fine, a), b, atol=1e-15)


class TestAudits:
    @pytest.mark.parametrize("s", [0.25, 0.5, 1.0])
    def test_plancherel_bound(self, s):
        rep = inequality_audit("plancherel", 30, G3, seed=2, s=s)
        assert rep.max_ratio <= 1 + 1e-12 and rep.ratios.size == 30

    @pytest.mark.parametrize("eps", [0.5, 0.25])
    def test_aniso_bound(self, eps):
        rep = inequality_audit("aniso-interp", 20, G3, eps=eps)
        assert 0 < rep.max_ratio <= 1 + 1e-10
        assert rep.params["eps"] == eps

    @pytest.mark.parametrize("kind", ["GN", "product-sobolev", "trilinear"])
    def test_two_dimensional_kinds_finite(self, kind):
        rep = inequality_audit(kind, 10, G2, band=3)
        assert np.isfinite(rep.ratios).all() and rep.ratios.min() > 0
        assert rep.resolution == "16x16"

    def test_trilinear_solenoidal_cancels_at_level_zero(self):
        # (a . grad b, b) vanishes for divergence-free a when s = 0
        rep = inequality_audit("trilinear", 10, G2, band=3, s=0.0)
        assert rep.max_ratio < 1e-12

    def test_deterministic(self):
        a = inequality_audit("GN", 5, G2, seed=9)
        b = inequality_audit("GN", 5, G2, seed=9)
        np.testing.assert_array_equal(a.ratios, b.ratios)

    def test_validation(self):
        with pytest.raises(ValueError):
            inequality_audit("nope", 5, G2)
        with pytest.raises(ValueError):
            inequality_audit("GN", 5, G3)
        with pytest.raises(ValueError):
            inequality_audit("plancherel", 5, G2)
        with pytest.raises(ValueError):
            inequality_audit("GN", 0, G2)
        assert set(AUDIT_KINDS) >= {"plancherel", "aniso-interp"}

    def test_csv(self, tmp_path):
        reps = [inequality_audit("GN", 3, G2), inequality_audit("plancherel", 3, G3)]
        write_audit_csv(reps, tmp_path / "a.csv")
        rows = list(csv.reader(open(tmp_path / "a.csv")))
        assert rows[0] == ["kind", "samples", "max_ratio", "resolution"]
        assert float(rows[2][2]) == reps[1].max_ratio and rows[2][3] == "16x16x16"


class TestRecords:
    def test_validation_and_json(self, tmp_path):
        r = NormRecord("besov", 1, {"k": 2}, t=0.5)
        assert json.loads(r.to_json()) == {"name": "besov", "value": 1.0, "params": {"k": 2}, "t": 0.5, "eps": None}
        for bad in (-1.0, float("nan")):
            with pytest.raises(ValueError):
                NormRecord("x", bad)
        write_norm_records([r, r], tmp_path / "n.ndjson")
        assert len(open(tmp_path / "n.ndjson").read().splitlines()) == 2
        with pytest.raises(OSError):
            write_norm_records([r], tmp_path / "no" / "n.ndjson")
