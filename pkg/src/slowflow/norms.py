"""
Function-space norms and numerical audits of the inequalities they enter.

All homogeneous norms are Fourier sums over nonzero modes, using the
Plancherel convention of :mod:`slowflow.spectral`.  Sup norms are taken on
the collocation grid (optionally on a twice finer grid).  Vector fields use
the pointwise Euclidean norm.
"""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy.optimize import minimize_scalar

from .spectral import (
    Grid,
    VectorField,
    leray,
    to_physical,
    to_spectral,
    volume_to_stack,
)

__all__ = [
    "NormRecord",
    "AuditReport",
    "hs_norm",
    "aniso_norms",
    "besov_heat_norm",
    "heat_sup_curve",
    "carleson_term",
    "bmo_inverse_norm",
    "inequality_audit",
    "random_bandlimited",
    "embed_modes",
    "default_t_grid",
    "write_norm_records",
    "write_audit_csv",
    "AUDIT_KINDS",
]

AUDIT_KINDS = ("aniso-interp", "GN", "product-sobolev", "trilinear", "trilinear3d", "plancherel")


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class NormRecord:
    """A named, nonnegative norm value with its parameters."""

    name: str
    value: float
    params: dict = field(default_factory=dict)
    t: float | None = None
    eps: float | None = None

    def __post_init__(self):
        v = float(self.value)
        if math.isnan(v) or v < 0:
            raise ValueError(f"norm {self.name!r} has invalid value {self.value}")
        object.__setattr__(self, "value", v)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def write_norm_records(records, path) -> None:
    try:
        with open(path, "w") as fh:
            for r in records:
                fh.write(r.to_json() + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------
def _coeffs(field_) -> np.ndarray:
    c = np.asarray(field_.coeffs)
    return c if isinstance(field_, VectorField) else c[None]


def _mean_scale(c: np.ndarray) -> tuple[float, float]:
    return float(np.abs(c[:, 0, 0, 0]).max()), max(float(np.abs(c).max()), 1e-300)


def _power(k2: np.ndarray, s: float) -> np.ndarray:
    safe = np.where(k2 == 0.0, 1.0, k2)
    return np.where(k2 == 0.0, 0.0, safe**s)


def hs_norm(field_, s: float, mode: str = "full") -> float:
    """Homogeneous Sobolev norm over nonzero modes.

    ``mode="full"`` uses ``|k|^s``; ``mode="horizontal"`` uses ``|k_h|^s``
    and so returns ``||f||_{L^2_v H^s_h}`` (horizontally constant modes must
    then vanish when ``s < 0``).
    """
    if not -2.0 <= s <= 2.0:
        raise ValueError(f"s={s} outside [-2, 2]")
    grid = field_.grid
    c = _coeffs(field_)
    if mode == "full":
        k2 = grid.k_sq
        if s < 0:
            mean, scale = _mean_scale(c)
            if mean > 1e-14 * scale:
                raise ValueError("negative-order norm of a field with nonzero mean")
    elif mode == "horizontal":
        k2 = np.broadcast_to(grid.kh_sq, grid.spectral_shape)
        if s < 0:
            scale = max(float(np.abs(c).max()), 1e-300)
            if np.abs(c[:, 0, 0, :]).max() > 1e-14 * scale:
                raise ValueError("negative-order horizontal norm of a field with horizontally constant modes")
    else:
        raise ValueError(f"unknown mode {mode!r}")
    w = _power(k2, s) * grid.multiplicity
    return math.sqrt(grid.volume * float((w * np.abs(c) ** 2).sum()))


def _planes(grid: Grid, c: np.ndarray) -> np.ndarray:
    """Horizontal spectra on each vertical collocation plane, ``(nc, n1, n2, n3)``."""
    if grid.n3 == 1:
        return c
    return volume_to_stack(grid, c)


def aniso_norms(field_, s: float, horizontal_mean: str = "reject") -> tuple[float, float, float]:
    """``(L^2_v H^s_h, L^inf_v L^2_h, L^inf_v H^s_h)``.

    The first norm is computed plane by plane (horizontal multiplier, then a
    vertical Riemann sum, which is exact for trigonometric polynomials).  For
    ``s < 0`` horizontally constant modes are rejected, or ignored when
    ``horizontal_mean="drop"``.
    """
    if not -2.0 <= s <= 2.0:
        raise ValueError(f"s={s} outside [-2, 2]")
    if horizontal_mean not in ("reject", "drop"):
        raise ValueError(f"unknown horizontal_mean {horizontal_mean!r}")
    grid = field_.grid
    planes = _planes(grid, _coeffs(field_))
    K1, K2 = grid.k1[:, None, None], grid.k2[None, :, None]
    kh2 = K1**2 + K2**2
    if s < 0 and horizontal_mean == "reject":
        scale = max(float(np.abs(planes).max()), 1e-300)
        if np.abs(planes[:, 0, 0, :]).max() > 1e-14 * scale:
            raise ValueError("negative-order horizontal norm of a field with horizontally constant modes")
    area = grid.L1 * grid.L2
    dz = 1.0 if grid.n3 == 1 else grid.L3 / grid.n3
    per_plane_s = area * (_power(kh2, s) * np.abs(planes) ** 2).sum(axis=(0, 1, 2))
    per_plane_0 = area * (np.abs(planes) ** 2).sum(axis=(0, 1, 2))
    return (
        math.sqrt(float(per_plane_s.sum()) * dz),
        math.sqrt(float(per_plane_0.max())),
        math.sqrt(float(per_plane_s.max())),
    )


def _oversampled_grid(grid: Grid) -> Grid:
    n3 = 1 if grid.n3 == 1 else 2 * grid.n3
    return Grid(2 * grid.n1, 2 * grid.n2, n3, grid.L1, grid.L2, grid.L3)


def _full_axis_map(ns: int, nd: int):
    """Source/destination positions and weights along a full FFT axis."""
    ms = sfft.fftfreq(ns, 1.0 / ns).astype(int)
    if nd >= ns:
        src = np.arange(ns)
        dst = ms % nd
        w = np.ones(ns)
        if nd > ns:
            w[ns // 2] = 0.5
            # mirror copy of the split Nyquist entry at +ns/2
            src = np.append(src, ns // 2)
            dst = np.append(dst, ns // 2)
            w = np.append(w, 0.5)
        return src, dst, w
    keep = np.abs(ms) < nd // 2
    src = np.nonzero(keep)[0]
    return src, ms[src] % nd, np.ones(src.size)


def _half_axis_map(ns: int, nd: int):
    hs, hd = ns // 2, nd // 2
    if nd >= ns:
        w = np.ones(hs + 1)
        if nd > ns:
            w[hs] = 0.5
        return np.arange(hs + 1), np.arange(hs + 1), w
    return np.arange(hd), np.arange(hd), np.ones(hd)


def embed_modes(src: Grid, dst: Grid, c: np.ndarray) -> np.ndarray:
    """Copy coefficients into another grid of the same box, by signed mode index.

    Refining splits Nyquist entries evenly between the two signed modes, so
    the trigonometric interpolant is preserved.  Coarsening drops every mode
    at or beyond the destination Nyquist index.
    """
    if (src.L1, src.L2) != (dst.L1, dst.L2) or (src.n3 == 1) != (dst.n3 == 1) or (
        src.n3 > 1 and src.L3 != dst.L3
    ):
        raise ValueError("grids describe different boxes")
    out = np.zeros(c.shape[:-3] + dst.spectral_shape, dtype=complex)
    s1, d1, w1 = _full_axis_map(src.n1, dst.n1)
    s2, d2, w2 = _full_axis_map(src.n2, dst.n2)
    if src.n3 == 1:
        s3, d3, w3 = np.array([0]), np.array([0]), np.array([1.0])
    else:
        s3, d3, w3 = _half_axis_map(src.n3, dst.n3)
    block = c[..., s1[:, None, None], s2[None, :, None], s3[None, None, :]]
    block = block * (w1[:, None, None] * w2[None, :, None] * w3[None, None, :])
    out[..., d1[:, None, None], d2[None, :, None], d3[None, None, :]] = block
    return out


def _phys_sup(grid: Grid, c: np.ndarray, oversample: bool) -> float:
    if oversample:
        fine = _oversampled_grid(grid)
        c = embed_modes(grid, fine, c)
        grid = fine
    p = to_physical(grid, c)
    return float(np.sqrt((p**2).sum(axis=0)).max())


# ---------------------------------------------------------------------------
# heat-characterised Besov norm
# ---------------------------------------------------------------------------
def default_t_grid(t_min: float = 1e-4, t_max: float = 1e2, n: int = 64) -> np.ndarray:
    return np.geomspace(t_min, t_max, n)


def heat_sup_curve(field_, t_grid, oversample: bool = False) -> np.ndarray:
    """``t^{1/2} ||e^{t lap} f||_{L^inf}`` at each ``t``."""
    grid = field_.grid
    c = _coeffs(field_)
    k2 = grid.k_sq
    return np.array([math.sqrt(t) * _phys_sup(grid, c * np.exp(-t * k2), oversample) for t in t_grid])


def besov_heat_norm(field_, t_grid=None, refine: bool = True, oversample: bool = False) -> tuple[float, float]:
    """``sup_t t^{1/2} ||e^{t lap} f||_{L^inf}`` over ``t_grid`` plus a refinement near the argmax.

    Returns ``(value, t_star)``.  The refinement is a bounded scalar search in
    ``log t`` between the neighbours of the discrete argmax; it can only
    increase the value.
    """
    t_grid = default_t_grid() if t_grid is None else np.sort(np.asarray(t_grid, dtype=float))
    if t_grid.size == 0:
        raise ValueError("empty time grid")
    if (t_grid <= 0).any():
        raise ValueError("heat times must be positive")
    c = _coeffs(field_)
    mean, scale = _mean_scale(c)
    if mean > 1e-14 * scale:
        raise ValueError("the heat sup is infinite for a field with nonzero mean")
    grid = field_.grid
    k2 = grid.k_sq

    def value(t):
        return math.sqrt(t) * _phys_sup(grid, c * np.exp(-t * k2), oversample)

    curve = np.array([value(t) for t in t_grid])
    i = int(np.argmax(curve))
    best, t_best = float(curve[i]), float(t_grid[i])
    if refine and t_grid.size > 1 and best > 0:
        lo = math.log(t_grid[max(i - 1, 0)])
        hi = math.log(t_grid[min(i + 1, t_grid.size - 1)])
        res = minimize_scalar(lambda s: -value(math.exp(s)), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-8})
        if -res.fun > best:
            best, t_best = float(-res.fun), float(math.exp(res.x))
    return best, t_best


# ---------------------------------------------------------------------------
# Carleson term of the BMO^{-1} norm
# ---------------------------------------------------------------------------
def _ball_mask(grid: Grid, R: float) -> np.ndarray:
    """Indicator of the periodic ball of radius ``R`` centred at the origin."""
    dims = [(grid.n1, grid.L1), (grid.n2, grid.L2)] + ([(grid.n3, grid.L3)] if grid.n3 > 1 else [])
    d2 = 0.0
    for axis, (n, L) in enumerate(dims):
        x = L * np.arange(n) / n
        x = np.minimum(x, L - x)
        shape = [1] * grid.dim
        shape[axis] = n
        d2 = d2 + (x**2).reshape(shape)
    if grid.n3 == 1:
        d2 = d2[..., None]
    return (d2 <= R * R).astype(float)


def default_radii(grid: Grid, n_min_cells: float = 2.0) -> np.ndarray:
    lengths = (grid.L1, grid.L2) + ((grid.L3,) if grid.n3 > 1 else ())
    cells = [grid.L1 / grid.n1, grid.L2 / grid.n2] + ([grid.L3 / grid.n3] if grid.n3 > 1 else [])
    R = 0.5 * min(lengths)
    out = []
    while R >= n_min_cells * max(cells):
        out.append(R)
        R *= 0.5
    return np.array(out)


def carleson_term(field_, radii=None, stride: int = 4, n_t: int = 33) -> tuple[float, dict]:
    """``sup_{x,R} R^{-d} int_0^{R^2} int_{B(x,R)} |e^{t lap} f|^2 dy dt`` on a lattice.

    Centres lie on the collocation grid with the given ``stride``; radii are
    dyadic by default.  The time integral is a trapezoid rule with ``n_t``
    nodes and the ball integral a Riemann sum evaluated for all centres at
    once by periodic FFT convolution.  Returns the value and the maximiser.
    """
    grid = field_.grid
    d = grid.dim
    radii = default_radii(grid) if radii is None else np.asarray(radii, dtype=float)
    lengths = (grid.L1, grid.L2) + ((grid.L3,) if grid.n3 > 1 else ())
    if radii.size == 0:
        raise ValueError("no radii")
    if (radii <= 0).any() or radii.max() > 0.5 * min(lengths) * (1 + 1e-12):
        raise ValueError("radii must lie in (0, half the smallest box length]")
    if n_t < 2:
        raise ValueError("need at least two time nodes")
    c = _coeffs(field_)
    k2 = grid.k_sq
    cell = grid.cell_volume
    axes = (-3, -2, -1)
    best, arg = 0.0, {"R": float(radii[0]), "center": (0, 0, 0)}
    for R in radii:
        ts = np.linspace(0.0, R * R, n_t)
        wts = np.full(n_t, ts[1] - ts[0])
        wts[0] *= 0.5
        wts[-1] *= 0.5
        energy = np.zeros(grid.shape)
        for t, wt in zip(ts, wts):
            p = to_physical(grid, c * np.exp(-t * k2))
            energy += wt * (p**2).sum(axis=0).reshape(grid.shape)
        ball = _ball_mask(grid, R)
        # periodic correlation with a symmetric ball equals convolution
        conv = sfft.irfftn(sfft.rfftn(energy, axes=axes) * sfft.rfftn(ball, axes=axes), s=grid.shape, axes=axes)
        sub = conv[::stride, ::stride, :: (stride if grid.n3 > 1 else 1)] * cell / R**d
        j = np.unravel_index(int(np.argmax(sub)), sub.shape)
        if sub[j] > best:
            best = float(sub[j])
            arg = {"R": float(R), "center": tuple(int(q) * stride for q in j)}
    return best, arg


def bmo_inverse_norm(field_, t_grid=None, radii=None, stride: int = 4) -> float:
    """``(sup_t t ||e^{t lap} f||^2_inf + Carleson term)^{1/2}`` on the configured lattices."""
    b, _ = besov_heat_norm(field_, t_grid)
    cterm, _ = carleson_term(field_, radii, stride)
    return math.sqrt(b * b + cterm)


# ---------------------------------------------------------------------------
# random band-limited samples
# ---------------------------------------------------------------------------
def random_bandlimited(grid: Grid, ncomp: int, band: int, rng: np.random.Generator,
                       solenoidal: bool = False) -> np.ndarray:
    """Real, zero-mean random coefficients supported on ``|m_j| <= band``.

    The random draw depends only on ``band``, ``ncomp``, the dimension and
    ``rng``, not on the resolution of ``grid``, so audits can be repeated at
    several resolutions with identical samples.
    """
    nb = 8
    while nb < 2 * band + 2:
        nb *= 2
    small = Grid(nb, nb, 1 if grid.n3 == 1 else nb, grid.L1, grid.L2, grid.L3)
    phys = rng.standard_normal((ncomp,) + small.shape)
    c = to_spectral(small, phys)
    m1, m2, m3 = small.mode_index
    keep = (np.abs(m1) <= band) & (np.abs(m2) <= band) & (np.abs(m3) <= band)
    c = c * keep
    c[:, 0, 0, 0] = 0.0
    c = embed_modes(small, grid, c)
    if solenoidal:
        c = leray(grid, c)
    return c


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------
@dataclass
class AuditReport:
    kind: str
    samples: int
    max_ratio: float
    resolution: str
    params: dict = field(default_factory=dict)
    ratios: np.ndarray | None = None
    skipped: int = 0

    def row(self) -> list:
        return [self.kind, self.samples, repr(self.max_ratio), self.resolution]


def write_audit_csv(reports, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "samples", "max_ratio", "resolution"])
            for r in reports:
                w.writerow(r.row())
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc


def _ratio(num: float, den: float) -> float | None:
    if den == 0.0:
        return None
    return num / den


def _hs_sq(grid: Grid, c: np.ndarray, s: float) -> float:
    return grid.volume * float((_power(grid.k_sq, s) * grid.multiplicity * np.abs(c) ** 2).sum())


def _hs_inner(grid: Grid, a: np.ndarray, b: np.ndarray, s: float) -> float:
    return grid.volume * float((_power(grid.k_sq, s) * grid.multiplicity * (np.conj(a) * b).real).sum())


def _grad_arrays(grid: Grid, c: np.ndarray) -> np.ndarray:
    K1, K2, K3 = grid.Kd
    parts = [1j * K1 * c, 1j * K2 * c]
    if grid.n3 > 1:
        parts.append(1j * K3 * c)
    return np.stack(parts)  # (d, nc, ...)


def _advect(grid: Grid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pseudo-spectral ``a . grad b`` without truncation (inputs are band-limited)."""
    ap = to_physical(grid, a)
    gb = to_physical(grid, _grad_arrays(grid, b))
    out = sum(ap[j] * gb[j] for j in range(ap.shape[0]))
    return to_spectral(grid, out)


def _sample_aniso_interp(grid, rng, band, eps):
    from .assembly import fast_grid_for, map_array

    a = random_bandlimited(grid, 1, band, rng)
    # the fast axis must resolve 1/eps periods of the slow box
    fast = fast_grid_for(grid, eps, math.lcm(grid.n3, int(round(1 / eps))))
    af = map_array(grid, fast, a)
    lhs = _hs_sq(fast, af, 0.5)
    l2 = math.sqrt(_hs_sq(grid, a, 0.0))
    gh = math.sqrt(grid.volume * float((grid.kh_sq * grid.multiplicity * np.abs(a) ** 2).sum()))
    g3 = math.sqrt(grid.volume * float((grid.K[2] ** 2 * grid.multiplicity * np.abs(a) ** 2).sum()))
    return _ratio(lhs, l2 * gh / eps + l2 * g3)


def _sample_gn(grid, rng, band, oversample):
    b = random_bandlimited(grid, 1, band, rng)
    sup = _phys_sup(grid, b, oversample)
    return _ratio(sup * sup, math.sqrt(_hs_sq(grid, b, 0.5) * _hs_sq(grid, b, 1.5)))


def _sample_product(grid, rng, band):
    a = random_bandlimited(grid, 1, band, rng)
    b = random_bandlimited(grid, 1, band, rng)
    ab = to_spectral(grid, to_physical(grid, a) * to_physical(grid, b))
    return _ratio(math.sqrt(_hs_sq(grid, ab, 0.0)), math.sqrt(_hs_sq(grid, a, 0.5) * _hs_sq(grid, b, 0.5)))


def _sample_trilinear(grid, rng, band, s):
    a = random_bandlimited(grid, 2, band, rng, solenoidal=True)
    b = random_bandlimited(grid, 2, band, rng)
    adv = _advect(grid, a, b)
    b_sq = _hs_sq(grid, b, s)
    num = abs(_hs_inner(grid, adv, b, s))
    grad_a = math.sqrt(_hs_sq(grid, a, 1.0))
    return _ratio(num, grad_a * math.sqrt(b_sq) * math.sqrt(_hs_sq(grid, b, s + 1.0)))


def _sample_trilinear3d(grid, rng, band):
    a = random_bandlimited(grid, 3, band, rng)
    b = random_bandlimited(grid, 3, band, rng)
    num = abs(_hs_inner(grid, _advect(grid, a, b), b, 0.5)) + abs(_hs_inner(grid, _advect(grid, b, a), b, 0.5))
    ap = to_physical(grid, a)
    a_inf = float(np.sqrt((ap**2).sum(axis=0)).max())
    ga = to_physical(grid, _grad_arrays(grid, a))
    cell_h = grid.L1 * grid.L2 / (grid.n1 * grid.n2)
    grad_a = math.sqrt(float(((ga**2).sum(axis=(0, 1, 2, 3)) * cell_h).max()))
    den = (a_inf + grad_a) * math.sqrt(_hs_sq(grid, b, 0.5) * _hs_sq(grid, b, 1.5))
    return _ratio(num, den)


def _sample_plancherel(grid, rng, band, s):
    b = random_bandlimited(grid, 3, band, rng)
    lhs, _, _ = aniso_norms(VectorField(grid, b), s)
    return _ratio(lhs, math.sqrt(_hs_sq(grid, b, s)))


def inequality_audit(kind: str, samples: int, grid: Grid, seed: int = 0, band: int = 4,
                     eps: float = 0.25, s: float = 0.5, oversample: bool = False) -> AuditReport:
    """Evaluate an inequality's ratio on ``samples`` random band-limited fields.

    Sample ``i`` uses the generator seeded by ``(seed, i)``.  Degenerate
    samples (zero denominator) are skipped and counted.
    """
    if kind not in AUDIT_KINDS:
        raise ValueError(f"unknown audit kind {kind!r}; expected one of {AUDIT_KINDS}")
    if samples < 1:
        raise ValueError("need at least one sample")
    three_d = kind in ("aniso-interp", "trilinear3d", "plancherel")
    if three_d and grid.n3 == 1:
        raise ValueError(f"{kind} audits need a 3D grid")
    if not three_d and grid.n3 != 1:
        raise ValueError(f"{kind} audits need a 2D grid")
    ratios, skipped = [], 0
    for i in range(samples):
        rng = np.random.default_rng([seed, i])
        if kind == "aniso-interp":
            r = _sample_aniso_interp(grid, rng, band, eps)
        elif kind == "GN":
            r = _sample_gn(grid, rng, band, oversample)
        elif kind == "product-sobolev":
            r = _sample_product(grid, rng, band)
        elif kind == "trilinear":
            r = _sample_trilinear(grid, rng, band, s)
        elif kind == "trilinear3d":
            r = _sample_trilinear3d(grid, rng, band)
        else:
            r = _sample_plancherel(grid, rng, band, s)
        if r is None:
            skipped += 1
        else:
            ratios.append(r)
    ratios = np.array(ratios)
    params = {"band": band, "seed": seed}
    if kind == "aniso-interp":
        params["eps"] = eps
    if kind in ("trilinear", "plancherel"):
        params["s"] = s
    res = "x".join(str(n) for n in (grid.shape if grid.n3 > 1 else grid.shape[:2]))
    return AuditReport(kind, samples, float(ratios.max()) if ratios.size else 0.0, res, params, ratios, skipped)
