"""
Approximate solution, its pressure and the forcing it leaves behind.

Fields built from the slice flow ``v^h(t, x_h, y3)`` and the corrector
``w(t, x_h, y3)`` live on a *slow* grid.  Evaluating them at ``y3 = eps x3``
gives fields on a *fast* grid whose vertical box is ``L3_slow / eps``.  Since
``exp(i k y3)`` becomes ``exp(i (eps k) x3)`` and ``eps k`` is exactly the
``j``-th wavenumber of the longer box when ``k`` is the ``j``-th wavenumber of
the short one, the substitution is a relabelling of coefficients: mode ``j``
stays mode ``j``.  A fast grid with more vertical modes than the slow grid
simply zero-pads.  In ``L^2``,

    ||f(., eps .)||^2_{fast} = eps^-1 ||f||^2_{slow}.

Writing ``V = (v^h + eps w^h, w^3)`` on the slow grid, the approximate
solution is ``v_app = V(t, x_h, eps x3)`` and it satisfies

    dt v_app + v_app . grad v_app - lap v_app = -grad p_app + F,

with ``p_app = (p0 + eps p1)(t, x_h, eps x3)`` and ``F = eps G(t, x_h, eps x3)``,

    G = (eps w . grad w^h + w . grad v^h - eps d3^2 v^h,  w . grad w^3 + d3 p0),

gradients taken in the slow variables.  :class:`ForcingBundle` keeps the
three physically distinct pieces apart.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ns2d import SliceFamily, pressure_array
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    divergence,
    inner,
    stack_to_volume,
    to_physical,
    to_spectral,
)
from .transport import nh_array, p1_array

__all__ = [
    "EpsParams",
    "ForcingBundle",
    "Background",
    "SlowShared",
    "admissible_eps",
    "fast_grid_for",
    "slow_to_fast",
    "fast_to_slow",
    "build_u0_eps",
    "build_vapp",
    "forcing_feps",
    "compute_background",
    "residual_check",
    "convective",
]


# ---------------------------------------------------------------------------
# parameters and grids
# ---------------------------------------------------------------------------
def admissible_eps(eps: float, n3_fast: int) -> int:
    """Return ``m`` with ``eps = 1/m`` and ``m | n3_fast``; raise otherwise."""
    if not (0 < eps <= 1):
        raise ValueError(f"eps={eps} outside (0, 1]")
    m = int(round(1.0 / eps))
    if abs(1.0 / m - eps) > 1e-12 * eps:
        raise ValueError(f"eps={eps} is not the reciprocal of an integer")
    if n3_fast % m:
        raise ValueError(f"1/eps={m} does not divide the fast vertical resolution {n3_fast}")
    return m


def fast_grid_for(slow: Grid, eps: float, n3_fast: int | None = None) -> Grid:
    """Fast grid for ``slow`` at ``eps``: vertical box ``L3 / eps``, ``n3_fast`` modes."""
    n3f = slow.n3 if n3_fast is None else int(n3_fast)
    if n3f < slow.n3:
        raise ValueError("the fast grid needs at least as many vertical modes as the slow grid")
    admissible_eps(eps, n3f)
    return slow.with_vertical(n3f, slow.L3 / eps)


@dataclass(frozen=True)
class EpsParams:
    """One point of the eps ladder."""

    eps: float
    slow: Grid
    fast: Grid
    T: float = 1.0
    dt: float = 2e-3

    def __post_init__(self):
        if self.slow.n3 == 1 or self.fast.n3 == 1:
            raise ValueError("slow and fast grids must be 3D")
        admissible_eps(self.eps, self.fast.n3)
        if (self.slow.n1, self.slow.n2, self.slow.L1, self.slow.L2) != (
            self.fast.n1, self.fast.n2, self.fast.L1, self.fast.L2
        ):
            raise ValueError("slow and fast grids must share the horizontal plane")
        if not math.isclose(self.eps * self.fast.L3, self.slow.L3, rel_tol=1e-12):
            raise ValueError("eps * fast L3 must equal slow L3")
        if self.fast.n3 < self.slow.n3:
            raise ValueError("fast grid coarser than slow grid")
        if not self.dt > 0 or not self.T > 0:
            raise ValueError("T and dt must be positive")

    @classmethod
    def create(cls, eps: float, slow: Grid, n3_fast: int | None = None, T: float = 1.0, dt: float = 2e-3):
        return cls(eps, slow, fast_grid_for(slow, eps, n3_fast), T, dt)


# ---------------------------------------------------------------------------
# slow <-> fast
# ---------------------------------------------------------------------------
def map_array(slow: Grid, fast: Grid, c: np.ndarray) -> np.ndarray:
    """Relabel stored slow coefficients onto the fast grid (zero padding above)."""
    h, hf = slow.n3 // 2, fast.n3 // 2
    out = np.zeros(c.shape[:-1] + (hf + 1,), dtype=complex)
    out[..., :h] = c[..., :h]
    # the slow Nyquist plane splits evenly between +h and -h on a longer table
    out[..., h] = c[..., h] if hf == h else 0.5 * c[..., h]
    return out


def unmap_array(fast: Grid, slow: Grid, c: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    h, hf = slow.n3 // 2, fast.n3 // 2
    if hf > h:
        scale = max(float(np.abs(c).max()), 1e-300)
        if np.abs(c[..., h + 1 :]).max() > tol * scale:
            raise ValueError("fast field has vertical modes outside the slow grid")
    out = np.array(c[..., : h + 1])
    if hf > h:
        out[..., h] *= 2.0
    return out


def _check_pair(slow: Grid, fast: Grid, eps: float) -> None:
    admissible_eps(eps, fast.n3)
    if not math.isclose(eps * fast.L3, slow.L3, rel_tol=1e-12) or fast.n3 < slow.n3:
        raise ValueError(f"fast grid {fast} does not match slow grid {slow} at eps={eps}")


def slow_to_fast(field, eps: float, fast: Grid | None = None):
    """Evaluate a slow-grid field at ``(x_h, eps x3)`` on the fast grid."""
    slow = field.grid
    fast = fast_grid_for(slow, eps) if fast is None else fast
    _check_pair(slow, fast, eps)
    c = map_array(slow, fast, field.coeffs)
    if isinstance(field, VectorField):
        return VectorField(fast, c)
    return ScalarField(fast, c, field.zero_mean)


def fast_to_slow(field, eps: float, slow: Grid):
    """Inverse of :func:`slow_to_fast` on its image."""
    fast = field.grid
    _check_pair(slow, fast, eps)
    c = unmap_array(fast, slow, field.coeffs)
    if isinstance(field, VectorField):
        return VectorField(slow, c)
    return ScalarField(slow, c, field.zero_mean)


# ---------------------------------------------------------------------------
# products
# ---------------------------------------------------------------------------
def convective(grid: Grid, a: np.ndarray, b: np.ndarray, a_phys=None, grad_b_phys=None) -> np.ndarray:
    """Dealiased ``a . grad b`` (3-component ``a``; any number of components in ``b``)."""
    K1, K2, K3 = grid.Kd
    mask = grid.dealias_mask
    nb = b.shape[0]
    if a_phys is None:
        a_phys = to_physical(grid, a * mask)
    if grad_b_phys is None:
        bt = b * mask
        grad_b_phys = to_physical(grid, np.concatenate([1j * K1 * bt, 1j * K2 * bt, 1j * K3 * bt]))
    out = a_phys[0] * grad_b_phys[:nb] + a_phys[1] * grad_b_phys[nb : 2 * nb] + a_phys[2] * grad_b_phys[2 * nb :]
    return to_spectral(grid, out) * mask


def _grad_phys(grid: Grid, b: np.ndarray) -> np.ndarray:
    K1, K2, K3 = grid.Kd
    bt = b * grid.dealias_mask
    return to_physical(grid, np.concatenate([1j * K1 * bt, 1j * K2 * bt, 1j * K3 * bt]))


# ---------------------------------------------------------------------------
# background at one time level
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ForcingBundle:
    """Forcing on the fast grid split into its three pieces."""

    t: float
    pressure_term: VectorField
    linear_term: VectorField
    nonlinear_term: VectorField

    @property
    def total(self) -> VectorField:
        return VectorField(
            self.pressure_term.grid,
            self.pressure_term.coeffs + self.linear_term.coeffs + self.nonlinear_term.coeffs,
        )

    def components(self) -> dict:
        return {
            "pressure": self.pressure_term,
            "linear": self.linear_term,
            "nonlinear": self.nonlinear_term,
            "total": self.total,
        }


@dataclass(frozen=True, eq=False)
class Background:
    """Raw fast-grid arrays of the approximate solution at one time level."""

    t: float
    vapp: np.ndarray
    pressure: np.ndarray
    linear: np.ndarray
    nonlinear: np.ndarray
    papp: np.ndarray | None = None

    @property
    def forcing(self) -> np.ndarray:
        return self.pressure + self.linear + self.nonlinear

    def bundle(self, fast: Grid) -> ForcingBundle:
        return ForcingBundle(
            self.t, VectorField(fast, self.pressure), VectorField(fast, self.linear), VectorField(fast, self.nonlinear)
        )


@dataclass(frozen=True, eq=False)
class SlowShared:
    """Eps-independent slow-grid arrays of one slice stack, reusable across eps values."""

    stack: np.ndarray
    v3: np.ndarray
    vhat: np.ndarray
    vphys: np.ndarray
    v_grad: np.ndarray
    p0: np.ndarray

    @classmethod
    def build(cls, slow: Grid, stack: np.ndarray) -> "SlowShared":
        if stack.shape != (2, slow.n1, slow.n2, slow.n3):
            raise ValueError(f"slice stack shape {stack.shape} does not fit {slow}")
        v3 = stack_to_volume(slow, stack)
        vhat = v3 * slow.dealias_mask
        p0 = stack_to_volume(slow, pressure_array(slow.horizontal(), stack))
        return cls(stack, v3, vhat, to_physical(slow, vhat), _grad_phys(slow, vhat), p0)


def _slow_V(v3: np.ndarray, w: np.ndarray, eps: float) -> np.ndarray:
    return np.concatenate([v3 + eps * w[:2], w[2:3]])


def compute_background(params: EpsParams, stack: np.ndarray, w: np.ndarray, t: float = 0.0,
                       with_pressure: bool = False, with_forcing: bool = True,
                       shared: SlowShared | None = None) -> Background:
    """Approximate solution and forcing pieces from slow-grid arrays at one time."""
    slow, fast, eps = params.slow, params.fast, params.eps
    if shared is None:
        shared = SlowShared.build(slow, np.asarray(stack))
    K3 = slow.Kd[2]
    v3 = shared.v3
    vapp = map_array(slow, fast, _slow_V(v3, w, eps))
    zeros = np.zeros((3,) + fast.spectral_shape, dtype=complex)
    pressure = linear = nonlinear = zeros
    if with_forcing:
        pz = np.zeros((3,) + slow.spectral_shape, dtype=complex)
        pz[2] = 1j * K3 * shared.p0
        lin = np.zeros_like(pz)
        lin[:2] = -eps * (-(slow.K[2] ** 2) * v3)
        w_phys = to_physical(slow, w * slow.dealias_mask)
        w_grad = _grad_phys(slow, w)
        ww = convective(slow, w, w, w_phys, w_grad)
        wv = convective(slow, w, shared.vhat, w_phys, shared.v_grad)
        nl = np.concatenate([eps * ww[:2] + wv, ww[2:3]])
        pressure = eps * map_array(slow, fast, pz)
        linear = eps * map_array(slow, fast, lin)
        nonlinear = eps * map_array(slow, fast, nl)
    papp = None
    if with_pressure:
        p1 = p1_array(slow, nh_array(slow, shared.vhat, w), eps)
        papp = map_array(slow, fast, shared.p0 + eps * p1)
    return Background(t, vapp, pressure, linear, nonlinear, papp)


# ---------------------------------------------------------------------------
# public API on fields and trajectories
# ---------------------------------------------------------------------------
def _params_for(slow: Grid, eps: float, fast: Grid | None) -> EpsParams:
    fast = fast_grid_for(slow, eps) if fast is None else fast
    _check_pair(slow, fast, eps)
    return EpsParams(eps, slow, fast)


def build_u0_eps(v0: SliceFamily, w0: VectorField, eps: float, fast: Grid | None = None) -> VectorField:
    """Initial data ``(v0^h + eps w0^h, w0^3)(x_h, eps x3)`` on the fast grid."""
    slow = w0.grid
    if w0.ncomp != 3 or slow.n3 == 1:
        raise ValueError("w0 must be a 3-component field on the slow grid")
    if v0.coeffs.shape != (2, slow.n1, slow.n2, slow.n3):
        raise ValueError("slice family does not match the slow grid")
    v0.check_solenoidal()
    scale = max(float(np.abs(w0.coeffs).max()), 1e-300)
    if np.abs(divergence(slow, w0.coeffs)).max() >= 1e-10 * scale:
        raise ValueError("w0 is not divergence free")
    params = _params_for(slow, eps, fast)
    V = _slow_V(stack_to_volume(slow, np.asarray(v0.coeffs)), np.asarray(w0.coeffs), eps)
    return VectorField(params.fast, map_array(slow, params.fast, V))


def _sample(traj, t):
    return traj.at(t)


def _slow_grid_of(w_traj) -> Grid:
    return w_traj.grid


def build_vapp(v_traj, w_traj, eps: float, t: float, fast: Grid | None = None) -> tuple[VectorField, ScalarField]:
    """``(v_app, p_app)`` on the fast grid at time ``t``."""
    params = _params_for(_slow_grid_of(w_traj), eps, fast)
    bg = compute_background(params, _sample(v_traj, t), _sample(w_traj, t), t, with_pressure=True, with_forcing=False)
    return VectorField(params.fast, bg.vapp), ScalarField(params.fast, bg.papp)


def forcing_feps(v_traj, w_traj, eps: float, t: float, fast: Grid | None = None) -> ForcingBundle:
    """Forcing pieces on the fast grid at time ``t``."""
    params = _params_for(_slow_grid_of(w_traj), eps, fast)
    bg = compute_background(params, _sample(v_traj, t), _sample(w_traj, t), t)
    return bg.bundle(params.fast)


def _span(traj) -> tuple[float, float]:
    return float(traj.times[0]), float(traj.times[-1])


def residual_check(v_traj, w_traj, eps: float, t: float, dt_fd: float, fast: Grid | None = None) -> float:
    """Relative defect of the momentum identity satisfied by ``v_app``.

    The time derivative is a central difference with step ``dt_fd``
    (forward difference at the initial time); space terms are spectral.
    Returns ``||defect||_{L^2} / ||F||_{L^2}``, or the absolute defect when
    ``F`` vanishes.
    """
    if not dt_fd > 0:
        raise ValueError("dt_fd must be positive")
    params = _params_for(_slow_grid_of(w_traj), eps, fast)
    grid = params.fast
    lo = max(_span(v_traj)[0], _span(w_traj)[0])
    hi = min(_span(v_traj)[1], _span(w_traj)[1])
    tol = 1e-9 * max(1.0, abs(hi))
    if t + dt_fd > hi + tol or t < lo - tol:
        raise ValueError(f"t={t} with dt_fd={dt_fd} leaves the trajectory window [{lo}, {hi}]")

    def vapp_at(s):
        return compute_background(params, _sample(v_traj, s), _sample(w_traj, s), s, with_forcing=False).vapp

    if t - dt_fd < lo - tol:
        if abs(t - lo) > tol:
            raise ValueError(f"t={t} too close to the start for a central difference")
        dVdt = (vapp_at(t + dt_fd) - vapp_at(t)) / dt_fd
    else:
        dVdt = (vapp_at(t + dt_fd) - vapp_at(t - dt_fd)) / (2.0 * dt_fd)
    bg = compute_background(params, _sample(v_traj, t), _sample(w_traj, t), t, with_pressure=True)
    V = bg.vapp
    K1, K2, K3 = grid.Kd
    grad_p = np.stack([1j * K1 * bg.papp, 1j * K2 * bg.papp, 1j * K3 * bg.papp])
    F = bg.forcing
    defect = dVdt + convective(grid, V, V) + grid.k_sq * V + grad_p - F
    num = math.sqrt(inner(grid, defect, defect))
    den = math.sqrt(inner(grid, F, F))
    return num / den if den > 0 else num
