"""
Linear transport of the corrector by the 2D flow.

The unknown ``w`` lives on the slow grid ``(x_h, y3)`` and solves

    dt w + v^h . grad_h w - lap_h w - eps^2 d3^2 w = -(grad_h p1, eps^2 d3 p1),
    div w = 0,

with ``v^h`` a slice stack from :mod:`slowflow.ns2d`.  The pressure is never
formed during stepping: the projection with metric weights ``(1, 1, eps^2)``
removes exactly a gradient of that shape.  :func:`pressure_p1` computes the
pressure explicitly for diagnostics.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import CFLWarning, NumericalError
from .ns2d import SliceTrajectory, n_steps
from .spectral import (
    Grid,
    ScalarField,
    VectorField,
    divergence,
    leray,
    stack_to_volume,
    to_physical,
    to_spectral,
)

__all__ = [
    "TransportState",
    "TransportTrajectory",
    "TransportStepper",
    "nh_term",
    "pressure_p1",
    "pressure_multiplier",
    "transport_step",
    "solve_transport",
    "gronwall_constant",
    "write_transport_csv",
    "DIAGNOSTIC_S",
]

DIAGNOSTIC_S = (-0.5, 0.0, 0.5)


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")


def slow_velocity(grid: Grid, stack: np.ndarray) -> np.ndarray:
    """Dealiased 3D coefficients ``(2, ...)`` of a slice stack on the slow grid."""
    if stack.shape[-1] != grid.n3:
        raise ValueError(f"{stack.shape[-1]} slices for a slow grid with n3={grid.n3}")
    return stack_to_volume(grid, stack) * grid.dealias_mask


# ---------------------------------------------------------------------------
# kernels
# ---------------------------------------------------------------------------
def advect_h(grid: Grid, vhat: np.ndarray, w: np.ndarray, vphys: np.ndarray | None = None) -> np.ndarray:
    """Dealiased ``v^h . grad_h w`` for 3D coefficients ``vhat`` (2 comps) and ``w``."""
    K1, K2, _ = grid.Kd
    mask = grid.dealias_mask
    wt = w * mask
    nc = w.shape[0]
    grads = np.concatenate([1j * K1 * wt, 1j * K2 * wt])
    if vphys is None:
        phys = to_physical(grid, np.concatenate([vhat, grads]))
        vp, gp = phys[:2], phys[2:]
    else:
        vp, gp = vphys, to_physical(grid, grads)
    out = vp[0] * gp[:nc] + vp[1] * gp[nc:]
    return to_spectral(grid, out) * mask


def nh_array(grid: Grid, vhat: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``v^h . grad_h w^h + d3 (w^3 v^h)`` as 3D coefficients."""
    mask = grid.dealias_mask
    K3 = grid.Kd[2]
    adv = advect_h(grid, vhat, w[:2])
    p = to_physical(grid, np.concatenate([vhat, (w[2] * mask)[None]]))
    flux = to_spectral(grid, p[:2] * p[2]) * mask
    return adv + 1j * K3 * flux


def pressure_multiplier(grid: Grid, eps: float) -> np.ndarray:
    """``|k_h|^2 / (|k_h|^2 + eps^2 k3^2)`` over the stored modes (0 at the zero mode)."""
    _check_eps(eps)
    K1, K2, K3 = grid.K
    kh = K1**2 + K2**2
    den = kh + eps**2 * K3**2
    return np.where(den == 0.0, 0.0, kh / np.where(den == 0.0, 1.0, den))


def p1_array(grid: Grid, nh: np.ndarray, eps: float) -> np.ndarray:
    K1, K2, K3 = grid.Kd
    div_h = 1j * (K1 * nh[0] + K2 * nh[1])
    den = K1**2 + K2**2 + eps**2 * K3**2
    return np.where(den == 0.0, 0.0, div_h / np.where(den == 0.0, 1.0, den))


def hs_h_weight(grid: Grid, s: float) -> np.ndarray:
    """``|k_h|^{2s}`` with horizontally constant modes dropped."""
    kh = grid.kh_sq
    safe = np.where(kh == 0.0, 1.0, kh)
    return np.where(kh == 0.0, 0.0, safe**s) * grid.multiplicity


def l2v_hsh_sq(grid: Grid, w: np.ndarray, s: float, weight: np.ndarray | None = None) -> float:
    """``||w||^2_{L^2_v H^s_h}`` over horizontally non-constant modes."""
    if weight is None:
        weight = hs_h_weight(grid, s)
    return float(grid.volume * (weight * np.abs(w) ** 2).sum())


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class TransportState:
    """Corrector ``w`` at time ``t`` for one value of ``eps``."""

    t: float
    w: VectorField
    eps: float

    def __post_init__(self):
        _check_eps(self.eps)
        if self.w.ncomp != 3 or self.w.grid.n3 == 1:
            raise ValueError("transport state needs a 3-component field on a 3D grid")


@dataclass(frozen=True, eq=False)
class TransportTrajectory:
    """Sampled corrector states plus horizontal-Sobolev energy diagnostics.

    ``norms[s]`` holds ``||w(t)||_{L^2_v H^s_h}`` at the sample times and
    ``dissipation[s]`` holds ``int_0^t ||grad_h w||^2_{L^2_v H^s_h}``; modes
    with ``k_h = 0`` are excluded from both.
    """

    grid: Grid
    eps: float
    times: np.ndarray
    coeffs: np.ndarray
    norms: dict = field(default_factory=dict)
    dissipation: dict = field(default_factory=dict)
    forcing_integral: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> TransportState:
        return TransportState(float(self.times[i]), VectorField(self.grid, self.coeffs[i]), self.eps)

    def at(self, t: float) -> np.ndarray:
        from .ns2d import _interpolate

        return _interpolate(self.times, self.coeffs, t)

    def records(self) -> list[tuple[float, float, float, float]]:
        """Rows ``(t, s, norm, dissipation_integral)``."""
        out = []
        for i, t in enumerate(self.times):
            for s in sorted(self.norms):
                out.append((float(t), float(s), float(self.norms[s][i]), float(self.dissipation[s][i])))
        return out


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------
class TransportStepper:
    """Integrating-factor Heun stepper for the corrector.

    The coefficient ``v^h`` enters at both ends of the step, which keeps the
    scheme second order for time-dependent transport.
    """

    def __init__(self, grid: Grid, eps: float, dt: float):
        _check_eps(eps)
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.eps, self.dt = grid, eps, dt
        K1, K2, K3 = grid.K
        self.E = np.exp(-dt * (K1**2 + K2**2 + eps**2 * K3**2))
        Kd = grid.Kd
        self.kmax = float(max(np.abs(Kd[0]).max(), np.abs(Kd[1]).max()))
        self.last_courant = 0.0

    def rhs(self, vhat: np.ndarray, w: np.ndarray, vphys: np.ndarray | None = None) -> np.ndarray:
        return -leray(self.grid, advect_h(self.grid, vhat, w, vphys), self.eps**2)

    def step(self, w: np.ndarray, vhat0: np.ndarray, vhat1: np.ndarray, t: float = 0.0,
             vphys0: np.ndarray | None = None, vphys1: np.ndarray | None = None) -> np.ndarray:
        dt, E = self.dt, self.E
        if vphys0 is None:
            vphys0 = to_physical(self.grid, vhat0)
        if vphys1 is None:
            vphys1 = to_physical(self.grid, vhat1)
        vmax = float(np.sqrt(vphys0[0] ** 2 + vphys0[1] ** 2).max())
        self.last_courant = dt * vmax * self.kmax
        if self.last_courant >= 1.0:
            warnings.warn(f"transport Courant number {self.last_courant:.2f} at t={t:.4g}", CFLWarning, stacklevel=2)
        k1 = self.rhs(vhat0, w, vphys0)
        wstar = E * (w + dt * k1)
        k2 = self.rhs(vhat1, wstar, vphys1)
        out = E * (w + 0.5 * dt * k1) + 0.5 * dt * k2
        if not np.isfinite(out).all():
            raise NumericalError(f"non-finite corrector at t={t + dt:.6g}", t=t + dt)
        return out


def _state_grid(w: VectorField) -> Grid:
    if w.ncomp != 3 or w.grid.n3 == 1:
        raise ValueError("expected a 3-component field on the slow 3D grid")
    return w.grid


def _slices_for(grid: Grid, v) -> np.ndarray:
    """Accept a SliceState, SliceFamily or raw stack."""
    slices = getattr(v, "slices", v)
    stack = getattr(slices, "coeffs", slices)
    stack = np.asarray(stack)
    if stack.shape != (2, grid.n1, grid.n2, grid.n3):
        raise ValueError(f"slice stack shape {stack.shape} does not fit {grid}")
    return stack


def nh_term(v, w) -> VectorField:
    """``N^h = v^h . grad_h w^h + d3 (w^3 v^h)`` on the slow grid (2 components)."""
    wf = w.w if isinstance(w, TransportState) else w
    grid = _state_grid(wf)
    vhat = slow_velocity(grid, _slices_for(grid, v))
    return VectorField(grid, nh_array(grid, vhat, wf.coeffs))


def pressure_p1(v, w, eps: float) -> ScalarField:
    """Solve ``-(lap_h + eps^2 d3^2) p1 = div_h N^h`` spectrally."""
    _check_eps(eps)
    wf = w.w if isinstance(w, TransportState) else w
    grid = _state_grid(wf)
    vhat = slow_velocity(grid, _slices_for(grid, v))
    return ScalarField(grid, p1_array(grid, nh_array(grid, vhat, wf.coeffs), eps), zero_mean=True)


def transport_step(state: TransportState, v_at_t, dt: float, v_next=None) -> TransportState:
    """One Heun step; ``v_next`` (the coefficient at ``t + dt``) defaults to ``v_at_t``."""
    grid = _state_grid(state.w)
    v0 = slow_velocity(grid, _slices_for(grid, v_at_t))
    v1 = v0 if v_next is None else slow_velocity(grid, _slices_for(grid, v_next))
    out = TransportStepper(grid, state.eps, dt).step(state.w.coeffs, v0, v1, state.t)
    return TransportState(state.t + dt, VectorField(grid, out), state.eps)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------
class TransportDiagnostics:
    """Running ``L^2_v H^s_h`` norms and trapezoidal dissipation integrals."""

    def __init__(self, grid: Grid, s_values=DIAGNOSTIC_S):
        self.grid = grid
        self.s_values = tuple(s_values)
        self.weights = {s: hs_h_weight(grid, s) for s in self.s_values}
        self.kh_sq = grid.kh_sq
        self.dissipation = {s: 0.0 for s in self.s_values}
        self._rate = None
        self.v_integral = 0.0
        self._vrate = None

    def _rates(self, w):
        return {s: l2v_hsh_sq(self.grid, w, s, self.weights[s] * self.kh_sq) for s in self.s_values}

    def norms(self, w) -> dict:
        return {s: math.sqrt(l2v_hsh_sq(self.grid, w, s, self.weights[s])) for s in self.s_values}

    def update(self, w, dt: float | None, vrate: float | None = None) -> None:
        rate = self._rates(w)
        if self._rate is not None and dt is not None:
            for s in self.s_values:
                self.dissipation[s] += 0.5 * dt * (self._rate[s] + rate[s])
            if vrate is not None and self._vrate is not None:
                self.v_integral += 0.5 * dt * (self._vrate + vrate)
        self._rate = rate
        self._vrate = vrate


def gronwall_rate(grid: Grid, stack: np.ndarray) -> float:
    """``||grad v^h||^2_{L^inf_v L^2_h} (1 + ||v^h||^2_{L^inf_v L^2_h})`` for a slice stack.

    ``grad`` includes the slow vertical derivative.
    """
    K1, K2, K3 = grid.K
    area = grid.L1 * grid.L2
    vhat = stack_to_volume(grid, stack)
    dz = to_spectral(grid.horizontal(), to_physical(grid, 1j * grid.Kd[2] * vhat))
    kh = (K1**2 + K2**2)[..., :1]
    grad_sq = area * ((kh * np.abs(stack) ** 2).sum(axis=(0, 1, 2)) + (np.abs(dz) ** 2).sum(axis=(0, 1, 2)))
    l2_sq = area * (np.abs(stack) ** 2).sum(axis=(0, 1, 2))
    return float(grad_sq.max() * (1.0 + l2_sq.max()))


def gronwall_constant(traj: TransportTrajectory, s: float = 0.0) -> float:
    """Smallest ``c`` with ``||w||^2 + int ||grad_h w||^2 <= ||w_0||^2 exp(c G(t))`` on the samples.

    ``G`` is the accumulated :func:`gronwall_rate` stored in the trajectory.
    Returns 0 when the left side never exceeds its initial value.
    """
    if traj.forcing_integral is None:
        raise ValueError("trajectory carries no Gronwall integral")
    n0 = traj.norms[s][0] ** 2
    if n0 == 0.0:
        return 0.0
    lhs = traj.norms[s] ** 2 + traj.dissipation[s]
    G = traj.forcing_integral
    c = 0.0
    for i in range(1, len(traj.times)):
        if G[i] > 0 and lhs[i] > n0:
            c = max(c, math.log(lhs[i] / n0) / G[i])
    return c


def solve_transport(w0: TransportState, v_traj: SliceTrajectory, T: float, dt: float,
                    save_every: int = 1) -> TransportTrajectory:
    """Advance the corrector to ``T``; ``v^h`` is linearly interpolated in time between samples."""
    grid = _state_grid(w0.w)
    if v_traj.times[0] > w0.t + 1e-12 or v_traj.times[-1] < w0.t + T - 1e-9 * max(1.0, T):
        raise ValueError(f"slice trajectory [{v_traj.times[0]}, {v_traj.times[-1]}] does not cover [{w0.t}, {w0.t + T}]")
    if v_traj.n_slices != grid.n3 or v_traj.grid.n1 != grid.n1 or v_traj.grid.n2 != grid.n2:
        raise ValueError("slice trajectory does not match the slow grid")
    scale = max(float(np.abs(w0.w.coeffs).max()), 1e-300)
    if np.abs(divergence(grid, w0.w.coeffs)).max() >= 1e-10 * scale:
        raise ValueError("initial corrector is not divergence free")
    nsteps = n_steps(T, dt)
    stepper = TransportStepper(grid, w0.eps, dt)
    diag = TransportDiagnostics(grid)
    w = np.array(w0.w.coeffs)
    t0 = w0.t

    def vstate(t):
        stack = v_traj.at(t)
        vhat = slow_velocity(grid, stack)
        return vhat, to_physical(grid, vhat), gronwall_rate(grid, stack)

    vh0, vp0, g0 = vstate(t0)
    diag.update(w, None, g0)
    times, states = [t0], [w.copy()]
    norms = {s: [v] for s, v in diag.norms(w).items()}
    diss = {s: [0.0] for s in diag.s_values}
    gint = [0.0]
    for n in range(nsteps):
        t = t0 + n * dt
        vh1, vp1, g1 = vstate(t + dt)
        w = stepper.step(w, vh0, vh1, t, vp0, vp1)
        diag.update(w, dt, g1)
        vh0, vp0 = vh1, vp1
        if (n + 1) % save_every == 0 or n + 1 == nsteps:
            times.append(t + dt)
            states.append(w.copy())
            for s, val in diag.norms(w).items():
                norms[s].append(val)
                diss[s].append(diag.dissipation[s])
            gint.append(diag.v_integral)
    return TransportTrajectory(
        grid,
        w0.eps,
        np.array(times),
        np.array(states),
        {s: np.array(v) for s, v in norms.items()},
        {s: np.array(v) for s, v in diss.items()},
        np.array(gint),
    )


def write_transport_csv(traj: TransportTrajectory, path) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "s", "norm", "dissipation_integral"])
            for row in traj.records():
                w.writerow([repr(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc
