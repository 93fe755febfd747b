"""
Three-dimensional Navier-Stokes and the remainder equation.

``u`` solves the full system on the fast grid.  The remainder
``R = u - v_app`` solves

    dt R + P(R . grad R + v_app . grad R + R . grad v_app) - lap R = -P F,

where ``P`` is the Leray projector and ``F`` is the forcing left over by the
approximate solution (see :mod:`slowflow.assembly`): ``v_app`` satisfies the
momentum equation up to ``+F``, so the remainder sees ``-F``.  The pressure
difference is never needed explicitly.  Both are advanced with the same integrating-factor
Heun scheme as the 2D solver; the background ``(v_app, F)`` is evaluated at
both ends of each step.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .assembly import Background, EpsParams, _params_for, compute_background, _grad_phys
from .errors import CFLWarning, NumericalError
from .ns2d import n_steps
from .spectral import Grid, VectorField, leray, to_physical, to_spectral

__all__ = [
    "RemainderState",
    "RemainderTrajectory",
    "WeightSeries",
    "VappTrajectory",
    "Ns3dStepper",
    "RemainderStepper",
    "ns3d_step",
    "remainder_rhs",
    "solve_remainder",
    "weight_Veps",
    "veps_value",
    "h12_sq",
    "h12_dissipation_rate",
    "write_remainder_csv",
]

DEFAULT_CEILING = 1e3


# ---------------------------------------------------------------------------
# norms used on the fly
# ---------------------------------------------------------------------------
def _abs_k_weight(grid: Grid, power: float) -> np.ndarray:
    k2 = grid.k_sq
    safe = np.where(k2 == 0.0, 1.0, k2)
    return np.where(k2 == 0.0, 0.0, safe ** (0.5 * power)) * grid.multiplicity


def h12_sq(grid: Grid, u: np.ndarray, weight: np.ndarray | None = None) -> float:
    """``||u||^2_{H^{1/2}}`` over nonzero modes."""
    if weight is None:
        weight = _abs_k_weight(grid, 1.0)
    return float(grid.volume * (weight * np.abs(u) ** 2).sum())


def h12_dissipation_rate(grid: Grid, u: np.ndarray, weight: np.ndarray | None = None) -> float:
    """``||grad u||^2_{H^{1/2}}``."""
    if weight is None:
        weight = _abs_k_weight(grid, 3.0)
    return float(grid.volume * (weight * np.abs(u) ** 2).sum())


def veps_value(grid: Grid, vapp: np.ndarray, vphys: np.ndarray | None = None,
               grad_phys: np.ndarray | None = None) -> float:
    """``||v||^2_{L^inf} + ||grad v||^2_{L^inf_v L^2_h}`` on the collocation grid."""
    if vphys is None:
        vphys = to_physical(grid, vapp)
    if grad_phys is None:
        K1, K2, K3 = grid.Kd
        grad_phys = to_physical(grid, np.concatenate([1j * K1 * vapp, 1j * K2 * vapp, 1j * K3 * vapp]))
    linf_sq = float((vphys**2).sum(axis=0).max())
    cell_h = grid.L1 * grid.L2 / (grid.n1 * grid.n2)
    planes = (grad_phys**2).sum(axis=(0, 1, 2)) * cell_h
    return linf_sq + float(planes.max())


# ---------------------------------------------------------------------------
# steppers
# ---------------------------------------------------------------------------
_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))
_SLOT = {(i, j): n for n, (i, j) in enumerate(_PAIRS)} | {(j, i): n for n, (i, j) in enumerate(_PAIRS)}


def flux_divergence(grid: Grid, a: np.ndarray, b: np.ndarray, c: np.ndarray | None = None,
                    d: np.ndarray | None = None) -> np.ndarray:
    """Dealiased ``div(a (x) b + c (x) d)`` from physical 3-component fields.

    The tensor must be symmetric, which holds for ``a (x) a`` and for
    ``R (x) (R + V) + V (x) R``.  For divergence-free fields this equals the
    convective form while needing three inverse transforms instead of
    twelve.
    """
    parts = [a[i] * b[j] + (0.0 if c is None else c[i] * d[j]) for i, j in _PAIRS]
    S = to_spectral(grid, np.stack(parts)) * grid.dealias_mask
    K = grid.Kd
    return np.stack([sum(1j * K[j] * S[_SLOT[i, j]] for j in range(3)) for i in range(3)])


def _courant(grid: Grid, dt: float, phys: np.ndarray) -> float:
    K1, K2, K3 = grid.Kd
    kmax = max(float(np.abs(K).max()) for K in (K1, K2, K3))
    return dt * float(np.sqrt((phys**2).sum(axis=0)).max()) * kmax


def _nan_guard(arr: np.ndarray, what: str, t: float) -> None:
    if not np.isfinite(arr).all():
        raise NumericalError(f"non-finite {what} at t={t:.6g}", t=t)


class Ns3dStepper:
    """Integrating-factor Heun stepper for 3D Navier-Stokes."""

    def __init__(self, grid: Grid, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.dt = grid, dt
        self.E = np.exp(-dt * grid.k_sq)
        self.last_courant = 0.0

    def rhs(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.grid
        uphys = to_physical(g, u * g.dealias_mask)
        return -leray(g, flux_divergence(g, uphys, uphys)), uphys

    def step(self, u: np.ndarray, t: float = 0.0) -> np.ndarray:
        dt, E = self.dt, self.E
        k1, uphys = self.rhs(u)
        self.last_courant = _courant(self.grid, dt, uphys)
        if self.last_courant >= 1.0:
            warnings.warn(f"3D Courant number {self.last_courant:.2f} at t={t:.4g}", CFLWarning, stacklevel=2)
        ustar = E * (u + dt * k1)
        k2, _ = self.rhs(ustar)
        out = E * (u + 0.5 * dt * k1) + 0.5 * dt * k2
        _nan_guard(out, "velocity", t + dt)
        return out


@dataclass(eq=False)
class BackgroundFields:
    """A :class:`Background` with the physical arrays the remainder stepper reuses."""

    t: float
    vapp: np.ndarray
    vphys: np.ndarray
    forcing_proj: np.ndarray
    grid: Grid | None = None

    @cached_property
    def grad_phys(self) -> np.ndarray:
        # only the weight V needs it, so it is built on first use
        return _grad_phys(self.grid, self.vapp)

    @classmethod
    def from_background(cls, grid: Grid, bg: Background) -> "BackgroundFields":
        return cls.from_arrays(grid, bg.t, bg.vapp, bg.forcing)

    @classmethod
    def from_arrays(cls, grid: Grid, t: float, vapp: np.ndarray, forcing: np.ndarray) -> "BackgroundFields":
        return cls(t, vapp, to_physical(grid, vapp * grid.dealias_mask), -leray(grid, forcing), grid)


def remainder_rhs_array(grid: Grid, R: np.ndarray, bg: BackgroundFields) -> tuple[np.ndarray, np.ndarray]:
    Rphys = to_physical(grid, R * grid.dealias_mask)
    # R . grad R + V . grad R + R . grad V = div(R (x) (R + V) + V (x) R)
    flux = flux_divergence(grid, Rphys, Rphys + bg.vphys, bg.vphys, Rphys)
    return -leray(grid, flux) + bg.forcing_proj, Rphys


class RemainderStepper:
    """Integrating-factor Heun stepper for the remainder equation."""

    def __init__(self, grid: Grid, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.dt = grid, dt
        self.E = np.exp(-dt * grid.k_sq)
        self.last_courant = 0.0

    def step(self, R: np.ndarray, bg0: BackgroundFields, bg1: BackgroundFields, t: float = 0.0) -> np.ndarray:
        dt, E = self.dt, self.E
        k1, Rphys = remainder_rhs_array(self.grid, R, bg0)
        self.last_courant = _courant(self.grid, dt, Rphys + bg0.vphys)
        if self.last_courant >= 1.0:
            warnings.warn(f"remainder Courant number {self.last_courant:.2f} at t={t:.4g}", CFLWarning, stacklevel=2)
        Rstar = E * (R + dt * k1)
        k2, _ = remainder_rhs_array(self.grid, Rstar, bg1)
        out = E * (R + 0.5 * dt * k1) + 0.5 * dt * k2
        _nan_guard(out, "remainder", t + dt)
        return out


def ns3d_step(u: VectorField, dt: float) -> VectorField:
    """One integrating-factor Heun step of 3D Navier-Stokes."""
    if u.ncomp != 3 or u.grid.n3 == 1:
        raise ValueError("expected a 3-component field on a 3D grid")
    return VectorField(u.grid, Ns3dStepper(u.grid, dt).step(np.asarray(u.coeffs)))


def remainder_rhs(R: VectorField, v_app_t: VectorField, F_t: VectorField) -> VectorField:
    """``-P(R . grad R + v_app . grad R + R . grad v_app) - P F``.

    ``F_t`` is the forcing of the approximate solution, so ``R = 0`` gives ``-P F``.
    """
    grid = R.grid
    if v_app_t.grid != grid or F_t.grid != grid:
        raise ValueError("grid mismatch")
    bg = BackgroundFields.from_arrays(grid, 0.0, np.asarray(v_app_t.coeffs), np.asarray(F_t.coeffs))
    return VectorField(grid, remainder_rhs_array(grid, np.asarray(R.coeffs), bg)[0])


# ---------------------------------------------------------------------------
# weights
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class VappTrajectory:
    """Approximate solution sampled on the fast grid."""

    grid: Grid
    times: np.ndarray
    coeffs: np.ndarray


@dataclass(frozen=True, eq=False)
class WeightSeries:
    """``V(t)``, its running integral ``I(t)`` and the weight ``exp(-lam I)``."""

    times: np.ndarray
    V: np.ndarray
    I: np.ndarray
    lam: float

    @property
    def weight(self) -> np.ndarray:
        return np.exp(-self.lam * self.I)

    def weighted(self, norms) -> np.ndarray:
        """``exp(-lam I(t)) * norms(t)``."""
        return self.weight * np.asarray(norms)


def cumulative_trapezoid(times: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.zeros(len(times))
    if len(times) > 1:
        out[1:] = np.cumsum(0.5 * np.diff(times) * (values[1:] + values[:-1]))
    return out


def weight_Veps(v_app_traj: VappTrajectory, lam: float) -> WeightSeries:
    """Weight series of an approximate solution; ``lam`` must be positive."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    grid = v_app_traj.grid
    V = np.array([veps_value(grid, c) for c in v_app_traj.coeffs])
    times = np.asarray(v_app_traj.times, dtype=float)
    return WeightSeries(times, V, cumulative_trapezoid(times, V), float(lam))


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class RemainderState:
    t: float
    R: VectorField
    norm_h12: float
    dissipation_h12: float


@dataclass(eq=False)
class RemainderTrajectory:
    """Remainder diagnostics on every step and states on the save cadence.

    ``norm_h12`` and ``dissipation_h12`` are sampled at ``times``;
    ``state_times``/``states`` hold the saved fields.  ``blowup`` is set when
    the norm passed ``ceiling`` and the run stopped early.
    """

    grid: Grid
    eps: float
    times: np.ndarray
    norm_h12: np.ndarray
    dissipation_h12: np.ndarray
    V: np.ndarray
    state_times: np.ndarray
    states: np.ndarray
    blowup: bool = False
    ceiling: float = math.inf
    crosscheck: np.ndarray | None = None
    direct: np.ndarray | None = None
    vapp_final: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    def weights(self, lam: float) -> WeightSeries:
        if not lam > 0:
            raise ValueError("lambda must be positive")
        return WeightSeries(self.times, self.V, cumulative_trapezoid(self.times, self.V), float(lam))

    def state(self, i: int) -> RemainderState:
        t = float(self.state_times[i])
        j = int(np.argmin(np.abs(self.times - t)))
        return RemainderState(t, VectorField(self.grid, self.states[i]), float(self.norm_h12[j]), float(self.dissipation_h12[j]))

    @property
    def sup_norm_h12(self) -> float:
        return float(self.norm_h12.max())

    def rows(self, lam: float = 1.0):
        ws = self.weights(lam)
        for i, t in enumerate(self.times):
            yield (float(t), float(self.norm_h12[i]), float(self.dissipation_h12[i]), float(ws.weight[i]),
                   float(ws.weight[i] * self.norm_h12[i]))


def solve_remainder(v_traj, w_traj, eps: float, T: float, dt: float, fast: Grid | None = None,
                    cross_validate: bool = False, save_every: int | None = None,
                    ceiling: float = DEFAULT_CEILING, tol: float | None = None) -> RemainderTrajectory:
    """Evolve ``R`` from zero against the background built from the two trajectories.

    With ``cross_validate`` the full system is evolved as well from
    ``u0 = v_app(0)`` and ``crosscheck[i] = ||u - v_app - R||_{L^2}`` is
    recorded at every step; if ``tol`` is given a final discrepancy above it
    raises ``AssertionError``.  Crossing ``ceiling`` times the initial
    ``H^{1/2}`` norm of ``v_app`` sets ``blowup`` and stops the run.
    """
    params = _params_for(w_traj.grid, eps, fast)
    params = EpsParams(params.eps, params.slow, params.fast, T, dt)
    grid = params.fast
    nsteps = n_steps(T, dt)
    save_every = nsteps if save_every is None else save_every
    t0 = float(max(v_traj.times[0], w_traj.times[0]))

    def background(t):
        bg = compute_background(params, v_traj.at(t), w_traj.at(t), t)
        return BackgroundFields.from_background(grid, bg)

    w12 = _abs_k_weight(grid, 1.0)
    w32 = _abs_k_weight(grid, 3.0)
    bg0 = background(t0)
    limit = ceiling * math.sqrt(h12_sq(grid, bg0.vapp, w12))
    R = np.zeros_like(bg0.vapp)
    stepper = RemainderStepper(grid, dt)
    direct = Ns3dStepper(grid, dt) if cross_validate else None
    u = np.array(bg0.vapp) if cross_validate else None
    times, norms, diss, Vs = [t0], [0.0], [0.0], [veps_value(grid, bg0.vapp, bg0.vphys, bg0.grad_phys)]
    cross = [0.0] if cross_validate else None
    stimes, states = [t0], [R.copy()]
    rate = 0.0
    blowup = False
    for n in range(nsteps):
        t = t0 + n * dt
        bg1 = background(t + dt)
        R = stepper.step(R, bg0, bg1, t)
        new_rate = h12_dissipation_rate(grid, R, w32)
        diss.append(diss[-1] + 0.5 * dt * (rate + new_rate))
        rate = new_rate
        norms.append(math.sqrt(h12_sq(grid, R, w12)))
        Vs.append(veps_value(grid, bg1.vapp, bg1.vphys, bg1.grad_phys))
        times.append(t + dt)
        if cross_validate:
            u = direct.step(u, t)
            d = u - bg1.vapp - R
            cross.append(math.sqrt(float(grid.volume * (grid.multiplicity * np.abs(d) ** 2).sum())))
        bg0 = bg1
        if (n + 1) % save_every == 0 or n + 1 == nsteps:
            stimes.append(t + dt)
            states.append(R.copy())
        if limit > 0 and norms[-1] > limit:
            blowup = True
            stimes.append(t + dt)
            states.append(R.copy())
            break
    traj = RemainderTrajectory(
        grid, eps, np.array(times), np.array(norms), np.array(diss), np.array(Vs),
        np.array(stimes), np.array(states), blowup, limit,
        None if cross is None else np.array(cross), u, bg0.vapp,
    )
    if cross_validate and tol is not None and traj.crosscheck[-1] >= tol:
        raise AssertionError(f"direct and remainder solutions differ by {traj.crosscheck[-1]:.3e} >= {tol:.3e}")
    return traj


def write_remainder_csv(traj: RemainderTrajectory, path, lam: float = 1.0) -> None:
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "norm_h12", "dissipation_h12", "weight", "weighted_norm"])
            for row in traj.rows(lam):
                w.writerow([repr(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc
