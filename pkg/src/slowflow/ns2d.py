"""
Two-dimensional Navier-Stokes on a stack of horizontal slices.

The slow vertical coordinate ``y3`` is a pure parameter: every slice is
advanced independently with the integrating-factor Heun scheme

    k1 = N(v_n),  v* = E (v_n + dt k1),  k2 = N(v*),
    v_{n+1} = E (v_n + dt/2 k1) + dt/2 k2,        E = exp(dt lap_h),

where ``N(v) = -P_h T(v . grad_h v)`` is the dealiased, Leray-projected
convective term.  Slice stacks are arrays of shape ``(2, n1, n2, n_slices)``
holding horizontal spectra; a single 2D field is the case ``n_slices == 1``.
"""
from __future__ import annotations

import csv
import math
import os
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import CFLWarning, NumericalError
from .spectral import Grid, ScalarField, VectorField, divergence, leray, to_physical, to_spectral

__all__ = [
    "SliceFamily",
    "SliceState",
    "SliceTrajectory",
    "EnergyRecord",
    "Ns2dStepper",
    "pressure_p0",
    "ns2d_rhs",
    "ns2d_step",
    "solve_slice_family",
    "energy_report",
    "write_energy_csv",
]


# ---------------------------------------------------------------------------
# array kernels
# ---------------------------------------------------------------------------
def advection(grid: Grid, v: np.ndarray) -> tuple[np.ndarray, float]:
    """Dealiased ``v . grad_h v`` and the max speed of the truncated field.

    Evaluated as ``div_h(v (x) v)``, which agrees with the convective form
    for horizontally solenoidal slices and needs fewer transforms.
    """
    K1, K2, _ = grid.Kd
    mask = grid.dealias_mask
    p = to_physical(grid, v * mask)
    s = to_spectral(grid, np.stack([p[0] * p[0], p[0] * p[1], p[1] * p[1]])) * mask
    adv = np.stack([1j * (K1 * s[0] + K2 * s[1]), 1j * (K1 * s[1] + K2 * s[2])])
    vmax = float(np.sqrt(p[0] ** 2 + p[1] ** 2).max())
    return adv, vmax


def rhs_array(grid: Grid, v: np.ndarray) -> tuple[np.ndarray, float]:
    adv, vmax = advection(grid, v)
    return -leray(grid, adv), vmax


def pressure_array(grid: Grid, v: np.ndarray) -> np.ndarray:
    """``(-lap_h)^-1 sum_jk d_j d_k (v^j v^k)`` per slice, shape ``(n1, n2, S)``."""
    K1, K2, _ = grid.Kd
    mask = grid.dealias_mask
    p = to_physical(grid, v * mask)
    prods = to_spectral(grid, np.stack([p[0] * p[0], p[0] * p[1], p[1] * p[1]])) * mask
    num = -(K1 * K1 * prods[0] + 2.0 * K1 * K2 * prods[1] + K2 * K2 * prods[2])
    den = K1**2 + K2**2
    return np.where(den == 0.0, 0.0, num / np.where(den == 0.0, 1.0, den))


def slice_energy(grid: Grid, v: np.ndarray) -> np.ndarray:
    """``||v||^2_{L^2_h}`` per slice."""
    return grid.volume * (np.abs(v) ** 2).sum(axis=(0, 1, 2))


def slice_dissipation_rate(grid: Grid, v: np.ndarray) -> np.ndarray:
    """``||grad_h v||^2_{L^2_h}`` per slice."""
    return grid.volume * (grid.kh_sq * np.abs(v) ** 2).sum(axis=(0, 1, 2))


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SliceFamily:
    """Horizontal velocity fields indexed by the slow vertical coordinate.

    ``coeffs`` has shape ``(2, n1, n2, n_slices)``; slice ``s`` sits at
    ``y3 = s * L3 / n_slices``.
    """

    grid: Grid
    coeffs: np.ndarray
    L3: float = 2 * math.pi

    def __post_init__(self):
        if self.grid.n3 != 1:
            raise ValueError("slices live on a 2D grid")
        c = np.array(self.coeffs, dtype=complex, copy=True)
        if c.ndim != 4 or c.shape[:3] != (2, self.grid.n1, self.grid.n2):
            raise ValueError(f"bad slice stack shape {c.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_physical(cls, grid: Grid, values, L3: float = 2 * math.pi) -> "SliceFamily":
        return cls(grid, to_spectral(grid, np.asarray(values, dtype=float)), L3)

    @property
    def n_slices(self) -> int:
        return self.coeffs.shape[-1]

    @property
    def y3(self) -> np.ndarray:
        return self.L3 * np.arange(self.n_slices) / self.n_slices

    def slice(self, s: int) -> VectorField:
        return VectorField(self.grid, self.coeffs[..., s : s + 1])

    def physical(self) -> np.ndarray:
        return to_physical(self.grid, self.coeffs)

    def max_divergence(self) -> float:
        return float(np.abs(divergence(self.grid, self.coeffs)).max())

    def check_solenoidal(self, tol: float = 1e-10) -> None:
        scale = max(float(np.abs(self.coeffs).max()), 1e-300)
        div = np.abs(divergence(self.grid, self.coeffs)).max(axis=(0, 1))
        bad = np.nonzero(div >= tol * scale)[0]
        if bad.size:
            raise ValueError(f"slices {bad.tolist()} are not horizontally divergence free")


@dataclass(frozen=True, eq=False)
class SliceState:
    t: float
    slices: SliceFamily


@dataclass(frozen=True, eq=False)
class SliceTrajectory:
    """Sampled slice states and the accumulated dissipation per slice.

    ``dissipation[i, s]`` is ``int_0^{times[i]} ||grad_h v||^2_{L^2_h}`` for
    slice ``s``, accumulated by the trapezoidal rule on every time step.
    """

    grid: Grid
    L3: float
    times: np.ndarray
    coeffs: np.ndarray
    dissipation: np.ndarray
    dt: float

    def __len__(self) -> int:
        return len(self.times)

    @property
    def n_slices(self) -> int:
        return self.coeffs.shape[-1]

    def state(self, i: int) -> SliceState:
        return SliceState(float(self.times[i]), SliceFamily(self.grid, self.coeffs[i], self.L3))

    def at(self, t: float) -> np.ndarray:
        """Slice stack at time ``t`` (linear interpolation between samples)."""
        return _interpolate(self.times, self.coeffs, t)

    def energy(self) -> np.ndarray:
        return np.stack([slice_energy(self.grid, c) for c in self.coeffs])


def _interpolate(times: np.ndarray, stack: np.ndarray, t: float) -> np.ndarray:
    tol = 1e-9 * max(1.0, abs(times[-1]))
    if t < times[0] - tol or t > times[-1] + tol:
        raise ValueError(f"t={t} outside trajectory [{times[0]}, {times[-1]}]")
    i = int(np.searchsorted(times, t))
    if i < len(times) and abs(times[i] - t) <= tol:
        return stack[i]
    if i > 0 and abs(times[i - 1] - t) <= tol:
        return stack[i - 1]
    i = min(max(i, 1), len(times) - 1)
    t0, t1 = times[i - 1], times[i]
    a = (t - t0) / (t1 - t0)
    return (1.0 - a) * stack[i - 1] + a * stack[i]


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------
class Ns2dStepper:
    """Integrating-factor Heun stepper for a slice stack."""

    def __init__(self, grid: Grid, dt: float):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid = grid
        self.dt = dt
        self.E = np.exp(-dt * grid.kh_sq)
        K1, K2, _ = grid.Kd
        self.kmax = float(max(np.abs(K1).max(), np.abs(K2).max()))
        self.last_courant = 0.0

    def step(self, v: np.ndarray, t: float = 0.0) -> np.ndarray:
        dt, E = self.dt, self.E
        k1, vmax = rhs_array(self.grid, v)
        self.last_courant = dt * vmax * self.kmax
        if self.last_courant >= 1.0:
            warnings.warn(f"2D Courant number {self.last_courant:.2f} at t={t:.4g}", CFLWarning, stacklevel=2)
        vstar = E * (v + dt * k1)
        k2, _ = rhs_array(self.grid, vstar)
        out = E * (v + 0.5 * dt * k1) + 0.5 * dt * k2
        if not np.isfinite(out).all():
            bad = np.nonzero(~np.isfinite(out).all(axis=(0, 1, 2)))[0]
            raise NumericalError(f"non-finite values in slices {bad.tolist()} at t={t + dt:.6g}", bad, t + dt)
        return out


def _as_2d(v: VectorField) -> VectorField:
    if v.grid.n3 != 1 or v.ncomp != 2:
        raise ValueError("expected a 2-component field on a 2D grid")
    return v


def pressure_p0(v: VectorField) -> ScalarField:
    """Pressure of the 2D flow ``v``: ``(-lap_h)^-1 sum_jk d_j d_k (v^j v^k)``."""
    v = _as_2d(v)
    return ScalarField(v.grid, pressure_array(v.grid, v.coeffs), zero_mean=True)


def ns2d_rhs(v: VectorField) -> VectorField:
    """Leray-projected ``-(v . grad_h v)``; diffusion is left to the stepper."""
    v = _as_2d(v)
    return VectorField(v.grid, rhs_array(v.grid, v.coeffs)[0])


def ns2d_step(v: VectorField, dt: float) -> VectorField:
    """One integrating-factor Heun step of 2D Navier-Stokes."""
    v = _as_2d(v)
    return VectorField(v.grid, Ns2dStepper(v.grid, dt).step(v.coeffs))


def n_steps(T: float, dt: float) -> int:
    if not dt > 0 or T < 0:
        raise ValueError("need dt > 0 and T >= 0")
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not a multiple of dt={dt}")
    return n


def solve_slice_family(v0: SliceFamily, T: float, dt: float, save_every: int = 1) -> SliceTrajectory:
    """Advance every slice to time ``T``, sampling every ``save_every`` steps."""
    v0.check_solenoidal()
    grid = v0.grid
    nsteps = n_steps(T, dt)
    stepper = Ns2dStepper(grid, dt)
    v = np.array(v0.coeffs)
    rate = slice_dissipation_rate(grid, v)
    diss = np.zeros(v0.n_slices)
    times, states, dissip = [0.0], [v.copy()], [diss.copy()]
    for n in range(nsteps):
        v = stepper.step(v, n * dt)
        new_rate = slice_dissipation_rate(grid, v)
        diss = diss + 0.5 * dt * (rate + new_rate)
        rate = new_rate
        if (n + 1) % save_every == 0 or n + 1 == nsteps:
            times.append((n + 1) * dt)
            states.append(v.copy())
            dissip.append(diss.copy())
    return SliceTrajectory(grid, v0.L3, np.array(times), np.array(states), np.array(dissip), dt)


# ---------------------------------------------------------------------------
# energy diagnostics
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class EnergyRecord:
    slice_index: int
    y3: float
    t: float
    energy: float
    dissipation: float
    defect: float


def energy_report(traj: SliceTrajectory) -> list[EnergyRecord]:
    """Relative defect of ``||v(t)||^2 + 2 int_0^t ||grad_h v||^2 = ||v_0||^2`` per slice."""
    if len(traj) == 0:
        raise ValueError("empty trajectory")
    energy = traj.energy()
    e0 = energy[0]
    y3 = traj.L3 * np.arange(traj.n_slices) / traj.n_slices
    out = []
    for i, t in enumerate(traj.times):
        for s in range(traj.n_slices):
            lhs = energy[i, s] + 2.0 * traj.dissipation[i, s]
            defect = abs(lhs - e0[s]) / e0[s] if e0[s] > 0 else abs(lhs)
            out.append(EnergyRecord(s, float(y3[s]), float(t), float(energy[i, s]), float(traj.dissipation[i, s]), float(defect)))
    return out


def write_energy_csv(records, path) -> None:
    fields = ["slice_index", "y3", "t", "energy", "dissipation", "defect"]
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(fields)
            for r in records:
                w.writerow([r.slice_index, repr(r.y3), repr(r.t), repr(r.energy), repr(r.dissipation), repr(r.defect)])
    except OSError as exc:
        raise OSError(f"cannot write {os.fspath(path)!r}: {exc}") from exc
