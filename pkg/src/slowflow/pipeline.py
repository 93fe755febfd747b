"""
Lockstep driver for an eps ladder.

The slice flow does not depend on ``eps``, so one slice stack is advanced
and, at every time level, each ``eps`` point advances its corrector, builds
its background and advances its remainder (and optionally the full
solution).  Nothing is stored per step except scalar diagnostics.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .assembly import EpsParams, SlowShared, compute_background
from .errors import NumericalError
from .ns2d import Ns2dStepper, SliceFamily, n_steps
from .remainder import (
    BackgroundFields,
    DEFAULT_CEILING,
    Ns3dStepper,
    RemainderStepper,
    _abs_k_weight,
    cumulative_trapezoid,
    h12_dissipation_rate,
    h12_sq,
    veps_value,
)
from .spectral import VectorField, divergence
from .transport import TransportStepper

__all__ = ["PointResult", "run_lockstep", "FORCING_COMPONENTS"]

FORCING_COMPONENTS = ("pressure", "linear", "nonlinear", "total")


@dataclass
class PointResult:
    """Diagnostics of one ``eps`` point.

    ``forcing_norms[c]`` is ``||F_c||_{L^2([0,T]; H^{-1/2})}`` (trapezoid on
    every step).  ``series`` holds per-step arrays ``t``, ``norm_h12``,
    ``dissipation_h12`` and ``V``.
    """

    eps: float
    forcing_norms: dict
    sup_norm_h12: float
    final_norm_h12: float
    dissipation_h12: float
    I_final: float
    weight_final: float
    blowup: bool
    failed: str | None
    runtime: float
    steps: int
    t_final: float
    crosscheck: float | None = None
    series: dict = field(default_factory=dict)
    final: dict = field(default_factory=dict)


class _Point:
    def __init__(self, params: EpsParams, w0: np.ndarray, shared0: SlowShared, lam: float,
                 ceiling: float, direct: bool, keep_final: bool, remainder: bool = True,
                 diagnostics: bool = True):
        self.params = params
        self.diagnostics = diagnostics
        self.with_remainder = remainder
        self.lam = lam
        self.keep_final = keep_final
        fast = params.fast
        self.wstep = TransportStepper(params.slow, params.eps, params.dt)
        self.rstep = RemainderStepper(fast, params.dt)
        self.ustep = Ns3dStepper(fast, params.dt) if direct else None
        self.w = np.array(w0)
        self.fw = _abs_k_weight(fast, -1.0)
        self.w12 = _abs_k_weight(fast, 1.0)
        self.w32 = _abs_k_weight(fast, 3.0)
        bg = compute_background(params, shared0.stack, self.w, 0.0, shared=shared0)
        self.bgf = BackgroundFields.from_background(fast, bg)
        self.R = np.zeros_like(bg.vapp)
        self.u = np.array(bg.vapp) if direct else None
        self.limit = ceiling * math.sqrt(h12_sq(fast, bg.vapp, self.w12))
        self.fsq = self._forcing_sq(bg)
        self.fint = {c: 0.0 for c in FORCING_COMPONENTS}
        self.rate = 0.0
        self.t = [0.0]
        self.norm = [0.0]
        self.diss = [0.0]
        self.V = [veps_value(fast, bg.vapp, self.bgf.vphys, self.bgf.grad_phys)]
        self.blowup = False
        self.failed: str | None = None
        self.active = True
        self.elapsed = 0.0
        self.steps = 0

    def _forcing_sq(self, bg) -> dict:
        fast = self.params.fast
        parts = {"pressure": bg.pressure, "linear": bg.linear, "nonlinear": bg.nonlinear, "total": bg.forcing}
        return {c: float(fast.volume * (self.fw * np.abs(a) ** 2).sum()) for c, a in parts.items()}

    def advance(self, t: float, sh0: SlowShared, sh1: SlowShared) -> None:
        start = time.perf_counter()
        params, dt, fast = self.params, self.params.dt, self.params.fast
        self.w = self.wstep.step(self.w, sh0.vhat, sh1.vhat, t, sh0.vphys, sh1.vphys)
        bg1 = compute_background(params, sh1.stack, self.w, t + dt, shared=sh1)
        bgf1 = BackgroundFields.from_background(fast, bg1)
        if self.with_remainder:
            self.R = self.rstep.step(self.R, self.bgf, bgf1, t)
        if self.ustep is not None:
            self.u = self.ustep.step(self.u, t)
        self.bgf = bgf1
        self.steps += 1
        if not self.diagnostics:
            self.elapsed += time.perf_counter() - start
            return
        fsq = self._forcing_sq(bg1)
        for c in FORCING_COMPONENTS:
            self.fint[c] += 0.5 * dt * (self.fsq[c] + fsq[c])
        self.fsq = fsq
        rate = h12_dissipation_rate(fast, self.R, self.w32)
        self.diss.append(self.diss[-1] + 0.5 * dt * (self.rate + rate))
        self.rate = rate
        self.norm.append(math.sqrt(h12_sq(fast, self.R, self.w12)))
        self.V.append(veps_value(fast, bgf1.vapp, bgf1.vphys, bgf1.grad_phys))
        self.t.append(t + dt)
        if self.limit > 0 and self.norm[-1] > self.limit:
            self.blowup = True
            self.active = False
        self.elapsed += time.perf_counter() - start

    def result(self) -> PointResult:
        if not self.diagnostics:
            self.t.append(self.t[-1] + self.steps * self.params.dt)
            self.V.append(self.V[0])
        times = np.array(self.t)
        V = np.array(self.V)
        I = cumulative_trapezoid(times, V)
        cross = None
        final = {}
        if self.u is not None:
            d = self.u - self.bgf.vapp - self.R
            grid = self.params.fast
            cross = math.sqrt(float(grid.volume * (grid.multiplicity * np.abs(d) ** 2).sum()))
        if self.keep_final:
            final = {"R": self.R, "vapp": self.bgf.vapp, "w": self.w}
            if self.u is not None:
                final["u"] = self.u
        return PointResult(
            eps=self.params.eps,
            forcing_norms={c: math.sqrt(v) for c, v in self.fint.items()},
            sup_norm_h12=float(max(self.norm)),
            final_norm_h12=float(self.norm[-1]),
            dissipation_h12=float(self.diss[-1]),
            I_final=float(I[-1]),
            weight_final=float(math.exp(-self.lam * I[-1])),
            blowup=self.blowup,
            failed=self.failed,
            runtime=self.elapsed,
            steps=self.steps,
            t_final=float(times[-1]),
            crosscheck=cross,
            series={"t": times, "norm_h12": np.array(self.norm), "dissipation_h12": np.array(self.diss), "V": V},
            final=final,
        )


def run_lockstep(v0: SliceFamily, w0: VectorField, points: list[EpsParams], lam: float = 1.0,
                 ceiling: float = DEFAULT_CEILING, direct: bool = False,
                 keep_final: bool = False, remainder: bool = True,
                 diagnostics: bool = True) -> tuple[list[PointResult], dict]:
    """Run every ``eps`` point against one slice flow.

    All points must share the slow grid, ``T`` and ``dt``.  With
    ``remainder=False`` only the corrector, background and forcing norms are
    computed (remainder diagnostics stay zero).  Returns the per-point
    results (in the order given) and slice-flow diagnostics.  With
    ``diagnostics=False`` the per-step norms, forcing integrals and weight are
    skipped and only the final states and crosscheck are meaningful; the
    blow-up ceiling is then not monitored.
    """
    if not points:
        raise ValueError("no eps points")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    slow, T, dt = points[0].slow, points[0].T, points[0].dt
    for p in points:
        if p.slow != slow or p.T != T or p.dt != dt:
            raise ValueError("eps points must share the slow grid, T and dt")
    if w0.grid != slow or w0.ncomp != 3:
        raise ValueError("w0 must be a 3-component field on the slow grid")
    scale = max(float(np.abs(w0.coeffs).max()), 1e-300)
    if np.abs(divergence(slow, w0.coeffs)).max() >= 1e-10 * scale:
        raise ValueError("w0 is not divergence free")
    v0.check_solenoidal()
    if v0.coeffs.shape != (2, slow.n1, slow.n2, slow.n3):
        raise ValueError("slice family does not match the slow grid")
    nsteps = n_steps(T, dt)
    g2 = slow.horizontal()
    vstep = Ns2dStepper(g2, dt)
    stack = np.array(v0.coeffs)
    sh0 = SlowShared.build(slow, stack)
    runners = []
    for p in points:
        runners.append(_Point(p, np.asarray(w0.coeffs), sh0, lam, ceiling, direct, keep_final, remainder, diagnostics))
    slice_error = None
    for n in range(nsteps):
        t = n * dt
        try:
            stack = vstep.step(stack, t)
        except NumericalError as exc:
            slice_error = f"slice flow: {exc}"
            break
        sh1 = SlowShared.build(slow, stack)
        for r in runners:
            if not r.active:
                continue
            try:
                r.advance(t, sh0, sh1)
            except (NumericalError, FloatingPointError, ValueError) as exc:
                r.failed = f"{type(exc).__name__}: {exc}"
                r.active = False
        sh0 = sh1
        if not any(r.active for r in runners):
            break
    if slice_error is not None:
        for r in runners:
            if r.failed is None:
                r.failed = slice_error
    results = [r.result() for r in runners]
    return results, {"steps": nsteps, "final_stack": stack}
