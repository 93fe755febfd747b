"""
Experiment configuration, initial-data generators, eps sweeps and reports.

Mode lists describe real trigonometric products.  A term
``{"amp": a, "k": [k1, k2, k3], "phase": [p1, p2, p3]}`` stands for
``a * cos(k1 x1 + p1) * cos(k2 x2 + p2) * cos(k3 x3 + p3)`` where the third
coordinate is whatever vertical variable the generator uses; missing
entries default to zero.  A named preset replaces the list:

``{"preset": "bump", "sigma": 0.7, "band": 6, "zero_mean": false}``
    periodized Gaussian centred in the box, truncated to ``|m_j| <= band``,
    optionally with its mean removed;
``{"preset": "random", "band": 3, "seed": 0}``
    random band-limited field (resolution independent).
"""
from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from fractions import Fraction

import numpy as np

from .assembly import EpsParams, build_u0_eps, fast_grid_for
from .errors import ConfigError
from .norms import besov_heat_norm, random_bandlimited
from .ns2d import SliceFamily
from .pipeline import run_lockstep
from .remainder import DEFAULT_CEILING
from .spectral import Grid, ScalarField, VectorField, divergence, make_grid, to_physical, to_spectral

__all__ = [
    "SCHEMA",
    "ExperimentConfig",
    "SweepRecord",
    "FitResult",
    "generate_initial_data",
    "run_sweep",
    "fit_scaling",
    "fit_all",
    "emit_report",
    "default_config",
    "BOUNDS",
]

SCHEMA = "slowflow.experiment/1"
TWO_PI = 2 * math.pi

# measured quantity -> (description, exponent the estimates guarantee)
BOUNDS = {
    "forcing_pressure": ("pressure forcing eps d3 p0, bound exponent 1/3", 1 / 3),
    "forcing_linear": ("second vertical derivative forcing eps^2 d3^2 v^h, bound exponent 1/2", 1 / 2),
    "forcing_nonlinear": ("nonlinear forcing eps F1, bound exponent 1/3", 1 / 3),
    "forcing_total": ("total forcing F, bound exponent 1/3", 1 / 3),
    "remainder_sup_h12": ("remainder sup_t |R|_{H^1/2}, tends to zero (exponent > 0)", 0.0),
}

DEFAULT_PHI = [
    {"amp": 1.0, "k": [1, 1, 1], "phase": [0.0, 0.0, 0.0]},
    {"amp": 0.5, "k": [2, 1, 1], "phase": [0.3, -0.5, 1.1]},
    {"amp": 0.25, "k": [1, 3, 2], "phase": [-0.7, 0.2, 0.4]},
]
DEFAULT_PSI = [
    {"amp": 1.0, "k": [1, 2, 1], "phase": [0.5, 0.0, -0.3]},
    {"amp": 0.5, "k": [2, 1, 2], "phase": [0.0, 0.9, 0.2]},
]


# ---------------------------------------------------------------------------
# mode lists
# ---------------------------------------------------------------------------
def _eval_terms(terms, coords) -> np.ndarray:
    out = np.zeros(np.broadcast_shapes(*(c.shape for c in coords)))
    for term in terms:
        if not isinstance(term, dict) or "k" not in term:
            raise ConfigError(f"bad mode term {term!r}")
        k = list(term["k"]) + [0] * (len(coords) - len(term["k"]))
        ph = list(term.get("phase", [])) + [0.0] * (len(coords) - len(term.get("phase", [])))
        if len(k) != len(coords) or len(ph) != len(coords):
            raise ConfigError(f"mode term {term!r} has too many entries")
        val = float(term.get("amp", 1.0))
        for kj, pj, x in zip(k, ph, coords):
            val = val * np.cos(float(kj) * x + float(pj))
        out = out + val
    return out


def _bump(grid: Grid, sigma: float, band: int, center=None, zero_mean: bool = False) -> np.ndarray:
    """Band-limited periodized Gaussian in the horizontal plane (physical values).

    ``zero_mean`` drops the constant mode, which the heat-sup norm needs to
    be finite on the torus.
    """
    if not sigma > 0 or band < 1:
        raise ConfigError("bump needs sigma > 0 and band >= 1")
    g2 = grid.horizontal()
    x1, x2, _ = g2.mesh()
    c = center if center is not None else (g2.L1 / 2, g2.L2 / 2)
    val = np.zeros(g2.shape)
    for s1 in (-1, 0, 1):
        for s2 in (-1, 0, 1):
            d2 = (x1 - c[0] + s1 * g2.L1) ** 2 + (x2 - c[1] + s2 * g2.L2) ** 2
            val += np.exp(-d2 / (2 * sigma**2))
    coeffs = to_spectral(g2, val)
    m1, m2, _ = g2.mode_index
    coeffs = coeffs * ((np.abs(m1) <= band) & (np.abs(m2) <= band))
    if zero_mean:
        coeffs[0, 0, 0] = 0.0
    return to_physical(g2, coeffs)


def _scalar_2d(spec, grid: Grid) -> np.ndarray:
    """Physical values ``(n1, n2, 1)`` of a horizontal profile."""
    g2 = grid.horizontal()
    if isinstance(spec, dict) and "preset" in spec:
        kind = spec["preset"]
        if kind == "bump":
            return _bump(g2, float(spec.get("sigma", 0.7)), int(spec.get("band", 6)), spec.get("center"),
                         bool(spec.get("zero_mean", False)))
        if kind == "random":
            rng = np.random.default_rng(int(spec.get("seed", 0)))
            c = random_bandlimited(g2, 1, int(spec.get("band", 3)), rng)[0]
            return to_physical(g2, c)
        raise ConfigError(f"unknown preset {kind!r}")
    x1, x2, _ = g2.mesh()
    return _eval_terms(_terms(spec), (x1, x2))


def _terms(spec):
    if isinstance(spec, dict) and "terms" in spec:
        return spec["terms"]
    if isinstance(spec, list):
        return spec
    raise ConfigError(f"expected a mode list or preset, got {spec!r}")


def _scalar_3d(spec, grid: Grid) -> np.ndarray:
    """Physical values on a 3D grid; presets are extended constantly in x3."""
    if isinstance(spec, dict) and "preset" in spec:
        if spec["preset"] == "random":
            rng = np.random.default_rng(int(spec.get("seed", 0)))
            return to_physical(grid, random_bandlimited(grid, 1, int(spec.get("band", 3)), rng)[0])
        return np.broadcast_to(_scalar_2d(spec, grid), grid.shape).copy()
    x1, x2, x3 = grid.mesh()
    return _eval_terms(_terms(spec), (x1, x2, x3))


def _horizontal_curl(grid: Grid, psi_phys: np.ndarray) -> np.ndarray:
    """Coefficients of ``(-d2 psi, d1 psi)`` (exactly horizontally solenoidal)."""
    c = to_spectral(grid, psi_phys)
    K1, K2, _ = grid.Kd
    return np.stack([-1j * K2 * c, 1j * K1 * c])


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------
def _grid_from(params: dict, n3_key: str = "n3_slow") -> Grid:
    g = params.get("grid", {})
    try:
        return make_grid(g.get("n1", 64), g.get("n2", 64), g.get(n3_key, g.get("n3", 32)),
                         g.get("L1", TWO_PI), g.get("L2", TWO_PI), g.get("L3", TWO_PI))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad grid {g!r}: {exc}") from exc


def _corrector(spec, slow: Grid) -> VectorField:
    spec = spec or {"type": "zero"}
    kind = spec.get("type", "horizontal")
    if kind == "zero":
        return VectorField(slow, np.zeros((3,) + slow.spectral_shape, dtype=complex))
    if kind == "components":
        comps = spec.get("components")
        if not isinstance(comps, list) or len(comps) != 3:
            raise ConfigError("w0 components need three mode lists")
        c = np.stack([to_spectral(slow, _scalar_3d(s, slow)) for s in comps])
    else:
        psi = to_spectral(slow, _scalar_3d(spec.get("psi", DEFAULT_PSI), slow))
        K1, K2, K3 = slow.Kd
        if kind == "horizontal":
            c = np.stack([-1j * K2 * psi, 1j * K1 * psi, np.zeros_like(psi)])
        elif kind == "curl":
            # curl of (0, psi, psi)
            c = np.stack([1j * (K2 - K3) * psi, -1j * K1 * psi, 1j * K1 * psi])
        else:
            raise ConfigError(f"unknown w0 type {kind!r}")
    scale = max(float(np.abs(c).max()), 1e-300)
    if np.abs(divergence(slow, c)).max() >= 1e-10 * scale:
        raise ConfigError("w0 is not divergence free")
    return VectorField(slow, c)


def generate_initial_data(kind: str, params: dict):
    """Build initial data.

    Parameters
    ----------
    kind : {"stream2d", "oscillatory", "product"}
    params : dict
        ``stream2d``: ``grid`` (``n1, n2, n3_slow, L1, L2, L3``), ``phi`` (a
        function of ``(x1, x2, y3)``) and ``w0`` (``{"type": "horizontal" |
        "curl" | "zero" | "components", ...}``).  ``oscillatory``: ``grid``
        (``n3`` modes on a ``2 pi`` fast box), ``eps`` and a horizontal
        ``phi``.  ``product``: ``grid`` (slow box ``L3``), ``eps``,
        ``n3_fast``, horizontal ``f`` and vertical ``g``.

    Returns
    -------
    (SliceFamily, VectorField) for ``stream2d``; a fast-grid
    :class:`VectorField` for ``oscillatory``; a fast-grid
    :class:`ScalarField` for ``product``.

    Raises
    ------
    ConfigError
        Unknown kind or preset, malformed mode lists, inadmissible ``eps`` or a
        divergent ``w0``.
    """
    if kind == "stream2d":
        slow = _grid_from(params)
        if slow.n3 == 1:
            raise ConfigError("stream2d needs a 3D slow grid")
        x1, x2, y3 = slow.mesh()
        phi = params.get("phi", DEFAULT_PHI)
        if isinstance(phi, dict) and "preset" in phi:
            phi_phys = _scalar_3d(phi, slow)
        else:
            phi_phys = _eval_terms(_terms(phi), (x1, x2, y3))
        g2 = slow.horizontal()
        v0 = SliceFamily(g2, _horizontal_curl(g2, phi_phys), slow.L3)
        return v0, _corrector(params.get("w0"), slow)
    if kind == "oscillatory":
        eps = _parse_eps(params.get("eps", 0.25))
        g = dict(params.get("grid", {}))
        g.setdefault("L3", TWO_PI)
        fast = _grid_from({"grid": g}, "n3")
        m = int(round(1 / eps))
        if abs(fast.L3 - TWO_PI) > 1e-12:
            raise ConfigError("oscillatory data lives on a 2 pi vertical box")
        if 2 * m >= fast.n3:
            raise ConfigError(f"n3={fast.n3} cannot resolve vertical index {m}")
        phi = to_spectral(fast.horizontal(), _scalar_2d(params.get("phi", [{"amp": 1.0, "k": [1, 1]}]), fast))
        K1, K2, _ = fast.horizontal().Kd
        prof = to_physical(fast.horizontal(), np.stack([1j * K2 * phi, -1j * K1 * phi]))
        x3 = fast.coords(3)
        u = np.zeros((3,) + fast.shape)
        u[:2] = prof * np.cos(x3 / eps)[None, None, None, :]
        return VectorField(fast, to_spectral(fast, u))
    if kind == "product":
        eps = _parse_eps(params.get("eps", 0.25))
        slow = _grid_from(params)
        try:
            fast = fast_grid_for(slow, eps, params.get("n3_fast", slow.n3))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        f = _scalar_2d(params.get("f", {"preset": "bump"}), fast)
        x3 = fast.coords(3)
        g = _eval_terms(_terms(params.get("g", [{"amp": 1.0, "k": [1]}])), (eps * x3,))
        return ScalarField(fast, to_spectral(fast, f * g[None, None, :]))
    raise ConfigError(f"unknown initial-data kind {kind!r}")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------
def _parse_eps(value) -> float:
    try:
        if isinstance(value, str):
            return float(Fraction(value))
        return float(value)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise ConfigError(f"bad eps {value!r}") from exc


@dataclass
class ExperimentConfig:
    """A reproducible sweep description (JSON with a ``schema`` field)."""

    generator: dict = field(default_factory=lambda: {
        "kind": "stream2d", "phi": DEFAULT_PHI, "w0": {"type": "horizontal", "psi": DEFAULT_PSI}})
    grid: dict = field(default_factory=lambda: {
        "n1": 64, "n2": 64, "n3_slow": 32, "n3_fast": 32, "L1": TWO_PI, "L2": TWO_PI, "L3": TWO_PI})
    eps: list = field(default_factory=lambda: ["1/4", "1/8", "1/16", "1/32"])
    T: float = 1.0
    dt: float = 2e-3
    norms: list = field(default_factory=lambda: ["forcing", "remainder"])
    lam: float = 1.0
    ceiling: float = DEFAULT_CEILING
    outputs: dict = field(default_factory=lambda: {"dir": "sweep_out", "stem": "sweep"})
    seed: int = 0
    schema: str = SCHEMA

    def __post_init__(self):
        self.validate()

    @property
    def eps_values(self) -> list[float]:
        return [_parse_eps(e) for e in self.eps]

    def slow_grid(self) -> Grid:
        return _grid_from({"grid": self.grid})

    def validate(self) -> None:
        if self.schema != SCHEMA:
            raise ConfigError(f"unsupported schema {self.schema!r}, expected {SCHEMA!r}")
        if not isinstance(self.eps, list) or not self.eps:
            raise ConfigError("eps ladder must be a nonempty list")
        try:
            T, dt = float(self.T), float(self.dt)
        except (TypeError, ValueError) as exc:
            raise ConfigError("T and dt must be numbers") from exc
        if not dt > 0 or not T > 0:
            raise ConfigError("T and dt must be positive")
        if abs(T / dt - round(T / dt)) > 1e-9 * max(1.0, T / dt):
            raise ConfigError("T must be a multiple of dt")
        if not float(self.lam) > 0:
            raise ConfigError("lam must be positive")
        unknown = set(self.norms) - {"forcing", "remainder", "besov_u0", "direct"}
        if unknown:
            raise ConfigError(f"unknown norm selections {sorted(unknown)}")
        slow = self.slow_grid()
        if slow.n3 < 2:
            raise ConfigError("slow grid must be 3D")
        n3f = int(self.grid.get("n3_fast", slow.n3))
        eps = self.eps_values
        if len(set(eps)) != len(eps):
            raise ConfigError("duplicate eps values")
        for e in eps:
            try:
                fast_grid_for(slow, e, n3f)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc

    def points(self) -> list[EpsParams]:
        slow = self.slow_grid()
        n3f = int(self.grid.get("n3_fast", slow.n3))
        return [EpsParams.create(e, slow, n3f, float(self.T), float(self.dt)) for e in self.eps_values]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        base = cls()
        merged = {}
        for k, v in data.items():
            default = getattr(base, k)
            merged[k] = {**default, **v} if isinstance(default, dict) and isinstance(v, dict) and k != "generator" else v
        return replace(base, **merged)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data)


def default_config(**overrides) -> ExperimentConfig:
    return ExperimentConfig.from_dict(overrides)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------
@dataclass
class SweepRecord:
    """Scalar outcome of one eps point.

    Forcing norms are ``L^2([0, T]; H^{-1/2})`` on the fast grid; remainder
    norms are ``H^{1/2}``.  ``runtime`` (seconds) is excluded from NDJSON.
    """

    eps: float
    t_horizon: float
    steps: int
    forcing_pressure: float
    forcing_linear: float
    forcing_nonlinear: float
    forcing_total: float
    remainder_sup_h12: float | None
    remainder_final_h12: float | None
    remainder_dissipation_h12: float | None
    veps_integral: float | None
    weight_final: float | None
    besov_u0: float | None
    crosscheck_l2: float | None
    blowup: bool
    failed: str | None
    runtime: float

    def to_dict(self, runtime: bool = True) -> dict:
        d = asdict(self)
        if not runtime:
            d.pop("runtime")
        return d


CSV_COLUMNS = [f.name for f in fields(SweepRecord)]


def _records_from(results, cfg: ExperimentConfig, u0_besov) -> list[SweepRecord]:
    want_r = "remainder" in cfg.norms or "direct" in cfg.norms
    out = []
    for res, b in zip(results, u0_besov):
        out.append(SweepRecord(
            eps=res.eps,
            t_horizon=float(cfg.T),
            steps=res.steps,
            forcing_pressure=res.forcing_norms["pressure"],
            forcing_linear=res.forcing_norms["linear"],
            forcing_nonlinear=res.forcing_norms["nonlinear"],
            forcing_total=res.forcing_norms["total"],
            remainder_sup_h12=res.sup_norm_h12 if want_r else None,
            remainder_final_h12=res.final_norm_h12 if want_r else None,
            remainder_dissipation_h12=res.dissipation_h12 if want_r else None,
            veps_integral=res.I_final if want_r else None,
            weight_final=res.weight_final if want_r else None,
            besov_u0=b,
            crosscheck_l2=res.crosscheck,
            blowup=res.blowup,
            failed=res.failed,
            runtime=res.runtime,
        ))
    return out


def run_sweep(config: ExperimentConfig) -> list[SweepRecord]:
    """Run the eps ladder of ``config``; records are sorted by eps descending.

    Per-eps numerical failures are recorded in ``failed``/``blowup`` and do
    not stop the other points.
    """
    config.validate()
    gen = dict(config.generator)
    kind = gen.pop("kind", "stream2d")
    if kind != "stream2d":
        raise ConfigError("sweeps need stream2d data (slices and corrector)")
    gen["grid"] = config.grid
    v0, w0 = generate_initial_data(kind, gen)
    points = sorted(config.points(), key=lambda p: -p.eps)
    results, _ = run_lockstep(v0, w0, points, lam=float(config.lam), ceiling=float(config.ceiling),
                              direct="direct" in config.norms,
                              remainder="remainder" in config.norms or "direct" in config.norms)
    besov = [None] * len(points)
    if "besov_u0" in config.norms:
        besov = [besov_heat_norm(build_u0_eps(v0, w0, p.eps, p.fast))[0] for p in points]
    return _records_from(results, config, besov)


# ---------------------------------------------------------------------------
# fits
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FitResult:
    field: str
    slope: float
    intercept: float
    r2: float
    n: int


def _select(record, selector):
    if callable(selector):
        return selector(record)
    if isinstance(record, dict):
        return record.get(selector)
    return getattr(record, selector)


def fit_scaling(records, selector) -> tuple[float, float, float]:
    """Least-squares fit of ``log(value)`` against ``log(eps)``.

    Parameters
    ----------
    records : sequence of SweepRecord or dict
    selector : str or callable
        Record field name, or a function of a record returning the value.

    Returns
    -------
    slope, intercept, r2

    Raises
    ------
    ValueError
        Fewer than three usable (positive, finite) points.
    """
    xs, ys = [], []
    for r in records:
        eps = _select(r, "eps")
        val = _select(r, selector)
        if val is None or not np.isfinite(val) or val <= 0 or not eps > 0:
            warnings.warn(f"skipping eps={eps}: value {val!r} is not positive", RuntimeWarning, stacklevel=2)
            continue
        xs.append(math.log(eps))
        ys.append(math.log(val))
    if len(xs) < 3:
        raise ValueError(f"need at least 3 positive points for a fit, got {len(xs)}")
    x, y = np.array(xs), np.array(ys)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_all(records, names=tuple(BOUNDS)) -> dict:
    """Fits for every field in ``names``; fields with too few points map to None."""
    out = {}
    for name in names:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            try:
                s, i, r2 = fit_scaling(records, name)
                n = sum(1 for r in records if (_select(r, name) or 0) > 0)
                out[name] = FitResult(name, s, i, r2, n)
            except ValueError:
                out[name] = None
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------
def _summary(records, fits, horizon) -> str:
    lines = [
        "slowflow sweep summary",
        f"time horizon: [0, {horizon!r}] (a finite measurement window; the estimates are global in time)",
        f"eps ladder: {', '.join(repr(r.eps) for r in records) or '(empty)'}",
        "",
    ]
    for r in records:
        flag = " BLOW-UP" if r.blowup else ""
        flag += f" FAILED ({r.failed})" if r.failed else ""
        lines.append(
            f"eps={r.eps!r}: forcing total {r.forcing_total:.6g}, remainder sup H^1/2 "
            f"{'n/a' if r.remainder_sup_h12 is None else format(r.remainder_sup_h12, '.6g')}, "
            f"runtime {r.runtime:.1f} s{flag}"
        )
    lines.append("")
    for name, (label, bound) in BOUNDS.items():
        fit = fits.get(name)
        if fit is None:
            lines.append(f"{label}: insufficient points for fit")
            continue
        ok = fit.slope > bound if bound == 0 else fit.slope >= bound - 0.05
        verdict = "consistent" if ok else "below bound"
        lines.append(f"{label}: measured {fit.slope:.4f} (r2={fit.r2:.4f}, n={fit.n}) {verdict}")
    return "\n".join(lines) + "\n"


def _ndjson_line(record: SweepRecord) -> str:
    return json.dumps(record.to_dict(runtime=False), sort_keys=True)


def emit_report(records, fits, paths) -> dict:
    """Write the CSV, NDJSON and plain-text summary of a sweep.

    Parameters
    ----------
    records : list of SweepRecord
    fits : dict or None
        Field name -> :class:`FitResult` or None; computed when None.
    paths : dict or str
        ``{"csv": ..., "ndjson": ..., "summary": ...}``, or a directory in
        which ``sweep.csv``, ``sweep.ndjson`` and ``summary.txt`` are written.

    Returns
    -------
    dict of the paths written.
    """
    if isinstance(paths, (str, os.PathLike)):
        d = os.fspath(paths)
        paths = {"csv": os.path.join(d, "sweep.csv"), "ndjson": os.path.join(d, "sweep.ndjson"),
                 "summary": os.path.join(d, "summary.txt")}
    if fits is None:
        fits = fit_all(records)
    horizon = records[0].t_horizon if records else None
    for p in paths.values():
        parent = os.path.dirname(os.path.abspath(p))
        try:
            os.makedirs(parent, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create directory {parent}: {exc}") from exc
    target = None
    try:
        target = paths["csv"]
        with open(target, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for r in records:
                d = r.to_dict()
                w.writerow(["" if d[c] is None else repr(d[c]) if isinstance(d[c], float) else d[c]
                            for c in CSV_COLUMNS])
        target = paths["ndjson"]
        with open(target, "w") as fh:
            for r in records:
                fh.write(_ndjson_line(r) + "\n")
        target = paths["summary"]
        with open(target, "w") as fh:
            fh.write(_summary(records, fits, horizon))
    except OSError as exc:
        raise OSError(f"{target}: {exc.strerror or exc}") from exc
    return dict(paths)
