"""
Command-line interface.

Every subcommand reads an optional JSON experiment config (``--config``)
and lets flags override its keys.  Exit codes: 0 success, 2 configuration
error, 3 numerical failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings


from .assembly import build_u0_eps, build_vapp, fast_grid_for
from .errors import CFLWarning, ConfigError, NumericalError
from .experiment import ExperimentConfig, emit_report, fit_all, fit_scaling, generate_initial_data, run_sweep
from .norms import (
    AUDIT_KINDS,
    NormRecord,
    besov_heat_norm,
    carleson_term,
    inequality_audit,
    write_audit_csv,
    write_norm_records,
)
from .ns2d import energy_report, solve_slice_family, write_energy_csv
from .pipeline import FORCING_COMPONENTS, run_lockstep
from .remainder import solve_remainder, write_remainder_csv
from .snapshot import read_snapshot, write_snapshot
from .spectral import make_grid
from .transport import TransportState, solve_transport, write_transport_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------
def _eps_list(text: str) -> list[str]:
    return [e.strip() for e in text.split(",") if e.strip()]


def _config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.config}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
    data = dict(data)
    grid = dict(data.get("grid", {}))
    for key in ("n1", "n2", "n3_slow", "n3_fast"):
        val = getattr(args, key, None)
        if val is not None:
            grid[key] = val
    if grid:
        data["grid"] = grid
    for key in ("T", "dt", "seed", "lam", "ceiling"):
        val = getattr(args, key, None)
        if val is not None:
            data[key] = val
    if getattr(args, "eps", None):
        data["eps"] = _eps_list(args.eps)
    if getattr(args, "norms", None):
        data["norms"] = _eps_list(args.norms)
    if getattr(args, "out", None):
        data["outputs"] = {**data.get("outputs", {}), "dir": args.out}
    return ExperimentConfig.from_dict(data)


def _out_dir(cfg: ExperimentConfig) -> str:
    d = cfg.outputs.get("dir", "sweep_out")
    os.makedirs(d, exist_ok=True)
    return d


def _initial(cfg: ExperimentConfig):
    gen = dict(cfg.generator)
    kind = gen.pop("kind", "stream2d")
    if kind != "stream2d":
        raise ConfigError("this command needs stream2d data")
    gen["grid"] = cfg.grid
    return generate_initial_data(kind, gen)


def _single_eps(cfg: ExperimentConfig) -> float:
    eps = cfg.eps_values
    if len(eps) != 1:
        raise ConfigError(f"this command takes one eps value, got {len(eps)} (use --eps)")
    return eps[0]


def _slice_run(cfg):
    v0, w0 = _initial(cfg)
    traj = solve_slice_family(v0, float(cfg.T), float(cfg.dt))
    return v0, w0, traj


def _field_from(args, cfg):
    """Field for the norm commands: a snapshot, or generated initial data."""
    if args.input:
        return read_snapshot(args.input)
    kind = args.kind or "stream2d"
    if kind == "stream2d":
        v0, w0 = _initial(cfg)
        return build_u0_eps(v0, w0, _single_eps(cfg), fast_grid_for(cfg.slow_grid(), _single_eps(cfg),
                                                                   cfg.grid.get("n3_fast")))
    # generator settings only apply when they describe the requested kind
    params = dict(cfg.generator) if cfg.generator.get("kind") == kind else {}
    params.pop("kind", None)
    grid = dict(cfg.grid)
    if kind == "oscillatory":
        grid["n3"] = grid.get("n3_fast", grid.get("n3_slow", 32))
    params.setdefault("grid", grid)
    params.setdefault("eps", _single_eps(cfg))
    return generate_initial_data(kind, params)


def _print_json(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_ns2d(args) -> int:
    cfg = _config(args)
    _, _, traj = _slice_run(cfg)
    recs = energy_report(traj)
    path = os.path.join(_out_dir(cfg), "ns2d_energy.csv")
    write_energy_csv(recs, path)
    worst = max(abs(r.defect) for r in recs)
    _print_json({"csv": path, "max_relative_defect": worst, "slices": traj.coeffs.shape[-1]})
    return EXIT_OK


def cmd_transport(args) -> int:
    cfg = _config(args)
    eps = _single_eps(cfg)
    _, w0, traj = _slice_run(cfg)
    wt = solve_transport(TransportState(0.0, w0, eps), traj, float(cfg.T), float(cfg.dt))
    path = os.path.join(_out_dir(cfg), f"transport_eps{eps!r}.csv")
    write_transport_csv(wt, path)
    _print_json({"csv": path, "eps": eps})
    return EXIT_OK


def cmd_build_vapp(args) -> int:
    cfg = _config(args)
    eps = _single_eps(cfg)
    _, w0, traj = _slice_run(cfg)
    wt = solve_transport(TransportState(0.0, w0, eps), traj, float(cfg.T), float(cfg.dt))
    fast = fast_grid_for(cfg.slow_grid(), eps, cfg.grid.get("n3_fast"))
    t = float(cfg.T) if args.time is None else args.time
    vapp, papp = build_vapp(traj, wt, eps, t, fast)
    d = _out_dir(cfg)
    paths = {"vapp": os.path.join(d, f"vapp_eps{eps!r}_t{t!r}.snap"),
             "papp": os.path.join(d, f"papp_eps{eps!r}_t{t!r}.snap")}
    write_snapshot(paths["vapp"], vapp)
    write_snapshot(paths["papp"], papp)
    _print_json({**paths, "eps": eps, "t": t})
    return EXIT_OK


def cmd_forcing(args) -> int:
    cfg = _config(args)
    v0, w0 = _initial(cfg)
    points = sorted(cfg.points(), key=lambda p: -p.eps)
    results, _ = run_lockstep(v0, w0, points, remainder=False)
    path = os.path.join(_out_dir(cfg), "forcing.ndjson")
    records = [NormRecord(f"forcing_{c}_L2t_Hm12", r.forcing_norms[c], {"component": c}, float(cfg.T), r.eps)
               for r in results for c in FORCING_COMPONENTS]
    write_norm_records(records, path)
    for rec in records:
        print(rec.to_json())
    failed = [r for r in results if r.failed]
    for r in failed:
        print(f"eps={r.eps!r}: {r.failed}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def cmd_remainder(args) -> int:
    cfg = _config(args)
    eps = _single_eps(cfg)
    _, w0, traj = _slice_run(cfg)
    wt = solve_transport(TransportState(0.0, w0, eps), traj, float(cfg.T), float(cfg.dt))
    fast = fast_grid_for(cfg.slow_grid(), eps, cfg.grid.get("n3_fast"))
    rt = solve_remainder(traj, wt, eps, float(cfg.T), float(cfg.dt), fast,
                         cross_validate=args.cross_validate, ceiling=float(cfg.ceiling))
    path = os.path.join(_out_dir(cfg), f"remainder_eps{eps!r}.csv")
    write_remainder_csv(rt, path, float(cfg.lam))
    _print_json({"csv": path, "eps": eps, "sup_norm_h12": rt.sup_norm_h12, "blowup": bool(rt.blowup),
                 "crosscheck": None if rt.crosscheck is None else float(rt.crosscheck[-1])})
    return EXIT_NUMERIC if rt.blowup else EXIT_OK


def cmd_besov(args) -> int:
    cfg = _config(args)
    f = _field_from(args, cfg)
    value, tstar = besov_heat_norm(f, oversample=args.oversample)
    rec = NormRecord("besov_heat_Bm1_inf_inf", value, {"t_star": tstar, "source": args.input or args.kind or "stream2d"})
    print(rec.to_json())
    if args.output:
        write_norm_records([rec], args.output)
    return EXIT_OK


def cmd_carleson(args) -> int:
    cfg = _config(args)
    f = _field_from(args, cfg)
    radii = None if args.radii is None else [float(r) for r in _eps_list(args.radii)]
    value, arg = carleson_term(f, radii=radii, stride=args.stride)
    rec = NormRecord("carleson_term", value, {k: v for k, v in arg.items()}, None, None)
    print(rec.to_json())
    if args.output:
        write_norm_records([rec], args.output)
    return EXIT_OK


def cmd_audit(args) -> int:
    kinds = AUDIT_KINDS if args.kind == "all" else _eps_list(args.kind)
    for k in kinds:
        if k not in AUDIT_KINDS:
            raise ConfigError(f"unknown audit kind {k!r}; choose from {', '.join(AUDIT_KINDS)}")
    if args.samples < 1:
        raise ConfigError("samples must be positive")
    reports = []
    for k in kinds:
        dim3 = k in ("aniso-interp", "trilinear3d", "plancherel")
        grid = make_grid(args.n, args.n, args.n if dim3 else 1)
        reports.append(inequality_audit(k, args.samples, grid, seed=args.seed, band=args.band,
                                        eps=float(args.audit_eps), s=args.s))
    for r in reports:
        _print_json({"kind": r.kind, "samples": r.samples, "max_ratio": r.max_ratio,
                     "resolution": r.resolution, "skipped": r.skipped})
    if args.output:
        write_audit_csv(reports, args.output)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _config(args)
    records = run_sweep(cfg)
    d = _out_dir(cfg)
    stem = cfg.outputs.get("stem", "sweep")
    paths = emit_report(records, None, {"csv": os.path.join(d, f"{stem}.csv"),
                                        "ndjson": os.path.join(d, f"{stem}.ndjson"),
                                        "summary": os.path.join(d, f"{stem}_summary.txt")})
    with open(paths["summary"]) as fh:
        sys.stdout.write(fh.read())
    bad = [r for r in records if r.failed]
    return EXIT_NUMERIC if bad else EXIT_OK


def cmd_fit(args) -> int:
    try:
        with open(args.input) as fh:
            records = [json.loads(line) for line in fh if line.strip()]
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.input}: invalid NDJSON ({exc})") from exc
    fields = _eps_list(args.field) if args.field else None
    if fields is None:
        for name, fit in fit_all(records).items():
            _print_json({"field": name, **({"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2}
                                            if fit else {"error": "insufficient points for fit"})})
        return EXIT_OK
    for name in fields:
        try:
            slope, intercept, r2 = fit_scaling(records, name)
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
        _print_json({"field": name, "slope": slope, "intercept": intercept, "r2": r2})
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--n1", type=int)
    p.add_argument("--n2", type=int)
    p.add_argument("--n3-slow", dest="n3_slow", type=int)
    p.add_argument("--n3-fast", dest="n3_fast", type=int)
    p.add_argument("--eps", help="comma-separated eps values, e.g. 1/4,1/8")
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--lam", type=float)
    p.add_argument("--ceiling", type=float)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slowflow", description="Slowly varying Navier-Stokes experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ns2d", help="solve the slice family, write the energy identity CSV")
    _common(p)
    p.set_defaults(func=cmd_ns2d)

    p = sub.add_parser("transport", help="solve the corrector system, write norm CSV")
    _common(p)
    p.set_defaults(func=cmd_transport)

    p = sub.add_parser("build-vapp", help="write v_app and p_app snapshots at one time")
    _common(p)
    p.add_argument("--time", type=float, help="evaluation time (default T)")
    p.set_defaults(func=cmd_build_vapp)

    p = sub.add_parser("forcing", help="L2_t H^-1/2 norms of the forcing components per eps")
    _common(p)
    p.set_defaults(func=cmd_forcing)

    p = sub.add_parser("remainder", help="solve the remainder system at one eps")
    _common(p)
    p.add_argument("--cross-validate", action="store_true", help="also solve the full system directly")
    p.set_defaults(func=cmd_remainder)

    for name, func in (("besov", cmd_besov), ("carleson", cmd_carleson)):
        p = sub.add_parser(name, help=f"{name} norm of a snapshot or generated data")
        _common(p)
        p.add_argument("--input", help="field snapshot")
        p.add_argument("--kind", choices=["stream2d", "oscillatory", "product"], help="generate data instead")
        p.add_argument("--output", help="append-free NDJSON output path")
        if name == "besov":
            p.add_argument("--oversample", action="store_true")
        else:
            p.add_argument("--radii", help="comma-separated radii")
            p.add_argument("--stride", type=int, default=4)
        p.set_defaults(func=func)

    p = sub.add_parser("audit", help="random-sample audits of the inequalities")
    p.add_argument("--kind", default="all", help=f"'all' or comma list of {', '.join(AUDIT_KINDS)}")
    p.add_argument("--samples", type=int, default=200)
    p.add_argument("--n", type=int, default=16, help="grid points per axis")
    p.add_argument("--band", type=int, default=4)
    p.add_argument("--audit-eps", default="0.25")
    p.add_argument("--s", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", help="CSV path")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("sweep", help="run the eps ladder and write CSV, NDJSON and summary")
    _common(p)
    p.add_argument("--norms", help="comma list of forcing, remainder, besov_u0, direct")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", help="log-log fit of sweep NDJSON fields against eps")
    p.add_argument("input", help="sweep NDJSON")
    p.add_argument("--field", help="comma list of record fields (default: all bounded fields)")
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default", CFLWarning)
            return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError, TypeError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
