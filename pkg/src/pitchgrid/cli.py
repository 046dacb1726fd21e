"""Command-line front end.

Exit codes: 0 success, 2 input error, 3 runtime fault. Errors are printed to
stderr as one JSON record per line so that scripts can parse them.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .cosim.engine import SimulationError, run
from .cosim.output import summary_row, write_run_csv, write_summary
from .cosim.scenario import MODES, ScenarioError, load_scenario
from .grid.equivalent import reduce_external, reduced_to_dict, save_reduced
from .grid.fdne import FdneError
from .grid.network import NetworkError, load_network
from .grid.powerflow import PowerFlowError

EXIT_OK, EXIT_INPUT, EXIT_RUNTIME = 0, 2, 3
OUT_ENV = "PITCHGRID_OUT"
DEFAULT_OUT = "pitchgrid_out"

log = logging.getLogger("pitchgrid")


class InputError(Exception):
    def __init__(self, message, field=None, path=None):
        super().__init__(message)
        self.field, self.path = field, path


def _error_record(kind, message, **extra):
    rec = {"error": kind, "message": str(message)}
    rec.update({k: v for k, v in extra.items() if v is not None})
    print(json.dumps(rec, sort_keys=True), file=sys.stderr)


def _out_dir(args):
    out = Path(args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory: {exc}", "out", str(out)) from None
    if not os.access(out, os.W_OK):
        raise InputError("output directory is not writable", "out", str(out))
    return out


def _overrides(args):
    ov = {}
    for key in ("dt", "alpha", "gamma", "seed"):
        val = getattr(args, key, None)
        if val is not None:
            ov[key] = val
    if getattr(args, "mode", None):
        ov["mode"] = args.mode
    if ov.get("seed", 0) < 0 or ov.get("seed", 0) >= 2**64:
        raise InputError("seed must be an unsigned 64-bit integer", "seed")
    return ov


def _load_network(path):
    try:
        return load_network(path)
    except FileNotFoundError:
        raise InputError("file not found", "network", str(path)) from None
    except NetworkError as exc:
        raise InputError(str(exc), "network", str(path)) from None


def _parse_groups(specs):
    if specs is None:
        return None
    try:
        return [[int(b) for b in grp.split(",") if b.strip()] for grp in specs]
    except ValueError:
        raise InputError("groups must be comma-separated bus ids", "groups") from None


# --------------------------------------------------------------------------- commands

def cmd_reduce(args):
    net = _load_network(args.network)
    if args.boundary:
        net.boundary_buses = list(args.boundary)
    out = _out_dir(args)
    try:
        red = reduce_external(net, groups=_parse_groups(args.groups), dt=args.dt or 1e-3,
                              fdne_order=args.fdne_order, max_order=args.max_order,
                              fit_fdne=not args.no_fdne)
    except NetworkError as exc:
        raise InputError(str(exc), "network", str(args.network)) from None
    path = out / f"{net.name}_reduced.json"
    save_reduced(red, path)
    if not args.quiet:
        print(f"aggregate machines: {[g.name or g.bus for g in red.machines]}")
        for (j, k), err in sorted(red.fit_errors.items()):
            print(f"port ({red.boundary[j]}, {red.boundary[k]}): order {red.fdne[(j, k)].order}, "
                  f"fit error {err:.3e}")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_fit_fdne(args):
    net = _load_network(args.network)
    out = _out_dir(args)
    try:
        red = reduce_external(net, dt=args.dt or 1e-3, fdne_order=args.order,
                              max_order=args.max_order)
    except NetworkError as exc:
        raise InputError(str(exc), "network", str(args.network)) from None
    data = reduced_to_dict(red)
    data = {k: data[k] for k in ("boundary", "base_mva", "frequency_hz", "dt", "fdne")}
    path = out / f"{net.name}_fdne.json"
    path.write_text(json.dumps(data, indent=1))
    if not args.quiet:
        for entry in data["fdne"]:
            print(f"port ({red.boundary[entry['row']]}, {red.boundary[entry['col']]}): "
                  f"order {len(entry['a'])}, fit error {entry['fit_error']:.3e}")
        print(f"wrote {path}")
    return EXIT_OK


def _load(args, mode=None, cache=None):
    ov = _overrides(args)
    if mode is not None:
        ov["mode"] = mode
    try:
        return load_scenario(args.scenario, overrides=ov, reduced_cache=cache)
    except ScenarioError as exc:
        raise InputError(exc.message, exc.field, exc.path or str(args.scenario)) \
            from None


def _print_summary(rows):
    keys = ["mode", "status", "max_omega_r_pu", "max_p_over_rated", "max_dbeta_dt_deg_s",
            "min_pcc_voltage_pu", "violations_speed", "violations_power"]
    print("  ".join(f"{k:>18}" for k in keys))
    for row in rows:
        cells = []
        for k in keys:
            v = row.get(k, "")
            cells.append(f"{v:>18.6g}" if isinstance(v, float) else f"{v!s:>18}")
        print("  ".join(cells))


def cmd_run(args):
    sc = _load(args)
    out = _out_dir(args)
    try:
        result = run(sc)
    except (SimulationError, PowerFlowError) as exc:
        _error_record("runtime", exc, scenario=sc.name, step=getattr(exc, "step", None),
                      time=getattr(exc, "time", None))
        return EXIT_RUNTIME
    stem = f"{sc.name}_{sc.controller.mode}"
    csv_path = write_run_csv(result, out / f"{stem}.csv")
    row = summary_row(sc.name, sc.controller.mode, result)
    write_summary([row], out / f"{stem}_summary.csv")
    if not args.quiet:
        _print_summary([row])
        print(f"wrote {csv_path}")
    return EXIT_OK


def _compare_job(scenario):
    try:
        return run(scenario), None
    except (SimulationError, PowerFlowError) as exc:
        return None, str(exc)


def cmd_compare(args):
    cache = {}
    scenarios = [_load(args, mode, cache) for mode in MODES]
    out = _out_dir(args)
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(scenarios))) as pool:
            outcomes = list(pool.map(_compare_job, scenarios))
    else:
        outcomes = [_compare_job(sc) for sc in scenarios]
    rows = []
    for sc, (result, err) in zip(scenarios, outcomes):
        mode = sc.controller.mode
        if result is not None:
            write_run_csv(result, out / f"{sc.name}_{mode}.csv")
        else:
            _error_record("runtime", err, scenario=sc.name, mode=mode)
        rows.append(summary_row(sc.name, mode, result, err))
    path = write_summary(rows, out / f"{scenarios[0].name}_compare_summary.csv")
    if not args.quiet:
        _print_summary(rows)
        print(f"wrote {path}")
    return EXIT_RUNTIME if any(r["status"] != "ok" for r in rows) else EXIT_OK


def cmd_validate(args):
    if not args.scenario and not args.network:
        raise InputError("give --scenario or --network", "scenario")
    if args.network:
        _load_network(args.network)
    if args.scenario:
        sc = _load(args)
        if not args.quiet:
            print(f"{sc.name}: ok ({len(sc.turbines)} turbine(s), {sc.n_steps} steps, "
                  f"mode {sc.controller.mode})")
    elif not args.quiet:
        print("network: ok")
    return EXIT_OK


# --------------------------------------------------------------------------- parser

def _scenario_args(p, mode=True):
    p.add_argument("--scenario", required=True, help="scenario YAML file")
    if mode:
        p.add_argument("--mode", choices=["none", "pi", "str", *MODES],
                       help="controller mode override")
    p.add_argument("--alpha", type=float, help="pole-shift factor in [0, 1]")
    p.add_argument("--gamma", type=float, help="RLS forgetting factor in (0, 1]")
    p.add_argument("--dt", type=float, help="simulation step, s")
    p.add_argument("--seed", type=int, help="seed for synthetic wind (unsigned 64-bit)")


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    common.add_argument("--quiet", action="store_true", help="print errors only")

    parser = argparse.ArgumentParser(prog="pitchgrid",
                                     description="Adaptive pitch control and grid co-simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reduce", parents=[common], help="build a reduced external-grid model")
    p.add_argument("--network", required=True, help="network YAML file")
    p.add_argument("--boundary", type=int, nargs="+", help="boundary bus ids (override)")
    p.add_argument("--groups", nargs="+", help="coherent groups, e.g. 3,4")
    p.add_argument("--dt", type=float, help="FDNE time step, s (default 1e-3)")
    p.add_argument("--fdne-order", type=int, default=8)
    p.add_argument("--max-order", type=int, default=20)
    p.add_argument("--no-fdne", action="store_true", help="static TSA equivalent only")
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("fit-fdne", parents=[common], help="fit boundary FDNEs only")
    p.add_argument("--network", required=True)
    p.add_argument("--dt", type=float)
    p.add_argument("--order", type=int, default=8)
    p.add_argument("--max-order", type=int, default=20)
    p.set_defaults(func=cmd_fit_fdne)

    p = sub.add_parser("run", parents=[common], help="run one scenario")
    _scenario_args(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", parents=[common], help="run none, fixed_pi and adaptive_str")
    _scenario_args(p, mode=False)
    p.add_argument("--jobs", type=int, default=1, help="parallel runs")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", parents=[common], help="check inputs; writes nothing")
    p.add_argument("--scenario")
    p.add_argument("--network")
    p.add_argument("--mode", choices=["none", "pi", "str", *MODES])
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        _error_record("input", exc, field=exc.field, path=exc.path)
        return EXIT_INPUT
    except (FdneError, PowerFlowError, SimulationError) as exc:
        _error_record("runtime", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
