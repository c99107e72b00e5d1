"""Command-line driver: ``heatsource {forward,invert,verify,reproduce,mesh}``.

Exit codes: 0 success, 1 a check failed, 2 usage or input error, 3 numerical failure.
"""

import argparse
import csv
import json
import os
import sys
import time

from .config import PRESETS, ConfigError, load_config, preset
from .errors import DegenerateConfigurationError, HeatSourceError, InversionError, NumericalError
from .experiments import coarse_forward, fine_data, run_single, run_table, spectral_data, write_table_csv
from .mesh import mesh_disc, mesh_ellipse, save_mesh
from .observe import add_noise, load_trace, relative_l2, save_trace
from .verify import run_checks

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2, 3


def _common(p, experiment=True):
    p.add_argument("--config", help="YAML experiment file (may name a preset)")
    if experiment:
        p.add_argument("--experiment", choices=sorted(PRESETS), help="start from a named experiment")
    p.add_argument("--seed", type=int, help="noise seed (non-negative integer)")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--solver", choices=("spectral", "fem", "both"), help="forward solver")
    p.add_argument("--threads", type=int, default=1, help="parallel independent runs")


def build_parser():
    ap = argparse.ArgumentParser(prog="heatsource", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="simulate the fine-grid flux trace of the configured source")
    _common(p)

    p = sub.add_parser("invert", help="reconstruct the source from a trace file")
    _common(p)
    p.add_argument("--trace", required=True, help="flux trace CSV on a grid nested with the coarse grid")
    p.add_argument("--delta", type=float, default=0.0, help="extra multiplicative noise applied before inverting")

    p = sub.add_parser("verify", help="self-checks with a JSON report")
    _common(p, experiment=False)
    p.add_argument("--level", choices=("quick", "full"), default="quick")

    p = sub.add_parser("reproduce", help="run an experiment at its noise levels and write the table")
    _common(p, experiment=False)
    p.add_argument("experiment", nargs="*", help=f"named experiments: {', '.join(sorted(PRESETS))} or all (or use --config)")
    p.add_argument("--deltas", type=float, nargs="+", help="override the noise levels")

    p = sub.add_parser("mesh", help="generate and save a mesh")
    _common(p, experiment=False)
    p.add_argument("--domain", choices=("disc", "ellipse"), default="disc")
    p.add_argument("--h", type=float, default=0.04)
    p.add_argument("--a", type=float, default=1.2)
    p.add_argument("--b", type=float, default=0.8)
    p.add_argument("--name", default="mesh.txt", help="output file name inside --out")
    return ap


def _resolve(args, default="constant"):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(getattr(args, "experiment", None) or default)
    over = {}
    if args.seed is not None:
        over["noise"] = {"seed": args.seed}
    if args.solver is not None:
        over["solver"] = args.solver
    return cfg.with_overrides(**over) if over else cfg


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _dump(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _echo(cfg):
    return [f"config {json.dumps(cfg.raw, sort_keys=True)}", f"seed {cfg['noise']['seed']}"]


def _log(msg):
    print(msg, file=sys.stderr)


def cmd_forward(args):
    cfg = _resolve(args)
    out = _outdir(args)
    traces = {}
    if cfg["solver"] in ("fem", "both"):
        traces["fem"] = fine_data(cfg)
    if cfg["solver"] in ("spectral", "both"):
        traces["spectral"] = spectral_data(cfg)
    for name, tr in traces.items():
        path = os.path.join(out, f"{cfg.name}_{name}.csv")
        save_trace(tr, path, _echo(cfg))
        _log(f"wrote {path} ({tr.Nt + 1} rows x {len(tr.sensors)} sensors)")
    if len(traces) == 2:
        a, b = traces["fem"], traces["spectral"]
        summary = {
            "relative_l2_window": [0.05, cfg["T"]],
            "relative_l2": [float(v) for v in relative_l2(a.values, b.values, a.times, (0.05, cfg["T"]))],
            "max_abs_difference": float(abs(a.values - b.values).max()),
            "config": cfg.raw,
            "seed": cfg["noise"]["seed"],
        }
        path = os.path.join(out, f"{cfg.name}_comparison.json")
        _dump(summary, path)
        _log(f"wrote {path}")
    return EXIT_OK


def _history_csv(res, path, cfg):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in _echo(cfg):
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["iteration", "misfit", "grad_norm"])
        for i, (f, g) in enumerate(zip(res.misfit_history, res.grad_norm_history)):
            w.writerow([i, format(f, ".17g"), format(g, ".17g")])


def cmd_invert(args):
    cfg = _resolve(args)
    if not os.path.isfile(args.trace):
        raise FileNotFoundError(f"trace file not found: {args.trace}")
    data = load_trace(args.trace)
    if abs(data.T - cfg["T"]) > 1e-12 * cfg["T"]:
        raise ConfigError("T", f"trace spans [0, {data.T}] but the configuration has T={cfg['T']}")
    if data.Nt % cfg["coarse"]["Nt"] != 0:
        raise ConfigError("coarse.Nt", f"trace has Nt={data.Nt}, not a multiple of coarse.Nt={cfg['coarse']['Nt']}")
    if len(data.sensors) != len(cfg["sensors"]) or any(
        abs(a - b) > 1e-12 for a, b in zip(data.sensors.angles, cfg["sensors"])
    ):
        raise ConfigError("sensors", f"trace sensors {list(data.sensors.angles)} differ from the configuration")
    seed = cfg["noise"]["seed"]
    if args.delta > 0:
        data = add_noise(data, args.delta, seed)
    delta = args.delta or float(data.delta)
    res = run_single(cfg, 0.0, seed, data, coarse_forward(cfg))
    res.config_echo["delta"] = delta
    res.config_echo["trace"] = os.path.abspath(args.trace)
    out = _outdir(args)
    base = os.path.join(out, f"{cfg.name}_invert")
    payload = {**res.to_dict(), "config": cfg.raw}
    _dump(payload, base + ".json")
    _history_csv(res, base + "_history.csv", cfg)
    _log(f"wrote {base}.json and {base}_history.csv; estimate {res.estimate()}")
    return EXIT_OK


def cmd_verify(args):
    checks = run_checks(args.level)
    report = {
        "level": args.level,
        "passed": all(c.passed for c in checks),
        "checks": [c.to_dict() for c in checks],
    }
    path = os.path.join(_outdir(args), f"verify_{args.level}.json")
    _dump(report, path)
    for c in checks:
        _log(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.measured:.3e} (threshold {c.threshold:.1e})")
    _log(f"wrote {path}")
    return EXIT_OK if report["passed"] else EXIT_CHECK


def cmd_reproduce(args):
    if args.config and args.experiment:
        raise ConfigError("experiment", "give named experiments or --config, not both")
    if not args.config and not args.experiment:
        raise ConfigError("experiment", "name at least one experiment or give --config")
    names = sorted(PRESETS) if "all" in args.experiment else args.experiment
    for n in names:
        if n not in PRESETS:
            raise ConfigError("experiment", f"unknown experiment {n!r}; choose from {sorted(PRESETS)} or all")
    out = _outdir(args)
    for cfg in [load_config(args.config)] if args.config else [preset(n) for n in names]:
        name = cfg.name
        over = {"noise": {"seed": args.seed}} if args.seed is not None else {}
        if args.solver is not None:
            over["solver"] = args.solver
        if args.deltas:
            over.setdefault("noise", {})["deltas"] = list(args.deltas)
        cfg = cfg.with_overrides(**over) if over else cfg
        t0 = time.perf_counter()
        rows, results = run_table(cfg, workers=max(1, args.threads))
        seed = cfg["noise"]["seed"]
        write_table_csv(rows, os.path.join(out, f"{name}_table.csv"), cfg, seed)
        for res in results:
            d = res.config_echo["delta"]
            _dump({**res.to_dict(), "config": cfg.raw}, os.path.join(out, f"{name}_delta{d:g}.json"))
        _log(f"{name}: {len(results)} runs in {time.perf_counter() - t0:.1f} s -> {out}/{name}_table.csv")
    return EXIT_OK


def cmd_mesh(args):
    m = mesh_disc(args.h) if args.domain == "disc" else mesh_ellipse(args.a, args.b, args.h)
    out = _outdir(args)
    path = os.path.join(out, args.name)
    save_mesh(m, path)
    info = {
        "config": {"domain": args.domain, "h": args.h, **({"a": args.a, "b": args.b} if args.domain == "ellipse" else {})},
        "seed": args.seed,
        "nodes": m.n_nodes,
        "triangles": m.n_triangles,
        "boundary_nodes": len(m.boundary_nodes),
        "min_angle_deg": float(m.min_angle_deg()),
        "max_edge": float(m.edge_lengths().max()),
    }
    _dump(info, path + ".json")
    _log(f"wrote {path}: {m.n_nodes} nodes, {m.n_triangles} triangles")
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "invert": cmd_invert,
    "verify": cmd_verify,
    "reproduce": cmd_reproduce,
    "mesh": cmd_mesh,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        _log("error: --threads must be >= 1")
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (NumericalError, InversionError, DegenerateConfigurationError) as exc:
        _log(f"numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (HeatSourceError, OSError, ValueError) as exc:
        _log(f"error: {exc}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
