"""Experiment pipeline: fine-mesh data, noise, restriction, coarse inversion, tables.

Data are generated on the fine space-time grid, perturbed by multiplicative
noise there, restricted to the coarse time grid and inverted with the coarse
solver, so the inversion never sees its own discretization.
"""

import csv
import functools
import json
from concurrent.futures import ProcessPoolExecutor

from .config import ExperimentConfig
from .errors import DomainError
from .fem import FemForward, assemble, extract_flux, solve_forward
from .invert import alternate_minimize
from .mesh import load_mesh, mesh_disc, mesh_ellipse
from .observe import SensorSet, add_noise, restrict, uniform_times
from .spectral import SpectralForward, build_modeset, flux_trace_spectral

__all__ = [
    "build_mesh",
    "fem_system",
    "fine_data",
    "spectral_data",
    "coarse_forward",
    "run_single",
    "run_table",
    "table_columns",
    "write_table_csv",
]


@functools.lru_cache(maxsize=8)
def _mesh(kind, a, b, h, path):
    if kind == "disc":
        return mesh_disc(h)
    if kind == "ellipse":
        return mesh_ellipse(a, b, h)
    return load_mesh(path)


def build_mesh(cfg, level):
    dom = cfg["domain"]
    a, b = cfg.axes
    return _mesh(dom["kind"], a, b, float(cfg[level]["h"]), dom.get(level))


@functools.lru_cache(maxsize=8)
def _system(kind, a, b, h, path):
    return assemble(_mesh(kind, a, b, h, path))


def fem_system(cfg, level):
    dom = cfg["domain"]
    a, b = cfg.axes
    return _system(dom["kind"], a, b, float(cfg[level]["h"]), dom.get(level))


def sensors(cfg):
    return SensorSet(tuple(cfg["sensors"]))


def fine_data(cfg):
    """Noise-free fine-grid FEM flux trace for the configured true source."""
    S = fem_system(cfg, "fine")
    sol = solve_forward(
        S, cfg.source, cfg["fine"]["Nt"], cfg["T"], cfg["sigma"], cfg["sampling"], scheme=cfg["scheme"]
    )
    tr = extract_flux(S, sol, sensors(cfg))
    return tr.with_values(tr.values, meta={**tr.meta, "config": cfg.raw})


def spectral_data(cfg, Nt=None):
    if cfg["domain"]["kind"] != "disc":
        raise DomainError("spectral solver supports the unit disc (ball) only")
    ms = build_modeset(2, int(cfg["spectral"]["K"]), int(cfg["spectral"]["L"]))
    times = uniform_times(cfg["T"], Nt or cfg["fine"]["Nt"])
    return flux_trace_spectral(ms, cfg.source, sensors(cfg), times)


def coarse_forward(cfg, solver=None):
    solver = solver or ("fem" if cfg["solver"] == "both" else cfg["solver"])
    if solver == "spectral":
        if cfg["domain"]["kind"] != "disc":
            raise DomainError("spectral solver supports the unit disc (ball) only")
        ms = build_modeset(2, int(cfg["spectral"]["K"]), int(cfg["spectral"]["L"]))
        return SpectralForward(ms, sensors(cfg), uniform_times(cfg["T"], cfg["coarse"]["Nt"]))
    return FemForward(
        fem_system(cfg, "coarse"), sensors(cfg), cfg["coarse"]["Nt"], cfg["T"], cfg["sigma"], cfg["sampling"], cfg["scheme"]
    )


def run_single(cfg, delta, seed=None, data=None, forward=None):
    """One reconstruction at noise level ``delta``; noise is applied on the fine grid."""
    seed = cfg["noise"]["seed"] if seed is None else seed
    data = fine_data(cfg) if data is None else data
    forward = coarse_forward(cfg) if forward is None else forward
    noisy = add_noise(data, float(delta), int(seed))
    obs = restrict(noisy, forward.times)
    res = alternate_minimize(forward, obs, cfg.model, cfg.init, cfg.gn, cfg.pwc, truth=cfg.source, seed=int(seed))
    res.config_echo["experiment"] = cfg.raw
    res.config_echo["delta"] = float(delta)
    return res


def table_columns(cfg):
    kind = cfg.model.kind
    if kind == "constant":
        return ["x1", "x2", "g"]
    if kind == "pwc":
        return ["x1", "x2", "T1", "c1", "c2"]
    if kind == "hat":
        return ["x1", "x2", "e_g"]
    return ["x1", "x2"]


def _exact_row(cfg):
    src = cfg.source
    row = {"x1": src.xy[0], "x2": src.xy[1]}
    amp = src.amplitude
    if cfg.model.kind == "constant":
        row["g"] = amp.value
    if cfg.model.kind == "pwc":
        row["T1"], row["c1"], row["c2"] = amp.breaks[0], amp.values[0], amp.values[1]
    return row


def _estimate_row(res):
    est = res.estimate()
    row = {"x1": est["x1"], "x2": est["x2"]}
    for k in ("g", "T1", "c1", "c2"):
        if k in est:
            row[k] = est[k]
    return row


def _worker(raw, delta, seed, data):
    return run_single(ExperimentConfig(raw), delta, seed, data)


def run_table(cfg, deltas=None, seed=None, workers=1):
    """Reconstructions at each noise level; returns (rows, results).

    With ``workers > 1`` the noise levels run in separate processes; each run
    is independent and seeded, so the results do not depend on ``workers``.
    """
    deltas = cfg["noise"]["deltas"] if deltas is None else deltas
    data = fine_data(cfg)
    cols = table_columns(cfg)
    rows = [{"delta": "", "row": "exact", **{c: _exact_row(cfg).get(c) for c in cols}}]
    if workers > 1 and len(deltas) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(deltas))) as pool:
            results = list(pool.map(_worker, *zip(*[(cfg.raw, d, seed, data) for d in deltas])))
    else:
        forward = coarse_forward(cfg)
        results = [run_single(cfg, d, seed, data, forward) for d in deltas]
    for d, res in zip(deltas, results):
        est = _estimate_row(res)
        rows.append({"delta": d, "row": "estimate", **{c: est.get(c) for c in cols}})
        rows.append({"delta": d, "row": "error", **{c: res.errors.get(c) for c in cols}})
    return rows, results


def write_table_csv(rows, path, cfg=None, seed=None):
    cols = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if cfg is not None:
            fh.write(f"# config {json.dumps(cfg.raw, sort_keys=True)}\n")
            fh.write(f"# seed {seed if seed is not None else cfg['noise']['seed']}\n")
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else (format(v, ".6g") if isinstance(v, float) else v)) for k, v in r.items()})
