"""Self-checks of the numerical building blocks with a pass/fail report."""

import math
import time
from dataclasses import asdict, dataclass

import numpy as np

from .fem import assemble, extract_flux, solve_forward
from .mesh import mesh_disc
from .observe import SensorSet, relative_l2
from .sources import Constant, PointSource
from .specfun import bessel_root, gauss_legendre_panels, root_table
from .spectral import build_modeset, flux_trace_spectral, mode_values, uniqueness_probe, verify_poisson_identity, weyl_ratios

__all__ = ["Check", "POISSON_PAIRS", "run_checks", "LEVELS"]

LEVELS = ("quick", "full")

# (polar source, boundary angle); the first pair is the reference configuration
POISSON_PAIRS = (((0.4, 2.0), 1.7), ((0.4, 2.0), 2.0), ((0.0, 0.0), 0.4), ((0.5, math.pi), 0.0), ((0.6, 1.0), 3.0))


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""
    seconds: float = 0.0

    def to_dict(self):
        d = asdict(self)
        d["passed"] = bool(d["passed"])
        return d


def _polar(r, th):
    return np.array([r * math.cos(th), r * math.sin(th)])


def check_bessel_roots(count=20, orders=range(0, 11)):
    worst = max(float(root_table(b, count).residuals().max()) for b in orders)
    return Check("bessel_root_residual", worst < 1e-12, worst, 1e-12, f"orders 0..{max(orders)}, {count} roots each")


def check_mcmahon():
    gaps = [abs(bessel_root(0.0, l) - (l - 0.25) * math.pi) for l in (5, 10, 20, 40)]
    ok = gaps[1] < 0.01 and all(a > b for a, b in zip(gaps[:-1], gaps[1:]))
    return Check("mcmahon_gap", ok, gaps[1], 0.01, "order 0 at l=10; gaps at l=5,10,20,40 decreasing")


def check_gram(K=6, L=6):
    ms = build_modeset(2, K, L)
    r, wr = gauss_legendre_panels(0.0, 1.0, 8)
    t = np.linspace(0.0, 2 * math.pi, 64, endpoint=False)
    R, Th = np.meshgrid(r, t, indexing="ij")
    pts = np.stack([R * np.cos(Th), R * np.sin(Th)], axis=-1).reshape(-1, 2)
    w = (wr * r)[:, None].repeat(t.size, axis=1).ravel() * (2 * math.pi / t.size)
    V = mode_values(ms, pts)
    dev = float(np.max(np.abs(V.T @ (w[:, None] * V) - np.eye(len(ms)))))
    return Check("gram_identity", dev < 1e-6, dev, 1e-6, f"disc modes K,L <= {K}")


def check_weyl(K=20):
    ratio = float(weyl_ratios(build_modeset(2, K, K))[-1])
    # leading Weyl constant on the unit disc is 4; the boundary term lowers it
    return Check("weyl_ratio", 2.5 < ratio < 4.5, ratio, 4.0, "lam_n / n at the completeness cut, expected in (2.5, 4.5)")


def check_poisson(sizes, threshold):
    res = {}
    for K in sizes:
        ms = build_modeset(2, K, K)
        res[K] = [verify_poisson_identity(ms, _polar(*p), z).rel_residual for p, z in POISSON_PAIRS]
    top = res[sizes[-1]]
    worst = max(top)
    decreasing = all(
        b < a or a < 1e-12 for s, t in zip(sizes[:-1], sizes[1:]) for a, b in zip(res[s], res[t])
    )
    detail = "; ".join(f"K=L={K}: max {max(v):.2e}" for K, v in res.items())
    return Check(f"poisson_identity_K{sizes[-1]}", worst < threshold and decreasing, worst, threshold, detail)


def check_reflection(K=20):
    ms = build_modeset(2, K, K)
    times = np.linspace(0.0, 1.0, 51)
    s1 = PointSource(tuple(_polar(0.4, 2.0)), Constant(2.0))
    s2 = PointSource((s1.xy[0], -s1.xy[1]), Constant(2.0))
    anti = uniqueness_probe(ms, s1, s2, [0.0, math.pi], times)
    generic = uniqueness_probe(ms, s1, s2, [1.7, 2.0], times)
    return [
        Check("reflection_antipodal", anti < 1e-10, anti, 1e-10, "mirrored sources, sensors 0 and pi"),
        Check("reflection_generic", generic > 1e-4, generic, 1e-4, "mirrored sources, sensors 1.7 and 2.0 (must exceed)"),
    ]


def check_cross_solver(h, Nt, threshold, K=40):
    src = PointSource.from_polar(0.4, 2.0, Constant(2.0))
    sens = SensorSet((1.7, 2.0))
    S = assemble(mesh_disc(h))
    sol = solve_forward(S, src, Nt)
    ref = flux_trace_spectral(build_modeset(2, K, K), src, sens, sol.times).values
    err = float(relative_l2(extract_flux(S, sol, sens).values, ref, sol.times).max())
    return Check(f"cross_solver_h{h:g}", err < threshold, err, threshold, f"relative L2 on (0.05, 1), Nt={Nt}")


def run_checks(level="quick"):
    """Run the checks of ``level``; returns a list of Check."""
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    jobs = [
        check_bessel_roots,
        check_mcmahon,
        check_gram,
        check_weyl,
        (lambda: check_poisson((10, 20), 1e-3)) if level == "quick" else (lambda: check_poisson((10, 20, 40), 1e-4)),
        check_reflection,
        lambda: check_cross_solver(0.04, 300, 0.05),
    ]
    if level == "full":
        jobs.append(lambda: check_cross_solver(0.02, 600, 0.02))
    out = []
    for job in jobs:
        t0 = time.perf_counter()
        res = job()
        res = res if isinstance(res, list) else [res]
        dt = (time.perf_counter() - t0) / len(res)
        for c in res:
            c.seconds = dt
        out += res
    return out
