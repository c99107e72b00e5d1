"""P1 triangulations of the unit disc, ellipses and star-shaped polygons.

The generator places ``6 i`` equally spaced nodes on ring ``i = 1..N`` of
radius ``i/N`` (plus the centre) and stitches consecutive rings greedily,
always closing the triangle with the shorter new diagonal. Other domains are
images of this disc mesh under ``(x, y) -> (a x, b y)`` or a radial map.
Boundary nodes carry their parameter angle ``theta`` (the disc angle).
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, MeshError, OrientationError, ParseError, ResourceError, TopologyError

__all__ = [
    "Mesh",
    "MAX_NODES",
    "mesh_disc",
    "mesh_ellipse",
    "mesh_star",
    "mesh_polygon",
    "save_mesh",
    "load_mesh",
    "validate_mesh",
]

#: default cap on generated node counts
MAX_NODES = 500_000


@dataclass(frozen=True, eq=False)
class Mesh:
    """Triangulation with an ordered (counter-clockwise) boundary loop.

    ``boundary_nodes[k]`` has parameter ``boundary_theta[k]`` (increasing
    along the loop); ``boundary_edges[k] = (boundary_nodes[k], boundary_nodes[k+1])``.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    boundary_theta: np.ndarray
    h_target: float = float("nan")
    geometry: dict = field(default_factory=lambda: {"kind": "file"})

    def __post_init__(self):
        for name, dt in (("nodes", float), ("triangles", np.int64), ("boundary_nodes", np.int64), ("boundary_theta", float)):
            a = np.array(getattr(self, name), dtype=dt)
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    @property
    def boundary_edges(self):
        b = self.boundary_nodes
        return np.stack([b, np.roll(b, -1)], axis=1)

    def signed_areas(self):
        p = self.nodes[self.triangles]
        e1, e2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def area(self):
        return float(self.signed_areas().sum())

    def edges(self):
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        return np.unique(np.sort(e, axis=1), axis=0)

    def edge_lengths(self):
        e = self.edges()
        return np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1)

    def angles(self):
        """Interior angles (radians), shape (nT, 3)."""
        p = self.nodes[self.triangles]
        out = np.empty(self.triangles.shape)
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            c = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            out[:, i] = np.arccos(np.clip(c, -1.0, 1.0))
        return out

    def min_angle_deg(self):
        return float(np.degrees(self.angles().min()))

    def boundary_normals(self):
        """Outward unit normals of the boundary edges."""
        e = self.boundary_edges
        t = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        n = np.stack([t[:, 1], -t[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1, keepdims=True)

    def boundary_lengths(self):
        e = self.boundary_edges
        return np.linalg.norm(self.nodes[e[:, 1]] - self.nodes[e[:, 0]], axis=1)

    def curve_point(self, theta):
        """Exact boundary point with parameter ``theta`` when the geometry is known."""
        g = self.geometry
        th = np.asarray(theta, dtype=float)
        if g["kind"] in ("disc", "ellipse"):
            a, b = g.get("a", 1.0), g.get("b", 1.0)
            return np.stack([a * np.cos(th), b * np.sin(th)], axis=-1)
        if g["kind"] == "polygon":
            r = _polygon_radius(np.asarray(g["vertices"]), th)
            return np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
        k, w = self.locate_boundary(th)
        return _lerp_nodes(self, k, w)

    def locate_boundary(self, theta):
        """Boundary loop position of parameter ``theta``.

        Returns ``(k, w)``: the parameter lies between loop nodes ``k`` and
        ``k+1`` (cyclic) at fraction ``w``.
        """
        th = np.mod(np.atleast_1d(np.asarray(theta, dtype=float)), 2 * math.pi)
        bt = self.boundary_theta
        ext = np.concatenate([bt, [bt[0] + 2 * math.pi]])
        shifted = np.where(th < bt[0], th + 2 * math.pi, th)
        k = np.clip(np.searchsorted(ext, shifted, side="right") - 1, 0, bt.size - 1)
        w = (shifted - ext[k]) / (ext[k + 1] - ext[k])
        if np.ndim(theta) == 0:
            return int(k[0]), float(w[0])
        return k, w

    def distance_to_boundary(self, p):
        """Euclidean distance from point(s) to the boundary polygon."""
        P = np.atleast_2d(np.asarray(p, dtype=float))
        e = self.boundary_edges
        A, B = self.nodes[e[:, 0]], self.nodes[e[:, 1]]
        AB = B - A
        L2 = np.sum(AB * AB, axis=1)
        AP = P[:, None, :] - A[None]
        s = np.clip(np.sum(AP * AB[None], axis=2) / L2[None], 0.0, 1.0)
        D = np.linalg.norm(AP - s[..., None] * AB[None], axis=2).min(axis=1)
        return float(D[0]) if np.ndim(p) == 1 else D

    def contains(self, p):
        """Point-in-polygon test against the boundary loop (even-odd rule)."""
        P = np.atleast_2d(np.asarray(p, dtype=float))
        e = self.boundary_edges
        A, B = self.nodes[e[:, 0]], self.nodes[e[:, 1]]
        x, y = P[:, 0:1], P[:, 1:2]
        cond = (A[None, :, 1] > y) != (B[None, :, 1] > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = A[None, :, 0] + (y - A[None, :, 1]) * (B[None, :, 0] - A[None, :, 0]) / (B[None, :, 1] - A[None, :, 1])
        inside = (np.sum(cond & (x < xint), axis=1) % 2) == 1
        return bool(inside[0]) if np.ndim(p) == 1 else inside


def _lerp_nodes(mesh, k, w):
    bn = mesh.boundary_nodes
    k = np.asarray(k)
    a = mesh.nodes[bn[k]]
    b = mesh.nodes[bn[(k + 1) % bn.size]]
    w = np.asarray(w)[..., None]
    return (1 - w) * a + w * b


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _ring_count(h, scale=1.0):
    if not (0.0 < h <= 0.5):
        raise DomainError(f"mesh size must lie in (0, 0.5], got {h}")
    return int(math.ceil(scale / h - 1e-12))


def _check_cap(N, cap):
    n_nodes = 3 * N * (N + 1) + 1
    if n_nodes > cap:
        raise ResourceError(f"mesh would have {n_nodes} nodes, above the cap of {cap}")


def _disc_rings(N, sweeps=2):
    """Unit-disc nodes/triangles with ``N`` rings; returns (nodes, tris, loop, theta).

    ``sweeps`` Laplacian smoothing passes on interior nodes soften the six
    sector lines of the ring structure (they otherwise spoil boundary flux
    accuracy at the sector corners).
    """
    pts = [(0.0, 0.0)]
    rings = [np.array([0])]
    for i in range(1, N + 1):
        n = 6 * i
        th = 2 * math.pi * np.arange(n) / n
        r = i / N
        start = len(pts)
        if i == N:
            pts.extend(zip(np.cos(th), np.sin(th)))
        else:
            pts.extend(zip(r * np.cos(th), r * np.sin(th)))
        rings.append(np.arange(start, start + n))
    P = np.array(pts)
    tris = []
    for j in range(6):
        o = rings[1]
        tris.append((0, o[j], o[(j + 1) % 6]))
    for i in range(2, N + 1):
        inner, outer = rings[i - 1], rings[i]
        ni, no = inner.size, outer.size
        a = b = 0
        while a < ni or b < no:
            ia, ia1 = inner[a % ni], inner[(a + 1) % ni]
            ob, ob1 = outer[b % no], outer[(b + 1) % no]
            if a >= ni:
                adv_inner = False
            elif b >= no:
                adv_inner = True
            else:
                d_inner = np.sum((P[ob] - P[ia1]) ** 2)
                d_outer = np.sum((P[ia] - P[ob1]) ** 2)
                adv_inner = d_inner < d_outer
            if adv_inner:
                tris.append((ia, ob, ia1))
                a += 1
            else:
                tris.append((ia, ob, ob1))
                b += 1
    T = np.array(tris, dtype=np.int64)
    # enforce counter-clockwise orientation
    p = P[T]
    area = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (p[:, 1, 1] - p[:, 0, 1]) * (p[:, 2, 0] - p[:, 0, 0])
    neg = area < 0
    T[neg] = T[neg][:, [0, 2, 1]]
    loop = rings[N]
    theta = 2 * math.pi * np.arange(loop.size) / loop.size
    if sweeps:
        e = np.concatenate([T[:, [0, 1]], T[:, [1, 2]], T[:, [2, 0]]])
        e = np.unique(np.sort(e, axis=1), axis=0)
        n = P.shape[0]
        adj = sp.coo_matrix((np.ones(2 * len(e)), (np.r_[e[:, 0], e[:, 1]], np.r_[e[:, 1], e[:, 0]])), shape=(n, n)).tocsr()
        deg = np.asarray(adj.sum(axis=1)).ravel()
        inner = np.ones(n, dtype=bool)
        inner[loop] = False
        for _ in range(sweeps):
            P[inner] = (adj @ P)[inner] / deg[inner, None]
    return P, T, loop, theta


def mesh_disc(h, cap=MAX_NODES):
    """Unit-disc mesh with edge lengths about ``h``."""
    N = _ring_count(h)
    _check_cap(N, cap)
    P, T, loop, theta = _disc_rings(N)
    return Mesh(P, T, loop, theta, float(h), {"kind": "disc", "a": 1.0, "b": 1.0})


def mesh_ellipse(a, b, h, cap=MAX_NODES):
    """Mesh of ``(x/a)^2 + (y/b)^2 <= 1``; boundary parameter ``(a cos t, b sin t)``."""
    if a <= 0 or b <= 0:
        raise DomainError("semi-axes must be positive")
    N = _ring_count(h, max(a, b))
    _check_cap(N, cap)
    P, T, loop, theta = _disc_rings(N)
    Q = P * np.array([a, b])
    Q[loop, 0] = a * np.cos(theta)
    Q[loop, 1] = b * np.sin(theta)
    return Mesh(Q, T, loop, theta, float(h), {"kind": "ellipse", "a": float(a), "b": float(b)})


def mesh_star(radius, h, cap=MAX_NODES, geometry=None):
    """Mesh of the star-shaped domain ``{r < radius(theta)}``.

    ``radius`` is a vectorised callable of the angle; the disc mesh is mapped
    radially so boundary nodes land on the curve.
    """
    t = np.linspace(0, 2 * math.pi, 721)
    rmax = float(np.max(radius(t)))
    if not np.all(radius(t) > 0):
        raise DomainError("radius function must be positive")
    N = _ring_count(h, rmax)
    while True:
        _check_cap(N, cap)
        P, T, loop, theta = _disc_rings(N)
        ang = np.arctan2(P[:, 1], P[:, 0])
        rho = np.linalg.norm(P, axis=1)
        Q = (rho * radius(ang))[:, None] * np.stack([np.cos(ang), np.sin(ang)], axis=1)
        Q[loop] = radius(theta)[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        mesh = Mesh(Q, T, loop, theta, float(h), geometry or {"kind": "star"})
        # the radial map can stretch edges; add rings until the size bound holds
        if mesh.edge_lengths().max() <= 1.5 * h:
            break
        N += max(1, N // 10)
    if np.any(mesh.signed_areas() <= 0):
        raise MeshError("radial map folded the mesh; domain is too far from a disc")
    return mesh


def _polygon_radius(vertices, theta):
    """Distance from the origin to a star-shaped polygon along direction ``theta``."""
    V = np.asarray(vertices, dtype=float)
    A = V
    B = np.roll(V, -1, axis=0)
    th = np.atleast_1d(theta)
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    best = np.full(th.size, np.inf)
    for a, b in zip(A, B):
        e = b - a
        den = d[:, 0] * (-e[1]) - d[:, 1] * (-e[0])
        with np.errstate(divide="ignore", invalid="ignore"):
            r = (a[0] * (-e[1]) - a[1] * (-e[0])) / den
            s = (d[:, 0] * a[1] - d[:, 1] * a[0]) / den
        ok = (np.abs(den) > 1e-14) & (r > 0) & (s >= -1e-12) & (s <= 1 + 1e-12)
        best = np.where(ok & (r < best), r, best)
    if not np.all(np.isfinite(best)):
        raise DomainError("polygon is not star-shaped with respect to the origin")
    return best if np.ndim(theta) else float(best[0])


def mesh_polygon(vertices, h, cap=MAX_NODES):
    """Mesh of a polygon that is star-shaped with respect to the origin."""
    V = np.asarray(vertices, dtype=float)
    if V.ndim != 2 or V.shape[1] != 2 or V.shape[0] < 3:
        raise DomainError("polygon needs >= 3 vertices")
    x, y = V[:, 0], V[:, 1]
    if 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y) <= 0:
        raise DomainError("polygon vertices must be counter-clockwise")
    radius = lambda t: _polygon_radius(V, t)
    return mesh_star(radius, h, cap, {"kind": "polygon", "vertices": V.tolist()})


# ---------------------------------------------------------------------------
# validation and files
# ---------------------------------------------------------------------------


def validate_mesh(mesh):
    """Check orientation and that boundary edges form the single outer loop."""
    if np.any(mesh.triangles < 0) or np.any(mesh.triangles >= mesh.n_nodes):
        raise TopologyError("triangle references a missing node")
    areas = mesh.signed_areas()
    if np.any(areas <= 0):
        bad = int(np.argmax(areas <= 0))
        raise OrientationError(f"triangle {bad} is clockwise or degenerate")
    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    uniq, counts = np.unique(und, axis=0, return_counts=True)
    if np.any(counts > 2):
        raise TopologyError("an edge is shared by more than two triangles")
    free = {tuple(e) for e in uniq[counts == 1]}
    loop = {tuple(sorted(e)) for e in mesh.boundary_edges.tolist()}
    if len(mesh.boundary_nodes) != len(set(mesh.boundary_nodes.tolist())):
        raise TopologyError("boundary loop visits a node twice")
    if loop - free:
        raise TopologyError("boundary edge is not a free triangle edge (dangling)")
    if free - loop:
        raise TopologyError("free triangle edges missing from the boundary loop")
    # loop direction must follow the triangles (counter-clockwise)
    dset = {tuple(e) for e in directed.tolist()}
    if not all(tuple(e) in dset for e in mesh.boundary_edges.tolist()):
        raise OrientationError("boundary loop is not counter-clockwise")
    return True


def _fmt(x):
    return format(float(x), ".17g")


def save_mesh(mesh, path):
    """Write ``mesh-v1``: header, node lines ``x y theta|*``, triangles, boundary edges."""
    theta = {int(n): t for n, t in zip(mesh.boundary_nodes, mesh.boundary_theta)}
    out = [f"mesh-v1 {mesh.n_nodes} {mesh.n_triangles} {len(mesh.boundary_nodes)}"]
    for i, (x, y) in enumerate(mesh.nodes):
        out.append(f"{_fmt(x)} {_fmt(y)} {_fmt(theta[i]) if i in theta else '*'}")
    out += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    out += [f"{i} {j}" for i, j in mesh.boundary_edges]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")


def _order_loop(edges, line0):
    succ = {}
    for n, (i, j) in enumerate(edges):
        if i in succ:
            raise TopologyError(f"line {line0 + n}: node {i} starts two boundary edges")
        succ[i] = j
    start = edges[0][0]
    loop, cur = [start], succ.get(start)
    while cur is not None and cur != start:
        loop.append(cur)
        cur = succ.get(cur)
        if len(loop) > len(edges):
            break
    if cur is None:
        raise TopologyError("boundary edges do not close into a loop (dangling edge)")
    if len(loop) != len(edges):
        raise TopologyError("boundary edges form more than one loop")
    return loop


def load_mesh(path, validate=True):
    """Read a ``mesh-v1`` file; malformed content raises with the line number."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty mesh file", line=1)
    head = lines[0].split()
    if len(head) != 4 or head[0] != "mesh-v1":
        raise ParseError("expected header 'mesh-v1 nV nT nB'", line=1)
    try:
        nV, nT, nB = (int(v) for v in head[1:])
    except ValueError:
        raise ParseError("header counts must be integers", line=1) from None
    if len(lines) < 1 + nV + nT + nB:
        raise ParseError("file ends before all declared records", line=len(lines) + 1)
    nodes, thetas = [], {}
    for i in range(nV):
        no = 2 + i
        parts = lines[no - 1].split()
        if len(parts) not in (2, 3):
            raise ParseError("node line needs 'x y [theta|*]'", line=no)
        try:
            x, y = float(parts[0]), float(parts[1])
            if len(parts) == 3 and parts[2] != "*":
                thetas[i] = float(parts[2])
        except ValueError:
            raise ParseError("non-numeric node entry", line=no) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise ParseError("non-finite coordinate", line=no)
        nodes.append((x, y))

    def ints(no, count):
        parts = lines[no - 1].split()
        if len(parts) != count:
            raise ParseError(f"expected {count} integers", line=no)
        try:
            v = [int(p) for p in parts]
        except ValueError:
            raise ParseError("non-integer index", line=no) from None
        if any(k < 0 or k >= nV for k in v):
            raise ParseError("node index out of range", line=no)
        return v

    tris = [ints(2 + nV + i, 3) for i in range(nT)]
    first_edge = 2 + nV + nT
    edges = [tuple(ints(first_edge + i, 2)) for i in range(nB)]
    if nB < 3:
        raise TopologyError("boundary loop needs at least three edges")
    loop = _order_loop(edges, first_edge)
    P = np.array(nodes)
    theta = np.array([thetas.get(n, math.atan2(P[n, 1], P[n, 0])) for n in loop])
    theta = np.mod(theta, 2 * math.pi)
    # rotate so the parameter increases from the smallest value
    k0 = int(np.argmin(theta))
    loop = loop[k0:] + loop[:k0]
    theta = np.concatenate([theta[k0:], theta[:k0]])
    if np.any(np.diff(theta) <= 0):
        raise TopologyError("boundary parameter must increase along the loop")
    mesh = Mesh(P, np.array(tris, dtype=np.int64).reshape(-1, 3), np.array(loop), theta)
    if validate:
        validate_mesh(mesh)
    return mesh
