"""
Triangle meshes of planar domains with ordered boundary loops.

The disk and annulus generators place vertices on concentric rings.  Every ring
carries a multiple of ``symmetry`` vertices and consecutive rings are stitched
by a merge over exact rational angular positions, so the triangulation is
invariant under rotation by ``2 pi / symmetry``.  With the default
``symmetry = 12`` the Euclidean Steklov pairs ``cos k theta, sin k theta`` for
``k = 1..5`` stay exactly degenerate in the discrete problem.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .fields import Metric, require_spd


class MeshError(ValueError):
    """Invalid mesh topology or geometry."""


class MeshCapacityError(MeshError):
    """The requested resolution exceeds the vertex budget."""


DEFAULT_VERTEX_BUDGET = 400_000


@dataclass(frozen=True)
class Domain:
    """Analytic description of a disk or annulus centred at the origin."""

    kind: str
    radii: tuple[float, ...]

    def snap(self, points: np.ndarray) -> np.ndarray:
        """Project points radially onto the nearest boundary circle."""
        r = np.hypot(points[:, 0], points[:, 1])
        radii = np.asarray(self.radii)
        target = radii[np.argmin(np.abs(r[:, None] - radii[None, :]), axis=1)]
        return points * (target / r)[:, None]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "radii": list(self.radii)}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangle mesh.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (T, 3) int array, counter-clockwise
    boundary_loops : tuple of int arrays; the domain lies to the left of each loop
    boundary_normals : (Nb, 2) unit outward normals, aligned with
        ``np.concatenate(boundary_loops)``
    domain : optional analytic domain used to snap new boundary vertices
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_loops: tuple[np.ndarray, ...]
    boundary_normals: np.ndarray
    domain: Domain | None = None

    @classmethod
    def from_arrays(cls, vertices, triangles, domain: Domain | None = None) -> "Mesh":
        """Build a mesh, orienting triangles and extracting loops and normals."""
        vertices = np.ascontiguousarray(vertices, dtype=float)
        triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        area = signed_areas(vertices, triangles)
        flip = area < 0
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        loops = _boundary_loops(triangles)
        normals = _vertex_normals(vertices, loops)
        for a in (vertices, triangles, normals, *loops):
            a.setflags(write=False)
        mesh = cls(vertices, triangles, tuple(loops), normals, domain)
        mesh.check()
        return mesh

    # derived data -------------------------------------------------------
    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.concatenate(self.boundary_loops)

    @property
    def interior_vertices(self) -> np.ndarray:
        mask = np.ones(len(self.vertices), dtype=bool)
        mask[self.boundary_vertices] = False
        return np.flatnonzero(mask)

    @property
    def h_max(self) -> float:
        e = self.edges()
        return float(np.max(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    @property
    def areas(self) -> np.ndarray:
        return signed_areas(self.vertices, self.triangles)

    def edges(self) -> np.ndarray:
        """Unique undirected edges, sorted lexicographically."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def loop_edges(self, loop: int) -> np.ndarray:
        lp = self.boundary_loops[loop]
        return np.stack([lp, np.roll(lp, -1)], axis=1)

    def check(self) -> None:
        """Raise :class:`MeshError` unless the invariants hold."""
        if np.any(self.areas <= 0):
            raise MeshError("triangle with non-positive area")
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        _, counts = np.unique(und, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        nb = sum(len(lp) for lp in self.boundary_loops)
        if nb != int(np.sum(counts == 1)):
            raise MeshError("boundary edges do not form closed loops")
        if len(np.unique(self.boundary_vertices)) != nb:
            raise MeshError("boundary loops touch each other")
        if not np.allclose(np.linalg.norm(self.boundary_normals, axis=1), 1.0, atol=1e-12):
            raise MeshError("boundary normals not unit length")
        # outward: the normal of each edge points away from its triangle centroid
        owner = _edge_owner(t)
        for k in range(len(self.boundary_loops)):
            for a, b in self.loop_edges(k):
                tri = owner[(int(a), int(b))]
                mid = 0.5 * (self.vertices[a] + self.vertices[b])
                cen = self.vertices[t[tri]].mean(axis=0)
                n = _edge_normal(self.vertices[a], self.vertices[b])
                if np.dot(n, mid - cen) <= 0:
                    raise MeshError("inward boundary normal")
        # stored vertex normals must agree with both incident edge normals
        off = 0
        for k, lp in enumerate(self.boundary_loops):
            p = self.vertices[lp]
            en = np.array([_edge_normal(a, b) for a, b in zip(p, np.roll(p, -1, axis=0))])
            vn = self.boundary_normals[off:off + len(lp)]
            off += len(lp)
            if np.any(np.einsum("ij,ij->i", vn, en) <= 0) or \
                    np.any(np.einsum("ij,ij->i", vn, np.roll(en, 1, axis=0)) <= 0):
                raise MeshError("stored boundary normal points into the domain")


def signed_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    d1, d2 = p1 - p0, p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def _edge_owner(triangles: np.ndarray) -> dict:
    owner = {}
    for k, (a, b, c) in enumerate(triangles.tolist()):
        owner[(a, b)] = k
        owner[(b, c)] = k
        owner[(c, a)] = k
    return owner


def _edge_normal(pa, pb) -> np.ndarray:
    d = pb - pa
    n = np.array([d[1], -d[0]])
    return n / np.linalg.norm(n)


def _boundary_loops(triangles: np.ndarray) -> list[np.ndarray]:
    directed = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    und = np.sort(directed, axis=1)
    _, inv, counts = np.unique(und, axis=0, return_inverse=True, return_counts=True)
    bnd = directed[counts[inv.ravel()] == 1]
    nxt = {}
    for a, b in bnd.tolist():
        if a in nxt:
            raise MeshError(f"boundary vertex {a} has two outgoing boundary edges")
        nxt[a] = b
    loops = []
    seen = set()
    for start in sorted(nxt):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        v = nxt[start]
        while v != start:
            if v in seen or v not in nxt:
                raise MeshError("boundary edges do not form closed loops")
            loop.append(v)
            seen.add(v)
            v = nxt[v]
        loops.append(np.array(loop, dtype=np.int64))
    return loops


def _vertex_normals(vertices: np.ndarray, loops: list[np.ndarray]) -> np.ndarray:
    out = []
    for lp in loops:
        p = vertices[lp]
        d = np.roll(p, -1, axis=0) - p
        en = np.stack([d[:, 1], -d[:, 0]], axis=1)
        en /= np.linalg.norm(en, axis=1)[:, None]
        vn = en + np.roll(en, 1, axis=0)
        out.append(vn / np.linalg.norm(vn, axis=1)[:, None])
    return np.concatenate(out) if out else np.zeros((0, 2))


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def _ring_count(r: float, h: float, symmetry: int) -> int:
    return symmetry * max(1, math.ceil(2.0 * math.pi * r / (symmetry * h) - 1e-9))


def _ring_points(r: float, n: int, stagger: int) -> np.ndarray:
    ang = 2.0 * math.pi * (2.0 * np.arange(n) + stagger) / (2.0 * n)
    return np.stack([r * np.cos(ang), r * np.sin(ang)], axis=1)


def _stitch(inner: tuple[int, int, int], outer: tuple[int, int, int]) -> list[tuple[int, int, int]]:
    """Triangulate the strip between two rings given as (offset, count, stagger).

    Vertices are merged by their exact angular position ``(2j + s) / (2n)``;
    the result depends only on those rationals, hence is rotation invariant.
    """
    (oa, na, sa), (ob, nb, sb) = inner, outer
    big = math.lcm(2 * na, 2 * nb)
    keys = [((2 * j + sa) * (big // (2 * na)), 0, oa + j) for j in range(na)]
    keys += [((2 * j + sb) * (big // (2 * nb)), 1, ob + j) for j in range(nb)]
    keys.sort()
    last_a, last_b = oa + na - 1, ob + nb - 1
    tris = []
    for _, side, v in keys:
        if side == 0:
            tris.append((last_a, v, last_b))
            last_a = v
        else:
            tris.append((last_a, last_b, v))
            last_b = v
    return tris


def _ring_mesh(radii: np.ndarray, h: float, symmetry: int, center: bool,
               max_vertices: int) -> tuple[np.ndarray, np.ndarray]:
    counts = [_ring_count(r, h, symmetry) for r in radii]
    total = sum(counts) + (1 if center else 0)
    if total > max_vertices:
        raise MeshCapacityError(f"mesh would need {total} vertices (budget {max_vertices})")
    nr = len(radii)
    stagger = [(nr - 1 - i) % 2 for i in range(nr)]
    pts = [np.zeros((1, 2))] if center else []
    offsets = []
    off = 1 if center else 0
    for r, n, s in zip(radii, counts, stagger):
        pts.append(_ring_points(r, n, s))
        offsets.append(off)
        off += n
    tris = []
    if center:
        n1, o1 = counts[0], offsets[0]
        tris += [(0, o1 + j, o1 + (j + 1) % n1) for j in range(n1)]
    for i in range(nr - 1):
        tris += _stitch((offsets[i], counts[i], stagger[i]),
                        (offsets[i + 1], counts[i + 1], stagger[i + 1]))
    return np.concatenate(pts), np.array(tris, dtype=np.int64)


def generate_disk_mesh(radius: float, target_h: float, symmetry: int = 12,
                       max_vertices: int = DEFAULT_VERTEX_BUDGET) -> Mesh:
    """Mesh of the disk of given radius centred at the origin.

    Boundary vertices are equally spaced on the circle.  ``h_max`` stays below
    ``1.5 * target_h``.
    """
    if radius <= 0:
        raise MeshError("radius must be positive")
    if not 0 < target_h < radius:
        raise MeshError("target_h must satisfy 0 < target_h < radius")
    nr = math.ceil(radius / target_h - 1e-9)
    radii = radius * np.arange(1, nr + 1) / nr
    v, t = _ring_mesh(radii, target_h, symmetry, True, max_vertices)
    return Mesh.from_arrays(v, t, Domain("disk", (float(radius),)))


def generate_annulus_mesh(r_inner: float, r_outer: float, target_h: float,
                          symmetry: int = 12,
                          max_vertices: int = DEFAULT_VERTEX_BUDGET) -> Mesh:
    """Mesh of the annulus ``r_inner < |x| < r_outer``; two boundary loops."""
    if not 0 < r_inner < r_outer:
        raise MeshError("radii must satisfy 0 < r_inner < r_outer")
    if target_h <= 0:
        raise MeshError("target_h must be positive")
    nr = max(1, math.ceil((r_outer - r_inner) / target_h - 1e-9))
    radii = r_inner + (r_outer - r_inner) * np.arange(nr + 1) / nr
    v, t = _ring_mesh(radii, target_h, symmetry, False, max_vertices)
    return Mesh.from_arrays(v, t, Domain("annulus", (float(r_inner), float(r_outer))))


def refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four; snap new boundary vertices to the domain."""
    edges = mesh.edges()
    nv = len(mesh.vertices)
    index = {(int(a), int(b)): nv + k for k, (a, b) in enumerate(edges)}
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    if mesh.domain is not None:
        bnd = {tuple(sorted((int(a), int(b))))
               for k in range(len(mesh.boundary_loops)) for a, b in mesh.loop_edges(k)}
        rows = np.array([index[e] - nv for e in sorted(bnd)], dtype=np.int64)
        mid[rows] = mesh.domain.snap(mid[rows])
    verts = np.concatenate([mesh.vertices, mid])

    def m(a, b):
        return index[(a, b) if a < b else (b, a)]

    tris = []
    for a, b, c in mesh.triangles.tolist():
        ab, bc, ca = m(a, b), m(b, c), m(c, a)
        tris += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return Mesh.from_arrays(verts, np.array(tris, dtype=np.int64), mesh.domain)


# --------------------------------------------------------------------------
# boundary arclength
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LoopArclength:
    loop: int
    s: np.ndarray              # cumulative g-arclength at the loop vertices, s[0] = 0
    edge_lengths: np.ndarray   # g-length of edge (v_k, v_{k+1})
    total: float


def edge_gauss(n: int = 4) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def boundary_arclength(mesh: Mesh, metric: Metric, n_gauss: int = 4) -> list[LoopArclength]:
    """Cumulative arclength along each loop using ``sqrt(g(tau, tau))``."""
    xq, wq = edge_gauss(n_gauss)
    out = []
    for k in range(len(mesh.boundary_loops)):
        e = mesh.loop_edges(k)
        pa, pb = mesh.vertices[e[:, 0]], mesh.vertices[e[:, 1]]
        tau = pb - pa
        pts = pa[:, None, :] + xq[None, :, None] * tau[:, None, :]
        g = metric.eval(pts.reshape(-1, 2))
        require_spd(g, "boundary quadrature point")
        g = g.reshape(len(e), len(xq), 2, 2)
        speed = np.sqrt(np.einsum("ei,eqij,ej->eq", tau, g, tau))
        lengths = speed @ wq
        s = np.concatenate([[0.0], np.cumsum(lengths)[:-1]])
        out.append(LoopArclength(k, s, lengths, float(np.sum(lengths))))
    return out


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def write_mesh(mesh: Mesh, path: str | Path) -> None:
    """Write the plain-text VERTICES / TRIANGLES / BOUNDARY_LOOPS format (0-based)."""
    lines = ["# steklov_lab mesh v1"]
    if mesh.domain is not None:
        lines.append("DOMAIN " + mesh.domain.kind + " " + " ".join(repr(r) for r in mesh.domain.radii))
    lines.append(f"VERTICES {len(mesh.vertices)}")
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(f"TRIANGLES {len(mesh.triangles)}")
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"BOUNDARY_LOOPS {len(mesh.boundary_loops)}")
    lines += [" ".join(str(int(v)) for v in lp) for lp in mesh.boundary_loops]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path: str | Path) -> Mesh:
    """Read the format written by :func:`write_mesh`.

    Loops stored in the file are checked against the topology.
    """
    rows = [ln.split() for ln in Path(path).read_text().splitlines()
            if ln.strip() and not ln.lstrip().startswith("#")]
    i = 0
    domain = None
    verts = tris = loops = None
    while i < len(rows):
        key = rows[i][0]
        if key == "DOMAIN":
            domain = Domain(rows[i][1], tuple(float(r) for r in rows[i][2:]))
            i += 1
        elif key in ("VERTICES", "TRIANGLES", "BOUNDARY_LOOPS"):
            n = int(rows[i][1])
            block = rows[i + 1:i + 1 + n]
            if len(block) != n:
                raise MeshError(f"section {key} truncated")
            if key == "VERTICES":
                verts = np.array([[float(x) for x in r] for r in block])
            elif key == "TRIANGLES":
                tris = np.array([[int(x) for x in r] for r in block], dtype=np.int64)
            else:
                loops = [[int(x) for x in r] for r in block]
            i += 1 + n
        else:
            raise MeshError(f"unknown section {key!r}")
    if verts is None or tris is None:
        raise MeshError("mesh file needs VERTICES and TRIANGLES sections")
    mesh = Mesh.from_arrays(verts, tris, domain)
    if loops is not None:
        want = sorted(sorted(lp) for lp in loops)
        have = sorted(sorted(lp.tolist()) for lp in mesh.boundary_loops)
        if want != have:
            raise MeshError("BOUNDARY_LOOPS section does not match the triangle topology")
    return mesh


def read_triangle(node_path: str | Path, ele_path: str | Path,
                  domain: Domain | None = None) -> Mesh:
    """Import a mesh in the Triangle ``.node`` / ``.ele`` convention (0- or 1-based)."""
    def rows(p):
        out = []
        for ln in Path(p).read_text().splitlines():
            ln = ln.split("#", 1)[0].strip()
            if ln:
                out.append(ln.split())
        return out

    nodes = rows(node_path)
    nn, dim = int(nodes[0][0]), int(nodes[0][1])
    if dim != 2:
        raise MeshError("only 2D .node files are supported")
    body = nodes[1:1 + nn]
    ids = np.array([int(r[0]) for r in body])
    xy = np.array([[float(r[1]), float(r[2])] for r in body])
    base = int(ids.min())
    order = np.argsort(ids)
    xy = xy[order]
    ele = rows(ele_path)
    nt, per = int(ele[0][0]), int(ele[0][1])
    if per != 3:
        raise MeshError("only linear (3-node) triangles are supported")
    tris = np.array([[int(x) for x in r[1:4]] for r in ele[1:1 + nt]], dtype=np.int64) - base
    return Mesh.from_arrays(xy, tris, domain)
