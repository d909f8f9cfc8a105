"""Built-in mesh generators.

Flat tori from lattice bases, geodesic sphere / projective-plane meshes,
flat Moebius bands and disks, hemisphere caps, circle bundles over flat tori
(nonzero Euler number, constant fiber length), circle meshes and product
meshes.  Generated meshes attach structural homology models and, where a flat
chart exists, per-simplex chart coordinates with the deck shifts needed to
lift the simplex coherently to the free-abelian cover.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np

from .complexes import HomologyModel, WeightedComplex, _spanning_tree
from .lattices import LatticeBasis, lll_reduce

__all__ = [
    "FlatTorusMesh",
    "SphereMesh",
    "ProjectivePlaneMesh",
    "CircleBundleMesh",
    "ProductMesh",
    "flat_torus",
    "sphere_mesh",
    "projective_plane",
    "mobius_band",
    "flat_disk",
    "hemisphere_mesh",
    "circle_bundle",
    "loop_mesh",
    "product_mesh",
    "measure",
]


def measure(complex: WeightedComplex) -> float:
    """Top-dimensional measure: volume, area, or total length of a 1-complex."""
    if len(complex.tetrahedra):
        return complex.total_volume()
    if len(complex.triangles):
        return complex.total_area()
    return float(complex.lengths.sum())


def _canonical_segments(directed):
    """Sort directed (a, b, length, z, z2) records into canonical edge arrays."""
    table = {}
    for a, b, length, z, z2 in directed:
        if a == b:
            raise ValueError("self-loop produced; increase the resolution")
        if a < b:
            key, zz, zz2 = (a, b), z, z2
        else:
            key, zz, zz2 = (b, a), tuple(-x for x in z), z2
        if key in table:
            prev = table[key]
            if not np.allclose(prev[0], length) or prev[1] != zz or prev[2] != zz2:
                raise ValueError("conflicting parallel segments; increase the resolution")
        table[key] = (length, zz, zz2)
    keys = sorted(table)
    rows = np.array(keys, dtype=np.int64).reshape(-1, 2)
    lengths = np.array([table[k][0] for k in keys])
    zs = np.array([table[k][1] for k in keys], dtype=np.int64).reshape(len(keys), -1)
    z2s = np.array([table[k][2] for k in keys], dtype=np.uint8).reshape(len(keys), -1)
    return rows, lengths, zs, z2s


def _structural_homology(complex: WeightedComplex, cocycle, z2_layers, betti):
    """Homology model with a spanning tree chosen inside the zero-cocycle edges."""
    nseg = complex.num_segments
    cocycle = np.asarray(cocycle, dtype=np.int64).reshape(nseg, -1)
    z2_layers = np.asarray(z2_layers, dtype=np.uint8).reshape(nseg, -1)
    zero = ~cocycle.any(axis=1)
    rows = complex.segment_rows()
    nE = len(complex.edges)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(complex.num_vertices)]
    for k in range(nE):
        if zero[k]:
            i, j = rows[k]
            adj[i].append((j, k))
            adj[j].append((i, k))
    tree = np.zeros(nseg, dtype=bool)
    seen = np.zeros(complex.num_vertices, dtype=bool)
    seen[0] = True
    queue = [0]
    while queue:
        u = queue.pop()
        for v, k in adj[u]:
            if not seen[v]:
                seen[v] = True
                tree[k] = True
                queue.append(v)
    if not seen.all():
        raise ValueError("zero-class edges do not span; structural model invalid")
    generators = []
    for col in range(betti):
        target = np.zeros(betti, dtype=np.int64)
        target[col] = 1
        # canonical edge orientation may cross the seam either way
        hits = np.flatnonzero(
            ((cocycle[:nE] == target).all(axis=1) | (cocycle[:nE] == -target).all(axis=1))
            & ~tree[:nE]
        )
        if not len(hits):
            raise ValueError(f"no generator edge found for class {col}")
        generators.append(int(hits[0]))
    # closedness check on triangle boundaries
    for (a, b, c) in complex.triangles:
        total = np.zeros(betti, dtype=np.int64)
        tot2 = np.zeros(z2_layers.shape[1], dtype=np.uint8)
        for u, v in ((a, b), (b, c), (c, a)):
            e = complex.edge_id(u, v)
            sign = 1 if (min(u, v), max(u, v)) == (u, v) else -1
            total += sign * cocycle[e]
            tot2 ^= z2_layers[e]
        if total.any() or tot2.any():
            raise ValueError("structural cocycle is not closed")
    return HomologyModel(betti, tree, np.array(generators, dtype=np.int64), cocycle, z2_layers)


# ---------------------------------------------------------------------------
# Flat torus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatTorusMesh:
    """Grid mesh of R^2 / L with per-triangle flat charts.

    ``tri_chart``: (T, 3, 2) plane coordinates of each triangle's corners in a
    coherent lift; ``tri_shift``: (T, 3, 2) integer deck shifts of the corners
    relative to the stored fundamental-domain vertices.
    """

    complex: WeightedComplex
    homology: HomologyModel
    basis: LatticeBasis          # reduced basis; rows generate the deck lattice
    positions: np.ndarray        # (V, 2) fundamental-domain positions
    resolution: int
    tri_chart: np.ndarray
    tri_shift: np.ndarray

    @property
    def gram(self) -> np.ndarray:
        return self.basis.rows @ self.basis.rows.T


def _chord_directions(limit: int, exclude) -> list[tuple[int, int]]:
    seen = set(exclude) | {(-p, -q) for p, q in exclude}
    out = []
    for p in range(-limit, limit + 1):
        for q in range(-limit, limit + 1):
            if (p, q) == (0, 0) or gcd(abs(p), abs(q)) != 1:
                continue
            if (p, q) in seen or (-p, -q) in seen:
                continue
            seen.add((p, q))
            out.append((p, q))
    return out


def flat_torus(basis: LatticeBasis, resolution: int, chord_range: int = 3) -> FlatTorusMesh:
    """Flat torus mesh aligned with the Lagrange-reduced basis.

    Grid edges run along the reduced basis vectors and the shorter cell
    diagonal (so shortest lattice directions are realized by straight edge
    paths); chords cover all primitive directions up to ``chord_range`` with
    exact Euclidean lengths for isotropic graph distances.
    """
    if basis.dimension != 2:
        raise ValueError("flat_torus expects a 2-dimensional lattice")
    m = int(resolution)
    if m < 2 * chord_range + 2:
        chord_range = max((m - 2) // 2, 1)
    if m < 4:
        raise ValueError("resolution must be at least 4")
    reduced_rows, _ = lll_reduce(basis.rows)
    red = LatticeBasis(reduced_rows)
    v1, v2 = red.rows
    diag = (1, -1) if np.linalg.norm(v1 - v2) <= np.linalg.norm(v1 + v2) else (1, 1)
    mesh_dirs = [(1, 0), (0, 1), diag]
    chord_dirs = _chord_directions(chord_range, mesh_dirs)

    def vid(i, j):
        return (i % m) * m + (j % m)

    def step(i, j, p, q):
        vec = (p * v1 + q * v2) / m
        z = ((i + p) // m, (j + q) // m)
        return vid(i + p, j + q), float(np.linalg.norm(vec)), z

    directed_edges, directed_chords = [], []
    for i in range(m):
        for j in range(m):
            a = vid(i, j)
            for (p, q) in mesh_dirs:
                b, length, z = step(i, j, p, q)
                directed_edges.append((a, b, length, z, ()))
            for (p, q) in chord_dirs:
                b, length, z = step(i, j, p, q)
                directed_chords.append((a, b, length, z, ()))

    edge_rows, edge_lengths, edge_z, _ = _canonical_segments(directed_edges)
    chord_rows, chord_lengths, chord_z, _ = _canonical_segments(directed_chords)

    tris, tri_chart, tri_shift = [], [], []

    def corner(i, j):
        pos = (i * v1 + j * v2) / m
        shift = (i // m, j // m)
        return vid(i, j), pos, shift

    for i in range(m):
        for j in range(m):
            if diag == (1, -1):
                cells = [((i, j), (i + 1, j - 1), (i + 1, j)), ((i, j), (i + 1, j - 1), (i, j - 1))]
            else:
                cells = [((i, j), (i + 1, j), (i + 1, j + 1)), ((i, j), (i + 1, j + 1), (i, j + 1))]
            for cell in cells:
                ids, charts, shifts = zip(*(corner(*c) for c in cell))
                tris.append(ids)
                tri_chart.append(charts)
                tri_shift.append(shifts)

    positions = np.zeros((m * m, 2))
    for i in range(m):
        for j in range(m):
            positions[vid(i, j)] = (i * v1 + j * v2) / m

    complex = WeightedComplex(
        num_vertices=m * m,
        edges=edge_rows,
        lengths=edge_lengths,
        triangles=np.array(tris, dtype=np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
        orientable=True,
        coordinates=positions,
        chords=chord_rows,
        chord_lengths=chord_lengths,
    )
    cocycle = np.vstack([edge_z, chord_z])
    z2 = np.zeros((complex.num_segments, 0), dtype=np.uint8)
    homology = _structural_homology(complex, cocycle, z2, betti=2)
    return FlatTorusMesh(
        complex=complex,
        homology=homology,
        basis=red,
        positions=positions,
        resolution=m,
        tri_chart=np.array(tri_chart),
        tri_shift=np.array(tri_shift, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Sphere and projective plane
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SphereMesh:
    complex: WeightedComplex
    points: np.ndarray          # (V, 3) unit vectors
    subdivision: int


@dataclass(frozen=True)
class ProjectivePlaneMesh:
    complex: WeightedComplex
    homology: HomologyModel
    orientation_class: np.ndarray   # Z2 cochain over segments
    sphere: SphereMesh              # the orientation double cover
    projection: np.ndarray          # sphere vertex -> RP2 vertex
    subdivision: int


def _icosahedron():
    phi = (1 + np.sqrt(5.0)) / 2
    raw = []
    for s1 in (-1, 1):
        for s2 in (-1, 1):
            raw += [(0, s1, s2 * phi), (s1, s2 * phi, 0), (s2 * phi, 0, s1)]
    verts = np.unique(np.round(np.array(raw, dtype=float), 12), axis=0)
    verts /= np.linalg.norm(verts, axis=1, keepdims=True)
    d2 = ((verts[:, None, :] - verts[None, :, :]) ** 2).sum(-1)
    edge2 = np.sort(np.unique(np.round(d2, 9)))[1]
    faces = []
    from itertools import combinations

    for i, j, k in combinations(range(12), 3):
        if (abs(d2[i, j] - edge2) < 1e-9 and abs(d2[i, k] - edge2) < 1e-9
                and abs(d2[j, k] - edge2) < 1e-9):
            faces.append((i, j, k))
    return verts, faces


def _arc(u, v) -> float:
    return float(np.arccos(np.clip(np.dot(u, v), -1.0, 1.0)))


def _ring2_pairs(edges):
    adj: dict[int, set[int]] = {}
    for u, v in edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    pairs = set()
    edge_set = {(min(u, v), max(u, v)) for u, v in edges}
    for u, nbrs in adj.items():
        for w in nbrs:
            for x in adj[w]:
                if x != u and (min(u, x), max(u, x)) not in edge_set:
                    pairs.add((min(u, x), max(u, x)))
    return sorted(pairs)


def sphere_mesh(subdivision: int, radius: float = 1.0, chords: bool = True) -> SphereMesh:
    """Geodesic icosphere: linear subdivision projected to the round sphere.

    Edge lengths are exact great-circle distances; chords connect second-ring
    neighbours (again with exact geodesic lengths) to keep graph distances
    within a fraction of a percent of the round metric.
    """
    base_verts, base_faces = _icosahedron()
    n = int(subdivision)
    index: dict[tuple, int] = {}
    points: list[np.ndarray] = []

    def vid(p):
        p = p / np.linalg.norm(p)
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(points)
            points.append(np.array(key))
        return index[key]

    tris = []
    for (a, b, c) in base_faces:
        grid = {}
        for i in range(n + 1):
            for j in range(n + 1 - i):
                k = n - i - j
                grid[(i, j)] = vid((i * base_verts[a] + j * base_verts[b] + k * base_verts[c]) / n)
        for i in range(n):
            for j in range(n - i):
                tris.append((grid[(i, j)], grid[(i + 1, j)], grid[(i, j + 1)]))
                if i + j < n - 1:
                    tris.append((grid[(i + 1, j)], grid[(i + 1, j + 1)], grid[(i, j + 1)]))
    pts = np.array(points) * radius

    edge_pairs = sorted({(min(u, v), max(u, v)) for t in tris for u, v in
                         ((t[0], t[1]), (t[0], t[2]), (t[1], t[2]))})
    unit = pts / radius
    lengths = np.array([radius * _arc(unit[u], unit[v]) for u, v in edge_pairs])
    if chords:
        cpairs = _ring2_pairs(edge_pairs)
        clens = np.array([radius * _arc(unit[u], unit[v]) for u, v in cpairs])
    else:
        cpairs, clens = [], np.zeros(0)
    complex = WeightedComplex(
        num_vertices=len(pts),
        edges=np.array(edge_pairs, dtype=np.int64),
        lengths=lengths,
        triangles=np.array(sorted(tuple(sorted(t)) for t in tris), dtype=np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
        orientable=True,
        coordinates=pts,
        chords=np.array(cpairs, dtype=np.int64).reshape(-1, 2),
        chord_lengths=clens,
    )
    return SphereMesh(complex=complex, points=pts, subdivision=n)


def projective_plane(subdivision: int, radius: float = 1.0, chords: bool = True) -> ProjectivePlaneMesh:
    """Round projective plane: antipodal quotient of the geodesic sphere.

    The Z2 orientation class records, per edge, whether the representative
    lifts sit on the same sheet; it is the deck cocycle of the double cover.
    """
    sphere = sphere_mesh(subdivision, radius=radius, chords=chords)
    pts = sphere.points
    unit = pts / radius
    lookup = {tuple(np.round(p, 9)): i for i, p in enumerate(unit)}
    anti = np.array([lookup[tuple(np.round(-p, 9))] for p in unit], dtype=np.int64)

    def is_rep(i):
        p = unit[i]
        for x in p:
            if abs(x) > 1e-9:
                return x > 0
        raise AssertionError

    reps = [i for i in range(len(pts)) if is_rep(i)]
    rp_id = -np.ones(len(pts), dtype=np.int64)
    for k, i in enumerate(reps):
        rp_id[i] = k
    for i in range(len(pts)):
        if rp_id[i] < 0:
            rp_id[i] = rp_id[anti[i]]
    same_sheet = np.array([is_rep(i) for i in range(len(pts))])

    def project_segments(pairs, lengths):
        directed = []
        for (u, v), l in zip(pairs, lengths):
            a, b = int(rp_id[u]), int(rp_id[v])
            flip = int(same_sheet[u] != same_sheet[v])
            directed.append((a, b, float(l), (), (flip,)))
        return _canonical_segments(directed)

    sc = sphere.complex
    edge_rows, edge_lengths, _, edge_flip = project_segments(sc.edges, sc.lengths)
    if len(sc.chords):
        chord_rows, chord_lengths, _, chord_flip = project_segments(sc.chords, sc.chord_lengths)
    else:
        chord_rows = np.zeros((0, 2), np.int64)
        chord_lengths = np.zeros(0)
        chord_flip = np.zeros((0, 1), np.uint8)

    tris = sorted({tuple(sorted((int(rp_id[a]), int(rp_id[b]), int(rp_id[c]))))
                   for (a, b, c) in sc.triangles})
    complex = WeightedComplex(
        num_vertices=len(reps),
        edges=edge_rows,
        lengths=edge_lengths,
        triangles=np.array(tris, dtype=np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
        orientable=False,
        coordinates=pts[reps],
        chords=chord_rows,
        chord_lengths=chord_lengths,
    )
    z2 = np.vstack([edge_flip, chord_flip]).astype(np.uint8)
    cocycle = np.zeros((complex.num_segments, 0), dtype=np.int64)
    homology = _structural_homology(complex, cocycle, z2, betti=0)
    projection = rp_id
    return ProjectivePlaneMesh(
        complex=complex,
        homology=homology,
        orientation_class=z2[:, 0],
        sphere=sphere,
        projection=projection,
        subdivision=subdivision,
    )


# ---------------------------------------------------------------------------
# Flat Moebius band, disk, hemisphere
# ---------------------------------------------------------------------------


def mobius_band(core_length: float, width: float, segments: int, rows: int = 5) -> tuple[WeightedComplex, HomologyModel]:
    """Flat Moebius band: strip [0, c] x [0, w] glued with a flip.

    Returns the complex together with a homology model whose single free
    generator is the core class; its mod-2 reduction is the epimorphism
    detecting one-sided loops.
    """
    mc, nw = int(segments), int(rows)
    if mc < 3 or nw < 2:
        raise ValueError("need at least 3 core segments and 2 rows")
    dx, dy = core_length / mc, width / (nw - 1)

    def vid(i, j):
        i_mod = i % mc
        if (i // mc) % 2:
            j = nw - 1 - j
        return i_mod * nw + j

    def wrap_count(i):
        return i // mc

    directed = []
    for i in range(mc):
        for j in range(nw):
            a = vid(i, j)
            directed.append((a, vid(i + 1, j), dx, (wrap_count(i + 1),), ()))
            if j + 1 < nw:
                directed.append((a, vid(i, j + 1), dy, (0,), ()))
                directed.append((a, vid(i + 1, j + 1), float(np.hypot(dx, dy)), (wrap_count(i + 1),), ()))
    rows_, lens, zs, z2s = _canonical_segments(directed)
    tris = []
    for i in range(mc):
        for j in range(nw - 1):
            tris.append(tuple(sorted((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))))
            tris.append(tuple(sorted((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))))
    complex = WeightedComplex(
        num_vertices=mc * nw,
        edges=rows_,
        lengths=lens,
        triangles=np.array(sorted(set(tris)), dtype=np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
        orientable=False,
    )
    z2 = np.zeros((complex.num_segments, 0), dtype=np.uint8)
    homology = _structural_homology(complex, zs, z2, betti=1)
    return complex, homology


def flat_disk(radius: float, rings: int, sectors: int) -> tuple[WeightedComplex, list[int]]:
    """Flat unit-style disk on a polar grid; returns the mesh and its boundary loop."""
    nr, ns = int(rings), int(sectors)
    pts = [np.zeros(2)]
    for j in range(1, nr + 1):
        r = radius * j / nr
        for i in range(ns):
            a = 2 * np.pi * i / ns
            pts.append(np.array([r * np.cos(a), r * np.sin(a)]))
    pts = np.array(pts)

    def vid(i, j):
        return 0 if j == 0 else 1 + (j - 1) * ns + (i % ns)

    tris = []
    for i in range(ns):
        tris.append((vid(i, 0), vid(i, 1), vid(i + 1, 1)))
    for j in range(1, nr):
        for i in range(ns):
            tris.append((vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)))
            tris.append((vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)))
    edge_pairs = sorted({(min(u, v), max(u, v)) for t in tris for u, v in
                         ((t[0], t[1]), (t[0], t[2]), (t[1], t[2]))})
    lengths = np.array([np.linalg.norm(pts[u] - pts[v]) for u, v in edge_pairs])
    cpairs = _ring2_pairs(edge_pairs)
    clens = np.array([np.linalg.norm(pts[u] - pts[v]) for u, v in cpairs])
    complex = WeightedComplex(
        num_vertices=len(pts),
        edges=np.array(edge_pairs, dtype=np.int64),
        lengths=lengths,
        triangles=np.array(sorted(tuple(sorted(t)) for t in tris), dtype=np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
        coordinates=pts,
        chords=np.array(cpairs, dtype=np.int64).reshape(-1, 2),
        chord_lengths=clens,
    )
    boundary = [vid(i, nr) for i in range(ns)]
    return complex, boundary


def hemisphere_mesh(rings: int, sectors: int, radius: float = 1.0) -> tuple[WeightedComplex, list[int]]:
    """Round hemisphere cap with the equator as boundary; geodesic edge lengths."""
    nr, ns = int(rings), int(sectors)
    if ns % 4:
        raise ValueError("sectors must be divisible by 4 (quarter-perimeter points)")
    pts = []
    for j in range(nr):
        th = (np.pi / 2) * (1 - j / nr)
        for i in range(ns):
            ph = 2 * np.pi * i / ns
            pts.append((np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)))
    pole = len(pts)
    pts.append((0.0, 0.0, 1.0))
    pts = np.array(pts)

    def vid(i, j):
        return j * ns + (i % ns)

    tris = []
    for j in range(nr - 1):
        for i in range(ns):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i, j + 1), vid(i + 1, j + 1)
            tris.append((a, b, d))
            tris.append((a, d, c))
    for i in range(ns):
        tris.append((vid(i, nr - 1), vid(i + 1, nr - 1), pole))
    edge_pairs = sorted({(min(u, v), max(u, v)) for t in tris for u, v in
                         ((t[0], t[1]), (t[0], t[2]), (t[1], t[2]))})
    lengths = np.array([radius * _arc(pts[u], pts[v]) for u, v in edge_pairs])
    cpairs = _ring2_pairs(edge_pairs)
    clens = np.array([radius * _arc(pts[u], pts[v]) for u, v in cpairs])
    complex = WeightedComplex(
        num_vertices=len(pts),
        edges=np.array(edge_pairs, dtype=np.int64),
        lengths=lengths,
        triangles=np.array(sorted(tuple(sorted(t)) for t in tris), dtype=np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
        coordinates=pts * radius,
        chords=np.array(cpairs, dtype=np.int64).reshape(-1, 2),
        chord_lengths=clens,
    )
    boundary = [vid(i, 0) for i in range(ns)]
    return complex, boundary


# ---------------------------------------------------------------------------
# Circle bundles over flat tori
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CircleBundleMesh:
    """Circle bundle with Euler number ``euler`` over a flat torus.

    Built as a staircase fibration: between base rows j and j+1 the fiber
    label drifts by s*i per step (s = 2), so the holonomy of the row loop
    winds ``euler = 2 mb^2 / m3`` times as the column goes around the base.
    Each row slab embeds exactly in a local product chart (base plane x
    fiber line), which makes fiber circles, base rows, slab volumes, and the
    per-simplex differentials of base-affine fields exact; the curvature of
    the bundle shows up only in cone angles and in the non-conforming (but
    edge-consistent) interface triangulations between slabs.  The fiber
    class is torsion of order ``euler``; for even Euler numbers its mod-2
    quotient is attached as the Z2 layer.
    """

    complex: WeightedComplex
    homology: HomologyModel
    base_basis: LatticeBasis
    base_positions: np.ndarray    # (V, 2)
    fiber_length: float
    euler: int
    base_resolution: int
    fiber_resolution: int
    tet_chart: np.ndarray         # (K, 4, 3) chart coordinates per tetrahedron
    tet_shift: np.ndarray         # (K, 4, 2) deck shifts of the corners

    @property
    def gram(self) -> np.ndarray:
        return self.base_basis.rows @ self.base_basis.rows.T

    @property
    def fiber_class(self) -> np.ndarray:
        return self.homology.z2_layers[:, 0]


_KUHN_PERMS = [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]


def circle_bundle(
    base_basis: LatticeBasis,
    base_resolution: int,
    fiber_length: float,
    euler: int = 2,
) -> CircleBundleMesh:
    """Mesh of a circle bundle with constant fiber length over a flat torus.

    Uses the Lagrange-reduced base basis so shortest base classes run along
    grid rows.  The staircase drift step is s = 2, which fixes the fiber
    resolution at m3 = 2 mb^2 / euler (the Euler number must divide 2 mb^2).
    Even Euler numbers give a fiber loop detectable through the Z2 layer;
    odd ones leave the fiber invisible to abelian and Z2 data.
    """
    mb = int(base_resolution)
    if mb < 3:
        raise ValueError("base resolution must be at least 3")
    e = int(euler)
    if e == 0:
        raise ValueError("euler number must be nonzero (trivial bundles are products)")
    s = 2
    if (s * mb * mb) % abs(e):
        raise ValueError(f"euler number must divide {s * mb * mb} (= 2 mb^2)")
    m3 = s * mb * mb // abs(e)
    if m3 < 3:
        raise ValueError("fiber resolution too small; increase the base resolution")
    reduced_rows, _ = lll_reduce(base_basis.rows)
    if reduced_rows[0] @ reduced_rows[1] > 0:
        reduced_rows = np.array([reduced_rows[0], -reduced_rows[1]])
    red = LatticeBasis(reduced_rows)
    v1, v2 = red.rows
    eps = float(fiber_length)
    dz = eps / m3
    sgn = 1 if e > 0 else -1

    def vid(i, j, k):
        return (i * mb + j) * m3 + k

    V = mb * mb * m3
    directed: dict[tuple[int, int], tuple[float, tuple, tuple]] = {}
    tets, tet_chart, tet_shift = [], [], []

    def add_edge(a, b):
        # a, b: (node, pos, zshift, crossings)
        u, pu, zu, cu = a
        w, pw, zw, cw = b
        length = float(np.linalg.norm(pw - pu))
        z = (zw[0] - zu[0], zw[1] - zu[1])
        z2 = int(cw - cu) & 1
        if u > w:
            u, w, z = w, u, (-z[0], -z[1])
        prev = directed.get((u, w))
        rec = (length, z, z2)
        if prev is None:
            directed[(u, w)] = rec
        elif abs(prev[0] - length) > 1e-12 * max(1.0, length) or prev[1] != z or prev[2] != z2:
            raise ValueError("conflicting bundle edges; construction bug")

    base_tris = (((0, 0), (1, 0), (1, 1)), ((0, 0), (1, 1), (0, 1)))
    for j in range(mb):          # slab between base rows j and j+1
        for i in range(mb):      # base quad (i, i+1) x (j, j+1)
            cols = {}
            for di in (0, 1):
                for dj in (0, 1):
                    ip, jp = i + di, j + dj
                    base = (ip * v1 + jp * v2) / mb
                    # staircase: top-row labels drift by s * column per row step
                    drift = sgn * s * ip if dj else 0
                    cols[(di, dj)] = (
                        base,
                        (ip % mb, jp % mb),
                        (ip // mb, jp // mb),
                        drift,
                    )
            for tri in base_tris:
                order = sorted(tri, key=lambda cd: cols[cd][1])
                for h in range(m3):
                    layer = []
                    for lev in (h, h + 1):
                        for cd in order:
                            base, (fi, fj), zsh, drift = cols[cd]
                            label = lev + drift
                            layer.append((
                                vid(fi, fj, label % m3),
                                np.array([base[0], base[1], dz * lev]),
                                zsh,
                                label // m3,
                            ))
                    a0, a1, a2, b0, b1, b2 = layer
                    for tet in ((a0, a1, a2, b2), (a0, a1, b1, b2), (a0, b0, b1, b2)):
                        tets.append(tuple(t[0] for t in tet))
                        tet_chart.append([t[1] for t in tet])
                        tet_shift.append([t[2] for t in tet])
                        for x in range(4):
                            for y in range(x + 1, 4):
                                add_edge(tet[x], tet[y])

    keys = sorted(directed)
    rows = np.array(keys, dtype=np.int64)
    lens = np.array([directed[k][0] for k in keys])
    zs = np.array([directed[k][1] for k in keys], dtype=np.int64)
    z2s = np.array([[directed[k][2]] for k in keys], dtype=np.uint8)
    faces = sorted({tuple(sorted(f)) for tet in tets for f in
                    ((tet[0], tet[1], tet[2]), (tet[0], tet[1], tet[3]),
                     (tet[0], tet[2], tet[3]), (tet[1], tet[2], tet[3]))})
    complex = WeightedComplex(
        num_vertices=V,
        edges=rows,
        lengths=lens,
        triangles=np.array(faces, dtype=np.int64),
        tetrahedra=np.array(sorted(set(tets)), dtype=np.int64),
        orientable=True,
    )
    z2_layers = z2s if e % 2 == 0 else np.zeros((complex.num_segments, 0), np.uint8)
    homology = _structural_homology(complex, zs, z2_layers, betti=2)

    positions = np.zeros((V, 2))
    for i in range(mb):
        for j in range(mb):
            for k in range(m3):
                positions[vid(i, j, k)] = (i * v1 + j * v2) / mb

    return CircleBundleMesh(
        complex=complex,
        homology=homology,
        base_basis=red,
        base_positions=positions,
        fiber_length=eps,
        euler=e,
        base_resolution=mb,
        fiber_resolution=m3,
        tet_chart=np.array(tet_chart),
        tet_shift=np.array(tet_shift, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Circles and products
# ---------------------------------------------------------------------------


def loop_mesh(length: float, segments: int) -> tuple[WeightedComplex, HomologyModel]:
    """Circle of the given length as a 1-complex with ``segments`` edges."""
    n = int(segments)
    if n < 3:
        raise ValueError("need at least 3 segments")
    directed = [(i, (i + 1) % n, length / n, ((i + 1) // n,), ()) for i in range(n)]
    rows, lens, zs, _ = _canonical_segments(directed)
    complex = WeightedComplex(
        num_vertices=n,
        edges=rows,
        lengths=lens,
        triangles=np.zeros((0, 3), np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
    )
    homology = _structural_homology(complex, zs, np.zeros((len(rows), 0), np.uint8), betti=1)
    return complex, homology


@dataclass(frozen=True)
class ProductMesh:
    """Metric product of a fiber complex and a flat-torus factor.

    Products are handled by factorization (no 4-complexes are built): volumes
    multiply, H1 = H1(fiber) + Z^2 by Kunneth, and the Abel-Jacobi data of
    the product is that of the torus factor.
    """

    fiber: WeightedComplex
    fiber_label: str
    torus: FlatTorusMesh
    fiber_betti: int = 0
    fiber_z2_rank: int = 0

    def volume(self) -> float:
        return measure(self.fiber) * measure(self.torus.complex)

    @property
    def betti(self) -> int:
        return self.fiber_betti + 2


def product_mesh(
    fiber: WeightedComplex,
    torus: FlatTorusMesh,
    label: str = "fiber",
    fiber_betti: int = 0,
    fiber_z2_rank: int = 0,
) -> ProductMesh:
    return ProductMesh(fiber, label, torus, fiber_betti, fiber_z2_rank)
