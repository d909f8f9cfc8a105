"""Piecewise-flat simplicial complexes with edge lengths.

A :class:`WeightedComplex` is the discrete stand-in for a Riemannian manifold:
a 2- or 3-complex whose metric is carried entirely by edge lengths (triangles
and tetrahedra are flat).  On top of it live first-homology models (spanning
tree plus integer cocycle, with separate Z2 layers for torsion), finite
windows of the free-abelian cover, and 2-sheeted covers for Z2 classes.

Chords are optional extra length-carrying segments (known geodesic shortcuts,
e.g. between second-ring neighbours) used by distance computations only; they
never contribute area or homology relations.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

__all__ = [
    "WeightedComplex",
    "HomologyModel",
    "CoverWindow",
    "WindowBudgetError",
    "triangle_area",
    "triangle_points",
    "tet_volume",
    "tet_points",
    "simplex_gradients",
    "build_homology",
    "build_cover_window",
    "double_cover",
    "refine",
    "load_mesh",
    "mesh_to_json",
]


class WindowBudgetError(MemoryError):
    """Requested cover window exceeds the node budget."""


# ---------------------------------------------------------------------------
# Flat simplex geometry from edge lengths
# ---------------------------------------------------------------------------


def triangle_area(l01: float, l02: float, l12: float) -> float:
    """Heron's formula (numerically stable form)."""
    a, b, c = sorted((l01, l02, l12), reverse=True)
    expr = (a + (b + c)) * (c - (a - b)) * (c + (a - b)) * (a + (b - c))
    return 0.25 * np.sqrt(max(expr, 0.0))


def triangle_points(l01: float, l02: float, l12: float) -> np.ndarray:
    """Plane coordinates of a flat triangle with the given side lengths."""
    x = (l01 * l01 + l02 * l02 - l12 * l12) / (2.0 * l01)
    y2 = l02 * l02 - x * x
    return np.array([[0.0, 0.0], [l01, 0.0], [x, np.sqrt(max(y2, 0.0))]])


def _tet_gram(lengths: np.ndarray) -> np.ndarray:
    # lengths order: (01, 02, 03, 12, 13, 23); Gram of edges from vertex 0.
    l01, l02, l03, l12, l13, l23 = lengths
    g = np.empty((3, 3))
    g[0, 0] = l01 * l01
    g[1, 1] = l02 * l02
    g[2, 2] = l03 * l03
    g[0, 1] = g[1, 0] = 0.5 * (l01 * l01 + l02 * l02 - l12 * l12)
    g[0, 2] = g[2, 0] = 0.5 * (l01 * l01 + l03 * l03 - l13 * l13)
    g[1, 2] = g[2, 1] = 0.5 * (l02 * l02 + l03 * l03 - l23 * l23)
    return g


def tet_volume(lengths) -> float:
    """Volume of a flat tetrahedron from its six edge lengths."""
    det = float(np.linalg.det(_tet_gram(np.asarray(lengths, dtype=float))))
    return np.sqrt(max(det, 0.0)) / 6.0


def tet_points(lengths) -> np.ndarray:
    """R^3 coordinates of a flat tetrahedron with the given edge lengths."""
    g = _tet_gram(np.asarray(lengths, dtype=float))
    # Symmetric factorization tolerates nearly degenerate (flat) tets.
    w, v = np.linalg.eigh(g)
    rows = v * np.sqrt(np.clip(w, 0.0, None))
    return np.vstack([np.zeros(3), rows])


def simplex_gradients(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Gradients of affinely interpolated vertex values on a flat simplex.

    ``points``: (k+1, k) flat coordinates, ``values``: (k+1, m).  Returns the
    (k, m) matrix G with G^T (p_i - p_0) = values_i - values_0.
    """
    e = points[1:] - points[0]
    dv = values[1:] - values[0]
    return np.linalg.solve(e, dv)


# ---------------------------------------------------------------------------
# The complex
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightedComplex:
    """Simplicial 2-/3-complex with positive edge lengths (piecewise flat)."""

    num_vertices: int
    edges: np.ndarray          # (E, 2) int, rows sorted (i < j), unique
    lengths: np.ndarray        # (E,) float > 0
    triangles: np.ndarray      # (T, 3) int vertex triples
    tetrahedra: np.ndarray     # (K, 4) int vertex quadruples (may be empty)
    orientable: bool = True
    coordinates: np.ndarray | None = None  # optional chart/embedding hints
    chords: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))
    chord_lengths: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        lengths = np.asarray(self.lengths, dtype=float).reshape(-1)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        tets = np.asarray(self.tetrahedra, dtype=np.int64).reshape(-1, 4)
        chords = np.asarray(self.chords, dtype=np.int64).reshape(-1, 2)
        chord_lengths = np.asarray(self.chord_lengths, dtype=float).reshape(-1)
        if len(edges) != len(lengths):
            raise ValueError("edges and lengths must have matching size")
        if len(chords) != len(chord_lengths):
            raise ValueError("chords and chord_lengths must have matching size")
        if np.any(edges[:, 0] >= edges[:, 1]):
            raise ValueError("edges must be sorted pairs (i < j)")
        if np.any(lengths <= 0) or np.any(chord_lengths <= 0):
            raise ValueError("edge lengths must be positive")
        for name, arr in (("edge", edges), ("triangle", tris), ("tetrahedron", tets), ("chord", chords)):
            if arr.size and (arr.min() < 0 or arr.max() >= self.num_vertices):
                raise ValueError(f"{name} refers to a vertex out of range")
        index = {(int(i), int(j)): k for k, (i, j) in enumerate(edges)}
        if len(index) != len(edges):
            raise ValueError("duplicate edges")

        def edge_id(u, v):
            key = (int(min(u, v)), int(max(u, v)))
            if key not in index:
                raise ValueError(f"simplex uses missing edge {key}")
            return index[key]

        for (a, b, c) in tris:
            la, lb, lc = lengths[edge_id(a, b)], lengths[edge_id(a, c)], lengths[edge_id(b, c)]
            if la + lb <= lc or la + lc <= lb or lb + lc <= la:
                raise ValueError(f"triangle ({a},{b},{c}) violates the strict triangle inequality")
        for quad in tets:
            ls = self._tet_edge_lengths(quad, lengths, index)
            if np.linalg.det(_tet_gram(ls)) <= 0:
                raise ValueError(f"tetrahedron {tuple(quad)} has inconsistent edge lengths")

        adj = sp.csr_matrix(
            (np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
            shape=(self.num_vertices, self.num_vertices),
        )
        n_comp, _ = connected_components(adj, directed=False)
        if n_comp != 1:
            raise ValueError("1-skeleton must be connected")

        for arr in (edges, lengths, tris, tets, chords, chord_lengths):
            arr.setflags(write=False)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "tetrahedra", tets)
        object.__setattr__(self, "chords", chords)
        object.__setattr__(self, "chord_lengths", chord_lengths)
        object.__setattr__(self, "_edge_index", index)

    @staticmethod
    def _tet_edge_lengths(quad, lengths, index):
        a, b, c, d = (int(v) for v in quad)
        pairs = [(a, b), (a, c), (a, d), (b, c), (b, d), (c, d)]
        return np.array([lengths[index[(min(u, v), max(u, v))]] for u, v in pairs])

    # -- lookup ------------------------------------------------------------

    def edge_id(self, u: int, v: int) -> int:
        return self._edge_index[(int(min(u, v)), int(max(u, v)))]

    def edge_length(self, u: int, v: int) -> float:
        return float(self.lengths[self.edge_id(u, v)])

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_segments(self) -> int:
        """Edges plus chords; cocycles and flows are indexed over all segments."""
        return len(self.edges) + len(self.chords)

    def segment_rows(self) -> np.ndarray:
        return np.vstack([self.edges, self.chords]) if len(self.chords) else self.edges

    def segment_lengths(self) -> np.ndarray:
        if len(self.chords):
            return np.concatenate([self.lengths, self.chord_lengths])
        return self.lengths

    def tet_lengths(self, quad) -> np.ndarray:
        return self._tet_edge_lengths(quad, self.lengths, self._edge_index)

    def triangle_lengths(self, tri) -> tuple[float, float, float]:
        a, b, c = (int(v) for v in tri)
        return self.edge_length(a, b), self.edge_length(a, c), self.edge_length(b, c)

    # -- measures ----------------------------------------------------------

    def total_area(self) -> float:
        return float(sum(triangle_area(*self.triangle_lengths(t)) for t in self.triangles))

    def total_volume(self) -> float:
        if len(self.tetrahedra) == 0:
            return self.total_area()
        return float(sum(tet_volume(self.tet_lengths(q)) for q in self.tetrahedra))

    def euler_characteristic(self) -> int:
        return int(
            self.num_vertices - len(self.edges) + len(self.triangles) - len(self.tetrahedra)
        )

    def metric_graph(self) -> sp.csr_matrix:
        """Symmetric sparse length matrix over edges and chords."""
        rows = self.segment_rows()
        data = self.segment_lengths()
        g = sp.csr_matrix(
            (np.concatenate([data, data]), (np.concatenate([rows[:, 0], rows[:, 1]]),
                                            np.concatenate([rows[:, 1], rows[:, 0]]))),
            shape=(self.num_vertices, self.num_vertices),
        )
        return g

    def boundary_edges(self) -> np.ndarray:
        """Edge ids contained in fewer than two triangles (2-complexes)."""
        count = np.zeros(len(self.edges), dtype=int)
        for (a, b, c) in self.triangles:
            for u, v in ((a, b), (a, c), (b, c)):
                count[self.edge_id(u, v)] += 1
        return np.flatnonzero(count < 2)


# ---------------------------------------------------------------------------
# Homology
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomologyModel:
    """Spanning-tree cocycle model of H1.

    ``cocycle`` maps each segment (edges then chords, oriented low->high
    vertex) to Z^b; it vanishes on tree edges and is closed on triangle
    boundaries.  ``z2_layers`` is the analogous mod-2 data for Z2 quotients
    that are invisible to the free part (torsion classes), one column each.
    """

    betti: int
    tree_mask: np.ndarray        # (segments,) bool, True on spanning-tree edges
    generator_segments: np.ndarray  # (b,) segment ids whose loops realize e_i
    cocycle: np.ndarray          # (segments, b) int
    z2_layers: np.ndarray        # (segments, k) uint8

    def __post_init__(self):
        coc = np.asarray(self.cocycle, dtype=np.int64).reshape(len(self.tree_mask), -1)
        z2 = np.asarray(self.z2_layers, dtype=np.uint8).reshape(len(self.tree_mask), -1)
        coc.setflags(write=False)
        z2.setflags(write=False)
        object.__setattr__(self, "cocycle", coc)
        object.__setattr__(self, "z2_layers", z2)

    @property
    def z2_rank(self) -> int:
        return self.z2_layers.shape[1]

    def walk_class(self, complex: WeightedComplex, walk) -> np.ndarray:
        """Z^b class of a closed vertex walk (consecutive vertices adjacent)."""
        total = np.zeros(self.betti, dtype=np.int64)
        rows = complex.segment_rows()
        index = {(int(i), int(j)): k for k, (i, j) in enumerate(rows)}
        for u, v in zip(walk, walk[1:]):
            if (u, v) in index:
                total += self.cocycle[index[(u, v)]]
            else:
                total -= self.cocycle[index[(v, u)]]
        return total


def _spanning_tree(complex: WeightedComplex) -> tuple[np.ndarray, np.ndarray]:
    """BFS tree over the edge skeleton: (tree mask over segments, parent edge)."""
    nseg = complex.num_segments
    rows = complex.segment_rows()
    nE = len(complex.edges)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(complex.num_vertices)]
    for k in range(nE):  # tree uses real edges only
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
    return tree, rows


def _rank_mod_p(matrix: np.ndarray, p: int) -> int:
    a = np.asarray(matrix, dtype=np.int64) % p
    rank = 0
    rows, cols = a.shape
    col = 0
    for col in range(cols):
        piv = None
        for r in range(rank, rows):
            if a[r, col] % p:
                piv = r
                break
        if piv is None:
            continue
        a[[rank, piv]] = a[[piv, rank]]
        inv = pow(int(a[rank, col]), p - 2, p)
        a[rank] = (a[rank] * inv) % p
        mask = np.flatnonzero(a[:, col] % p)
        mask = mask[mask != rank]
        if len(mask):
            a[mask] = (a[mask] - np.outer(a[mask, col], a[rank])) % p
        rank += 1
        if rank == rows:
            break
    return rank


def _rref_mod2(matrix: np.ndarray):
    a = (np.asarray(matrix, dtype=np.uint8) & 1).copy()
    rows, cols = a.shape
    pivots = []
    r = 0
    for c in range(cols):
        piv = None
        for rr in range(r, rows):
            if a[rr, c]:
                piv = rr
                break
        if piv is None:
            continue
        a[[r, piv]] = a[[piv, r]]
        hit = np.flatnonzero(a[:, c])
        hit = hit[hit != r]
        if len(hit):
            a[hit] ^= a[r]
        pivots.append(c)
        r += 1
        if r == rows:
            break
    return a, pivots


def _nullspace_mod2(matrix: np.ndarray) -> list[np.ndarray]:
    a, pivots = _rref_mod2(matrix)
    cols = matrix.shape[1]
    pivot_set = set(pivots)
    basis = []
    for free in range(cols):
        if free in pivot_set:
            continue
        x = np.zeros(cols, dtype=np.uint8)
        x[free] = 1
        for r, c in enumerate(pivots):
            # full RREF: pivot rows only touch free columns besides the pivot
            x[c] = int(np.sum(a[r] * x) - a[r, c] * x[c]) & 1
        basis.append(x)
    return basis


_RANK_PRIME = 2_147_483_647


def build_homology(complex: WeightedComplex, max_dense: int = 4000) -> HomologyModel:
    """First-homology model: Betti number, integer cocycle, Z2 torsion layers.

    Intended for desk-scale complexes (the relation matrix is handled
    densely); generated meshes attach structural models instead.  Chords are
    assigned the class of their shortest edge path, which is the correct
    homotopy class whenever the chord shadows that path.
    """
    tree, rows = _spanning_tree(complex)
    nE = len(complex.edges)
    nseg = complex.num_segments
    cotree = np.flatnonzero(~tree[:nE])
    m = len(cotree)
    cot_pos = {int(e): i for i, e in enumerate(cotree)}
    if m > max_dense:
        raise ValueError(
            f"complex too large for the dense homology path ({m} cotree edges); "
            "attach a structural model"
        )

    # Relation matrix: triangle boundaries in cotree coordinates.
    relations = np.zeros((len(complex.triangles), m), dtype=np.int64)
    for t, (a, b, c) in enumerate(complex.triangles):
        for u, v in ((a, b), (b, c), (c, a)):
            e = complex.edge_id(u, v)
            if tree[e]:
                continue
            sign = 1 if (u, v) == tuple(rows[e]) else -1
            relations[t, cot_pos[e]] += sign

    if m == 0:
        betti = 0
        coc_cotree = np.zeros((0, 0), dtype=np.int64)
        generators = np.zeros(0, dtype=np.int64)
    elif len(complex.triangles) == 0:
        betti = m
        coc_cotree = np.eye(m, dtype=np.int64)
        generators = cotree.copy()
    else:
        rank_q = _rank_mod_p(relations, _RANK_PRIME)
        betti = m - rank_q
        if betti == 0:
            coc_cotree = np.zeros((m, 0), dtype=np.int64)
            generators = np.zeros(0, dtype=np.int64)
        else:
            coc_cotree, free_cols = _integer_cocycle(relations, betti)
            generators = cotree[free_cols]

    cocycle = np.zeros((nseg, betti), dtype=np.int64)
    if betti:
        cocycle[cotree] = coc_cotree

    # Z2 layers: closed mod-2 cocycles not captured by the free part.
    z2 = _z2_torsion_layers(relations, cocycle[cotree] if betti else np.zeros((m, 0), np.int64), m)
    z2_full = np.zeros((nseg, z2.shape[1]), dtype=np.uint8)
    if z2.shape[1]:
        z2_full[cotree] = z2

    # Chord classes: potential difference along the tree plus closing cotree data
    # is wrong in general; use the shortest edge path instead.
    if len(complex.chords):
        graph = sp.csr_matrix(
            (np.concatenate([complex.lengths, complex.lengths]),
             (np.concatenate([complex.edges[:, 0], complex.edges[:, 1]]),
              np.concatenate([complex.edges[:, 1], complex.edges[:, 0]]))),
            shape=(complex.num_vertices, complex.num_vertices),
        )
        for c, (u, v) in enumerate(complex.chords):
            _, pred = dijkstra(graph, indices=int(u), return_predecessors=True)
            path = [int(v)]
            while path[-1] != int(u):
                path.append(int(pred[path[-1]]))
            path.reverse()
            total = np.zeros(betti, dtype=np.int64)
            total2 = np.zeros(z2_full.shape[1], dtype=np.uint8)
            for x, y in zip(path, path[1:]):
                e = complex.edge_id(x, y)
                sign = 1 if (x, y) == tuple(rows[e]) else -1
                total += sign * cocycle[e]
                total2 ^= z2_full[e]
            cocycle[nE + c] = total
            z2_full[nE + c] = total2

    return HomologyModel(betti, tree, generators.astype(np.int64), cocycle, z2_full)


def _integer_cocycle(relations: np.ndarray, betti: int):
    """Closed integer cocycle on cotree coordinates, normalized on free columns.

    Solves R z = 0 columnwise with z = e_i on a set of free columns chosen
    from a mod-p echelon form.  Solutions are reconstructed from a float
    least-squares solve and verified exactly over the integers; small
    denominators (torsion orders) are cleared by trial scaling.
    """
    t, m = relations.shape
    a = relations % _RANK_PRIME
    # mod-p echelon to find pivot columns
    aa = a.copy()
    pivots = []
    r = 0
    for c in range(m):
        piv = None
        for rr in range(r, t):
            if aa[rr, c] % _RANK_PRIME:
                piv = rr
                break
        if piv is None:
            continue
        aa[[r, piv]] = aa[[piv, r]]
        inv = pow(int(aa[r, c]), _RANK_PRIME - 2, _RANK_PRIME)
        aa[r] = (aa[r] * inv) % _RANK_PRIME
        hit = np.flatnonzero(aa[:, c] % _RANK_PRIME)
        hit = hit[hit != r]
        if len(hit):
            aa[hit] = (aa[hit] - np.outer(aa[hit, c], aa[r])) % _RANK_PRIME
        pivots.append(c)
        r += 1
    free_cols = [c for c in range(m) if c not in set(pivots)]
    if len(free_cols) != betti:
        raise RuntimeError("free column count does not match Betti number")
    piv_cols = list(pivots)
    rp = relations[:, piv_cols].astype(float)
    cocycle = np.zeros((m, betti), dtype=np.int64)
    for i, g in enumerate(free_cols):
        rhs = -relations[:, g].astype(float)
        sol, *_ = np.linalg.lstsq(rp, rhs, rcond=None)
        z = np.zeros(m)
        z[piv_cols] = sol
        z[g] = 1.0
        zi = np.round(z).astype(np.int64)
        if np.max(np.abs(z - zi)) > 1e-6 or (relations @ zi).any():
            # fractional solution: the chosen generator interferes with torsion
            raise RuntimeError(
                "integer cocycle requires a torsion-compatible generator choice; "
                "attach a structural homology model for this complex"
            )
        cocycle[:, i] = zi
    return cocycle, free_cols


def _z2_torsion_layers(relations: np.ndarray, free_cocycle: np.ndarray, m: int) -> np.ndarray:
    """Mod-2 closed cocycles independent of the free part, one column each."""
    if m == 0:
        return np.zeros((0, 0), dtype=np.uint8)
    if relations.size == 0:
        return np.zeros((m, 0), dtype=np.uint8)
    null2 = _nullspace_mod2(relations % 2)
    if not null2:
        return np.zeros((m, 0), dtype=np.uint8)
    # quotient by the span of the free cocycle columns mod 2
    span = (free_cocycle % 2).astype(np.uint8).T  # rows spanning the known part
    layers = []
    basis = [row for row in span if row.any()]

    def reduce(vec, basis):
        vec = vec.copy()
        for b in basis:
            lead = int(np.argmax(b))
            if b[lead] and vec[lead]:
                vec ^= b
        return vec

    # echelonize the known span first
    echelon: list[np.ndarray] = []
    for row in basis:
        row = reduce(row, echelon)
        if row.any():
            echelon.append(row)
    for cand in null2:
        row = reduce(cand.astype(np.uint8), echelon)
        if row.any():
            echelon.append(row)
            layers.append(cand.astype(np.uint8))
    if not layers:
        return np.zeros((m, 0), dtype=np.uint8)
    return np.stack(layers, axis=1)


# ---------------------------------------------------------------------------
# Covers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CoverWindow:
    """Finite window of the Z^b free-abelian cover.

    Nodes are (shift, base vertex) pairs with shift in the box [-R, R]^b,
    numbered ``shift_index * V + vertex``.  Deck translations act by shifting
    the box index; lengths are copied from the base.
    """

    base: WeightedComplex
    homology: HomologyModel
    radius: np.ndarray
    shifts: np.ndarray          # (S, b) int, lexicographic
    graph: sp.csr_matrix        # metric graph over all window nodes

    @property
    def num_copies(self) -> int:
        return len(self.shifts)

    @property
    def num_nodes(self) -> int:
        return self.num_copies * self.base.num_vertices

    def shift_id(self, shift) -> int:
        key = np.asarray(shift, dtype=np.int64)
        idx = self._shift_lookup.get(tuple(int(x) for x in key))
        if idx is None:
            raise KeyError(f"shift {tuple(key)} outside window")
        return idx

    def node(self, vertex: int, shift) -> int:
        return self.shift_id(shift) * self.base.num_vertices + int(vertex)

    def vertex_of(self, node: int) -> int:
        return int(node % self.base.num_vertices)

    def shift_of(self, node: int) -> np.ndarray:
        return self.shifts[node // self.base.num_vertices]

    def translate(self, node: int, deck) -> int:
        """Image of a node under the deck translation; raises if it leaves the window."""
        target = self.shift_of(node) + np.asarray(deck, dtype=np.int64)
        return self.node(self.vertex_of(node), target)

    def __post_init__(self):
        lookup = {tuple(int(x) for x in s): k for k, s in enumerate(self.shifts)}
        object.__setattr__(self, "_shift_lookup", lookup)


_WINDOW_NODE_BUDGET = 4_000_000


def build_cover_window(
    complex: WeightedComplex,
    homology: HomologyModel,
    radius,
    node_budget: int = _WINDOW_NODE_BUDGET,
) -> CoverWindow:
    """Window of the Z^b cover with the given box radius (componentwise >= 1)."""
    b = homology.betti
    radius = np.broadcast_to(np.asarray(radius, dtype=np.int64), (b,)).copy()
    if b == 0:
        raise ValueError("cover window requires b >= 1")
    if np.any(radius < 1):
        raise ValueError("window radius must be >= 1 componentwise")
    axes = [np.arange(-int(r), int(r) + 1) for r in radius]
    grids = np.meshgrid(*axes, indexing="ij")
    shifts = np.stack([g.ravel() for g in grids], axis=1)
    n_nodes = len(shifts) * complex.num_vertices
    if n_nodes > node_budget:
        raise WindowBudgetError(
            f"cover window needs {n_nodes} nodes, over the budget of {node_budget}"
        )
    lookup = {tuple(int(x) for x in s): k for k, s in enumerate(shifts)}
    rows = complex.segment_rows()
    lens = complex.segment_lengths()
    coc = homology.cocycle
    src, dst, data = [], [], []
    V = complex.num_vertices
    for k, s in enumerate(shifts):
        for e in range(len(rows)):
            t = lookup.get(tuple(int(x) for x in (s + coc[e])))
            if t is not None:
                src.append(k * V + rows[e, 0])
                dst.append(t * V + rows[e, 1])
                data.append(lens[e])
    graph = sp.csr_matrix(
        (np.concatenate([data, data]), (np.concatenate([src, dst]), np.concatenate([dst, src]))),
        shape=(n_nodes, n_nodes),
    )
    return CoverWindow(complex, homology, radius, shifts, graph)


def double_cover(
    complex: WeightedComplex,
    z2_class: np.ndarray,
    orientable: bool | None = None,
) -> WeightedComplex:
    """2-sheeted cover determined by a nonzero closed Z2 segment cochain.

    Vertex (v, s) is numbered ``s * V + v``; an edge with class 1 connects the
    two sheets.  Loops with trivial class lift to loops, nontrivial ones
    connect the two lifts of their basepoint.
    """
    z = np.asarray(z2_class, dtype=np.uint8).reshape(-1) & 1
    if len(z) != complex.num_segments:
        raise ValueError("class vector must cover all segments")
    if not z.any():
        raise ValueError("trivial cover requested")
    # closedness on triangle boundaries
    for (a, b, c) in complex.triangles:
        total = z[complex.edge_id(a, b)] ^ z[complex.edge_id(b, c)] ^ z[complex.edge_id(a, c)]
        if total:
            raise ValueError("class is not closed on triangle boundaries")
    V = complex.num_vertices
    nE = len(complex.edges)

    def lift_vertex(v, sheet):
        return int(sheet) * V + int(v)

    edges, lengths = [], []
    for e, (u, v) in enumerate(complex.edges):
        for s in (0, 1):
            a, bb = lift_vertex(u, s), lift_vertex(v, s ^ int(z[e]))
            edges.append((min(a, bb), max(a, bb)))
            lengths.append(complex.lengths[e])

    def tri_lift(tri, s):
        a, b, c = (int(x) for x in tri)
        sb = s ^ int(z[complex.edge_id(a, b)])
        sc = s ^ int(z[complex.edge_id(a, c)])
        return (lift_vertex(a, s), lift_vertex(b, sb), lift_vertex(c, sc))

    tris = [tri_lift(t, s) for t in complex.triangles for s in (0, 1)]

    def tet_lift(quad, s):
        a, b, c, d = (int(x) for x in quad)
        return (
            lift_vertex(a, s),
            lift_vertex(b, s ^ int(z[complex.edge_id(a, b)])),
            lift_vertex(c, s ^ int(z[complex.edge_id(a, c)])),
            lift_vertex(d, s ^ int(z[complex.edge_id(a, d)])),
        )

    tets = [tet_lift(q, s) for q in complex.tetrahedra for s in (0, 1)]

    chords, chord_lengths = [], []
    for c, (u, v) in enumerate(complex.chords):
        zc = int(z[nE + c])
        for s in (0, 1):
            a, bb = lift_vertex(u, s), lift_vertex(v, s ^ zc)
            chords.append((min(a, bb), max(a, bb)))
            chord_lengths.append(complex.chord_lengths[c])

    coords = None
    if complex.coordinates is not None:
        coords = np.vstack([complex.coordinates, complex.coordinates])
    return WeightedComplex(
        num_vertices=2 * V,
        edges=np.array(sorted(set(edges)), dtype=np.int64),
        lengths=_relength(edges, lengths),
        triangles=np.array(tris, dtype=np.int64) if tris else np.zeros((0, 3), np.int64),
        tetrahedra=np.array(tets, dtype=np.int64) if tets else np.zeros((0, 4), np.int64),
        orientable=complex.orientable if orientable is None else orientable,
        coordinates=coords,
        chords=np.array(sorted(set(map(tuple, chords))), dtype=np.int64) if chords else np.zeros((0, 2), np.int64),
        chord_lengths=_relength(list(map(tuple, chords)), chord_lengths),
    )


def _relength(pairs, lengths):
    """Lengths re-ordered to match the sorted unique pair list."""
    if not pairs:
        return np.zeros(0)
    table = {}
    for p, l in zip(pairs, lengths):
        table[tuple(p)] = l
    return np.array([table[p] for p in sorted(set(map(tuple, pairs)))])


# ---------------------------------------------------------------------------
# Refinement
# ---------------------------------------------------------------------------


def refine(complex: WeightedComplex) -> WeightedComplex:
    """Edge-midpoint subdivision of a 2-complex (exact for the flat metric).

    Children of an edge have half its length; the three mid-segments of a
    triangle are the flat midlines, i.e. half the opposite sides.  Chords are
    dropped (they no longer shadow single coarse cells).
    """
    if len(complex.tetrahedra):
        raise ValueError("refinement is implemented for 2-complexes only")
    V = complex.num_vertices
    mid_of = {}
    edges, lengths = [], []

    def midpoint(u, v):
        key = (min(u, v), max(u, v))
        if key not in mid_of:
            mid_of[key] = V + len(mid_of)
        return mid_of[key]

    def add_edge(u, v, l):
        edges.append((min(u, v), max(u, v)))
        lengths.append(l)

    for e, (u, v) in enumerate(complex.edges):
        w = midpoint(u, v)
        add_edge(u, w, complex.lengths[e] / 2)
        add_edge(w, v, complex.lengths[e] / 2)
    tris = []
    for (a, b, c) in complex.triangles:
        mab, mac, mbc = midpoint(a, b), midpoint(a, c), midpoint(b, c)
        lab, lac, lbc = complex.triangle_lengths((a, b, c))
        add_edge(mab, mac, lbc / 2)
        add_edge(mab, mbc, lac / 2)
        add_edge(mac, mbc, lab / 2)
        tris += [(a, mab, mac), (b, mab, mbc), (c, mac, mbc), (mab, mbc, mac)]

    coords = None
    if complex.coordinates is not None:
        extra = np.zeros((len(mid_of), complex.coordinates.shape[1]))
        for (u, v), w in mid_of.items():
            extra[w - V] = 0.5 * (complex.coordinates[u] + complex.coordinates[v])
        coords = np.vstack([complex.coordinates, extra])

    pair_list = sorted(set(edges))
    return WeightedComplex(
        num_vertices=V + len(mid_of),
        edges=np.array(pair_list, dtype=np.int64),
        lengths=_relength(edges, lengths),
        triangles=np.array(tris, dtype=np.int64),
        tetrahedra=np.zeros((0, 4), np.int64),
        orientable=complex.orientable,
        coordinates=coords,
    )


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------


def load_mesh(source) -> WeightedComplex:
    """Read a mesh from JSON with keys vertices, edges, triangles, tets, orientable."""
    if isinstance(source, WeightedComplex):
        return source
    if isinstance(source, (str, Path)):
        text = str(source)
        data = json.loads(Path(text).read_text() if Path(text).exists() else text)
    else:
        data = source
    vertices = data["vertices"]
    if isinstance(vertices, int):
        nv, coords = vertices, None
    else:
        coords = np.asarray(vertices, dtype=float)
        nv = len(coords)
    raw_edges = data["edges"]
    edges = np.array([[min(int(i), int(j)), max(int(i), int(j))] for i, j, _ in raw_edges], dtype=np.int64)
    lengths = np.array([float(l) for _, _, l in raw_edges])
    order = np.lexsort((edges[:, 1], edges[:, 0]))
    return WeightedComplex(
        num_vertices=nv,
        edges=edges[order],
        lengths=lengths[order],
        triangles=np.asarray(data.get("triangles", []), dtype=np.int64).reshape(-1, 3),
        tetrahedra=np.asarray(data.get("tets", []), dtype=np.int64).reshape(-1, 4),
        orientable=bool(data.get("orientable", True)),
        coordinates=coords,
    )


def mesh_to_json(complex: WeightedComplex) -> dict:
    out = {
        "vertices": complex.num_vertices if complex.coordinates is None else complex.coordinates.tolist(),
        "edges": [[int(i), int(j), float(l)] for (i, j), l in zip(complex.edges, complex.lengths)],
        "triangles": complex.triangles.tolist(),
        "orientable": complex.orientable,
    }
    if len(complex.tetrahedra):
        out["tets"] = complex.tetrahedra.tolist()
    return out
