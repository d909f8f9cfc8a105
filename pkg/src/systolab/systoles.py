"""Systoles and stable norms on weighted complexes.

Homotopy systole (shortest loop detectable by abelian or Z2 invariants),
phi-relative systole via double covers, stable norm by linear programming
over edge flows, stable systole with a certified enumeration box, and metric
ball areas.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog
from scipy.sparse.csgraph import dijkstra

from .complexes import (
    CoverWindow,
    HomologyModel,
    WeightedComplex,
    WindowBudgetError,
    build_cover_window,
    double_cover,
    triangle_points,
)

__all__ = [
    "CycleChain",
    "SystoleReport",
    "NoDetectableClassError",
    "CertificationError",
    "stable_norm",
    "stable_norm_detail",
    "stable_systole",
    "homotopy_systole",
    "phi_systole",
    "ball_area",
    "chain_boundary_residual",
]


class NoDetectableClassError(ValueError):
    """The complex has no class visible to the abelian or Z2 invariants."""


class CertificationError(RuntimeError):
    """An enumeration box could not be certified; try a larger box."""


@dataclass(frozen=True)
class CycleChain:
    """Real edge flow with zero boundary, indexed over segments."""

    coefficients: np.ndarray
    homology_class: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=float)
        h = np.asarray(self.homology_class)
        c.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "homology_class", h)

    def mass(self, complex: WeightedComplex) -> float:
        return float(np.abs(self.coefficients) @ complex.segment_lengths())


@dataclass(frozen=True)
class SystoleReport:
    """A systole value together with its witness."""

    value: float
    kind: str                     # homotopy | phi_relative | stable
    witness_walk: list | None = None
    witness_chain: CycleChain | None = None
    witness_class: np.ndarray | None = None

    def to_json(self) -> dict:
        out = {"kind": self.kind, "value": self.value}
        if self.witness_walk is not None:
            out["witness"] = [int(v) for v in self.witness_walk]
        elif self.witness_chain is not None:
            out["witness"] = self.witness_chain.coefficients.tolist()
        if self.witness_class is not None:
            out["class"] = [int(x) for x in np.asarray(self.witness_class)]
        return out


def chain_boundary_residual(complex: WeightedComplex, chain: CycleChain) -> float:
    """Max absolute signed coefficient sum over vertices (0 for a cycle)."""
    rows = complex.segment_rows()
    div = np.zeros(complex.num_vertices)
    np.subtract.at(div, rows[:, 0], chain.coefficients)
    np.add.at(div, rows[:, 1], chain.coefficients)
    return float(np.max(np.abs(div))) if len(div) else 0.0


# ---------------------------------------------------------------------------
# Stable norm (linear programming over edge flows)
# ---------------------------------------------------------------------------


def _flow_lp(complex: WeightedComplex, homology: HomologyModel, h: np.ndarray):
    rows = complex.segment_rows()
    lengths = complex.segment_lengths()
    nseg = len(rows)
    incidence = sp.csr_matrix(
        (np.concatenate([-np.ones(nseg), np.ones(nseg)]),
         (np.concatenate([rows[:, 0], rows[:, 1]]), np.concatenate([np.arange(nseg)] * 2))),
        shape=(complex.num_vertices, nseg),
    )
    pairing = sp.csr_matrix(homology.cocycle.T.astype(float))
    a_eq = sp.vstack([sp.hstack([incidence, -incidence]),
                      sp.hstack([pairing, -pairing])]).tocsc()
    b_eq = np.concatenate([np.zeros(complex.num_vertices), np.asarray(h, dtype=float)])
    cost = np.concatenate([lengths, lengths])
    res = linprog(cost, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    return res


def stable_norm(complex: WeightedComplex, homology: HomologyModel, h) -> float:
    """Minimal mass of a real cycle with the given Z^b class.

    LP over split nonnegative edge flows with zero boundary and prescribed
    cocycle pairing; zero exactly for the zero class.
    """
    h = np.asarray(h, dtype=float).reshape(homology.betti)
    if not h.any():
        return 0.0
    res = _flow_lp(complex, homology, h)
    if res.status != 0:
        raise ValueError(f"class not representable: {res.message}")
    return float(res.fun)


def stable_norm_detail(complex: WeightedComplex, homology: HomologyModel, h):
    """Stable norm plus the optimal chain and a feasible dual vector.

    The dual y satisfies <y, h'> <= stable_norm(h') for every class h', which
    certifies enumeration boxes.
    """
    h = np.asarray(h, dtype=float).reshape(homology.betti)
    res = _flow_lp(complex, homology, h)
    if res.status != 0:
        raise ValueError(f"class not representable: {res.message}")
    nseg = complex.num_segments
    flow = res.x[:nseg] - res.x[nseg:]
    chain = CycleChain(flow, np.asarray(h))
    marginals = np.asarray(res.eqlin.marginals)
    sign = 1.0 if marginals[complex.num_vertices:] @ h >= 0 else -1.0
    pot = sign * marginals[: complex.num_vertices]
    y = sign * marginals[complex.num_vertices:]
    # Dual feasibility |pot_j - pot_i + <y, z_e>| <= l_e certifies
    # <y, h'> <= stable_norm(h') for all h'; rescale if marginally violated.
    rows = complex.segment_rows()
    lengths = complex.segment_lengths()
    reach = np.abs(pot[rows[:, 1]] - pot[rows[:, 0]] + homology.cocycle @ y)
    ratio = float(np.max(reach / lengths))
    if ratio > 1.0:
        y = y / ratio
    return float(res.fun), chain, y


def _box_classes(betti: int, box: int):
    axes = [np.arange(-box, box + 1)] * betti
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, betti)
    return grid[np.any(grid != 0, axis=1)]


def _min_dual_bound_on_box_surface(duals: np.ndarray, betti: int) -> float:
    """min over the unit sup-norm sphere of max_i |<y_i, u>| (via facet LPs)."""
    best = np.inf
    n_dual = len(duals)
    for axis in range(betti):
        for sign in (-1.0, 1.0):
            # minimize t subject to -t <= <y_i, u> <= t, u_axis = sign, |u_j| <= 1
            c = np.zeros(betti + 1)
            c[-1] = 1.0
            a_ub, b_ub = [], []
            for y in duals:
                a_ub.append(np.concatenate([y, [-1.0]]))
                b_ub.append(0.0)
                a_ub.append(np.concatenate([-y, [-1.0]]))
                b_ub.append(0.0)
            bounds = [(-1.0, 1.0)] * betti + [(0.0, None)]
            a_eq = np.zeros((1, betti + 1))
            a_eq[0, axis] = 1.0
            res = linprog(c, A_ub=np.array(a_ub), b_ub=np.array(b_ub),
                          A_eq=a_eq, b_eq=[sign], bounds=bounds, method="highs")
            if res.status == 0:
                best = min(best, float(res.fun))
    return best if n_dual else 0.0


def stable_systole(
    complex: WeightedComplex,
    homology: HomologyModel,
    box: int = 3,
) -> SystoleReport:
    """Minimum of the stable norm over nonzero integer classes.

    Classes are enumerated in the sup-norm box; LP duals of the generator
    norms certify that everything outside the box is longer than the best
    value found (raises :class:`CertificationError` otherwise).
    """
    b = homology.betti
    if b < 1:
        raise NoDetectableClassError("stable systole requires b >= 1")
    duals = []
    best = np.inf
    best_class = None
    for i in range(b):
        e_i = np.zeros(b, dtype=np.int64)
        e_i[i] = 1
        val, _, y = stable_norm_detail(complex, homology, e_i.astype(float))
        duals.append(y)
        if val < best:
            best, best_class = val, e_i
    duals = np.array(duals)
    for h in _box_classes(b, box):
        if abs(h).max() == 1 and (h != 0).sum() == 1:
            continue  # generators already evaluated
        # dual lower bound skips classes that cannot win
        if np.max(np.abs(duals @ h)) >= best:
            continue
        val = stable_norm(complex, homology, h)
        if val < best:
            best, best_class = val, h
    m_min = _min_dual_bound_on_box_surface(duals, b)
    if (box + 1) * m_min < best - 1e-9:
        raise CertificationError(
            f"classes outside the box are only bounded below by {(box + 1) * m_min:.6g} "
            f"< best {best:.6g}; retry with a larger box"
        )
    _, chain, _ = stable_norm_detail(complex, homology, best_class.astype(float))
    return SystoleReport(
        value=best,
        kind="stable",
        witness_chain=chain,
        witness_class=best_class,
    )


# ---------------------------------------------------------------------------
# Homotopy and phi systoles via covers
# ---------------------------------------------------------------------------


_ALL_PAIRS_LIMIT = 3200


def _graph_diameter(complex: WeightedComplex) -> float:
    g = complex.metric_graph()
    if complex.num_vertices <= _ALL_PAIRS_LIMIT:
        return float(dijkstra(g).max())
    return 2.0 * float(dijkstra(g, indices=0).max())


def _window_loop_search(window: CoverWindow, cap: float):
    """min over vertices and nonzero shifts of d(lift, translated lift)."""
    V = window.base.num_vertices
    center = window.shift_id(np.zeros(window.homology.betti, dtype=int))
    sources = np.arange(center * V, (center + 1) * V)
    limit = cap * (1 + 1e-9) if np.isfinite(cap) else np.inf
    dist = dijkstra(window.graph, indices=sources, limit=limit)
    best, arg = np.inf, None
    for s in range(window.num_copies):
        if s == center:
            continue
        vals = dist[np.arange(V), s * V + np.arange(V)]
        k = int(np.argmin(vals))
        if vals[k] < best:
            best = float(vals[k])
            arg = (k, s)
    return best, arg


def _extract_walk(window: CoverWindow, vertex: int, shift_id: int):
    V = window.base.num_vertices
    start = window.shift_id(np.zeros(window.homology.betti, dtype=int)) * V + vertex
    goal = shift_id * V + vertex
    _, pred = dijkstra(window.graph, indices=start, return_predecessors=True)
    node = goal
    walk = [node]
    while node != start:
        node = int(pred[node])
        if node < 0:
            return None
        walk.append(node)
    walk.reverse()
    return [window.vertex_of(n) for n in walk]


def homotopy_systole(
    complex: WeightedComplex,
    homology: HomologyModel,
    max_radius: int = 8,
) -> SystoleReport:
    """Shortest loop with nonzero class in Z^b or in a Z2 layer.

    Z2 layers are handled first through double covers (their value caps the
    remaining search).  For the abelian part, per-vertex shortest paths
    between distinct lifts in a cover window give candidate loops; LP duals
    of the generator stable norms certify the window radius, so the result is
    minimal among loops detectable by these invariants.
    """
    b = homology.betti
    candidates: list[SystoleReport] = []

    for layer in range(homology.z2_rank):
        rep = phi_systole(complex, homology.z2_layers[:, layer])
        candidates.append(SystoleReport(
            value=rep.value,
            kind="homotopy",
            witness_walk=rep.witness_walk,
            witness_class=None,
        ))
    cap = min((r.value for r in candidates), default=np.inf)

    if b >= 1:
        duals = []
        for i in range(b):
            e_i = np.zeros(b)
            e_i[i] = 1.0
            _, _, y = stable_norm_detail(complex, homology, e_i)
            duals.append(y)
        duals = np.array(duals)
        m_min = _min_dual_bound_on_box_surface(duals, b)
        if m_min <= 0:
            raise CertificationError("degenerate dual bounds; cannot certify the window")
        diam = _graph_diameter(complex)
        # quick pass for an upper bound, then a certified window
        window = build_cover_window(complex, homology, 1)
        upper, arg0 = _window_loop_search(window, cap)
        cap = min(cap, upper)
        best, arg, radius = upper, arg0, 1
        while True:
            # any loop of length <= cap only visits deck elements w with
            # stable_norm(w) <= cap + diam, and stable_norm >= m_min * |w|_inf
            needed = int(np.ceil((cap + diam) / m_min))
            if radius >= needed:
                break
            if needed > max_radius:
                raise CertificationError(
                    f"certified window radius {needed} exceeds the cap {max_radius}"
                )
            radius = needed
            window = build_cover_window(complex, homology, radius)
            best, arg = _window_loop_search(window, cap)
            cap = min(cap, best)
        if arg is not None and np.isfinite(best):
            vertex, shift_id = arg
            walk = _extract_walk(window, vertex, shift_id)
            candidates.append(SystoleReport(
                value=best,
                kind="homotopy",
                witness_walk=walk,
                witness_class=window.shifts[shift_id].copy(),
            ))

    if not candidates:
        raise NoDetectableClassError("no detectable noncontractible loop")
    return min(candidates, key=lambda r: r.value)


def phi_systole(complex: WeightedComplex, phi) -> SystoleReport:
    """Shortest loop whose class under the Z2 epimorphism phi is nontrivial.

    Computed as the minimal distance between the two lifts of a vertex in the
    double cover determined by phi.
    """
    phi = np.asarray(phi, dtype=np.uint8).reshape(-1) & 1
    if not phi.any():
        raise ValueError("trivial cover requested: phi must be a nonzero class")
    cover = double_cover(complex, phi)
    V = complex.num_vertices
    g = cover.metric_graph()
    dist = dijkstra(g, indices=np.arange(V))
    vals = dist[np.arange(V), V + np.arange(V)]
    vertex = int(np.argmin(vals))
    best = float(vals[vertex])
    _, pred = dijkstra(g, indices=vertex, return_predecessors=True)
    node = V + vertex
    walk = [node]
    while node != vertex:
        node = int(pred[node])
        if node < 0:
            walk = None
            break
        walk.append(node)
    if walk is not None:
        walk.reverse()
        walk = [n % V for n in walk]
    return SystoleReport(value=best, kind="phi_relative", witness_walk=walk)


# ---------------------------------------------------------------------------
# Metric balls
# ---------------------------------------------------------------------------


def _triangle_sublevel_area(points: np.ndarray, values: np.ndarray, r: float) -> float:
    """Area of {affine interpolation <= r} inside a flat triangle."""
    inside = values <= r
    if inside.all():
        pts = points
    elif not inside.any():
        return 0.0
    else:
        poly = []
        for a in range(3):
            bidx = (a + 1) % 3
            if inside[a]:
                poly.append(points[a])
            va, vb = values[a], values[bidx]
            if (va <= r) != (vb <= r):
                t = (r - va) / (vb - va)
                poly.append(points[a] + t * (points[bidx] - points[a]))
        pts = np.array(poly)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)))


def ball_area(complex: WeightedComplex, center: int, radius: float) -> float:
    """Area of the metric ball around a vertex (graph-geodesic distances).

    Piecewise-linear approximation: each triangle contributes the area of the
    sublevel set of the interpolated distance field.
    """
    if len(complex.triangles) == 0:
        raise ValueError("ball areas require a surface complex")
    dist = dijkstra(complex.metric_graph(), indices=int(center))
    total = 0.0
    for (a, b, c) in complex.triangles:
        lab, lac, lbc = complex.triangle_lengths((a, b, c))
        pts = triangle_points(lab, lac, lbc)
        total += _triangle_sublevel_area(pts, dist[[a, b, c]], radius)
    return float(total)
