"""Discrete area-nonexpanding Abel-Jacobi maps.

Pipeline: sample the stable norm to get a polyhedral unit ball, decompose
the John quadratic form into rank-1 terms, build one equivariant 1-Lipschitz
field per functional on a cover window (McShane extension, optionally
balanced or affine), assemble the component map, project back through the
isometry onto the quadratic form's coordinates, and descend to the Jacobi
torus.  Per-simplex differentials certify the trace bound and the Jacobian
bound; level sets of the descended map yield fiber volumes for the coarea
audit.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import ConvexHull

from .bodies import RankOneDecomposition, SymmetricBody, spectral_decomposition
from .complexes import (
    CoverWindow,
    HomologyModel,
    WeightedComplex,
    build_cover_window,
    tet_points,
    tet_volume,
    triangle_points,
)
from .systoles import stable_norm

__all__ = [
    "LipschitzField",
    "JacobiMap",
    "JacobianCertificationError",
    "stable_unit_ball",
    "mcshane_extend",
    "build_jacobi_map",
    "jacobian_certificate",
    "fiber_extract",
    "coarea_audit",
]


class JacobianCertificationError(RuntimeError):
    """A per-simplex trace or Jacobian bound failed."""


@dataclass(frozen=True)
class LipschitzField:
    """Equivariant vertex field on a cover window, 1-Lipschitz on every edge.

    ``values`` is indexed by window nodes; equivariance f(x + v) = f(x) +
    <slope, v> holds exactly by construction (core values are extended by the
    deck character).  ``lipschitz_margin`` is max(|df| - length) over window
    edges.
    """

    values: np.ndarray
    slope: np.ndarray
    lipschitz_margin: float
    base_vertex: int

    def core_values(self, window: CoverWindow) -> np.ndarray:
        center = window.shift_id(np.zeros(window.homology.betti, dtype=int))
        V = window.base.num_vertices
        return self.values[center * V:(center + 1) * V]


@dataclass(frozen=True)
class JacobiMap:
    """Descended Abel-Jacobi map with per-simplex certification data."""

    complex: WeightedComplex
    homology: HomologyModel
    weights: np.ndarray            # (N,)
    functionals: np.ndarray        # (N, b)
    target_form: np.ndarray        # (b, b): sum of lambda_i L_i L_i^T
    fields: list
    vertex_images: np.ndarray      # (V, b), Jacobi-torus coordinates
    simplex_kind: str              # "triangle" or "tetrahedron"
    traces: np.ndarray             # per top simplex
    jacobians: np.ndarray          # per top simplex (top-b area expansion)
    triangle_traces: np.ndarray
    triangle_jacobians: np.ndarray

    @property
    def betti(self) -> int:
        return self.target_form.shape[0]

    def to_json(self) -> dict:
        return {
            "vertex_images": self.vertex_images.tolist(),
            "jacobians": self.jacobians.tolist(),
            "traces": self.traces.tolist(),
            "slopes": self.functionals.tolist(),
            "weights": self.weights.tolist(),
        }


# ---------------------------------------------------------------------------
# Stable-norm unit ball
# ---------------------------------------------------------------------------


def _primitive_box_classes(betti: int, box: int):
    axes = [np.arange(-box, box + 1)] * betti
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, betti)
    out = []
    seen = set()
    for h in grid:
        if not h.any():
            continue
        g = int(np.gcd.reduce(np.abs(h[h != 0])))
        key = tuple(h // g)
        if key in seen or tuple(-(h // g)) in seen:
            continue
        seen.add(key)
        out.append(h // g)
    return out


def stable_unit_ball(
    complex: WeightedComplex,
    homology: HomologyModel,
    box: int = 3,
) -> SymmetricBody:
    """Polyhedral approximation of the stable-norm unit ball in H1 x R.

    Evaluates the stable norm on all primitive integer classes in the
    sup-norm box, places the normalized classes on the unit sphere, and
    returns the convex hull of the symmetrized sample in facet form (the
    polar of the sampled dual body).
    """
    b = homology.betti
    if b < 1:
        raise ValueError("stable unit ball requires b >= 1")
    points = []
    for h in _primitive_box_classes(b, box):
        s = stable_norm(complex, homology, h.astype(float))
        if s <= 0:
            raise ValueError(f"class {h} has nonpositive stable norm")
        points.append(h / s)
    pts = np.array(points)
    sym = np.vstack([pts, -pts])
    if b == 1:
        return SymmetricBody(np.array([[1.0 / float(np.max(sym))]]))
    hull = ConvexHull(sym)
    # hull facets: normal . x + offset <= 0 with offset < 0 (origin interior)
    functionals = []
    for eq in hull.equations:
        normal, offset = eq[:-1], eq[-1]
        a = -normal / offset
        for prev in functionals:
            if np.allclose(prev, a, atol=1e-12) or np.allclose(prev, -a, atol=1e-12):
                break
        else:
            functionals.append(a)
    return SymmetricBody(np.array(functionals))


# ---------------------------------------------------------------------------
# Equivariant Lipschitz fields
# ---------------------------------------------------------------------------


def _orbit_inf_field(window: CoverWindow, base_vertex: int, potentials: np.ndarray):
    """min over orbit lifts of potential + graph distance (virtual source)."""
    V = window.base.num_vertices
    n = window.num_nodes
    orbit = np.array([s * V + base_vertex for s in range(window.num_copies)])
    shift = potentials - potentials.min()
    g = window.graph.tocoo()
    rows = np.concatenate([g.row, g.col, np.full(len(orbit), n)])
    cols = np.concatenate([g.col, g.row, orbit])
    data = np.concatenate([g.data, g.data, shift])
    aug = sp.csr_matrix((data, (rows, cols)), shape=(n + 1, n + 1))
    dist = dijkstra(aug, directed=True, indices=n)
    return dist[:n] + potentials.min()


def _relax_to_lipschitz(window: CoverWindow, core: np.ndarray, L: np.ndarray,
                        base_vertex: int, max_sweeps: int = 10_000) -> np.ndarray:
    """Project a quotient field onto the equivariant edge-Lipschitz polytope.

    Bellman relaxation of u_b <= u_a + l_e - <L, z_e> (both directions).  A
    truncated-window inf-extension can exceed the feasible set near tight
    directions; relaxation restores exact feasibility from above.  Failure to
    converge means no feasible field exists, i.e. L violates the dual-norm
    precondition.
    """
    base = window.base
    rows = base.segment_rows()
    lengths = base.segment_lengths()
    drop = window.homology.cocycle @ L
    scale = float(np.max(np.abs(core))) + float(lengths.max())
    tol = 1e-14 * max(scale, 1.0)
    u = core.copy()
    # Bellman: V sweeps settle any system without negative cycles; persistent
    # improvement beyond that means the slope admits no 1-Lipschitz field.
    sweeps = min(max_sweeps, base.num_vertices + 5)
    for _ in range(sweeps):
        forward = u[rows[:, 0]] + lengths - drop
        backward = u[rows[:, 1]] + lengths + drop
        new = u.copy()
        np.minimum.at(new, rows[:, 1], forward)
        np.minimum.at(new, rows[:, 0], backward)
        if np.max(u - new) <= tol:
            u = new
            break
        u = new
    else:
        raise ValueError(
            "Lipschitz relaxation did not converge: slope violates the dual-norm precondition"
        )
    return u - u[base_vertex]


def mcshane_extend(
    window: CoverWindow,
    base_vertex: int,
    slope,
    method: str = "mcshane",
    positions: np.ndarray | None = None,
    deck_matrix: np.ndarray | None = None,
) -> LipschitzField:
    """Equivariant 1-Lipschitz field with the given deck character.

    ``mcshane`` evaluates the upper extension f(x) = min over orbit lifts of
    <L, v> + d(x, x0 + v); ``balanced`` averages it with the lower extension
    (sharper gradients away from the orbit); ``affine`` requires chart
    ``positions`` plus the ``deck_matrix`` whose rows generate the deck
    lattice in the chart, and uses the linear function with the matching
    physical slope.  In every mode the emitted field takes the exact orbit
    values, is extended from the core copy by the deck character (so the
    equivariance residual is identically zero), and is re-certified for the
    edge Lipschitz bound.
    """
    L = np.asarray(slope, dtype=float).reshape(window.homology.betti)
    V = window.base.num_vertices
    potentials = window.shifts @ L

    if method == "affine":
        if positions is None or deck_matrix is None:
            raise ValueError("affine fields need chart positions and the deck matrix")
        w = np.linalg.solve(np.asarray(deck_matrix, dtype=float), L)
        core = positions @ w
        core = core - core[base_vertex]
    elif method in ("mcshane", "balanced"):
        up = _orbit_inf_field(window, base_vertex, potentials)
        center = window.shift_id(np.zeros(window.homology.betti, dtype=int))
        violation = -float(up[center * V + base_vertex])
        if violation > 1e-9:
            raise ValueError(
                f"dual-norm precondition violated on the orbit (margin {violation:.3e})"
            )
        if method == "balanced":
            down = -_orbit_inf_field(window, base_vertex, -potentials)
            field = 0.5 * (up + down)
        else:
            field = up
        core = field[center * V:(center + 1) * V].copy()
        core = core - core[base_vertex]
        # window truncation can inflate the extension past edge feasibility
        core = _relax_to_lipschitz(window, core, L, base_vertex)
    else:
        raise ValueError(f"unknown field method {method!r}")

    values = np.concatenate([core + potentials[s] for s in range(window.num_copies)])
    g = window.graph.tocoo()
    mask = g.row < g.col
    margin = float(np.max(np.abs(values[g.col[mask]] - values[g.row[mask]]) - g.data[mask]))
    return LipschitzField(
        values=values,
        slope=L,
        lipschitz_margin=margin,
        base_vertex=int(base_vertex),
    )


# ---------------------------------------------------------------------------
# Map assembly and certification
# ---------------------------------------------------------------------------


def _simplex_chart_and_shifts(complex: WeightedComplex, homology: HomologyModel, simplex):
    """Flat chart of a simplex plus deck shifts lifting it coherently."""
    vs = [int(v) for v in simplex]
    if len(vs) == 3:
        a, b, c = vs
        pts = triangle_points(*complex.triangle_lengths(vs))
    else:
        pts = tet_points(complex.tet_lengths(vs))
    root = vs[0]
    shifts = [np.zeros(homology.betti, dtype=np.int64)]
    rows = complex.segment_rows()
    for v in vs[1:]:
        e = complex.edge_id(root, v)
        sign = 1 if (min(root, v), max(root, v)) == (root, v) else -1
        shifts.append(sign * homology.cocycle[e])
    return pts, np.array(shifts)


def _differential(points: np.ndarray, images: np.ndarray) -> np.ndarray:
    e = points[1:] - points[0]
    dy = images[1:] - images[0]
    return np.linalg.solve(e, dy)


def _certify(pullback: np.ndarray, betti: int):
    trace = float(np.trace(pullback))
    eig = np.linalg.eigvalsh(pullback)
    top = np.clip(eig[-betti:], 0.0, None)
    jac = float(np.sqrt(np.prod(top)))
    return trace, jac


def build_jacobi_map(
    complex: WeightedComplex,
    homology: HomologyModel,
    decomposition: RankOneDecomposition,
    field_method: str = "auto",
    positions: np.ndarray | None = None,
    deck_matrix: np.ndarray | None = None,
    window_radius: int = 1,
    tol: float = 1e-6,
) -> JacobiMap:
    """Assemble and certify the discrete Abel-Jacobi map.

    One equivariant field per decomposition functional; the component map is
    orthogonally projected onto the image of the isometry defined by the
    weights and pulled back, which descends to the Jacobi torus.  Per-simplex
    differentials must satisfy trace <= b + tol and Jacobian <= 1 + tol
    (raises :class:`JacobianCertificationError` otherwise, reporting the
    worst simplex).  ``field_method="auto"`` uses affine fields when a chart
    is supplied and falls back to balanced McShane extensions.
    """
    b = homology.betti
    if b < 1:
        raise ValueError("b >= 1 required")
    if decomposition.dimension != b:
        raise ValueError("decomposition dimension does not match b1")
    method = field_method
    if method == "auto":
        method = "affine" if positions is not None and deck_matrix is not None else "balanced"

    window = build_cover_window(complex, homology, window_radius)
    lam = decomposition.weights
    funcs = decomposition.functionals
    fields = [
        mcshane_extend(window, 0, L, method=method,
                       positions=positions, deck_matrix=deck_matrix)
        for L in funcs
    ]
    worst_margin = max(f.lipschitz_margin for f in fields)
    if worst_margin > 1e-9:
        raise JacobianCertificationError(
            f"field Lipschitz margin {worst_margin:.3e} above 1e-9"
        )

    q = np.einsum("i,ij,ik->jk", lam, funcs, funcs)
    core = np.stack([f.core_values(window) for f in fields], axis=1)   # (V, N)
    images = core * np.sqrt(lam) @ (np.sqrt(lam)[:, None] * funcs) @ np.linalg.inv(q)

    def certify_family(simplices):
        traces, jacs = [], []
        for simplex in simplices:
            pts, shifts = _simplex_chart_and_shifts(complex, homology, simplex)
            y = images[[int(v) for v in simplex]] + shifts
            a = _differential(pts, y)
            trace, jac = _certify(a @ q @ a.T, b)
            traces.append(trace)
            jacs.append(jac)
        return np.array(traces), np.array(jacs)

    tri_traces, tri_jacs = certify_family(complex.triangles)
    if len(complex.tetrahedra):
        top_traces, top_jacs = certify_family(complex.tetrahedra)
        kind = "tetrahedron"
    else:
        top_traces, top_jacs = tri_traces, tri_jacs
        kind = "triangle"

    for name, traces, jacs in (("triangle", tri_traces, tri_jacs),
                               (kind, top_traces, top_jacs)):
        if len(traces) == 0:
            continue
        worst_t = float(traces.max())
        worst_j = float(jacs.max())
        if worst_t > b + tol or worst_j > 1 + tol:
            raise JacobianCertificationError(
                f"{name} certification failed: max trace {worst_t:.9f} (bound {b}), "
                f"max Jacobian {worst_j:.9f} (bound 1), tol {tol:g}"
            )

    jmap = JacobiMap(
        complex=complex,
        homology=homology,
        weights=lam.copy(),
        functionals=funcs.copy(),
        target_form=q,
        fields=fields,
        vertex_images=images,
        simplex_kind=kind,
        traces=top_traces,
        jacobians=top_jacs,
        triangle_traces=tri_traces,
        triangle_jacobians=tri_jacs,
    )
    _check_induced_identity(jmap, window)
    return jmap


def _tree_path(complex: WeightedComplex, homology: HomologyModel, start: int, goal: int):
    """Vertex path from start to goal inside the spanning tree."""
    rows = complex.segment_rows()
    adj: dict[int, list[int]] = {}
    for k in np.flatnonzero(homology.tree_mask):
        i, j = int(rows[k, 0]), int(rows[k, 1])
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    prev = {start: start}
    queue = [start]
    while queue:
        u = queue.pop()
        if u == goal:
            break
        for w in adj.get(u, []):
            if w not in prev:
                prev[w] = u
                queue.append(w)
    path = [goal]
    while path[-1] != start:
        path.append(prev[path[-1]])
    path.reverse()
    return path


def induced_h1_windings(jmap: JacobiMap) -> np.ndarray:
    """Integer winding vectors of the generator loops under the map.

    The fundamental loop of generator i is its cotree segment closed through
    the spanning tree; its image displacement, computed from vertex images
    lifted edge by edge, must be the i-th coordinate vector.
    """
    homology = jmap.homology
    complex = jmap.complex
    rows = complex.segment_rows()
    windings = []
    for seg in homology.generator_segments:
        u, v = int(rows[seg, 0]), int(rows[seg, 1])
        walk = [u, v] + _tree_path(complex, homology, v, u)[1:]
        total = np.zeros(homology.betti)
        for a, c in zip(walk, walk[1:]):
            e = complex.edge_id(a, c)
            sign = 1 if (min(a, c), max(a, c)) == (a, c) else -1
            total += (jmap.vertex_images[c] - jmap.vertex_images[a]
                      + sign * homology.cocycle[e])
        windings.append(total)
    return np.array(windings)


def _check_induced_identity(jmap: JacobiMap, window: CoverWindow):
    """Generator loops must wind once around their own torus coordinate."""
    homology = jmap.homology
    windings = induced_h1_windings(jmap)
    for i, seg in enumerate(homology.generator_segments):
        expected = homology.cocycle[seg].astype(float)
        if np.max(np.abs(windings[i] - expected)) > 1e-9:
            raise JacobianCertificationError(
                f"induced map on H1 is not the identity on generator {i}: "
                f"winding {windings[i]} vs class {expected}"
            )


def jacobian_certificate(jmap: JacobiMap, worst: int = 5) -> dict:
    """Per-simplex trace and Jacobian report with the AM-GM cross-check."""
    b = jmap.betti
    amgm = (np.maximum(jmap.traces, 0.0) / b) ** (b / 2.0)
    gap = jmap.jacobians - amgm
    order = np.argsort(-jmap.traces)
    report = {
        "simplex_kind": jmap.simplex_kind,
        "count": int(len(jmap.traces)),
        "max_trace": float(jmap.traces.max()),
        "trace_bound": float(b),
        "max_jacobian": float(jmap.jacobians.max()),
        "max_triangle_trace": float(jmap.triangle_traces.max()),
        "max_triangle_jacobian": float(jmap.triangle_jacobians.max()),
        "amgm_violation": float(gap.max()),
        "worst_simplices": [
            {"index": int(k), "trace": float(jmap.traces[k]), "jacobian": float(jmap.jacobians[k])}
            for k in order[:worst]
        ],
        "trace_ok": bool(jmap.traces.max() <= b + 1e-6),
        "jacobian_ok": bool(jmap.jacobians.max() <= 1 + 1e-6),
    }
    return report


# ---------------------------------------------------------------------------
# Fibers and the coarea audit
# ---------------------------------------------------------------------------


def _segment_in_tet(points: np.ndarray, images: np.ndarray, target: np.ndarray) -> float:
    """Length of {x in tet : affine image(x) = target} (0 if empty)."""
    a = _differential(points, images)            # (3, 2)
    base = images[0]
    # solution set: x = points[0] + u, with u^T a = target - base
    rhs = target - base
    sol, *_ = np.linalg.lstsq(a.T, rhs, rcond=None)
    if np.linalg.norm(a.T @ sol - rhs) > 1e-9:
        return 0.0
    null = np.linalg.svd(a.T)[2][-1]
    p0 = points[0] + sol
    # barycentric coordinates as affine functions of the line parameter
    e = (points[1:] - points[0]).T               # 3x3
    try:
        einv = np.linalg.inv(e)
    except np.linalg.LinAlgError:
        return 0.0
    lam0 = einv @ (p0 - points[0])
    lamd = einv @ null
    lo, hi = -np.inf, np.inf
    # constraints: lam_i >= 0 and sum lam <= 1
    consts = np.concatenate([lam0, [1.0 - lam0.sum()]])
    for cd, cc in zip(np.concatenate([lamd, [-lamd.sum()]]), consts):
        if abs(cd) < 1e-14:
            if cc < -1e-12:
                return 0.0
            continue
        bound = -cc / cd
        if cd > 0:
            lo = max(lo, bound)
        else:
            hi = min(hi, bound)
    if hi <= lo:
        return 0.0
    return float(hi - lo)


def fiber_extract(jmap: JacobiMap, point) -> dict:
    """(n - b)-volume of the fiber over a point of the Jacobi torus.

    Level sets are traced through tetrahedra (curves) or triangles (points)
    by linear interpolation; the point must be a regular value (points within
    1e-9 of a vertex image raise a resample hint).
    """
    b = jmap.betti
    t = np.mod(np.asarray(point, dtype=float).reshape(b), 1.0)
    frac = np.mod(jmap.vertex_images - t, 1.0)
    dist = np.minimum(frac, 1.0 - frac)
    if float(np.min(np.linalg.norm(dist, axis=1))) < 1e-9:
        raise ValueError("sample point hits a vertex image; resample")
    complex = jmap.complex
    homology = jmap.homology
    if len(complex.tetrahedra):
        if b != 2:
            raise ValueError("fiber tracing through tetrahedra expects b = 2")
        total = 0.0
        pieces = 0
        for simplex in complex.tetrahedra:
            pts, shifts = _simplex_chart_and_shifts(complex, homology, simplex)
            y = jmap.vertex_images[[int(v) for v in simplex]] + shifts
            lo = np.floor(y.min(axis=0) - t).astype(int)
            hi = np.ceil(y.max(axis=0) - t).astype(int)
            for k0 in range(lo[0], hi[0] + 1):
                for k1 in range(lo[1], hi[1] + 1):
                    seg = _segment_in_tet(pts, y, t + np.array([k0, k1], dtype=float))
                    if seg > 0:
                        total += seg
                        pieces += 1
        return {"volume": float(total), "dimension": 1, "pieces": pieces}
    # n = b = 2: fibers are points
    count = 0
    for simplex in complex.triangles:
        pts, shifts = _simplex_chart_and_shifts(complex, homology, simplex)
        y = jmap.vertex_images[[int(v) for v in simplex]] + shifts
        a = _differential(pts, y)
        lo = np.floor(y.min(axis=0) - t).astype(int)
        hi = np.ceil(y.max(axis=0) - t).astype(int)
        for k0 in range(lo[0], hi[0] + 1):
            for k1 in range(lo[1], hi[1] + 1):
                target = t + np.array([k0, k1], dtype=float)
                try:
                    x = np.linalg.solve(a.T, target - y[0])
                except np.linalg.LinAlgError:
                    continue
                e = (pts[1:] - pts[0]).T
                lam = np.linalg.solve(e, x)
                if lam.min() > -1e-12 and lam.sum() < 1 + 1e-12:
                    count += 1
    return {"volume": 0.0, "dimension": 0, "pieces": count}


def coarea_audit(jmap: JacobiMap, samples: int = 25, seed: int = 0, slack: float = 0.03) -> dict:
    """Monte-Carlo coarea check: vol(X) >= min fiber volume x image volume.

    The image volume of the descended map is the Jacobi torus volume in the
    John metric, sqrt(det Q); the minimal sampled fiber volume is the
    measured surrogate for the generalized degree.
    """
    rng = np.random.default_rng(seed)
    volumes = []
    attempts = 0
    while len(volumes) < samples and attempts < 8 * samples:
        attempts += 1
        t = rng.random(jmap.betti)
        try:
            fib = fiber_extract(jmap, t)
        except ValueError:
            continue
        volumes.append(fib["volume"])
    if len(volumes) < min(10, samples):
        raise RuntimeError(f"only {len(volumes)} regular samples obtained")
    volumes = np.array(volumes)
    image_volume = float(np.sqrt(np.linalg.det(jmap.target_form)))
    total = jmap.complex.total_volume()
    min_fiber = float(volumes.min())
    rhs = min_fiber * image_volume
    return {
        "samples": int(len(volumes)),
        "min_fiber_volume": min_fiber,
        "mean_fiber_volume": float(volumes.mean()),
        "image_volume": image_volume,
        "total_volume": float(total),
        "lower_bound": rhs,
        "slack": float(total - rhs),
        "pass": bool(total >= rhs * (1 - slack)),
        "degree_surrogate": min_fiber,
    }
