"""John ellipsoids of centrally symmetric polytopes and rank-1 decompositions.

The inscribed (John) ellipsoid of a symmetric polytope in facet form is
computed by polarity from the minimum-volume enclosing ellipsoid of the facet
functionals.  The MVEE contact weights then yield a decomposition of the
ellipsoid's quadratic form into at most d(d+1)/2 + 1 rank-1 terms whose
functionals have unit dual norm.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import HalfspaceIntersection

__all__ = [
    "SymmetricBody",
    "Ellipsoid",
    "RankOneDecomposition",
    "ConvergenceError",
    "DecompositionError",
    "mvee",
    "mvee_weights",
    "john_inscribed",
    "decompose_rank_one",
    "spectral_decomposition",
    "dual_norm",
    "load_body",
    "decomposition_to_json",
]


class ConvergenceError(RuntimeError):
    """MVEE iteration cap exceeded; carries the residual excess."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual excess {residual:.3e})")
        self.residual = residual


class DecompositionError(RuntimeError):
    """Rank-1 decomposition failed to reconstruct the target form."""

    def __init__(self, message: str, residual: float):
        super().__init__(f"{message} (residual {residual:.3e})")
        self.residual = residual


@dataclass(frozen=True)
class SymmetricBody:
    """Centrally symmetric polytope {x : |<a_j, x>| <= 1}.

    ``functionals`` holds one representative a_j per +/- facet pair.
    """

    functionals: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.functionals, dtype=float))
        if a.ndim != 2 or a.shape[0] < 1:
            raise ValueError("facet functionals must form an N x d matrix")
        norms = np.linalg.norm(a, axis=1)
        if np.any(norms == 0):
            raise ValueError("zero facet functional")
        if np.linalg.matrix_rank(a) < a.shape[1]:
            raise ValueError("facet functionals do not span; body is unbounded")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "functionals", a)

    @property
    def dimension(self) -> int:
        return self.functionals.shape[1]

    def contains(self, points: np.ndarray, tol: float = 1e-9) -> bool:
        points = np.atleast_2d(points)
        return bool(np.all(np.abs(points @ self.functionals.T) <= 1 + tol))

    def vertices(self) -> np.ndarray:
        """Vertex enumeration via halfspace intersection (origin is interior)."""
        a = np.vstack([self.functionals, -self.functionals])
        halfspaces = np.hstack([a, -np.ones((len(a), 1))])
        hs = HalfspaceIntersection(halfspaces, np.zeros(self.dimension))
        verts = hs.intersections
        return verts[np.all(np.isfinite(verts), axis=1)]


@dataclass(frozen=True)
class Ellipsoid:
    """Origin-centered ellipsoid {x : x^T Q x <= 1} with Q positive-definite."""

    quadratic_form: np.ndarray

    def __post_init__(self):
        q = np.atleast_2d(np.asarray(self.quadratic_form, dtype=float))
        scale = float(np.max(np.abs(q))) or 1.0
        if q.shape[0] != q.shape[1] or np.max(np.abs(q - q.T)) > 1e-12 * scale:
            raise ValueError("quadratic form must be symmetric")
        q = 0.5 * (q + q.T)
        if np.min(np.linalg.eigvalsh(q)) <= 0:
            raise ValueError("quadratic form must be positive-definite")
        q.setflags(write=False)
        object.__setattr__(self, "quadratic_form", q)

    @property
    def dimension(self) -> int:
        return self.quadratic_form.shape[0]

    def norm(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sqrt(x @ self.quadratic_form @ x))


@dataclass(frozen=True)
class RankOneDecomposition:
    """Weights lambda_i > 0 and functionals L_i with sum_i lambda_i L_i L_i^T = Q."""

    weights: np.ndarray
    functionals: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        f = np.atleast_2d(np.asarray(self.functionals, dtype=float))
        if w.ndim != 1 or len(w) != len(f):
            raise ValueError("weights and functionals must have matching length")
        if np.any(w <= 0):
            raise ValueError("decomposition weights must be positive")
        d = f.shape[1]
        if len(w) > d * (d + 1) // 2 + 1:
            raise ValueError("decomposition exceeds the d(d+1)/2 + 1 term bound")
        if abs(float(w.sum()) - d) > 1e-8:
            raise ValueError(f"weights must sum to the dimension, got {w.sum()!r}")
        w.setflags(write=False)
        f = f.copy()
        f.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "functionals", f)

    @property
    def dimension(self) -> int:
        return self.functionals.shape[1]

    def reconstruct(self) -> np.ndarray:
        return np.einsum("i,ij,ik->jk", self.weights, self.functionals, self.functionals)


# ---------------------------------------------------------------------------
# Minimum-volume enclosing ellipsoid (origin-centered, Khachiyan-style)
# ---------------------------------------------------------------------------


def mvee_weights(points: np.ndarray, tol: float = 1e-7, max_iterations: int = 100_000):
    """Optimal MVEE point weights for an origin-symmetric point set.

    Frank-Wolfe ascent on log det(sum u_i p_i p_i^T) with Wolfe-Atwood away
    steps, which drive non-contact weights to exactly zero.  Returns
    ``(Q, u)`` with the enclosing ellipsoid {x : x^T Q x <= 1} scaled so the
    extreme points lie on the boundary, and Q = d * sum u_i p_i p_i^T up to
    that scaling.
    """
    p = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = p.shape
    if np.linalg.matrix_rank(p) < d:
        raise ValueError("points do not span; enclosing ellipsoid is degenerate")

    u = np.full(m, 1.0 / m)
    for _ in range(max_iterations):
        x = np.einsum("i,ij,ik->jk", u, p, p)
        eps = np.einsum("ij,jk,ik->i", p, np.linalg.inv(x), p)
        worst = float(eps.max())
        if worst / d - 1.0 <= tol:
            # Also require away-direction optimality so the support is clean.
            support = u > 0
            low = float(eps[support].min())
            if 1.0 - low / d <= tol:
                break
        j_up = int(np.argmax(eps))
        support = np.flatnonzero(u > 0)
        j_dn = support[int(np.argmin(eps[support]))]
        if eps[j_up] - d >= d - eps[j_dn]:
            j, e = j_up, float(eps[j_up])
            beta = (e - d) / (d * (e - 1.0))
        else:
            j, e = int(j_dn), float(eps[j_dn])
            clamp = -u[j] / (1.0 - u[j])
            # Line-search formula is only valid for e > 1; otherwise drop fully.
            beta = max((e - d) / (d * (e - 1.0)), clamp) if e > 1.0 else clamp
        u *= 1.0 - beta
        u[j] += beta
        u[u < 1e-17] = 0.0
        u /= u.sum()
    else:
        raise ConvergenceError("MVEE iteration cap exceeded", worst / d - 1.0)

    x = np.einsum("i,ij,ik->jk", u, p, p)
    q = np.linalg.inv(x) / d
    q = 0.5 * (q + q.T)
    # Scale so every point satisfies p^T Q p <= 1 exactly.
    q /= float(np.einsum("ij,jk,ik->i", p, q, p).max())
    return q, u


def mvee(points: np.ndarray, tol: float = 1e-7, max_iterations: int = 100_000) -> Ellipsoid:
    """Minimum-volume origin-centered ellipsoid containing a symmetric point set."""
    q, _ = mvee_weights(points, tol=tol, max_iterations=max_iterations)
    return Ellipsoid(q)


def john_inscribed(body: SymmetricBody, tol: float = 1e-9) -> Ellipsoid:
    """Maximum-volume ellipsoid inscribed in the body.

    Computed as the polar of the MVEE of the facet functionals: if that MVEE
    is {y : y^T M y <= 1}, the inscribed ellipsoid is {x : x^T M^{-1} x <= 1}.
    """
    a = np.vstack([body.functionals, -body.functionals])
    m, _ = mvee_weights(a, tol=tol)
    return Ellipsoid(np.linalg.inv(m))


def dual_norm(body: SymmetricBody, functional: np.ndarray) -> float:
    """max <L, x> over the body (the norm dual to the body's gauge)."""
    a = np.vstack([body.functionals, -body.functionals])
    res = linprog(
        -np.asarray(functional, dtype=float),
        A_ub=a,
        b_ub=np.ones(len(a)),
        bounds=[(None, None)] * body.dimension,
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"dual norm LP failed: {res.message}")
    return float(-res.fun)


def _merge_parallel(functionals: np.ndarray, weights: np.ndarray):
    """Sum weights of duplicate facets (up to sign) before pruning."""
    kept: list[np.ndarray] = []
    acc: list[float] = []
    for a, w in zip(functionals, weights):
        for i, b in enumerate(kept):
            if np.allclose(a, b, atol=1e-12) or np.allclose(a, -b, atol=1e-12):
                acc[i] += w
                break
        else:
            kept.append(a)
            acc.append(w)
    return np.array(kept), np.array(acc)


def _caratheodory_prune(weights: np.ndarray, functionals: np.ndarray, limit: int):
    """Reduce the support of sum w_i a_i a_i^T (and sum w_i) to <= limit terms.

    Works in the space of symmetric matrices plus one trace coordinate; each
    elimination step moves along a null direction until the smallest possible
    weight hits zero, which preserves the reconstruction exactly.
    """
    w = weights.astype(float).copy()
    a = functionals.copy()
    d = a.shape[1]
    iu = np.triu_indices(d)
    while len(w) > limit:
        outer = np.einsum("ij,ik->ijk", a, a)
        v = np.vstack([outer[:, iu[0], iu[1]].T, np.ones(len(w))])  # (D, N)
        _, _, vt = np.linalg.svd(v)
        c = vt[-1]
        if np.max(np.abs(v @ c)) > 1e-9 * max(1.0, np.max(np.abs(v))):
            break  # numerically independent; bound already holds structurally
        candidates = []
        for sign in (1.0, -1.0):
            cc = sign * c
            pos = cc > 1e-15
            if not pos.any():
                continue
            ratios = w[pos] / cc[pos]
            t = ratios.min()
            gone = np.flatnonzero(pos)[int(np.argmin(ratios))]
            candidates.append((w[gone], t, cc))
        if not candidates:
            break
        _, t, cc = min(candidates, key=lambda item: item[0])
        w = w - t * cc
        keep = w > 1e-14
        w, a = w[keep], a[keep]
    return w, a


def decompose_rank_one(
    body: SymmetricBody,
    ellipsoid: Ellipsoid,
    tol: float = 1e-6,
    mvee_tol: float = 1e-9,
) -> RankOneDecomposition:
    """Rank-1 decomposition of the John ellipsoid form from MVEE contact weights.

    Facet functionals that carry positive MVEE weight become the terms; their
    weights are scaled to sum to the dimension.  If the support exceeds
    d(d+1)/2 + 1, Caratheodory pruning removes redundant terms without
    changing the reconstructed form.
    """
    d = body.dimension
    reps = body.functionals
    signed = np.vstack([reps, -reps])
    _, u = mvee_weights(signed, tol=mvee_tol)
    w = u[: len(reps)] + u[len(reps):]
    keep = w > 1e-12
    funcs, w = _merge_parallel(reps[keep], w[keep])
    lam = d * w / w.sum()
    limit = d * (d + 1) // 2 + 1
    if len(lam) > limit:
        lam, funcs = _caratheodory_prune(lam, funcs, limit)
        lam *= d / lam.sum()
    recon = np.einsum("i,ij,ik->jk", lam, funcs, funcs)
    target = ellipsoid.quadratic_form
    residual = float(
        np.linalg.norm(recon - target, 2) / max(np.linalg.norm(target, 2), 1e-300)
    )
    if residual > tol:
        raise DecompositionError("rank-1 reconstruction residual above tolerance", residual)
    return RankOneDecomposition(lam, funcs)


def spectral_decomposition(form: np.ndarray) -> RankOneDecomposition:
    """Exact rank-1 decomposition of a positive-definite form Q.

    Uses the eigenvectors: Q = sum_i (sqrt(mu_i) u_i)(sqrt(mu_i) u_i)^T with
    unit weights.  Each functional has unit dual norm for the norm induced by
    Q itself, so this is the decomposition of an exactly ellipsoidal unit
    ball.
    """
    q = 0.5 * (np.asarray(form, dtype=float) + np.asarray(form, dtype=float).T)
    mu, vecs = np.linalg.eigh(q)
    if np.min(mu) <= 0:
        raise ValueError("form must be positive-definite")
    funcs = (vecs * np.sqrt(mu)).T
    return RankOneDecomposition(np.ones(q.shape[0]), funcs)


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------


def load_body(source) -> SymmetricBody:
    """Read a body from JSON ``{"dimension": d, "facets": [[...], ...]}``."""
    if isinstance(source, SymmetricBody):
        return source
    if isinstance(source, (str, Path)):
        text = str(source)
        data = json.loads(Path(text).read_text() if Path(text).exists() else text)
    else:
        data = source
    facets = np.asarray(data["facets"], dtype=float)
    if "dimension" in data and int(data["dimension"]) != facets.shape[1]:
        raise ValueError("declared dimension does not match facets")
    return SymmetricBody(facets)


def decomposition_to_json(decomposition: RankOneDecomposition) -> list[dict]:
    return [
        {"lambda": float(w), "L": f.tolist()}
        for w, f in zip(decomposition.weights, decomposition.functionals)
    ]
