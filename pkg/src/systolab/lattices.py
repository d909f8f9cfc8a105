"""Euclidean lattice invariants.

Shortest vectors (exact, by reduction + bounded enumeration), dual bases,
Hermite and Berge-Martinet ratios, and a catalog of critical lattices up to
dimension 8 that realize the known Hermite constants.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "LatticeBasis",
    "ShortVectorResult",
    "SingularBasisError",
    "DimensionLimitError",
    "SVP_DIMENSION_LIMIT",
    "CRITICAL_HERMITE_POWER",
    "gram_matrix",
    "covolume",
    "lll_reduce",
    "vectors_within",
    "shortest_vector",
    "dual_basis",
    "hermite_ratio",
    "berge_martinet_ratio",
    "catalog_names",
    "catalog_basis",
    "load_basis",
    "basis_to_json",
]

#: Enumeration budget: exact SVP is only attempted up to this dimension.
SVP_DIMENSION_LIMIT = 12

_SINGULARITY_RTOL = 1e-12


class SingularBasisError(ValueError):
    """Raised when the rows of a basis are (numerically) linearly dependent."""


class DimensionLimitError(ValueError):
    """Raised when an enumeration is requested above the dimension budget."""


@dataclass(frozen=True)
class LatticeBasis:
    """Full-rank basis of a Euclidean lattice, one basis vector per row."""

    rows: np.ndarray

    def __post_init__(self):
        rows = np.atleast_2d(np.asarray(self.rows, dtype=float))
        if rows.ndim != 2 or rows.shape[0] != rows.shape[1] or rows.shape[0] < 1:
            raise ValueError(f"basis must be a square d x d matrix, got shape {rows.shape}")
        rows = rows.copy()
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        gram = rows @ rows.T
        det = float(np.linalg.det(gram))
        scale = float(np.max(np.abs(gram))) or 1.0
        if det <= _SINGULARITY_RTOL * scale ** rows.shape[0]:
            raise SingularBasisError("singular basis: rows are not linearly independent")

    @property
    def dimension(self) -> int:
        return self.rows.shape[0]

    def vector(self, coefficients) -> np.ndarray:
        """Lattice vector with the given integer coefficients."""
        return np.asarray(coefficients, dtype=float) @ self.rows


@dataclass(frozen=True)
class ShortVectorResult:
    """A nonzero lattice vector of minimal Euclidean norm."""

    coefficients: np.ndarray
    length: float

    def __post_init__(self):
        coeffs = np.asarray(self.coefficients, dtype=int)
        if not coeffs.any():
            raise ValueError("shortest vector coefficients must be nonzero")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coefficients", coeffs)


def gram_matrix(basis: LatticeBasis) -> np.ndarray:
    """Gram matrix of the basis rows (symmetric positive-definite)."""
    g = basis.rows @ basis.rows.T
    return 0.5 * (g + g.T)


def covolume(basis: LatticeBasis) -> float:
    """Volume of the fundamental domain, sqrt(det Gram)."""
    return float(np.sqrt(np.linalg.det(gram_matrix(basis))))


def dual_basis(basis: LatticeBasis) -> LatticeBasis:
    """Dual lattice basis Y with <x_i, y_j> = delta_ij."""
    return LatticeBasis(np.linalg.inv(basis.rows).T)


def lll_reduce(matrix: np.ndarray, delta: float = 0.99) -> tuple[np.ndarray, np.ndarray]:
    """LLL-reduce the rows of ``matrix``.

    Returns ``(reduced, transform)`` where ``reduced = transform @ matrix``
    and ``transform`` is unimodular with integer entries.
    """
    b = np.array(matrix, dtype=float)
    n = b.shape[0]
    u = np.eye(n, dtype=np.int64)

    def gso(bm):
        # Gram-Schmidt norms and mu coefficients of the current rows.
        q = np.zeros_like(bm)
        mu = np.zeros((n, n))
        norms = np.zeros(n)
        for i in range(n):
            q[i] = bm[i]
            for j in range(i):
                mu[i, j] = bm[i] @ q[j] / norms[j]
                q[i] = q[i] - mu[i, j] * q[j]
            norms[i] = q[i] @ q[i]
        return mu, norms

    mu, norms = gso(b)
    k = 1
    while k < n:
        for j in range(k - 1, -1, -1):
            m = round(mu[k, j])
            if m:
                b[k] -= m * b[j]
                u[k] -= m * u[j]
                mu, norms = gso(b)
        if norms[k] >= (delta - mu[k, k - 1] ** 2) * norms[k - 1]:
            k += 1
        else:
            b[[k, k - 1]] = b[[k - 1, k]]
            u[[k, k - 1]] = u[[k - 1, k]]
            mu, norms = gso(b)
            k = max(k - 1, 1)
    return b, u


def vectors_within(basis: LatticeBasis, radius: float, *, include_zero: bool = False):
    """All lattice vectors of Euclidean length <= radius (Fincke-Pohst).

    Returns ``(coefficients, lengths)`` with coefficients in the *original*
    basis.  One representative per +/- pair is NOT taken: both signs appear.
    """
    d = basis.dimension
    if d > SVP_DIMENSION_LIMIT:
        raise DimensionLimitError(
            f"enumeration limited to dimension {SVP_DIMENSION_LIMIT}, got {d}"
        )
    reduced, transform = lll_reduce(basis.rows)
    gram = reduced @ reduced.T
    # Q(x) = |R x|^2 with R upper triangular from the Cholesky factor.
    r = np.linalg.cholesky(0.5 * (gram + gram.T)).T
    bound = radius * radius * (1 + 1e-12) + 1e-300

    coeffs: list[tuple[int, ...]] = []
    x = np.zeros(d, dtype=np.int64)

    def descend(i: int, partial: float, center_tail: np.ndarray):
        # center_tail[j] = sum_{k>i} R[j,k] x[k] for j <= i
        rii = r[i, i]
        c = -center_tail[i] / rii
        half_width = np.sqrt(max(bound - partial, 0.0)) / abs(rii)
        lo = int(np.ceil(c - half_width - 1e-12))
        hi = int(np.floor(c + half_width + 1e-12))
        for xi in range(lo, hi + 1):
            t = rii * (xi - c)
            s = partial + t * t
            if s > bound:
                continue
            x[i] = xi
            if i == 0:
                coeffs.append(tuple(x))
            else:
                tail = center_tail[:i] + r[:i, i] * xi
                descend(i - 1, s, tail)
        x[i] = 0

    descend(d - 1, 0.0, np.zeros(d))
    out = np.array(coeffs, dtype=np.int64).reshape(-1, d)
    if not include_zero and len(out):
        out = out[np.any(out != 0, axis=1)]
    out = out @ transform
    lengths = np.linalg.norm(out @ basis.rows, axis=1) if len(out) else np.zeros(0)
    return out, lengths


def shortest_vector(basis: LatticeBasis) -> ShortVectorResult:
    """Nonzero lattice vector of globally minimal norm.

    LLL preprocessing certifies the enumeration radius (the shortest reduced
    row is itself a lattice vector).  Ties within 1e-9 relative are broken by
    the lexicographically smallest coefficient vector.
    """
    reduced, _ = lll_reduce(basis.rows)
    radius = float(np.min(np.linalg.norm(reduced, axis=1)))
    coeffs, lengths = vectors_within(basis, radius)
    best = float(np.min(lengths))
    tie = coeffs[lengths <= best * (1 + 1e-9)]
    order = np.lexsort(tie.T[::-1])
    winner = tie[order[0]]
    return ShortVectorResult(winner, float(np.linalg.norm(winner @ basis.rows)))


def hermite_ratio(basis: LatticeBasis) -> float:
    """lambda_1^d / covolume; equals gamma_d^(d/2) on critical lattices."""
    lam = shortest_vector(basis).length
    return lam ** basis.dimension / covolume(basis)


def berge_martinet_ratio(basis: LatticeBasis) -> float:
    """lambda_1(L) * lambda_1(L*), scale-invariant."""
    return shortest_vector(basis).length * shortest_vector(dual_basis(basis)).length


# ---------------------------------------------------------------------------
# Critical lattice catalog
# ---------------------------------------------------------------------------

#: gamma_d^(d/2) for d = 1..8 (the values attained by the catalog lattices).
CRITICAL_HERMITE_POWER = {
    1: 1.0,
    2: 2.0 / np.sqrt(3.0),
    3: np.sqrt(2.0),
    4: 2.0,
    5: 2.0 * np.sqrt(2.0),
    6: 8.0 / np.sqrt(3.0),
    7: 8.0,
    8: 16.0,
}


def _dynkin_gram(n: int, edges: list[tuple[int, int]]) -> np.ndarray:
    g = 2.0 * np.eye(n)
    for i, j in edges:
        g[i, j] = g[j, i] = -1.0
    return g


def _cholesky_basis(gram: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(gram)


def _dn_basis(n: int) -> np.ndarray:
    rows = np.zeros((n, n))
    for i in range(n - 1):
        rows[i, i], rows[i, i + 1] = 1.0, -1.0
    rows[n - 1, n - 2], rows[n - 1, n - 1] = 1.0, 1.0
    return rows


_E6_EDGES = [(0, 2), (2, 3), (3, 4), (4, 5), (1, 3)]
_E7_EDGES = [(0, 2), (2, 3), (3, 4), (4, 5), (5, 6), (1, 3)]

_E8_ROWS = np.array(
    [
        [2, 0, 0, 0, 0, 0, 0, 0],
        [-1, 1, 0, 0, 0, 0, 0, 0],
        [0, -1, 1, 0, 0, 0, 0, 0],
        [0, 0, -1, 1, 0, 0, 0, 0],
        [0, 0, 0, -1, 1, 0, 0, 0],
        [0, 0, 0, 0, -1, 1, 0, 0],
        [0, 0, 0, 0, 0, -1, 1, 0],
        [0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
    ]
)


def _build_catalog() -> dict[str, np.ndarray]:
    entries: dict[str, np.ndarray] = {}
    for n in range(1, 9):
        entries[f"Z{n}"] = np.eye(n)
    entries["A2"] = np.array([[1.0, 0.0], [0.5, np.sqrt(3.0) / 2.0]])
    entries["A3"] = np.array([[1.0, 1.0, 0.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    entries["D4"] = _dn_basis(4)
    entries["D5"] = _dn_basis(5)
    entries["E6"] = _cholesky_basis(_dynkin_gram(6, _E6_EDGES))
    entries["E7"] = _cholesky_basis(_dynkin_gram(7, _E7_EDGES))
    entries["E8"] = _E8_ROWS.astype(float)
    return entries


_CATALOG = _build_catalog()

#: Critical (Hermite-extremal) entries by dimension, used for equality cases.
CRITICAL_BY_DIMENSION = {1: "Z1", 2: "A2", 3: "A3", 4: "D4", 5: "D5", 6: "E6", 7: "E7", 8: "E8"}


def catalog_names() -> list[str]:
    return sorted(_CATALOG)


def catalog_basis(name: str) -> LatticeBasis:
    """Named basis from the catalog (``Z1``..``Z8``, ``A2``, ``A3``, ``D4``, ``D5``, ``E6``-``E8``)."""
    try:
        return LatticeBasis(_CATALOG[name])
    except KeyError:
        raise KeyError(f"unknown catalog lattice {name!r}; available: {catalog_names()}") from None


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------


def load_basis(source) -> LatticeBasis:
    """Read a lattice from a JSON object ``{"dimension": d, "rows": [[...], ...]}``.

    ``source`` may be a path, a JSON string, or an already-parsed dict.
    A bare catalog name string is also accepted.
    """
    if isinstance(source, LatticeBasis):
        return source
    if isinstance(source, (str, Path)):
        text = str(source)
        if text in _CATALOG:
            return catalog_basis(text)
        if Path(text).exists():
            data = json.loads(Path(text).read_text())
        else:
            data = json.loads(text)
    else:
        data = source
    rows = np.asarray(data["rows"], dtype=float)
    if "dimension" in data and int(data["dimension"]) != rows.shape[0]:
        raise ValueError("declared dimension does not match rows")
    return LatticeBasis(rows)


def basis_to_json(basis: LatticeBasis) -> dict:
    return {"dimension": basis.dimension, "rows": basis.rows.tolist()}
