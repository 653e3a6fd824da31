"""Lagrange encoding and interpolation decoding over F_q.

MDS coding is the ``deg_f == 1, T == 0`` special case; with the default
systematic evaluation points the first K shards are the raw partitions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DuplicateEvalPoint,
    DuplicatePoints,
    InfeasibleScheme,
    InsufficientResults,
    ShapeMismatch,
    ZeroInverse,
)
from .field import PrimeField


@dataclass(frozen=True)
class CodingScheme:
    N: int
    K: int
    S: int = 0
    M: int = 0
    T: int = 0
    deg_f: int = 1

    def __post_init__(self):
        if self.K < 1 or self.deg_f < 1:
            raise ValueError("K and deg_f must be at least 1")
        if min(self.S, self.M, self.T) < 0:
            raise ValueError("S, M, T must be non-negative")
        if self.N < self.K + self.T:
            raise ValueError(f"N={self.N} < K+T={self.K + self.T}")

    @property
    def threshold(self) -> int:
        """Number of correct evaluations needed to interpolate f(u(z))."""
        return (self.K + self.T - 1) * self.deg_f + 1

    def validate(self):
        report = check_feasible(self)
        if not report.feasible:
            raise InfeasibleScheme(
                f"N={self.N} < (K+T-1)*deg_f+S+M+1 = {report.bound} "
                f"for (K,S,M,T,deg_f)=({self.K},{self.S},{self.M},{self.T},{self.deg_f})")
        return self


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    slack: int
    bound: int
    lcc_feasible: bool
    lcc_slack: int
    lcc_bound: int


def check_feasible(scheme: CodingScheme) -> Feasibility:
    """Compare N against the verified-decoding bound and the LCC bound.

    Verified decoding pays one extra worker per Byzantine, LCC's
    error-correcting decoder pays two.
    """
    base = (scheme.K + scheme.T - 1) * scheme.deg_f + scheme.S + 1
    bound = base + scheme.M
    lcc_bound = base + 2 * scheme.M
    return Feasibility(
        feasible=scheme.N >= bound,
        slack=scheme.N - bound,
        bound=bound,
        lcc_feasible=scheme.N >= lcc_bound,
        lcc_slack=scheme.N - lcc_bound,
        lcc_bound=lcc_bound,
    )


@dataclass(frozen=True)
class EvalPoints:
    betas: tuple
    alphas: tuple

    def __post_init__(self):
        if len(set(self.betas)) != len(self.betas):
            raise DuplicatePoints(f"betas not distinct: {self.betas}")
        if len(set(self.alphas)) != len(self.alphas):
            raise DuplicatePoints(f"alphas not distinct: {self.alphas}")

    @classmethod
    def default(cls, K: int, T: int, N: int, field: PrimeField) -> EvalPoints:
        """betas = 1..K+T; alphas = 1..N when T == 0 (systematic), else
        K+T+1..K+T+N so that the two sets are disjoint."""
        top = K + T + N if T > 0 else max(K, N)
        if top >= field.q:
            raise ValueError(f"F_{field.q} too small for {K + T} + {N} points")
        betas = tuple(range(1, K + T + 1))
        alphas = tuple(range(K + T + 1, K + T + N + 1)) if T > 0 else tuple(range(1, N + 1))
        return cls(betas, alphas)

    def check(self, T: int, field: PrimeField):
        if any(not 0 <= p < field.q for p in self.betas + self.alphas):
            raise ValueError("evaluation points must be canonical field elements")
        if T > 0 and set(self.alphas) & set(self.betas):
            raise DuplicatePoints("alphas and betas must be disjoint when T > 0")


def lagrange_basis(betas, z: int, field: PrimeField) -> list[int]:
    """``[l_j(z) for j]`` where ``l_j`` is 1 at ``betas[j]`` and 0 at the others."""
    betas = [int(b) % field.q for b in betas]
    if len(set(betas)) != len(betas):
        raise DuplicatePoints(f"interpolation nodes not distinct: {betas}")
    z = int(z) % field.q
    out = []
    for j, bj in enumerate(betas):
        num, den = 1, 1
        for k, bk in enumerate(betas):
            if k != j:
                num = num * (z - bk) % field.q
                den = den * (bj - bk) % field.q
        out.append(num * field.inv(den) % field.q)
    return out


@dataclass
class EncodingMatrix:
    """``U[i, j] = l_i(alpha_j)``: column j mixes the K+T blocks for worker j."""

    U: np.ndarray
    points: EvalPoints
    field: PrimeField
    K: int

    @property
    def bottom(self) -> np.ndarray:
        """The T x N rows that multiply the noise blocks."""
        return self.U[self.K:]


def build_encoding_matrix(points: EvalPoints, field: PrimeField, K: int | None = None) -> EncodingMatrix:
    cols = [lagrange_basis(points.betas, a, field) for a in points.alphas]
    U = field.array(np.array(cols, dtype=object).T.reshape(len(points.betas), len(points.alphas)))
    return EncodingMatrix(U, points, field, len(points.betas) if K is None else K)


@dataclass
class EncodedShard:
    worker_id: int
    alpha: int
    data: np.ndarray


def split_rows(X: np.ndarray, K: int, field: PrimeField):
    """Partition rows into K equal blocks, zero-padding the tail.

    Returns ``(blocks, m)`` with ``m`` the logical (unpadded) row count.
    """
    m = X.shape[0]
    rows = -(-m // K)
    pad = rows * K - m
    if pad:
        X = np.concatenate([X, field.zeros((pad,) + X.shape[1:])], axis=0)
    return [X[i * rows:(i + 1) * rows] for i in range(K)], m


def encode(X_blocks, noise_blocks, U: EncodingMatrix) -> list[EncodedShard]:
    """Evaluate ``u(z) = sum X_j l_j(z) + sum W_j l_{K+j}(z)`` at every alpha.

    Noise blocks must be drawn uniformly by the caller; this function is
    deterministic.
    """
    blocks = list(X_blocks) + list(noise_blocks)
    field = U.field
    if len(blocks) != U.U.shape[0]:
        raise ShapeMismatch(f"{len(blocks)} blocks for a {U.U.shape[0]}-row encoding matrix")
    shape = blocks[0].shape
    if any(b.shape != shape for b in blocks):
        raise ShapeMismatch("all data and noise blocks must share one shape")
    stacked = np.stack([field.array(b) for b in blocks]).reshape(len(blocks), -1)
    mixed = field.matmul(np.ascontiguousarray(U.U.T), stacked)
    return [EncodedShard(j, U.points.alphas[j], mixed[j].reshape(shape))
            for j in range(mixed.shape[0])]


def inv_matrix(A, field: PrimeField) -> np.ndarray:
    """Gauss-Jordan inverse of a square matrix over F_q."""
    n = len(A)
    M = [[int(v) % field.q for v in row] + [int(i == j) for j in range(n)]
         for i, row in enumerate(np.asarray(A, dtype=object).tolist())]
    for c in range(n):
        pivot = next((r for r in range(c, n) if M[r][c]), None)
        if pivot is None:
            raise ZeroInverse("matrix is singular over the field")
        M[c], M[pivot] = M[pivot], M[c]
        f = field.inv(M[c][c])
        M[c] = [v * f % field.q for v in M[c]]
        for r in range(n):
            if r != c and M[r][c]:
                g = M[r][c]
                M[r] = [(v - g * w) % field.q for v, w in zip(M[r], M[c])]
    return field.array(np.array([row[n:] for row in M], dtype=object).reshape(n, n))


def det(A, field: PrimeField) -> int:
    M = [[int(v) % field.q for v in row] for row in np.asarray(A, dtype=object).tolist()]
    n, result = len(M), 1
    for c in range(n):
        pivot = next((r for r in range(c, n) if M[r][c]), None)
        if pivot is None:
            return 0
        if pivot != c:
            M[c], M[pivot] = M[pivot], M[c]
            result = -result
        result = result * M[c][c] % field.q
        f = field.inv(M[c][c])
        for r in range(c + 1, n):
            if M[r][c]:
                g = M[r][c] * f % field.q
                M[r] = [(v - g * w) % field.q for v, w in zip(M[r], M[c])]
    return result % field.q


def decode(results, scheme: CodingScheme, points: EvalPoints, field: PrimeField,
           method: str = "interpolate") -> list[np.ndarray]:
    """Recover ``f(X_1), ..., f(X_K)`` from verified evaluations of f(u(z)).

    ``results`` is a sequence of ``(alpha, value)`` pairs. Only the first
    ``scheme.threshold`` of them are read. ``method="invert"`` solves the
    K x K system of the encoding columns instead of interpolating; it is
    valid only for ``deg_f == 1, T == 0`` and gives bit-identical output.
    """
    need = scheme.threshold
    results = list(results)
    if len(results) < need:
        raise InsufficientResults(f"{len(results)} results, decoding needs {need}")
    used = results[:need]
    alphas = [int(a) % field.q for a, _ in used]
    if len(set(alphas)) != len(alphas):
        raise DuplicateEvalPoint(f"repeated evaluation point among {alphas}")
    values = [field.array(v) for _, v in used]
    shape = values[0].shape
    if any(v.shape != shape for v in values):
        raise ShapeMismatch("result values differ in shape")
    V = np.stack(values).reshape(need, -1)
    betas = points.betas[:scheme.K]

    if method == "invert":
        if scheme.deg_f != 1 or scheme.T != 0:
            raise ValueError("inversion decoding needs deg_f == 1 and T == 0")
        G = np.array([lagrange_basis(points.betas, a, field) for a in alphas], dtype=object)
        coeffs = inv_matrix(G, field)
    elif method == "interpolate":
        coeffs = field.array(np.array([lagrange_basis(alphas, b, field) for b in betas],
                                      dtype=object).reshape(len(betas), need))
    else:
        raise ValueError(f"unknown decode method {method!r}")
    out = field.matmul(coeffs, V)
    return [out[i].reshape(shape) for i in range(scheme.K)]
