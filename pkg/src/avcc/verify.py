"""Freivalds-style integrity checks for worker results.

For a worker holding matrix A, the master keeps a secret random vector r
and ``s = r A``. A claimed product ``y = A v`` is accepted iff
``r . y == s . v``, which costs O(rows + cols) instead of O(rows * cols).
A wrong ``y`` passes with probability at most 1/q per key vector.

Only linear (deg_f == 1) worker computations are verifiable here: the
matrix-vector round and the transposed round of logistic regression.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .coding import EncodedShard
from .errors import DimensionMismatch
from .field import PrimeField


@dataclass(frozen=True)
class VerificationKeyPair:
    """Secret per-worker keys; never sent to the worker.

    ``r1``/``s1`` guard round 1 (``shard @ w``), ``r2``/``s2`` guard round 2
    (``shard.T @ e``, or ``transposed @ e`` when a separately coded
    transposed shard is used). Each is 2-D with one row per repetition.
    """

    worker_id: int
    r1: np.ndarray
    s1: np.ndarray
    r2: np.ndarray
    s2: np.ndarray
    field: PrimeField

    @property
    def repeats(self) -> int:
        return self.r1.shape[0]


@dataclass(frozen=True)
class VerificationOutcome:
    worker_id: int
    round: int
    accepted: bool

    @property
    def p(self) -> int:
        return int(self.accepted)


@numba.njit("boolean(int64[:, ::1], int64[:, ::1], int64[::1], int64[::1], int64)", cache=True)
def _check_small(r, s, operand, claimed, q):
    # per-term reduction: r and s entries are below q < 2**31.5
    for k in range(r.shape[0]):
        left = 0
        for i in range(claimed.shape[0]):
            left = (left + r[k, i] * claimed[i]) % q
        right = 0
        for i in range(operand.shape[0]):
            right = (right + s[k, i] * operand[i]) % q
        if left != right:
            return False
    return True


def keys_from_vectors(worker_id, round1_matrix, round2_matrix, r1, r2, field: PrimeField):
    r1 = np.ascontiguousarray(np.atleast_2d(field.array(r1)))
    r2 = np.ascontiguousarray(np.atleast_2d(field.array(r2)))
    if r1.shape[1] != round1_matrix.shape[0] or r2.shape[1] != round2_matrix.shape[0]:
        raise DimensionMismatch("key vector length does not match shard rows")
    s1 = np.ascontiguousarray(field.matmul(r1, round1_matrix))
    s2 = np.ascontiguousarray(field.matmul(r2, round2_matrix))
    return VerificationKeyPair(worker_id, r1, s1, r2, s2, field)


def gen_keys(shard: EncodedShard, rng: np.random.Generator, field: PrimeField,
             transposed: EncodedShard | None = None, repeats: int = 1) -> VerificationKeyPair:
    """Draw uniform key vectors for one worker and precompute ``s = r A``.

    One-time cost per (worker, shard); regenerate whenever the shard changes.
    """
    A1 = shard.data
    A2 = transposed.data if transposed is not None else np.ascontiguousarray(shard.data.T)
    r1 = field.random(rng, (repeats, A1.shape[0]))
    r2 = field.random(rng, (repeats, A2.shape[0]))
    return keys_from_vectors(shard.worker_id, A1, A2, r1, r2, field)


def generic_check(r, s, operand, claimed, field: PrimeField) -> bool:
    """``r . claimed == s . operand`` for every repetition row of (r, s)."""
    r = np.ascontiguousarray(np.atleast_2d(r), dtype=field.dtype)
    s = np.ascontiguousarray(np.atleast_2d(s), dtype=field.dtype)
    return _check(r, s, operand, claimed, field)


def _check(r, s, operand, claimed, field: PrimeField) -> bool:
    # r, s: contiguous 2-D key arrays in the field's dtype
    operand = np.asarray(operand)
    claimed = np.asarray(claimed)
    if (operand.ndim != 1 or claimed.ndim != 1
            or s.shape[1] != operand.shape[0] or r.shape[1] != claimed.shape[0]):
        raise DimensionMismatch(
            f"key ({r.shape[1]}, {s.shape[1]}) vs operand {operand.shape}, result {claimed.shape}")
    if field.small:
        return bool(_check_small(r, s, np.ascontiguousarray(operand, dtype=np.int64),
                                 np.ascontiguousarray(claimed, dtype=np.int64), field.q))
    for ri, si in zip(r, s):
        if field.dot(ri, claimed.astype(object)) != field.dot(si, operand.astype(object)):
            return False
    return True


def check_round1(key: VerificationKeyPair, w, z_tilde) -> VerificationOutcome:
    return VerificationOutcome(key.worker_id, 1, _check(key.r1, key.s1, w, z_tilde, key.field))


def check_round2(key: VerificationKeyPair, e, g_tilde) -> VerificationOutcome:
    return VerificationOutcome(key.worker_id, 2, _check(key.r2, key.s2, e, g_tilde, key.field))
