"""Dense linear algebra over GF(2) on uint8 0/1 matrices."""

from __future__ import annotations

import numpy as np


def as_bits(a) -> np.ndarray:
    """Coerce to a uint8 array with entries reduced mod 2."""
    return (np.asarray(a, dtype=np.int64) & 1).astype(np.uint8)


def rref(a: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2).

    Returns the reduced matrix (same shape, zero rows at the bottom) and the
    list of pivot columns in order.
    """
    r = as_bits(a).copy()
    rows, cols = r.shape
    pivots: list[int] = []
    row = 0
    for col in range(cols):
        if row >= rows:
            break
        hits = np.nonzero(r[row:, col])[0]
        if hits.size == 0:
            continue
        p = row + hits[0]
        if p != row:
            r[[row, p]] = r[[p, row]]
        others = np.nonzero(r[:, col])[0]
        others = others[others != row]
        r[others] ^= r[row]
        pivots.append(col)
        row += 1
    return r, pivots


def rank(a: np.ndarray) -> int:
    return len(rref(a)[1])


def nullspace(a: np.ndarray) -> np.ndarray:
    """Basis of the right null space {x : a x = 0}, one basis vector per row.

    Basis vector i has a single 1 among the free (non-pivot) columns, at the
    i-th free column, so the returned matrix is systematic on those columns.
    """
    a = as_bits(a)
    cols = a.shape[1]
    r, pivots = rref(a)
    free = [c for c in range(cols) if c not in set(pivots)]
    basis = np.zeros((len(free), cols), dtype=np.uint8)
    for i, f in enumerate(free):
        basis[i, f] = 1
        for j, p in enumerate(pivots):
            basis[i, p] = r[j, f]
    return basis


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((np.asarray(a, dtype=np.int64) @ np.asarray(b, dtype=np.int64)) & 1).astype(np.uint8)
