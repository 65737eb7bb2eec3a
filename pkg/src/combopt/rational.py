"""Exact rational linear algebra used by the certification pass.

Matrices are numpy object arrays holding ``fractions.Fraction`` (construction
side) or ``gmpy2.mpq`` (elimination side).  Everything here is exact; no
floats are consumed except through explicit rounding helpers.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Sequence

import gmpy2
import numpy as np

ZERO = Fraction(0)


def frac_eye(n: int) -> np.ndarray:
    m = np.full((n, n), ZERO, dtype=object)
    for i in range(n):
        m[i, i] = Fraction(1)
    return m


def exact_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ra, ca = a.shape
    rb, cb = b.shape
    out = np.empty((ra * rb, ca * cb), dtype=object)
    for i in range(ra):
        for j in range(ca):
            out[i * rb : (i + 1) * rb, j * cb : (j + 1) * cb] = a[i, j] * b
    return out


def exact_trace(m: np.ndarray) -> Fraction:
    return Fraction(sum(m[i, i] for i in range(m.shape[0])))


def exact_inner(a: np.ndarray, b: np.ndarray) -> Fraction:
    """tr(a b) for real symmetric rational matrices."""
    return Fraction(int(0)) + sum((a * b.T).reshape(-1))


def permute_exact(mat: np.ndarray, dims: Sequence[int], names_from: Sequence[str], names_to: Sequence[str]) -> np.ndarray:
    """Reorder tensor factors of an exact matrix from one naming to another."""
    if set(names_from) != set(names_to):
        raise ValueError("factor names must agree as sets")
    perm = [list(names_from).index(nm) for nm in names_to]
    n = len(dims)
    side = int(np.prod(dims))
    t = mat.reshape(list(dims) * 2)
    t = t.transpose(perm + [n + p for p in perm])
    return t.reshape(side, side)


def partial_trace_exact(mat: np.ndarray, dims: Sequence[int], positions: Sequence[int]) -> np.ndarray:
    n = len(dims)
    keep = [i for i in range(n) if i not in positions]
    t = mat.reshape(list(dims) * 2)
    order = keep + list(positions) + [n + i for i in keep] + [n + i for i in positions]
    t = t.transpose(order)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dt = int(np.prod([dims[i] for i in positions]))
    t = t.reshape(dk, dt, dk, dt)
    out = np.full((dk, dk), ZERO, dtype=object)
    for a in range(dt):
        out = out + t[:, a, :, a]
    return out


def trace_and_replace_exact(mat: np.ndarray, dims: Sequence[int], positions: Sequence[int]) -> np.ndarray:
    """tr_x(M) (x) 1_x / d_x, re-embedded at the original factor positions."""
    if not positions:
        return mat
    n = len(dims)
    keep = [i for i in range(n) if i not in positions]
    reduced = partial_trace_exact(mat, dims, positions)
    dx = int(np.prod([dims[i] for i in positions]))
    big = exact_kron(reduced, frac_eye(dx)) * Fraction(1, dx)
    # factor order is keep + positions; restore original order
    names_now = [str(i) for i in keep] + [str(i) for i in positions]
    names_tgt = [str(i) for i in range(n)]
    dims_now = [dims[i] for i in keep] + [dims[i] for i in positions]
    return permute_exact(big, dims_now, names_now, names_tgt)


def round_to_fractions(arr: np.ndarray, max_denominator: int) -> np.ndarray:
    """Entrywise best rational approximations; symmetrizes the result."""
    n = arr.shape[0]
    out = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(i, n):
            x = Fraction(float((arr[i, j] + arr[j, i]) / 2.0)).limit_denominator(max_denominator)
            out[i, j] = x
            out[j, i] = x
    return out


def to_mpq(m: np.ndarray) -> np.ndarray:
    out = np.empty(m.shape, dtype=object)
    flat_in = m.reshape(-1)
    flat_out = out.reshape(-1)
    for i, x in enumerate(flat_in):
        flat_out[i] = gmpy2.mpq(x.numerator, x.denominator)
    return out


def to_float(m: np.ndarray) -> np.ndarray:
    return np.array([[float(x) for x in row] for row in m], dtype=np.float64)


def is_psd_exact(M: np.ndarray) -> bool:
    """Exact PSD test for a symmetric rational matrix via pivoted elimination.

    Diagonal-pivoted Schur-complement elimination: every pivot stage of a
    PSD matrix has nonnegative diagonal, and a vanishing diagonal entry
    forces its whole row to vanish.
    """
    n = M.shape[0]
    A = to_mpq(M)
    zero = gmpy2.mpq(0)
    active = list(range(n))
    while active:
        diag = [A[i, i] for i in active]
        if any(x < zero for x in diag):
            return False
        dmax = max(diag)
        if dmax == zero:
            return all(A[i, j] == zero for i in active for j in active)
        p = active[diag.index(dmax)]
        rest = [i for i in active if i != p]
        piv = A[p, p]
        col = A[[*rest], p]
        nz = [idx for idx, i in enumerate(rest) if col[idx] != zero]
        for ii in nz:
            i = rest[ii]
            ci = col[ii] / piv
            for jj in nz:
                j = rest[jj]
                A[i, j] -= ci * col[jj]
        active = rest
    return True


def min_eig_float(M: np.ndarray) -> float:
    """Float estimate of the smallest eigenvalue of an exact symmetric matrix."""
    F = to_float(M)
    return float(np.linalg.eigvalsh((F + F.T) / 2.0).min())
