"""Closed-form optimal fidelities and bounds used for cross-checks.

Rational values are exposed as exact fractions; trigonometric forms are
evaluated in extended precision and rounded once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from mpmath import mp

mp.dps = 50


@dataclass(frozen=True)
class BoundRecord:
    task: str
    d: int
    k: int
    cone: str
    kind: str  # exact | upper | lower
    value: float
    exact: Fraction | None
    source: str

    def __post_init__(self):
        if not -1e-12 <= self.value <= 1 + 1e-12:
            raise ValueError(f"bound {self.value} outside [0, 1]")


def _cos2(num_pi_over: int) -> float:
    return float(mp.cos(mp.pi / num_pi_over) ** 2)


def f_conj_k1(d: int) -> Fraction:
    """Optimal average fidelity for one-use complex conjugation."""
    if d < 2:
        raise ValueError("d >= 2")
    return Fraction(2, d * (d - 1))


def f_trans_k1(d: int) -> Fraction:
    """Optimal average fidelity for one-use transposition (any cone class)."""
    if d < 2:
        raise ValueError("d >= 2")
    return Fraction(2, d * d)


def f_inv_k1(d: int) -> Fraction:
    """One-use inversion; coincides with one-use transposition."""
    return f_trans_k1(d)


def f_est_qubit(k: int) -> float:
    """Optimal qubit unitary-estimation fidelity with k parallel uses."""
    if k < 1:
        raise ValueError("k >= 1")
    return _cos2(k + 3)


def par_upper(k: int) -> float:
    """Dimension-free upper bound for parallel transposition/inversion."""
    if k < 1:
        raise ValueError("k >= 1")
    return 1.0 - 1.0 / (k + 3) ** 2


def seq_lower_transpose(d: int, k: int) -> Fraction:
    """Sequential lower bound from the heralded-exact transposition circuit."""
    if d < 2 or k < 1:
        raise ValueError("d >= 2 and k >= 1")
    reps = math.ceil(k / d)
    return 1 - (1 - Fraction(1, d * d)) ** reps


def seq_lower_inverse(d: int, k: int) -> Fraction:
    """Sequential lower bound from the heralded-exact inversion circuit."""
    if d < 2 or k < 1:
        raise ValueError("d >= 2 and k >= 1")
    reps = (k + 1) // d
    return 1 - (1 - Fraction(1, d * d)) ** reps


def f_pbt_qubit(k: int) -> float:
    """Qubit transposition fidelity through port-based teleportation."""
    if k < 1:
        raise ValueError("k >= 1")
    return _cos2(k + 2)


def seq_lower(task: str, d: int, k: int) -> Fraction:
    if task == "transpose":
        return seq_lower_transpose(d, k)
    if task == "invert":
        return seq_lower_inverse(d, k)
    raise ValueError(f"no sequential lower bound for task {task!r}")


def known_exact(task: str, d: int, k: int) -> tuple[float, Fraction | None] | None:
    """Known optimum (value, exact fraction if rational) where available."""
    if k == 1:
        if task == "conjugate":
            v = f_conj_k1(d)
            return float(v), v
        if task in ("transpose", "invert"):
            v = f_trans_k1(d)
            return float(v), v
    if d == 2 and task in ("transpose", "invert"):
        # parallel optimum equals the qubit estimation fidelity
        val = f_est_qubit(k)
        exact = Fraction(3, 4) if k == 3 else None  # cos^2(pi/6) = 3/4
        return val, exact
    return None


def bounds_table(task: str, d: int, ks) -> list[BoundRecord]:
    """All applicable records for one task and dimension over a k range."""
    records: list[BoundRecord] = []
    for k in ks:
        if k == 1:
            if task == "conjugate":
                v = f_conj_k1(d)
                records.append(BoundRecord(task, d, k, "parallel", "exact", float(v), v, "one-use conjugation"))
            else:
                v = f_trans_k1(d)
                records.append(BoundRecord(task, d, k, "parallel", "exact", float(v), v, "one-use anti-homomorphic optimum"))
        if task in ("transpose", "invert"):
            if d == 2:
                val, exact = known_exact(task, d, k)
                records.append(BoundRecord(task, d, k, "parallel", "exact", val, exact, "qubit estimation law"))
            records.append(BoundRecord(task, d, k, "parallel", "upper", par_upper(k), None, "series bound"))
            lo = seq_lower(task, d, k)
            records.append(BoundRecord(task, d, k, "sequential", "lower", float(lo), lo, "heralded-exact circuit"))
            if d == 2 and task == "transpose":
                records.append(BoundRecord(task, d, k, "parallel", "lower", f_pbt_qubit(k), None, "port-based teleportation"))
    return records
