import math
from fractions import Fraction

import pytest

from combopt import formulas as F


def test_one_use_conjugation():
    assert F.f_conj_k1(2) == 1
    assert F.f_conj_k1(3) == Fraction(1, 3)


def test_one_use_transposition_and_inversion():
    assert F.f_trans_k1(2) == Fraction(1, 2)
    assert F.f_trans_k1(3) == Fraction(2, 9)
    for d in range(2, 12):
        assert F.f_trans_k1(d) == F.f_inv_k1(d)


def test_qubit_estimation_values():
    assert abs(F.f_est_qubit(1) - 0.5) < 1e-15
    assert abs(F.f_est_qubit(2) - 0.6545084971874737) < 1e-12
    assert abs(F.f_est_qubit(3) - 0.75) < 1e-15


def test_parallel_upper_values():
    assert F.par_upper(1) == 15 / 16
    assert F.par_upper(2) == 0.96
    for k in range(1, 21):
        assert F.f_est_qubit(k) <= F.par_upper(k)


def test_sequential_lower_transpose():
    assert F.seq_lower_transpose(2, 2) == Fraction(1, 4)
    assert F.seq_lower_transpose(2, 4) == Fraction(7, 16)
    assert F.seq_lower_transpose(2, 400) > 1 - Fraction(1, 10**20)


def test_sequential_lower_inverse():
    assert F.seq_lower_inverse(2, 3) == Fraction(7, 16)
    assert F.seq_lower_inverse(2, 1) == Fraction(1, 4)
    assert F.seq_lower_inverse(3, 2) == Fraction(1, 9)


def test_pbt_values():
    assert abs(F.f_pbt_qubit(2) - 0.5) < 1e-15
    assert abs(F.f_pbt_qubit(1) - 0.25) < 1e-15


def test_parallel_dominates_estimation_up_to_100():
    for k in range(1, 101):
        assert F.f_est_qubit(k) <= F.par_upper(k) + 1e-15


def test_seq_lower_monotone_in_k():
    for task in ("transpose", "invert"):
        for d in (2, 3):
            vals = [F.seq_lower(task, d, k) for k in range(1, 30)]
            assert all(a <= b for a, b in zip(vals, vals[1:]))


def test_pbt_below_estimation_for_k_at_least_2():
    for k in range(2, 101):
        assert F.f_pbt_qubit(k) < F.f_est_qubit(k)


def test_bounds_table_fields():
    rows = F.bounds_table("transpose", 2, range(1, 4))
    kinds = {(r.k, r.kind) for r in rows}
    assert (1, "exact") in kinds and (2, "upper") in kinds and (3, "lower") in kinds
    for r in rows:
        assert 0.0 <= r.value <= 1.0


def test_known_exact():
    val, exact = F.known_exact("transpose", 2, 3)
    assert exact == Fraction(3, 4) and abs(val - 0.75) < 1e-15
    val, exact = F.known_exact("conjugate", 2, 1)
    assert exact == 1
    assert F.known_exact("conjugate", 3, 2) is None


def test_domain_errors():
    with pytest.raises(ValueError):
        F.f_conj_k1(1)
    with pytest.raises(ValueError):
        F.f_est_qubit(0)
    with pytest.raises(ValueError):
        F.seq_lower("conjugate", 2, 1)
