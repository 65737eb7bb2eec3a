import numpy as np
import pytest

from combopt import groups as G
from combopt import perfop as P
from combopt import superchannels as SC
from combopt import tensor as T


def _kron_pow(M, k):
    out = np.array([[1.0 + 0j]])
    for _ in range(k):
        out = np.kron(out, M)
    return out


def test_taskspec_classification():
    assert P.TaskSpec("conjugate", 2, 1).homomorphic
    assert P.TaskSpec("identity", 2, 1).homomorphic
    assert not P.TaskSpec("transpose", 2, 1).homomorphic
    assert not P.TaskSpec("invert", 2, 1).homomorphic
    with pytest.raises(ValueError):
        P.TaskSpec("clone", 2, 1)


def test_apply_task():
    U = G.haar_unitary(3, 0).mat
    assert np.array_equal(P.apply_task(U, "conjugate"), U.conj())
    assert np.array_equal(P.apply_task(U, "transpose"), U.T)
    assert np.allclose(P.apply_task(U, "invert"), np.linalg.inv(U))
    assert np.array_equal(P.apply_task(U, "identity"), U)


@pytest.mark.parametrize("f,d,k", [
    ("conjugate", 2, 1), ("transpose", 2, 1), ("invert", 2, 1),
    ("conjugate", 2, 2), ("transpose", 2, 2), ("invert", 2, 2),
    ("conjugate", 3, 1), ("transpose", 3, 1), ("invert", 3, 1),
])
def test_omega_shape_trace_psd(f, d, k):
    om = P.omega_build(P.TaskSpec(f, d, k))
    assert om.omega.names == tuple(["P"] + [f"I{j+1}" for j in range(k)] + [f"O{j+1}" for j in range(k)] + ["F"])
    assert np.max(np.abs(om.mat - om.mat.conj().T)) < 1e-12
    assert np.max(np.abs(om.mat.imag)) < 1e-12
    assert abs(np.trace(om.mat).real - d ** (k - 1)) < 1e-9
    assert np.linalg.eigvalsh(om.mat).min() > -1e-10


def test_omega_monte_carlo_consistency_small():
    # acceptance runs the N=2e4 version; this is the fast smoke check
    task = P.TaskSpec("transpose", 2, 1)
    om = P.omega_build(task)
    mc = P.omega_monte_carlo(task, 4000, seed=2)
    assert np.linalg.norm(om.mat - mc.mat) <= 5 * mc.stderr
    assert np.max(np.abs(mc.mat - mc.mat.conj().T)) < 1e-12
    assert abs(np.trace(mc.mat).real - 1.0) <= 5 * mc.stderr


def _group_element(task, U, A=None):
    """The operator that must commute with Omega, on (P, I.., O.., F)."""
    d, k = task.d, task.k
    fU = P.apply_task(U, task.f)
    if task.homomorphic:
        # 1_P (x) 1_I (x) U*^{(x)k}_O (x) f(U)_F
        left = np.eye(d ** (k + 1))
        return np.kron(np.kron(left, _kron_pow(U.conj(), k)), fU)
    # transpose-type: A_P (x) B*^{(x)k}_I (x) A*^{(x)k}_O (x) B_F with f(A) = A
    raise NotImplementedError


def test_omega_commutation_homomorphic():
    rng = np.random.default_rng(5)
    for f, d, k in [("conjugate", 2, 1), ("conjugate", 2, 2), ("identity", 2, 1)]:
        task = P.TaskSpec(f, d, k)
        om = P.omega_build(task)
        for _ in range(20):
            U = G.haar_unitary(d, rng).mat
            gmat = _group_element(task, U)
            res = np.max(np.abs(om.mat @ gmat - gmat @ om.mat))
            assert res < 1e-10, (f, d, k, res)


def test_omega_commutation_transpose_two_sided():
    # [Omega, A_P (x) B*^k_I (x) A*^k_O (x) B_F] = 0 for the transpose task
    rng = np.random.default_rng(6)
    for d, k in [(2, 1), (2, 2), (3, 1)]:
        task = P.TaskSpec("transpose", d, k)
        om = P.omega_build(task)
        for _ in range(20):
            A = G.haar_unitary(d, rng).mat
            B = G.haar_unitary(d, rng).mat
            gmat = np.kron(np.kron(np.kron(A, _kron_pow(B.conj(), k)), _kron_pow(A.conj(), k)), B)
            res = np.max(np.abs(om.mat @ gmat - gmat @ om.mat))
            assert res < 1e-10, (d, k, res)


def test_omega_commutation_invert_two_sided():
    rng = np.random.default_rng(7)
    for d, k in [(2, 1), (2, 2)]:
        task = P.TaskSpec("invert", d, k)
        om = P.omega_build(task)
        for _ in range(20):
            A = G.haar_unitary(d, rng).mat
            B = G.haar_unitary(d, rng).mat
            gmat = np.kron(np.kron(np.kron(A, _kron_pow(B, k)), _kron_pow(A, k)), B)
            res = np.max(np.abs(om.mat @ gmat - gmat @ om.mat))
            assert res < 1e-10, (d, k, res)


def test_omega_homomorphic_wrong_class_raises():
    basis = G.collective_commutant(2, 2)
    with pytest.raises(ValueError):
        P.omega_homomorphic(basis, P.TaskSpec("transpose", 2, 1))
    with pytest.raises(ValueError):
        P.omega_antihomomorphic(basis, P.TaskSpec("conjugate", 2, 1))


def test_omega_build_k_limit():
    with pytest.raises(ValueError):
        P.omega_build(P.TaskSpec("transpose", 2, 4))


def test_omega_gs_and_closed_form_agree():
    task = P.TaskSpec("invert", 2, 2)
    om_cf = P.omega_build(task)
    om_gs = P.omega_antihomomorphic(G.collective_commutant(2, 3), task)
    assert np.max(np.abs(om_cf.mat - om_gs.mat)) < 1e-12


def test_average_fidelity_range_random_members(rng):
    task = P.TaskSpec("transpose", 2, 2)
    om = P.omega_build(task)
    for _ in range(100):
        S = SC.random_parallel_superchannel(2, 2, rng)
        val = P.average_fidelity(S, om)
        assert -1e-9 <= val <= 1 + 1e-9


def test_average_fidelity_label_mismatch():
    om = P.omega_build(P.TaskSpec("transpose", 2, 1))
    S = T.identity_operator([T.space("P", 2), T.space("F", 2)])
    with pytest.raises(ValueError):
        P.average_fidelity(S, om)


def test_fidelity_at_unitary_identity_wire():
    # prepare-the-identity-channel strategy is perfect at U = 1 for f = identity
    d = 2
    me_PI = T.maximally_entangled_operator(T.space("P", d), T.space("I1", d))
    me_OF = T.maximally_entangled_operator(T.space("O1", d), T.space("F", d))
    S = T.tensor_product(me_PI, me_OF)  # wire circuit P->I1, O1->F
    task = P.TaskSpec("identity", d, 1)
    val = P.fidelity_at_unitary(S, np.eye(d), task)
    assert abs(val - 1.0) < 1e-12


def test_fidelity_mc_matches_trace_pairing(rng):
    task = P.TaskSpec("invert", 2, 1)
    om = P.omega_build(task)
    S = SC.random_parallel_superchannel(2, 1, rng)
    fbar = P.average_fidelity(S, om)
    vals = [P.fidelity_at_unitary(S, G.haar_unitary(2, rng), task) for _ in range(1000)]
    stderr = np.std(vals, ddof=1) / np.sqrt(len(vals))
    assert abs(np.mean(vals) - fbar) < 3 * stderr + 1e-6


def test_visibility_round_trip():
    assert P.visibility_from_fidelity(1.0, 2) == 1.0
    assert P.visibility_from_fidelity(0.25, 2) == 0.0
    assert abs(P.visibility_from_fidelity(0.5, 2) - 1 / 3) < 1e-15
    assert abs(P.fidelity_from_visibility(1 / 3, 2) - 0.5) < 1e-15
    with pytest.raises(ValueError):
        P.visibility_from_fidelity(0.1, 2)
    with pytest.raises(ValueError):
        P.visibility_from_fidelity(1.2, 2)


def test_omega_monte_carlo_custom_callback():
    # a fixed-basis-change conjugation through the callback hook matches the
    # named builder conjugated factor-wise on the target legs
    task = P.TaskSpec("identity", 2, 1)
    V = G.haar_unitary(2, 123).mat
    mc_hook = P.omega_monte_carlo(task, 3000, seed=9, f_map=lambda U: V @ U @ V.conj().T)
    mc_named = P.omega_monte_carlo(task, 3000, seed=9)
    W = np.kron(np.kron(np.kron(V.conj(), np.eye(2)), np.eye(2)), V)  # acts on P and F
    rotated = W @ mc_named.mat @ W.conj().T
    assert np.linalg.norm(mc_hook.mat - rotated) < 1e-10
