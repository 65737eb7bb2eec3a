import numpy as np
import pytest
from fractions import Fraction

from combopt import formulas as F
from combopt import perfop as P
from combopt import sdp
from combopt import superchannels as SC


def _solve(f, d, k, kind, reduce=True, tol=1e-9):
    task = P.TaskSpec(f, d, k)
    om = P.omega_build(task)
    cone = SC.cone_for(kind, d, k)
    prob = sdp.assemble(om, cone, reduce=reduce)
    sol = sdp.solve(prob, sdp.SolveOptions(tol=tol))
    return prob, sol


def test_full_space_constraints_pin_members(rng):
    cone = SC.cone_sequential(2, 2)
    om = P.omega_build(P.TaskSpec("transpose", 2, 2))
    prob = sdp.assemble(om, cone, reduce=False)
    Amat = prob.A.reshape(prob.m, -1)
    for _ in range(5):
        S = SC.random_sequential_superchannel(2, 2, rng)
        assert np.linalg.norm(prob.b - Amat @ S.mat.real.reshape(-1)) < 1e-10
    # violated by a generic density matrix of the right trace
    from combopt import groups as G

    M = G.random_density_matrix(cone.side, rng) * cone.trace_value
    assert np.linalg.norm(prob.b - Amat @ M.real.reshape(-1)) > 1e-3


def test_reduced_dimension_small_for_k1():
    task = P.TaskSpec("transpose", 2, 1)
    prob = sdp.assemble(P.omega_build(task), SC.cone_parallel(2, 1), reduce=True)
    assert prob.m <= 10
    full = sdp.assemble(P.omega_build(task), SC.cone_parallel(2, 1), reduce=False)
    assert full.n == 16


def test_reduced_and_full_solves_agree():
    for f, kind in [("transpose", "parallel"), ("invert", "sequential"), ("transpose", "general")]:
        _, red = _solve(f, 2, 2, kind, reduce=True)
        _, full = _solve(f, 2, 2, kind, reduce=False)
        assert abs(red.fidelity - full.fidelity) < 1e-7
        assert red.status == "optimal" and full.status == "optimal"


@pytest.mark.parametrize("f,d,expected", [
    ("transpose", 2, 0.5),
    ("invert", 2, 0.5),
    ("conjugate", 2, 1.0),
    ("transpose", 3, 2 / 9),
    ("invert", 3, 2 / 9),
    ("conjugate", 3, 1 / 3),
])
def test_k1_known_optima(f, d, expected):
    _, sol = _solve(f, d, 1, "parallel")
    assert sol.status == "optimal"
    assert abs(sol.fidelity - expected) < 1e-7


def test_qubit_parallel_law_k2():
    _, sol = _solve("transpose", 2, 2, "parallel")
    assert abs(sol.fidelity - np.cos(np.pi / 5) ** 2) < 1e-6


def test_weak_duality_and_residuals():
    for f, kind in [("transpose", "sequential"), ("invert", "general")]:
        prob, sol = _solve(f, 2, 2, kind)
        # dual bound dominates the primal value up to solver tolerance
        assert sol.fidelity <= sol.fidelity_bound + 1e-7
        assert sol.gap <= 1e-8
        assert sol.primal_residual <= 1e-8
        assert sol.dual_residual <= 1e-8
        # the dominating operator exceeds Omega
        lam_min = np.linalg.eigvalsh(sol.Y_omega - prob.omega.mat.real).min()
        assert lam_min > -1e-9


def test_weak_duality_every_iterate():
    # pobj - dobj = <Z,X> + <Rd,X> - y.rp, so with X,Z interior the dual
    # objective stays below the primal one up to the infeasibility terms
    for f, kind in [("transpose", "parallel"), ("invert", "sequential")]:
        _, sol = _solve(f, 2, 2, kind)
        scale = 1.0 + abs(sol.primal_obj)
        for pobj, dobj, xz, rp_y, rd_x in sol.history:
            assert dobj <= pobj + rp_y + rd_x + 1e-12 * scale
            assert xz >= -1e-12 * scale


def test_solution_passes_validation():
    for kind in ("parallel", "sequential", "general"):
        _, sol = _solve("invert", 2, 2, kind)
        rep = SC.validate(sol.superchannel, sol.problem.cone, tol=1e-7)
        assert rep.ok, rep.to_dict()


def test_monotonicity_across_cones():
    for f in ("transpose", "invert", "conjugate"):
        vals = {}
        for kind in ("parallel", "sequential", "general"):
            _, sol = _solve(f, 2, 2, kind)
            vals[kind] = sol.fidelity
        assert vals["parallel"] <= vals["sequential"] + 1e-8
        assert vals["sequential"] <= vals["general"] + 1e-8


def test_loose_dual_point_still_bounds():
    # any operator y_tr * I with y_tr >= max eig of Omega certifies an upper bound
    prob, sol = _solve("transpose", 2, 1, "parallel")
    om = prob.omega.mat.real
    ytr = float(np.linalg.eigvalsh(om).max()) + 0.1
    loose = prob.cone.trace_value * ytr
    assert np.linalg.eigvalsh(ytr * np.eye(prob.n) - om).min() >= 0
    assert loose >= sol.fidelity  # valid but far from tight


def test_dual_extract():
    prob, sol = _solve("transpose", 2, 1, "parallel")
    lam, Sbar = sdp.dual_extract(sol)
    assert abs(lam - 0.5) < 1e-6
    gap = np.linalg.eigvalsh(lam * Sbar.mat.real - prob.omega.mat.real).min()
    assert gap > -1e-9
    # weak duality: lambda upper-bounds the primal value
    assert lam >= sol.fidelity - 1e-8


def test_certify_k1_transpose():
    prob, sol = _solve("transpose", 2, 1, "parallel")
    cert = sdp.certify(prob, sol, precision=1e-4)
    assert cert.precision_met
    assert cert.contains(Fraction(1, 2))
    assert cert.lower <= Fraction(1, 2) <= cert.upper
    assert cert.width <= 1e-4
    # the primal certificate is an exact cone member
    from combopt import rational as R

    assert R.is_psd_exact(cert.primal_certificate)
    assert R.exact_trace(cert.primal_certificate) == prob.cone.trace_value


def test_certify_brackets_float_optimum():
    for f, kind in [("conjugate", "parallel"), ("invert", "sequential")]:
        prob, sol = _solve(f, 2, 2, kind)
        cert = sdp.certify(prob, sol, precision=1e-4)
        assert float(cert.lower) <= sol.fidelity + 1e-8
        assert sol.fidelity <= float(cert.upper) + 1e-8
        assert cert.precision_met


def test_certify_interval_serialization():
    prob, sol = _solve("transpose", 2, 1, "parallel")
    cert = sdp.certify(prob, sol)
    d = cert.to_dict()
    assert int(d["lower"]["num"]) == cert.lower.numerator
    assert d["lower_float"] <= d["upper_float"]


def test_certify_rejected_for_k3():
    with pytest.raises(ValueError):
        P.omega_exact(P.TaskSpec("transpose", 2, 3))


def test_optimize_task_report():
    report = sdp.optimize_task(P.TaskSpec("transpose", 2, 1), "parallel")
    d = report.to_dict()
    assert d["fidelity"] == pytest.approx(0.5, abs=1e-7)
    assert d["certified"]["precision_met"]
    assert d["analytic"]["matches"]
    assert d["validation_ok"]
    assert abs(report.visibility - 1 / 3) < 1e-6


def test_full_space_limit_guard():
    om = P.omega_build(P.TaskSpec("transpose", 3, 2))
    cone = SC.cone_parallel(3, 2)
    with pytest.raises(ValueError):
        sdp.assemble(om, cone, reduce=False)


def test_identity_task_is_trivially_perfect():
    _, sol = _solve("identity", 2, 1, "parallel")
    assert abs(sol.fidelity - 1.0) < 1e-7


def test_certify_size_guard():
    prob, sol = _solve("transpose", 2, 1, "parallel")
    with pytest.raises(ValueError):
        sdp.certify(prob, sol, max_side=8)


def test_validate_label_mismatch_raises():
    import combopt.tensor as T

    S = T.identity_operator([T.space("P", 2), T.space("F", 2)])
    with pytest.raises(ValueError):
        SC.validate(S, SC.cone_parallel(2, 1))
