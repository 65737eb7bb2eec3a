"""Dense primal-dual SDP solver and exact-arithmetic certification.

The fidelity maximization max tr(S Omega) over a superchannel cone is solved
by an infeasible-start primal-dual path-following method with Nesterov-Todd
scaling.  Problems are assembled either over the full space of real
symmetric matrices or, with ``reduce=True``, over the group-invariant
subspace fixed by twirling, which preserves the optimum exactly.

Certification rounds the solver iterates to rationals and repairs
feasibility in exact arithmetic: the primal candidate is projected onto the
affine hull with the cone's trace-and-replace projector and mixed with the
maximally noisy interior member until an exact PSD test passes; the dual
candidate is projected onto the valid dual directions and its multiplier of
the identity inflated until the dominated-operator test passes.  The result
is a pair of exact rational bounds enclosing the optimum.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.linalg import cho_factor, cho_solve, cholesky, solve_triangular

from . import formulas, perfop, rational, superchannels
from .tensor import LabeledOperator
from .perfop import PerformanceOperator, TaskSpec
from .superchannels import SuperchannelCone

FULL_SPACE_LIMIT = 256


# ---------------------------------------------------------------------------
# Symmetric vectorization
# ---------------------------------------------------------------------------

def _sym_basis(side: int) -> list[np.ndarray]:
    """Orthonormal real symmetric basis: E_ii and (E_ij + E_ji)/sqrt(2)."""
    out = []
    for i in range(side):
        m = np.zeros((side, side))
        m[i, i] = 1.0
        out.append(m)
    for i in range(side):
        for j in range(i + 1, side):
            m = np.zeros((side, side))
            m[i, j] = m[j, i] = 1.0 / np.sqrt(2.0)
            out.append(m)
    return out


def _svec(mats: np.ndarray) -> np.ndarray:
    """Stack symmetric matrices (m, n, n) into inner-product-preserving rows."""
    m, n, _ = mats.shape
    iu = np.triu_indices(n, 1)
    diag = mats[:, np.arange(n), np.arange(n)]
    off = mats[:, iu[0], iu[1]] * np.sqrt(2.0)
    return np.concatenate([diag, off], axis=1)


# ---------------------------------------------------------------------------
# Problem assembly
# ---------------------------------------------------------------------------

@dataclass
class SdpProblem:
    """Standard-form data min <C,X> s.t. <A_i,X> = b_i, X >= 0 plus context."""

    task: TaskSpec
    cone: SuperchannelCone
    omega: PerformanceOperator
    reduced: bool
    C: np.ndarray
    A: np.ndarray  # (m, n, n)
    b: np.ndarray
    n: int
    m: int
    # reduced-form extras
    offset_value: float = 0.0  # <Omega, X0> contributed by the affine offset
    start: tuple | None = None

    @property
    def reduced_dim(self) -> int:
        return self.m if self.reduced else 0


def _full_constraints(cone: SuperchannelCone) -> tuple[np.ndarray, np.ndarray]:
    """Scalar constraints over the real symmetric space, rank-reduced.

    The normalized identity (the trace constraint) is kept first; every
    affine identity contributes functionals through a symmetric basis on the
    factors left untouched by its left-hand trace-and-replace.
    """
    n = cone.side
    dims = cone.dims
    names = cone.names
    raw = []
    for cond in cone.conditions:
        lhs_pos = [i for i, nm in enumerate(names) if nm in cond.lhs]
        keep_pos = [i for i in range(len(dims)) if i not in lhs_pos]
        keep_side = int(np.prod([dims[i] for i in keep_pos])) if keep_pos else 1
        lhs_side = n // keep_side
        for B in _sym_basis(keep_side):
            big = np.kron(B, np.eye(lhs_side))
            # reorder factors from keep+lhs back to the cone's label order
            order = keep_pos + lhs_pos
            back = np.argsort(order)
            dims_now = [dims[i] for i in order]
            t = big.reshape(dims_now * 2)
            nn = len(dims)
            big = t.transpose(list(back) + [nn + x for x in back]).reshape(n, n)
            # adjoint of the residual map _lhs - sum coeff _y; traceless
            A = superchannels._tr_replace_nd(big, dims, lhs_pos)
            for coeff, subset in cond.rhs:
                pos = [i for i, nm in enumerate(names) if nm in subset]
                A = A - coeff * superchannels._tr_replace_nd(big, dims, pos)
            raw.append(A)
    raw = np.array(raw)
    rows = _svec(raw)
    # orthonormal recombination; directions below tolerance are redundant
    u, s, vt = np.linalg.svd(rows, full_matrices=False)
    keep = s > 1e-10 * s[0]
    basis_rows = vt[keep]
    m_h = basis_rows.shape[0]
    iu = np.triu_indices(n, 1)
    A_h = np.zeros((m_h, n, n))
    A_h[:, np.arange(n), np.arange(n)] = basis_rows[:, :n]
    A_h[:, iu[0], iu[1]] = basis_rows[:, n:] / np.sqrt(2.0)
    A_h[:, iu[1], iu[0]] = basis_rows[:, n:] / np.sqrt(2.0)
    A_tr = np.eye(n)[None, :, :] / np.sqrt(n)
    A = np.concatenate([A_tr, A_h], axis=0)
    b = np.zeros(A.shape[0])
    b[0] = cone.trace_value / np.sqrt(n)
    return A, b


def invariant_symmetric_basis(task: TaskSpec) -> np.ndarray:
    """Orthonormal basis of the real symmetric twirl-invariant subspace."""
    W = superchannels._twirl_frame(task.f, task.d, task.k)
    n = int(np.sqrt(W.shape[0]))
    cands = []
    for col in W.T:
        M = col.reshape(n, n)
        for R in (M.real + M.real.T, M.imag + M.imag.T):
            if np.linalg.norm(R) > 1e-12:
                cands.append(R)
    rows = _svec(np.array(cands))
    u, s, vt = np.linalg.svd(rows, full_matrices=False)
    keep = s > 1e-10 * s[0]
    basis_rows = vt[keep]
    iu = np.triu_indices(n, 1)
    H = np.zeros((basis_rows.shape[0], n, n))
    H[:, np.arange(n), np.arange(n)] = basis_rows[:, :n]
    H[:, iu[0], iu[1]] = basis_rows[:, n:] / np.sqrt(2.0)
    H[:, iu[1], iu[0]] = basis_rows[:, n:] / np.sqrt(2.0)
    return H


def reduced_basis(task: TaskSpec, cone: SuperchannelCone) -> np.ndarray:
    """Orthonormal traceless basis of (invariant subspace) ∩ (affine hull)."""
    H = invariant_symmetric_basis(task)
    n = cone.side
    q = H.shape[0]
    QH = np.empty_like(H)
    for i in range(q):
        proj = cone.project(H[i])
        QH[i] = proj - (np.trace(proj) / n) * np.eye(n)
    gram = _svec(H) @ _svec(QH).T
    gram = (gram + gram.T) / 2.0
    w, v = np.linalg.eigh(gram)
    sel = v[:, w > 1.0 - 1e-8]
    G = np.einsum("qa,qij->aij", sel, H)
    return G


def assemble(omega: PerformanceOperator, cone: SuperchannelCone, reduce: bool = True) -> SdpProblem:
    """Build the solver-ready problem; reduction preserves the optimum."""
    if omega.omega.labels != cone.labels:
        raise ValueError("performance operator and cone live on different spaces")
    if cone.trace_value <= 0:
        raise ValueError(f"cone trace normalization {cone.trace_value} is infeasible")
    n = cone.side
    Om = omega.mat.real.copy()
    if reduce:
        G = reduced_basis(omega.task, cone)
        m = G.shape[0]
        X0 = np.eye(n) * (cone.trace_value / n)
        b = np.einsum("aij,ij->a", G, Om)
        A = -G
        C = X0
        start = (np.eye(n), np.zeros(m), X0.copy())
        prob = SdpProblem(
            omega.task, cone, omega, True, C, A, b, n, m,
            offset_value=float(np.vdot(X0, Om)), start=start,
        )
        return prob
    if n > FULL_SPACE_LIMIT:
        raise ValueError(f"full-space assembly refused for side {n} > {FULL_SPACE_LIMIT}")
    A, b = _full_constraints(cone)
    C = -Om
    m = A.shape[0]
    X0 = np.eye(n) * (cone.trace_value / n)
    lam_max = float(np.linalg.eigvalsh(Om).max())
    y0 = np.zeros(m)
    y0[0] = -(lam_max + 1.0) * np.sqrt(n)
    Z0 = C - np.einsum("m,mij->ij", y0, A)
    return SdpProblem(omega.task, cone, omega, False, C, A, b, n, m, start=(X0, y0, Z0))


# ---------------------------------------------------------------------------
# Interior-point core
# ---------------------------------------------------------------------------

@dataclass
class SolveOptions:
    tol: float = 1e-9
    max_iter: int = 200
    step_fraction: float = 0.98
    verbose: bool = False


@dataclass
class SdpSolution:
    X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    primal_obj: float
    dual_obj: float
    gap: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: str
    fidelity: float
    fidelity_bound: float
    S_full: np.ndarray
    Y_omega: np.ndarray
    problem: SdpProblem
    solve_seconds: float
    # per-iterate (pobj, dobj, |<Z,X>|, ||rp||*||y||, ||Rd||*||X||)
    history: list = None

    @property
    def superchannel(self) -> LabeledOperator:
        return LabeledOperator(self.problem.cone.labels, self.S_full.astype(np.complex128))


def _sym(M: np.ndarray) -> np.ndarray:
    return (M + M.T) / 2.0


def _psd_sqrt(M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w, V = np.linalg.eigh(_sym(M))
    w = np.clip(w, 1e-300, None)
    root = (V * np.sqrt(w)) @ V.T
    inv_root = (V / np.sqrt(w)) @ V.T
    return root, inv_root


def _nt_scaling(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """W with W Z W = X (Nesterov-Todd scaling point)."""
    Xh, _ = _psd_sqrt(X)
    M = _sym(Xh @ Z @ Xh)
    w, V = np.linalg.eigh(M)
    w = np.clip(w, 1e-300, None)
    Minv_h = (V / np.sqrt(w)) @ V.T
    return _sym(Xh @ Minv_h @ Xh)


def _alpha_to_boundary(X: np.ndarray, dX: np.ndarray) -> float:
    try:
        L = cholesky(X, lower=True)
    except np.linalg.LinAlgError:
        return 0.0
    Y = solve_triangular(L, dX, lower=True)
    Y = solve_triangular(L, Y.T, lower=True)
    lam = float(np.linalg.eigvalsh(_sym(Y)).min())
    if lam >= -1e-14:
        return np.inf
    return -1.0 / lam


def solve(problem: SdpProblem, opts: SolveOptions | None = None) -> SdpSolution:
    """Infeasible-start NT-scaled path following with adaptive centering.

    A pure predictor step sets the centering weight; the actual step uses
    that weight without a second-order correction, which proved more robust
    on the degenerate optimal faces of the sequential cones.
    """
    opts = opts or SolveOptions()
    t_start = time.time()
    n, m = problem.n, problem.m
    C = problem.C
    A = problem.A
    Amat = A.reshape(m, n * n)
    b = problem.b
    if problem.start is not None:
        X, y, Z = (problem.start[0].copy(), problem.start[1].copy(), problem.start[2].copy())
    else:
        X, y, Z = np.eye(n), np.zeros(m), np.eye(n)
    bnorm = 1.0 + np.linalg.norm(b)
    cnorm = 1.0 + np.linalg.norm(C)
    status = "max_iter"
    it = 0
    best = None  # (metric, X, y, Z, iteration)

    def metrics(X, y, Z):
        rp = b - Amat @ X.reshape(-1)
        Rd = C - Z - np.einsum("m,mij->ij", y, A)
        pobj = float(np.vdot(C, X))
        dobj = float(b @ y)
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        pinf = float(np.linalg.norm(rp)) / bnorm
        dinf = float(np.linalg.norm(Rd)) / cnorm
        return rp, Rd, gap, pinf, dinf

    history = []
    for it in range(1, opts.max_iter + 1):
        rp, Rd, gap, pinf, dinf = metrics(X, y, Z)
        mu = float(np.vdot(X, Z).real) / n
        history.append((
            float(np.vdot(C, X)),
            float(b @ y),
            float(np.vdot(X, Z).real),
            float(np.linalg.norm(rp) * np.linalg.norm(y)),
            float(np.linalg.norm(Rd) * np.linalg.norm(X)),
        ))
        if opts.verbose:
            print(f"  it {it:3d}: gap {gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e} mu {mu:.2e}")
        metric = max(gap, pinf, dinf)
        if best is None or metric < best[0]:
            best = (metric, X.copy(), y.copy(), Z.copy(), it)
        if metric <= opts.tol:
            status = "optimal"
            break
        if abs(float(b @ y)) > 1e10 * (1.0 + bnorm):
            status = "diverging_dual"  # primal infeasibility indicator
            break
        W = _nt_scaling(X, Z)
        WAW = np.matmul(W, np.matmul(A, W))
        Msc = Amat @ WAW.reshape(m, n * n).T
        Msc = (Msc + Msc.T) / 2.0
        scale = max(float(np.trace(Msc)) / m, 1.0)
        fac = None
        for ridge in (1e-14, 1e-11, 1e-8, 1e-5):
            try:
                fac = cho_factor(Msc + np.eye(m) * (ridge * scale))
                break
            except np.linalg.LinAlgError:
                continue
        if fac is None:
            status = "schur_singular"
            break
        Zw, Zv = np.linalg.eigh(_sym(Z))
        Zw = np.clip(Zw, 1e-300, None)
        Zinv = (Zv / Zw) @ Zv.T
        WRdW = W @ Rd @ W

        def direction(Rmu):
            rhs = rp - Amat @ Rmu.reshape(-1) + Amat @ WRdW.reshape(-1)
            dy = cho_solve(fac, rhs)
            dZ = Rd - np.einsum("m,mij->ij", dy, A)
            dX = _sym(Rmu - W @ dZ @ W)
            return dX, dy, dZ

        # predictor fixes the centering weight; no second-order correction
        dXa, _, dZa = direction(-X)
        ap = min(1.0, opts.step_fraction * _alpha_to_boundary(X, dXa))
        ad = min(1.0, opts.step_fraction * _alpha_to_boundary(Z, dZa))
        mu_aff = float(np.vdot(X + ap * dXa, Z + ad * dZa).real) / n
        sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-8))
        dX, dy, dZ = direction(sigma * mu * Zinv - X)
        ap = min(1.0, opts.step_fraction * _alpha_to_boundary(X, dX))
        ad = min(1.0, opts.step_fraction * _alpha_to_boundary(Z, dZ))
        if ap < 1e-10 and ad < 1e-10:
            status = "stalled"
            break
        X = _sym(X + ap * dX)
        Z = _sym(Z + ad * dZ)
        y = y + ad * dy

    # fall back to the best iterate seen if the last step degraded
    rp, Rd, gap, pinf, dinf = metrics(X, y, Z)
    if best is not None and best[0] < max(gap, pinf, dinf):
        _, X, y, Z, _ = best
        rp, Rd, gap, pinf, dinf = metrics(X, y, Z)
    if status in ("schur_singular", "stalled", "max_iter") and max(gap, pinf, dinf) <= opts.tol:
        status = "optimal"
    pobj = float(np.vdot(C, X))
    dobj = float(b @ y)
    if problem.reduced:
        S_full = C - np.einsum("m,mij->ij", y, A)  # X0 + sum_a y_a G_a
        fidelity = problem.offset_value + dobj
        fidelity_bound = problem.offset_value + pobj
        Y_raw = X + problem.omega.mat.real
        W = superchannels._twirl_frame(problem.task.f, problem.task.d, problem.task.k)
        v = Y_raw.astype(np.complex128).reshape(-1)
        Y_omega = _sym((W @ (W.conj().T @ v)).reshape(n, n).real)
    else:
        S_full = _sym(X)
        fidelity = -pobj
        fidelity_bound = -dobj
        Y_omega = _sym(Z + problem.omega.mat.real)
    return SdpSolution(
        X=X, y=y, Z=Z,
        primal_obj=pobj, dual_obj=dobj, gap=gap,
        primal_residual=float(np.linalg.norm(rp)),
        dual_residual=float(np.linalg.norm(Rd)),
        iterations=it, status=status,
        fidelity=fidelity, fidelity_bound=fidelity_bound,
        S_full=S_full, Y_omega=Y_omega, problem=problem,
        solve_seconds=time.time() - t_start,
        history=history,
    )


def dual_extract(sol: SdpSolution) -> tuple[float, LabeledOperator]:
    """A dominating pair (lambda, S_bar) with Omega <= lambda S_bar."""
    n = sol.problem.n
    c = sol.problem.cone.trace_value
    ytr = float(np.trace(sol.Y_omega)) / n
    lam = c * ytr
    Sbar = LabeledOperator(sol.problem.cone.labels, (sol.Y_omega / lam).astype(np.complex128))
    return lam, Sbar


# ---------------------------------------------------------------------------
# Exact certification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CertifiedInterval:
    """Exact rational bounds with the certificates that prove them."""

    lower: Fraction
    upper: Fraction
    precision_met: bool
    requested_precision: float
    primal_certificate: np.ndarray  # rational member of the cone
    dual_shift: Fraction  # multiplier of the identity in the dual witness
    mix_epsilon: Fraction

    @property
    def width(self) -> float:
        return float(self.upper - self.lower)

    def contains(self, value) -> bool:
        v = Fraction(value)
        return self.lower <= v <= self.upper

    def to_dict(self) -> dict:
        return {
            "lower": {"num": str(self.lower.numerator), "den": str(self.lower.denominator)},
            "upper": {"num": str(self.upper.numerator), "den": str(self.upper.denominator)},
            "lower_float": float(self.lower),
            "upper_float": float(self.upper),
            "width": self.width,
            "precision_met": self.precision_met,
            "requested_precision": self.requested_precision,
        }


CERTIFY_SIDE_LIMIT = 128


def certify(
    problem: SdpProblem,
    sol: SdpSolution,
    precision: float = 1e-4,
    max_denominator: int = 10**12,
    max_side: int = CERTIFY_SIDE_LIMIT,
) -> CertifiedInterval:
    """Exact rational enclosure of the optimum from the solver iterates.

    Lower bound: value of an exactly feasible rational member obtained by
    rounding, exact affine projection, and mixing toward the noisy interior
    point until an exact PSD test passes.  Upper bound: a rational operator
    dominating Omega whose pairing with every cone member is a constant,
    obtained by exact projection and identity inflation.
    """
    cone = problem.cone
    task = problem.task
    n = cone.side
    if n > max_side:
        raise ValueError(f"exact certification refused for side {n} > {max_side}")
    c = Fraction(cone.trace_value)
    _, om_ex = perfop.omega_exact(task)

    # primal: exact feasible point
    Xhat = rational.round_to_fractions(sol.S_full, max_denominator)
    Xaff = cone.project_exact(Xhat)
    tr = rational.exact_trace(Xaff)
    Xaff = Xaff + rational.frac_eye(n) * ((c - tr) / n)
    lam = rational.min_eig_float(Xaff)
    noise = cone.noise_exact()
    if lam >= 0:
        eps = Fraction(0)
    else:
        need = (-lam) / (float(c) / n - lam)
        eps = Fraction(min(0.5, need * 2.0 + 1e-15)).limit_denominator(10**15)
    X_cert = None
    for _ in range(8):
        cand = Xaff * (1 - eps) + noise * eps if eps else Xaff
        if rational.is_psd_exact(cand):
            X_cert = cand
            break
        eps = max(eps * 8, Fraction(1, 10**14))
    if X_cert is None:
        raise ArithmeticError("primal PSD repair failed; solver iterate too infeasible")
    lower = rational.exact_inner(om_ex, X_cert)

    # dual: exact dominating witness
    Yhat = rational.round_to_fractions(sol.Y_omega, max_denominator)
    ytr = rational.exact_trace(Yhat) / n
    K = Yhat - rational.frac_eye(n) * ytr
    K = K - cone.project_exact(K)
    delta = Fraction(0)
    upper = None
    M0 = rational.frac_eye(n) * ytr + K - om_ex
    lam2 = rational.min_eig_float(M0)
    if lam2 < 0:
        delta = Fraction(min(1.0, -lam2 * 2.0 + 1e-15)).limit_denominator(10**15)
    for _ in range(8):
        cand = M0 + rational.frac_eye(n) * delta if delta else M0
        if rational.is_psd_exact(cand):
            upper = c * (ytr + delta)
            break
        delta = max(delta * 8, Fraction(1, 10**14))
    if upper is None:
        raise ArithmeticError("dual PSD repair failed; solver iterate too infeasible")

    # outward rounding keeps the bounds valid while taming denominators
    D = 10**12
    lower = Fraction(int(lower * D) - (1 if lower < 0 else 0), D) if lower.denominator > D else lower
    if upper.denominator > D:
        num = upper * D
        upper = Fraction(int(num) + (1 if num > int(num) else 0), D)
    met = bool(upper - lower <= Fraction(precision).limit_denominator(10**15)) and lower <= upper
    return CertifiedInterval(
        lower=lower,
        upper=upper,
        precision_met=met,
        requested_precision=precision,
        primal_certificate=X_cert,
        dual_shift=ytr + delta,
        mix_epsilon=eps,
    )


# ---------------------------------------------------------------------------
# End-to-end driver
# ---------------------------------------------------------------------------

@dataclass
class OptimizeReport:
    task: TaskSpec
    cone_kind: str
    fidelity: float
    visibility: float
    gap: float
    status: str
    iterations: int
    reduced_dim: int
    interval: CertifiedInterval | None
    analytic: dict | None
    solution: SdpSolution
    validation: superchannels.ValidationReport

    def to_dict(self) -> dict:
        out = {
            "task": self.task.f,
            "d": self.task.d,
            "k": self.task.k,
            "cone": self.cone_kind,
            "fidelity": self.fidelity,
            "visibility": self.visibility,
            "solver_gap": self.gap,
            "status": self.status,
            "iterations": self.iterations,
            "reduced_dim": self.reduced_dim,
            "validation_ok": self.validation.ok,
        }
        if self.interval is not None:
            out["certified"] = self.interval.to_dict()
        if self.analytic is not None:
            out["analytic"] = self.analytic
        return out


def optimize_task(
    task: TaskSpec,
    cone_kind: str,
    tol: float = 1e-9,
    precision: float = 1e-4,
    reduce: bool = True,
    run_certify: bool = True,
    opts: SolveOptions | None = None,
) -> OptimizeReport:
    """Full pipeline: build Omega, assemble, solve, certify, cross-check."""
    omega = perfop.omega_build(task)
    cone = superchannels.cone_for(cone_kind, task.d, task.k)
    problem = assemble(omega, cone, reduce=reduce)
    sol = solve(problem, opts or SolveOptions(tol=tol))
    interval = None
    if run_certify and task.k <= 2 and cone.side <= CERTIFY_SIDE_LIMIT:
        interval = certify(problem, sol, precision=precision)
    analytic = None
    known = formulas.known_exact(task.f, task.d, task.k)
    if known is not None and (task.k == 1 or cone_kind == "parallel"):
        val, exact = known
        analytic = {"value": val, "matches": bool(abs(val - sol.fidelity) < 1e-5)}
        if exact is not None:
            analytic["exact"] = {"num": str(exact.numerator), "den": str(exact.denominator)}
    report = OptimizeReport(
        task=task,
        cone_kind=cone_kind,
        fidelity=sol.fidelity,
        visibility=perfop.visibility_from_fidelity(min(max(sol.fidelity, 1 / task.d**2), 1.0), task.d),
        gap=sol.gap,
        status=sol.status,
        iterations=sol.iterations,
        reduced_dim=problem.reduced_dim,
        interval=interval,
        analytic=analytic,
        solution=sol,
        validation=superchannels.validate(sol.superchannel, cone, tol=1e-7),
    )
    return report
