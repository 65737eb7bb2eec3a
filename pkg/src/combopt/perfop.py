"""Performance operators and fidelity evaluation.

The average fidelity of a superchannel S for the target map f over k uses is
tr(S Omega), where Omega is the Haar average of
(1/d^2) |f(U)>><<f(U)|_{PF} (x) |U*>><<U*|^{(x)k}_{IO}.  For the four named
targets Omega has a closed form as a sum over an orthogonal commutant basis
{P^i}: conjugated copies of P^i sit on one side, plain copies on the other,
each term divided by d_i = tr(P^i P^i†).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import groups
from .tensor import (
    LabeledOperator,
    SpaceLabel,
    UnitaryMatrix,
    choi_vector,
    link_product,
    tensor_product,
)

TASKS = ("conjugate", "transpose", "invert", "identity")

# targets whose composition rule is preserved; the rest reverse it
_HOMOMORPHIC = {"conjugate": True, "identity": True, "transpose": False, "invert": False}


@dataclass(frozen=True)
class TaskSpec:
    """A target map f, local dimension d, and number of uses k."""

    f: str
    d: int
    k: int

    def __post_init__(self):
        if self.f not in TASKS:
            raise ValueError(f"unknown task {self.f!r}; expected one of {TASKS}")
        if self.d < 2 or self.k < 1:
            raise ValueError("need d >= 2 and k >= 1")

    @property
    def homomorphic(self) -> bool:
        return _HOMOMORPHIC[self.f]


def apply_task(U, f: str) -> np.ndarray:
    M = U.mat if isinstance(U, UnitaryMatrix) else np.asarray(U, dtype=np.complex128)
    if f == "conjugate":
        return M.conj()
    if f == "transpose":
        return M.T.copy()
    if f == "invert":
        return M.conj().T.copy()
    if f == "identity":
        return M.copy()
    raise ValueError(f"unknown task {f!r}")


def superchannel_labels(d: int, k: int) -> list[SpaceLabel]:
    labels = [SpaceLabel("P", d)]
    labels += [SpaceLabel(f"I{i+1}", d) for i in range(k)]
    labels += [SpaceLabel(f"O{i+1}", d) for i in range(k)]
    labels.append(SpaceLabel("F", d))
    return labels


@dataclass(frozen=True)
class PerformanceOperator:
    """Omega over (P, I1..Ik, O1..Ok, F) with tr(S Omega) the average fidelity."""

    omega: LabeledOperator
    task: TaskSpec
    stderr: float | None = None

    @property
    def mat(self) -> np.ndarray:
        return self.omega.mat


# ---------------------------------------------------------------------------
# Closed-form construction
# ---------------------------------------------------------------------------

def _basis_pairs(basis: groups.CommutantBasis):
    for P, di in zip(basis.arrays(), basis.norms):
        yield P, di


def _place_sum(pairs, d: int, k: int, first: list[str], second: list[str]) -> LabeledOperator:
    """(1/d^2) sum_i conj(P^i) on `first` (x) P^i on `second`, each / d_i.

    `first` and `second` name the factors receiving copies of each basis
    element, in the element's own factor order (k use-factors then the
    target factor).
    """
    terms = None
    for P, di in pairs:
        op1 = LabeledOperator([SpaceLabel(nm, d) for nm in first], np.conj(P))
        op2 = LabeledOperator([SpaceLabel(nm, d) for nm in second], P)
        term = tensor_product(op1, op2) * (1.0 / di)
        terms = term if terms is None else terms + term
    if terms is None:
        raise ValueError("empty basis")
    return terms * (1.0 / d**2)


def _side_names(task: TaskSpec) -> tuple[list[str], list[str]]:
    i_names = [f"I{j+1}" for j in range(task.k)]
    o_names = [f"O{j+1}" for j in range(task.k)]
    if task.homomorphic:
        return i_names + ["P"], o_names + ["F"]
    return o_names + ["P"], i_names + ["F"]


def _finalize(raw: LabeledOperator, task: TaskSpec, stderr=None) -> PerformanceOperator:
    sym = (raw.mat + raw.mat.conj()) / 2.0
    resid = float(np.max(np.abs(raw.mat.imag)))
    if stderr is None and resid > 1e-12:
        raise AssertionError(f"performance operator not real: residual {resid}")
    omega = LabeledOperator(raw.labels, sym)
    return PerformanceOperator(omega, task, stderr)


def omega_homomorphic(basis: groups.CommutantBasis, task: TaskSpec) -> PerformanceOperator:
    """Omega for composition-preserving targets: conjugated copies on (I,P)."""
    if not task.homomorphic:
        raise ValueError("task is not homomorphic")
    first, second = _side_names(task)
    raw = _place_sum(_basis_pairs(basis), task.d, task.k, first, second)
    return _finalize(raw, task)


def omega_antihomomorphic(basis: groups.CommutantBasis, task: TaskSpec) -> PerformanceOperator:
    """Omega for composition-reversing targets: conjugated copies on (O,P)."""
    if task.homomorphic:
        raise ValueError("task is not anti-homomorphic")
    first, second = _side_names(task)
    raw = _place_sum(_basis_pairs(basis), task.d, task.k, first, second)
    return _finalize(raw, task)


def _closed_form_generators(task: TaskSpec) -> list[np.ndarray] | None:
    """Exact real generators when available (k <= 2); scale-free."""
    d, k = task.d, task.k
    if task.f in ("conjugate", "invert"):
        if k == 1:
            return groups.symmetric_antisymmetric_generators(d)
        if k == 2:
            return groups.three_factor_collective_generators(d)
    else:  # transpose, identity: commutant of U*^{(x)k} (x) U
        if k == 1:
            return groups.entangled_pair_generators(d)
        if k == 2:
            return groups.three_factor_conjugate_generators(d)
    return None


def omega_build(task: TaskSpec, max_k: int = 3) -> PerformanceOperator:
    """Dispatch to the right commutant and placement for the task.

    conjugate / invert use the collective commutant on k+1 factors;
    transpose / identity use the conjugate-collective commutant.  Placement
    is homomorphic for conjugate and identity, anti-homomorphic otherwise.
    """
    if task.k > max_k:
        raise ValueError(f"k = {task.k} exceeds the configured maximum {max_k}")
    gens = _closed_form_generators(task)
    first, second = _side_names(task)
    if gens is not None:
        pairs = []
        for A in gens:
            Af = np.array([[float(x) for x in row] for row in A], dtype=np.complex128)
            di = float(np.vdot(Af, Af).real)
            pairs.append((Af, di))
        raw = _place_sum(pairs, task.d, task.k, first, second)
        return _finalize(raw, task)
    if task.f in ("conjugate", "invert"):
        basis = groups.collective_commutant(task.d, task.k + 1)
    else:
        basis = groups.conjugate_collective_commutant(task.d, task.k)
    raw = _place_sum(_basis_pairs(basis), task.d, task.k, first, second)
    return _finalize(raw, task)


def omega_exact(task: TaskSpec) -> tuple[list[SpaceLabel], np.ndarray]:
    """Exact rational Omega (k <= 2) as an object array of Fractions.

    Every generator is real up to a global phase that cancels in the
    quadratic combination, so the result is an exact real symmetric matrix.
    """
    gens = _closed_form_generators(task)
    if gens is None:
        raise ValueError(f"no exact closed form for k = {task.k}")
    d, k = task.d, task.k
    first, second = _side_names(task)
    from . import rational

    labels = superchannel_labels(d, k)
    total = None
    for A in gens:
        nrm = Fraction(sum((A * A).reshape(-1)))  # tr(A A^T), generators are real
        term = rational.exact_kron(A, A) * (Fraction(1, d * d) / nrm)
        # kron factor order: first-side factors then second-side factors
        names = first + second
        term = rational.permute_exact(term, [d] * len(names), names, [l.name for l in labels])
        total = term if total is None else total + term
    return labels, total


# ---------------------------------------------------------------------------
# Monte-Carlo oracle
# ---------------------------------------------------------------------------

def omega_monte_carlo(
    task: TaskSpec, n_samples: int, seed: int = 0, f_map=None
) -> PerformanceOperator:
    """Empirical Haar mean of (1/d^2)|f(U)>><<f(U)| (x) |U*>><<U*|^{(x)k}.

    Independent of the closed forms; attaches a Frobenius-aggregate
    standard-error estimate.  ``f_map`` overrides the named target with an
    arbitrary unitary-to-unitary callback (no closed form exists for it).
    """
    if n_samples < 1:
        raise ValueError("need at least one sample")
    d, k = task.d, task.k
    rng = np.random.default_rng(seed)
    dim = d ** (2 * (k + 1))
    Phi = np.empty((n_samples, dim), dtype=np.complex128)
    for s in range(n_samples):
        U = groups.haar_unitary(d, rng).mat
        fU = f_map(U) if f_map is not None else apply_task(U, task.f)
        vec = fU.T.reshape(-1)  # Choi vector over (P, F)
        uc = U.conj().T.reshape(-1)  # Choi vector of U* over (I_j, O_j)
        for _ in range(k):
            vec = np.kron(vec, uc)
        Phi[s] = vec
    scale = 1.0 / d**2
    M = (Phi.T @ Phi.conj()) * (scale / n_samples)
    absq = np.abs(Phi) ** 2
    second = (absq.T @ absq) * (scale**2 / n_samples)
    var = np.maximum(second - np.abs(M) ** 2, 0.0)
    if n_samples > 1:
        var *= n_samples / (n_samples - 1)
    stderr = float(np.sqrt(var.sum() / n_samples))
    labels = [SpaceLabel("P", d), SpaceLabel("F", d)]
    for j in range(k):
        labels += [SpaceLabel(f"I{j+1}", d), SpaceLabel(f"O{j+1}", d)]
    sym = (M + M.conj().T) / 2.0
    omega = LabeledOperator(labels, sym)
    return PerformanceOperator(omega, task, stderr=stderr)


# ---------------------------------------------------------------------------
# Fidelities
# ---------------------------------------------------------------------------

def average_fidelity(S: LabeledOperator, perf: PerformanceOperator) -> float:
    """tr(S Omega); real scalar, in [0, 1] for valid superchannels."""
    if S.labels != perf.omega.labels:
        raise ValueError(f"label mismatch: {S.names} vs {perf.omega.names}")
    val = complex(np.trace(S.mat @ perf.omega.mat))
    if abs(val.imag) > 1e-8:
        raise ValueError(f"fidelity has imaginary part {val.imag}")
    return float(val.real)


def fidelity_at_unitary(S: LabeledOperator, U, task: TaskSpec) -> float:
    """Channel fidelity of S acting on k copies of a specific U."""
    M = U.mat if isinstance(U, UnitaryMatrix) else np.asarray(U, dtype=np.complex128)
    chois = None
    for j in range(task.k):
        c = choi_vector(M, f"I{j+1}", f"O{j+1}").outer()
        chois = c if chois is None else tensor_product(chois, c)
    out = link_product(S, chois)  # channel Choi on (P, F)
    fvec = choi_vector(apply_task(M, task.f), "P", "F").vec
    val = np.vdot(fvec, out.mat @ fvec).real / task.d**2
    return float(val)


def visibility_from_fidelity(fbar: float, d: int) -> float:
    """Weight of the target channel in a white-noise mixture with that fidelity."""
    lo = 1.0 / d**2
    if fbar < lo - 1e-9 or fbar > 1.0 + 1e-9:
        raise ValueError(f"average fidelity {fbar} outside [{lo}, 1]")
    return (fbar - lo) / (1.0 - lo)


def fidelity_from_visibility(eta: float, d: int) -> float:
    return eta + (1.0 - eta) / d**2
