"""Superchannel cones, validators, and constructive assemblies.

A k-slot superchannel is a PSD operator on (P, I1..Ik, O1..Ok, F) subject to
trace-and-replace identities that depend on how the k slots are wired:
parallel, sequential, or general (no definite slot order, k = 2 only).  Each
identity _x S = sum_r c_r _y_r S induces the map T = id - _x + sum c_r _y_r,
and for these cones the T's are commuting orthogonal projectors, so their
composition projects onto the affine hull of the cone (up to the trace
normalization).  That projector is also evaluated in exact arithmetic by the
certification pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from . import groups, perfop, rational
from .tensor import (
    LabeledOperator,
    LabeledVector,
    SpaceLabel,
    embed,
    identity_operator,
    link_product,
    maximally_entangled_operator,
    partial_trace,
    partial_transpose,
    tensor_product,
)

CONE_KINDS = ("parallel", "sequential", "general")


# ---------------------------------------------------------------------------
# Dense trace-and-replace on raw arrays (solver-facing hot path)
# ---------------------------------------------------------------------------

def _tr_replace_nd(mat: np.ndarray, dims: Sequence[int], positions: Sequence[int]) -> np.ndarray:
    if not positions:
        return mat
    n = len(dims)
    keep = [i for i in range(n) if i not in positions]
    t = mat.reshape(list(dims) * 2)
    order = keep + list(positions) + [n + i for i in keep] + [n + i for i in positions]
    t = np.ascontiguousarray(t.transpose(order))
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dx = int(np.prod([dims[i] for i in positions]))
    red = np.einsum("ikjk->ij", t.reshape(dk, dx, dk, dx))
    big = np.kron(red, np.eye(dx, dtype=mat.dtype) / dx)
    # factor order now keep + positions; restore the original order
    dims_now = [dims[i] for i in keep] + [dims[i] for i in positions]
    back = np.argsort(keep + list(positions))
    t2 = big.reshape(list(dims_now) * 2)
    t2 = t2.transpose(list(back) + [n + b for b in back])
    side = mat.shape[0]
    return t2.reshape(side, side)


@dataclass(frozen=True)
class Condition:
    """One affine identity: _lhs S = sum_r coeff_r _rhs_r S."""

    name: str
    lhs: frozenset[str]
    rhs: tuple[tuple[int, frozenset[str]], ...]


@dataclass(frozen=True)
class SuperchannelCone:
    """A named class of superchannels as affine identities plus PSD."""

    kind: str
    d: int
    k: int
    labels: tuple[SpaceLabel, ...]
    conditions: tuple[Condition, ...]
    trace_value: int

    @property
    def side(self) -> int:
        return int(np.prod([l.dim for l in self.labels]))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.labels)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(l.dim for l in self.labels)

    def _positions(self, subset: Iterable[str]) -> list[int]:
        names = self.names
        return [i for i, nm in enumerate(names) if nm in subset]

    # -- dense maps ---------------------------------------------------------

    def condition_residual(self, mat: np.ndarray, cond: Condition) -> float:
        lhs = _tr_replace_nd(mat, self.dims, self._positions(cond.lhs))
        rhs = np.zeros_like(mat)
        for coeff, subset in cond.rhs:
            rhs = rhs + coeff * _tr_replace_nd(mat, self.dims, self._positions(subset))
        return float(np.max(np.abs(lhs - rhs)))

    def project(self, mat: np.ndarray) -> np.ndarray:
        """Orthogonal projection onto the linear span of the identities."""
        out = mat
        for cond in self.conditions:
            stage = out - _tr_replace_nd(out, self.dims, self._positions(cond.lhs))
            for coeff, subset in cond.rhs:
                stage = stage + coeff * _tr_replace_nd(out, self.dims, self._positions(subset))
            out = stage
        return out

    def project_exact(self, mat: np.ndarray) -> np.ndarray:
        dims = list(self.dims)
        out = mat
        for cond in self.conditions:
            stage = out - rational.trace_and_replace_exact(out, dims, self._positions(cond.lhs))
            for coeff, subset in cond.rhs:
                stage = stage + coeff * rational.trace_and_replace_exact(out, dims, self._positions(subset))
            out = stage
        return out

    # -- members ------------------------------------------------------------

    def noise_superchannel(self) -> LabeledOperator:
        """Strictly positive interior member: normalized identity."""
        return identity_operator(self.labels) * (self.trace_value / self.side)

    def noise_exact(self) -> np.ndarray:
        eye = rational.frac_eye(self.side)
        return eye * Fraction(self.trace_value, self.side)


def _i_names(k: int) -> list[str]:
    return [f"I{j + 1}" for j in range(k)]


def _o_names(k: int) -> list[str]:
    return [f"O{j + 1}" for j in range(k)]


def cone_parallel(d: int, k: int) -> SuperchannelCone:
    """All k slots wired side by side between one encoder and one decoder."""
    labels = tuple(perfop.superchannel_labels(d, k))
    i_set, o_set = set(_i_names(k)), set(_o_names(k))
    all_io_f = frozenset(i_set | o_set | {"F"})
    conditions = (
        Condition("future", frozenset({"F"}), ((1, frozenset(o_set | {"F"})),)),
        Condition("past", all_io_f, ((1, frozenset(all_io_f | {"P"})),)),
    )
    return SuperchannelCone("parallel", d, k, labels, conditions, d ** (k + 1))


def cone_sequential(d: int, k: int) -> SuperchannelCone:
    """Slots applied in the fixed order 1..k with memory in between."""
    labels = tuple(perfop.superchannel_labels(d, k))
    conditions = []
    acc: set[str] = {"F"}
    for j in range(k, 0, -1):
        grown = acc | {f"O{j}"}
        conditions.append(Condition(f"slot{j}", frozenset(acc), ((1, frozenset(grown)),)))
        acc = grown | {f"I{j}"}
    conditions.append(Condition("past", frozenset(acc), ((1, frozenset(acc | {"P"})),)))
    return SuperchannelCone("sequential", d, k, labels, tuple(conditions), d ** (k + 1))


def cone_general_k2(d: int) -> SuperchannelCone:
    """Both slot orders and their indefinite-order combinations, k = 2.

    The identities are the two one-sided marginal conditions, the inclusion-
    exclusion condition on the future marginal, and the past-marginal
    normalization; both sequential slot orders satisfy all of them.
    """
    labels = tuple(perfop.superchannel_labels(d, 2))
    f = frozenset
    conditions = (
        Condition("slot1_marginal", f({"I1", "O1", "F"}), ((1, f({"I1", "O1", "O2", "F"})),)),
        Condition("slot2_marginal", f({"I2", "O2", "F"}), ((1, f({"O1", "I2", "O2", "F"})),)),
        Condition(
            "future",
            f({"F"}),
            ((1, f({"O1", "F"})), (1, f({"O2", "F"})), (-1, f({"O1", "O2", "F"}))),
        ),
        Condition("past", f({"I1", "O1", "I2", "O2", "F"}), ((1, f({"P", "I1", "O1", "I2", "O2", "F"})),)),
    )
    return SuperchannelCone("general", d, 2, labels, conditions, d**3)


def cone_for(kind: str, d: int, k: int) -> SuperchannelCone:
    """Cone dispatch; the three classes coincide at k = 1."""
    if kind not in CONE_KINDS:
        raise ValueError(f"unknown cone kind {kind!r}")
    if kind == "parallel":
        return cone_parallel(d, k)
    if kind == "sequential":
        return cone_sequential(d, k)
    if k == 1:
        return cone_sequential(d, 1)
    if k == 2:
        return cone_general_k2(d)
    raise ValueError("general cone is only characterized for k <= 2")


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    cone_kind: str
    residuals: dict
    trace_deviation: float
    hermiticity: float
    min_eigenvalue: float
    tolerance: float

    @property
    def max_affine_residual(self) -> float:
        return max(self.residuals.values()) if self.residuals else 0.0

    @property
    def ok(self) -> bool:
        return (
            self.max_affine_residual <= self.tolerance
            and self.trace_deviation <= self.tolerance
            and self.hermiticity <= self.tolerance
            and self.min_eigenvalue >= -self.tolerance
        )

    def worst(self) -> str:
        items = dict(self.residuals)
        items["trace"] = self.trace_deviation
        items["hermiticity"] = self.hermiticity
        items["negativity"] = max(0.0, -self.min_eigenvalue)
        return max(items, key=items.get)

    def to_dict(self) -> dict:
        return {
            "cone": self.cone_kind,
            "ok": self.ok,
            "residuals": self.residuals,
            "trace_deviation": self.trace_deviation,
            "hermiticity": self.hermiticity,
            "min_eigenvalue": self.min_eigenvalue,
            "tolerance": self.tolerance,
            "worst": self.worst(),
        }


def validate(S: LabeledOperator, cone: SuperchannelCone, tol: float = 1e-8) -> ValidationReport:
    """Affine residuals, trace deviation, and the minimum eigenvalue of S."""
    if S.labels != cone.labels:
        raise ValueError(f"label mismatch: {S.names} vs {cone.names}")
    mat = S.mat
    residuals = {c.name: cone.condition_residual(mat, c) for c in cone.conditions}
    herm = float(np.max(np.abs(mat - mat.conj().T)))
    tr_dev = float(abs(np.trace(mat).real - cone.trace_value) + abs(np.trace(mat).imag))
    mineig = float(np.linalg.eigvalsh((mat + mat.conj().T) / 2.0).min())
    return ValidationReport(cone.kind, residuals, tr_dev, herm, mineig, tol)


@dataclass(frozen=True)
class Superinstrument:
    """PSD branches whose sum is a superchannel of the declared class."""

    branches: tuple[LabeledOperator, ...]
    cone: SuperchannelCone

    def total(self) -> LabeledOperator:
        out = self.branches[0]
        for b in self.branches[1:]:
            out = out + b
        return out

    def validate(self, tol: float = 1e-8) -> ValidationReport:
        for b in self.branches:
            lam = float(np.linalg.eigvalsh((b.mat + b.mat.conj().T) / 2.0).min())
            if lam < -tol:
                raise ValueError(f"branch has negative eigenvalue {lam}")
        return validate(self.total(), self.cone, tol)


# ---------------------------------------------------------------------------
# Constructive members
# ---------------------------------------------------------------------------

def random_channel_choi(
    in_labels: Sequence[SpaceLabel],
    out_labels: Sequence[SpaceLabel],
    rng,
    env_dim: int = 2,
) -> LabeledOperator:
    """Choi of a Haar-random isometry channel between multi-factor spaces."""
    din = int(np.prod([l.dim for l in in_labels]))
    dout = int(np.prod([l.dim for l in out_labels]))
    env_dim = max(env_dim, -(-din // dout))  # isometry needs dout*env >= din
    g = rng.standard_normal((dout * env_dim, din)) + 1j * rng.standard_normal((dout * env_dim, din))
    v, _ = np.linalg.qr(g)
    env = SpaceLabel("AUX990", env_dim)
    vec = v.T.reshape(-1)
    full = LabeledVector(list(in_labels) + list(out_labels) + [env], vec).outer()
    return partial_trace(full, [env.name])


def random_parallel_superchannel(d: int, k: int, rng, aux_dim: int = 2) -> LabeledOperator:
    """Encoder P -> (I, aux) linked with decoder (O, aux) -> F."""
    aux = SpaceLabel("AUX900", aux_dim)
    i_labels = [SpaceLabel(nm, d) for nm in _i_names(k)]
    o_labels = [SpaceLabel(nm, d) for nm in _o_names(k)]
    E = random_channel_choi([SpaceLabel("P", d)], i_labels + [aux], rng)
    D = random_channel_choi(o_labels + [aux], [SpaceLabel("F", d)], rng)
    return link_product(E, D)


def random_sequential_superchannel(d: int, k: int, rng, aux_dim: int = 2) -> LabeledOperator:
    """Chain of encoders with memory: E1 * E2 * ... * D."""
    mem = [SpaceLabel(f"AUX{900 + j}", aux_dim) for j in range(k + 1)]
    S = random_channel_choi([SpaceLabel("P", d)], [SpaceLabel("I1", d), mem[0]], rng)
    for j in range(2, k + 1):
        Ej = random_channel_choi(
            [SpaceLabel(f"O{j-1}", d), mem[j - 2]],
            [SpaceLabel(f"I{j}", d), mem[j - 1]],
            rng,
        )
        S = link_product(S, Ej)
    D = random_channel_choi([SpaceLabel(f"O{k}", d), mem[k - 1]], [SpaceLabel("F", d)], rng)
    return link_product(S, D)


def random_cone_member(cone: SuperchannelCone, rng, aux_dim: int = 2) -> LabeledOperator:
    if cone.kind == "parallel":
        return random_parallel_superchannel(cone.d, cone.k, rng, aux_dim)
    if cone.kind == "sequential" or cone.k == 1:
        return random_sequential_superchannel(cone.d, cone.k, rng, aux_dim)
    # general, k = 2: convex mixture of the two slot orders
    a = random_sequential_superchannel(cone.d, cone.k, rng, aux_dim)
    b = _swap_slots(random_sequential_superchannel(cone.d, cone.k, rng, aux_dim))
    w = rng.uniform(0.2, 0.8)
    return a * w + b * (1.0 - w)


def _swap_slots(S: LabeledOperator) -> LabeledOperator:
    """Exchange slot 1 and slot 2 labels (k = 2)."""
    return S.relabeled({"I1": "I2", "I2": "I1", "O1": "O2", "O2": "O1"})


def apply_to_channels(S: LabeledOperator, chois: Sequence[LabeledOperator]) -> LabeledOperator:
    """Plug channel Chois into the slots; the result is a Choi on (P, F)."""
    plug = None
    for c in chois:
        plug = c if plug is None else tensor_product(plug, c)
    return link_product(S, plug)


def assemble_measure_and_prepare(
    rho: LabeledOperator,
    povm: Sequence[LabeledOperator],
    recoveries: Sequence[LabeledOperator],
    tol: float = 1e-8,
) -> LabeledOperator:
    """S = sum_i rho * M_i^T * R_i; probe, measure, prepare per outcome.

    rho is a state on (I, aux); the POVM acts on (O, aux); each recovery is
    a channel Choi on (P, F).  The assembled S is validated against the
    parallel cone before being returned.
    """
    if len(povm) != len(recoveries):
        raise ValueError("need one recovery channel per POVM element")
    tr = rho.trace()
    if abs(tr - 1.0) > tol:
        raise ValueError(f"probe state trace {tr}, expected 1")
    if float(np.linalg.eigvalsh((rho.mat + rho.mat.conj().T) / 2).min()) < -tol:
        raise ValueError("probe state is not positive semidefinite")
    total = None
    for M in povm:
        total = M if total is None else total + M
    if float(np.max(np.abs(total.mat - np.eye(total.side)))) > tol:
        raise ValueError("POVM does not sum to the identity")
    dP = recoveries[0].label("P").dim
    for R in recoveries:
        if float(np.linalg.eigvalsh((R.mat + R.mat.conj().T) / 2).min()) < -tol:
            raise ValueError("recovery is not positive semidefinite")
        mar = partial_trace(R, ["F"])
        if float(np.max(np.abs(mar.mat - np.eye(dP)))) > tol:
            raise ValueError("recovery is not trace preserving")
    S = None
    for M, R in zip(povm, recoveries):
        Mt = partial_transpose(M, M.names)  # full transpose
        term = link_product(link_product(rho, Mt), R)
        S = term if S is None else S + term
    k = sum(1 for nm in S.names if nm.startswith("I"))
    d = S.label("P").dim
    report = validate(S, cone_parallel(d, k), tol)
    if not report.ok:
        raise ValueError(f"assembled operator violates the parallel cone: {report.to_dict()}")
    return S


def delayed_input_form(
    S: LabeledOperator, tol: float = 1e-8
) -> tuple[LabeledVector, LabeledOperator]:
    """Split a parallel S into a probe state and a recovery channel.

    Requires tr_OF(S) = 1_P/d_P (x) tr_POF(S); then S = |phi><phi| * R with
    phi built from the square root of the reduced input state and R from its
    pseudoinverse.  Reconstruction is exact on the support of the reduced
    state.
    """
    i_names = [nm for nm in S.names if nm.startswith("I")]
    o_names = [nm for nm in S.names if nm.startswith("O")]
    k = len(i_names)
    d = S.label("P").dim
    red = partial_trace(S, o_names + ["F"])
    sym_target = tensor_product(
        identity_operator([SpaceLabel("P", d)]) * (1.0 / d),
        partial_trace(red, ["P"]),
    )
    if float(np.max(np.abs(red.mat - sym_target.mat))) > tol:
        raise ValueError("input marginal is not maximally mixed on P; cannot delay the input")
    rho = partial_trace(S, ["P"] + o_names + ["F"]) * (1.0 / S.trace().real)
    w, V = np.linalg.eigh((rho.mat + rho.mat.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    sq = (V * np.sqrt(w)) @ V.conj().T
    inv = (V * _pinv_sqrt(w)) @ V.conj().T
    aux = [SpaceLabel(f"AUX{j + 1}", d) for j in range(k)]
    i_labels = [S.label(nm) for nm in i_names]
    phi = LabeledVector(i_labels + aux, sq.reshape(-1))
    Srel = S.relabeled({nm: f"AUX{idx + 1}" for idx, nm in enumerate(i_names)})
    inv_op = embed(LabeledOperator(aux, inv), Srel.labels)
    R = LabeledOperator(Srel.labels, inv_op.mat @ Srel.mat @ inv_op.mat)
    return phi, R


def _pinv_sqrt(w: np.ndarray) -> np.ndarray:
    out = np.zeros_like(w)
    cutoff = max(w.max(), 1.0) * 1e-12
    nz = w > cutoff
    out[nz] = 1.0 / np.sqrt(w[nz])
    return out


# ---------------------------------------------------------------------------
# Twirling and parallelization
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _twirl_frame(f: str, d: int, k: int) -> np.ndarray:
    """Columns: orthonormal products of commutant elements, placed like Omega."""
    task = perfop.TaskSpec(f, d, k)
    gens = perfop._closed_form_generators(task)
    if gens is not None:
        mats = [np.array([[complex(x) for x in row] for row in A]) for A in gens]
    else:
        if task.f in ("conjugate", "invert"):
            mats = groups.collective_commutant(d, k + 1).arrays()
        else:
            mats = groups.conjugate_collective_commutant(d, k).arrays()
    mats = [m / np.linalg.norm(m) for m in mats]
    first, second = perfop._side_names(task)
    labels = perfop.superchannel_labels(d, k)
    side = int(np.prod([l.dim for l in labels]))
    cols = []
    for A in mats:
        opA = LabeledOperator([SpaceLabel(nm, d) for nm in first], A)
        for B in mats:
            opB = LabeledOperator([SpaceLabel(nm, d) for nm in second], B)
            cols.append(tensor_product(opA, opB).mat.reshape(-1))
    return np.array(cols).T  # side^2 x q^2


def twirl(S: LabeledOperator, task: perfop.TaskSpec) -> LabeledOperator:
    """Group-average S over the task's covariance group.

    Implemented as the orthogonal projection onto the span of products of
    commutant basis elements, which leaves tr(S Omega) unchanged and maps
    every cone class into itself.
    """
    W = _twirl_frame(task.f, task.d, task.k)
    v = S.mat.reshape(-1)
    proj = W @ (W.conj().T @ v)
    return LabeledOperator(S.labels, proj.reshape(S.side, S.side))


def parallelize_covariant(
    S: LabeledOperator, k: int, tol: float = 1e-8, n_check: int = 8, seed: int = 5
) -> LabeledOperator:
    """Rebuild a covariant superchannel as a parallel one with equal action.

    Requires H = tr_F(S) to commute with 1 (x) 1 (x) U^{(x)k} on the slot
    outputs; the encoder uses sqrt(H) and the decoder its pseudoinverse, so
    the rebuilt member acts identically on every k-tuple of identical
    unitary channels.
    """
    d = S.label("P").dim
    i_names = _i_names(k)
    o_names = _o_names(k)
    H = partial_trace(S, ["F"])
    rng = np.random.default_rng(seed)
    for _ in range(n_check):
        U = groups.haar_unitary(d, rng).mat
        g = np.array([[1.0 + 0j]])
        for _ in range(k):
            g = np.kron(g, U)
        G = embed(
            LabeledOperator([S.label(nm) for nm in o_names], g), H.labels
        )
        if float(np.max(np.abs(H.mat @ G.mat - G.mat @ H.mat))) > tol:
            raise ValueError("tr_F(S) does not commute with the collective slot action")
    w, V = np.linalg.eigh((H.mat + H.mat.conj().T) / 2.0)
    w = np.clip(w, 0.0, None)
    sqH = (V * np.sqrt(w)) @ V.conj().T
    sqHinv = (V * _pinv_sqrt(w)) @ V.conj().T

    # encoder: sqrt(H) with (P, I, O) -> (AUX1, AUX', I), sandwiching entangled pairs
    enc_names = {"P": "AUX1"}
    for j, nm in enumerate(i_names):
        enc_names[nm] = f"AUX{2 + j}"
    for j, nm in enumerate(o_names):
        enc_names[nm] = i_names[j]
    sqH_enc = LabeledOperator(H.labels, sqH).relabeled(enc_names)
    pairs = maximally_entangled_operator(SpaceLabel("AUX1", d), SpaceLabel("P", d))
    for j, nm in enumerate(i_names):
        pairs = tensor_product(
            pairs, maximally_entangled_operator(SpaceLabel(f"AUX{2 + j}", d), S.label(nm))
        )
    full = list(pairs.labels)
    sqh = embed(sqH_enc, full)
    E = LabeledOperator(full, sqh.mat @ pairs.mat @ sqh.mat)

    # decoder: (sqrt(H)^{-1})^T on (AUX1, AUX', O) around S with (P, I) primed
    dec_names = {"P": "AUX1"}
    for j, nm in enumerate(i_names):
        dec_names[nm] = f"AUX{2 + j}"
    sqHinv_dec = LabeledOperator(H.labels, sqHinv.T).relabeled(dec_names)
    Srel = S.relabeled(dec_names)
    inv_full = embed(sqHinv_dec, Srel.labels)
    D = LabeledOperator(Srel.labels, inv_full.mat @ Srel.mat @ inv_full.mat)

    out = link_product(E, D)
    return out


def probabilistic_lower_bound(p_success: float) -> float:
    """A success probability is itself a valid average-fidelity lower bound."""
    if not 0.0 <= p_success <= 1.0:
        raise ValueError("success probability must lie in [0, 1]")
    return p_success
