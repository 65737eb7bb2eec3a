"""Labeled multilinear operator algebra.

Operators live on an ordered list of named tensor factors (``P``, ``I1..Ik``,
``O1..Ok``, ``F``, ``AUX1..``).  Everything here is pure: partial traces,
partial transposes, trace-and-replace, and the link product all return new
values in a fixed canonical label order, so two operators describing the same
object compare entrywise.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

ATOL = 1e-10

_NAME_RE = re.compile(r"^(P|F|I(\d+)|O(\d+)|AUX(\d+))$")

# canonical group ranks: P < I1..Ik < O1..Ok < F < AUX1..
_GROUP_RANK = {"P": 0, "I": 1, "O": 2, "F": 3, "AUX": 4}


def _sort_key(name: str) -> tuple[int, int]:
    m = _NAME_RE.match(name)
    if m is None:
        raise ValueError(f"invalid space label name {name!r}")
    if name in ("P", "F"):
        return (_GROUP_RANK[name], 0)
    prefix = "AUX" if name.startswith("AUX") else name[0]
    return (_GROUP_RANK[prefix], int(name[len(prefix):]))


@dataclass(frozen=True, order=False)
class SpaceLabel:
    """A named tensor factor with a fixed dimension."""

    name: str
    dim: int

    def __post_init__(self):
        _sort_key(self.name)
        if self.dim < 1:
            raise ValueError(f"dimension of {self.name} must be >= 1, got {self.dim}")


def space(name: str, dim: int) -> SpaceLabel:
    return SpaceLabel(name, dim)


def canonical_order(labels: Iterable[SpaceLabel]) -> tuple[SpaceLabel, ...]:
    return tuple(sorted(labels, key=lambda l: _sort_key(l.name)))


def _check_unique(labels: Sequence[SpaceLabel]):
    names = [l.name for l in labels]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate label names in {names}")


class LabeledOperator:
    """A square complex matrix over an ordered list of named factors.

    The constructor reorders factors into canonical label order, so instances
    with the same content are entrywise equal regardless of how they were
    assembled.
    """

    __slots__ = ("labels", "mat")

    def __init__(self, labels: Sequence[SpaceLabel], mat: np.ndarray):
        labels = tuple(labels)
        _check_unique(labels)
        mat = np.asarray(mat, dtype=np.complex128)
        side = int(np.prod([l.dim for l in labels])) if labels else 1
        if mat.shape != (side, side):
            raise ValueError(f"matrix shape {mat.shape} does not match labels {labels}")
        canon = canonical_order(labels)
        if canon != labels:
            perm = [labels.index(l) for l in canon]
            mat = _permute_factors(mat, [l.dim for l in labels], perm)
        mat = mat.copy()  # never freeze a caller-owned buffer
        mat.setflags(write=False)
        object.__setattr__(self, "labels", canon)
        object.__setattr__(self, "mat", mat)

    def __setattr__(self, *_):
        raise AttributeError("LabeledOperator is immutable")

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(l.dim for l in self.labels)

    @property
    def side(self) -> int:
        return self.mat.shape[0]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.labels)

    def label(self, name: str) -> SpaceLabel:
        for l in self.labels:
            if l.name == name:
                return l
        raise KeyError(f"no label named {name!r}")

    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    def relabeled(self, mapping: dict[str, str]) -> "LabeledOperator":
        """Rename factors (dims kept); result is re-canonicalized."""
        new = [SpaceLabel(mapping.get(l.name, l.name), l.dim) for l in self.labels]
        return LabeledOperator(new, self.mat)

    def conj(self) -> "LabeledOperator":
        return LabeledOperator(self.labels, self.mat.conj())

    def dagger(self) -> "LabeledOperator":
        return LabeledOperator(self.labels, self.mat.conj().T)

    def __add__(self, other: "LabeledOperator") -> "LabeledOperator":
        if self.labels != other.labels:
            raise ValueError("label mismatch in addition")
        return LabeledOperator(self.labels, self.mat + other.mat)

    def __sub__(self, other: "LabeledOperator") -> "LabeledOperator":
        if self.labels != other.labels:
            raise ValueError("label mismatch in subtraction")
        return LabeledOperator(self.labels, self.mat - other.mat)

    def __mul__(self, scalar) -> "LabeledOperator":
        return LabeledOperator(self.labels, self.mat * scalar)

    __rmul__ = __mul__

    def __repr__(self):
        spec = ",".join(f"{l.name}:{l.dim}" for l in self.labels)
        return f"LabeledOperator[{spec}]"


class LabeledVector:
    """A column vector over named factors (Choi vectors, probe states)."""

    __slots__ = ("labels", "vec")

    def __init__(self, labels: Sequence[SpaceLabel], vec: np.ndarray):
        labels = tuple(labels)
        _check_unique(labels)
        vec = np.asarray(vec, dtype=np.complex128).reshape(-1)
        side = int(np.prod([l.dim for l in labels])) if labels else 1
        if vec.shape != (side,):
            raise ValueError(f"vector length {vec.shape} does not match labels {labels}")
        canon = canonical_order(labels)
        if canon != labels:
            perm = [labels.index(l) for l in canon]
            vec = vec.reshape([l.dim for l in labels]).transpose(perm).reshape(-1)
        vec = vec.copy()
        vec.setflags(write=False)
        object.__setattr__(self, "labels", canon)
        object.__setattr__(self, "vec", vec)

    def __setattr__(self, *_):
        raise AttributeError("LabeledVector is immutable")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(l.name for l in self.labels)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vec))

    def outer(self) -> LabeledOperator:
        return LabeledOperator(self.labels, np.outer(self.vec, self.vec.conj()))


class UnitaryMatrix:
    """A special-unitary matrix: U†U = 1 (1e-12) and det U = 1 (1e-10)."""

    __slots__ = ("mat", "dim")

    def __init__(self, mat: np.ndarray):
        mat = np.asarray(mat, dtype=np.complex128)
        if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
            raise ValueError("unitary must be a square matrix")
        d = mat.shape[0]
        if np.max(np.abs(mat.conj().T @ mat - np.eye(d))) > 1e-12:
            raise ValueError("matrix is not unitary to 1e-12")
        if abs(np.linalg.det(mat) - 1.0) > 1e-10:
            raise ValueError("determinant is not 1 to 1e-10")
        mat = mat.copy()
        mat.setflags(write=False)
        object.__setattr__(self, "mat", mat)
        object.__setattr__(self, "dim", d)

    def __setattr__(self, *_):
        raise AttributeError("UnitaryMatrix is immutable")


def _as_matrix(U) -> np.ndarray:
    return U.mat if isinstance(U, UnitaryMatrix) else np.asarray(U, dtype=np.complex128)


def _permute_factors(mat: np.ndarray, dims: Sequence[int], perm: Sequence[int]) -> np.ndarray:
    n = len(dims)
    side = int(np.prod(dims)) if n else 1
    t = mat.reshape(list(dims) * 2)
    t = t.transpose(list(perm) + [n + p for p in perm])
    return np.ascontiguousarray(t.reshape(side, side))


def identity_operator(labels: Sequence[SpaceLabel]) -> LabeledOperator:
    side = int(np.prod([l.dim for l in labels])) if labels else 1
    return LabeledOperator(labels, np.eye(side, dtype=np.complex128))


# ---------------------------------------------------------------------------
# Choi construction
# ---------------------------------------------------------------------------

def choi_vector(U, in_label: str = "I1", out_label: str = "O1") -> LabeledVector:
    """Column vector sum_i |i>_in (U|i>)_out; entry (i*d_out + j) is U[j, i]."""
    M = _as_matrix(U)
    din, dout = M.shape[1], M.shape[0]
    vec = M.T.reshape(-1)  # index (i*dout + j) -> U[j, i]
    return LabeledVector([SpaceLabel(in_label, din), SpaceLabel(out_label, dout)], vec)


def choi_of_unitary(U, in_label: str = "I1", out_label: str = "O1") -> LabeledOperator:
    """Rank-1 Choi operator |U>><<U| of the channel rho -> U rho U†."""
    return choi_vector(U, in_label, out_label).outer()


def maximally_entangled_operator(label_a: SpaceLabel, label_b: SpaceLabel) -> LabeledOperator:
    """Unnormalized |1>><<1| across two factors of equal dimension."""
    if label_a.dim != label_b.dim:
        raise ValueError("dimensions must match")
    d = label_a.dim
    vec = np.eye(d, dtype=np.complex128).reshape(-1)
    return LabeledVector([label_a, label_b], vec).outer()


# ---------------------------------------------------------------------------
# Subsystem operations
# ---------------------------------------------------------------------------

def _positions(A: LabeledOperator, subset: Iterable[str]) -> list[int]:
    subset = list(subset)
    names = A.names
    for s in subset:
        if s not in names:
            raise KeyError(f"unknown label {s!r}; operator has {names}")
    return [i for i, n in enumerate(names) if n in subset]


def partial_trace(A: LabeledOperator, subset: Iterable[str]) -> LabeledOperator:
    """Trace out the named factors; remaining labels keep canonical order."""
    pos = _positions(A, subset)
    if not pos:
        return A
    keep = [i for i in range(len(A.labels)) if i not in pos]
    dims = A.dims
    n = len(dims)
    t = A.mat.reshape(list(dims) * 2)
    order = keep + pos + [n + i for i in keep] + [n + i for i in pos]
    t = t.transpose(order)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    dt = int(np.prod([dims[i] for i in pos]))
    t = t.reshape(dk, dt, dk, dt)
    out = np.einsum("ikjk->ij", t)
    return LabeledOperator([A.labels[i] for i in keep], out)


def partial_transpose(A: LabeledOperator, subset: Iterable[str]) -> LabeledOperator:
    """Transpose the named factors in place; an involution."""
    pos = _positions(A, subset)
    if not pos:
        return A
    dims = A.dims
    n = len(dims)
    t = A.mat.reshape(list(dims) * 2)
    order = list(range(2 * n))
    for i in pos:
        order[i], order[n + i] = n + i, i
    t = t.transpose(order)
    return LabeledOperator(A.labels, t.reshape(A.side, A.side))


def trace_and_replace(A: LabeledOperator, subset: Iterable[str]) -> LabeledOperator:
    """Replace the named factors by the normalized identity: tr_i(A) ⊗ 1_i/d_i."""
    pos = _positions(A, subset)
    if not pos:
        return A
    reduced = partial_trace(A, subset)
    d_subset = int(np.prod([A.dims[i] for i in pos]))
    out = embed(reduced, A.labels) * (1.0 / d_subset)
    return out


def embed(A: LabeledOperator, labels: Sequence[SpaceLabel]) -> LabeledOperator:
    """Tensor A with identities so it acts on the given label set."""
    extra = [l for l in labels if l.name not in A.names]
    for l in labels:
        if l.name in A.names and A.label(l.name).dim != l.dim:
            raise ValueError(f"dimension clash on {l.name}")
    if not extra:
        return LabeledOperator(labels, A.mat) if tuple(labels) != A.labels else A
    de = int(np.prod([l.dim for l in extra]))
    big = np.kron(A.mat, np.eye(de, dtype=np.complex128))
    return LabeledOperator(list(A.labels) + extra, big)


def tensor_product(A: LabeledOperator, B: LabeledOperator) -> LabeledOperator:
    if set(A.names) & set(B.names):
        raise ValueError("tensor product requires disjoint labels")
    return LabeledOperator(list(A.labels) + list(B.labels), np.kron(A.mat, B.mat))


def link_product(A: LabeledOperator, B: LabeledOperator) -> LabeledOperator:
    """Contract shared factors: tr_shared[(A^{T_shared} ⊗ 1)(1 ⊗ B)].

    Shared factors are identified by name; a dimension mismatch under the
    same name is an error.  With no overlap this is the tensor product.
    """
    shared = sorted(set(A.names) & set(B.names))
    for s in shared:
        if A.label(s).dim != B.label(s).dim:
            raise ValueError(f"dimension mismatch on shared label {s!r}")
    if not shared:
        return tensor_product(A, B)
    union = canonical_order(set(A.labels) | set(B.labels))
    At = embed(partial_transpose(A, shared), union)
    Bt = embed(B, union)
    prod = LabeledOperator(union, At.mat @ Bt.mat)
    return partial_trace(prod, shared)


def link_with_vector(A: LabeledOperator, v: LabeledVector) -> LabeledOperator:
    """Link A with the rank-1 operator |v><v|."""
    return link_product(A, v.outer())


def frobenius_inner(A: LabeledOperator, B: LabeledOperator) -> complex:
    if A.labels != B.labels:
        raise ValueError("label mismatch")
    return complex(np.vdot(A.mat, B.mat))


def operators_close(A: LabeledOperator, B: LabeledOperator, atol: float = ATOL) -> bool:
    return A.labels == B.labels and bool(np.max(np.abs(A.mat - B.mat)) <= atol)


# ---------------------------------------------------------------------------
# Serialization: {"labels": [{"name", "dim"}...], "re": [...], "im": [...]}
# ---------------------------------------------------------------------------

def operator_to_dict(A: LabeledOperator) -> dict:
    return {
        "labels": [{"name": l.name, "dim": l.dim} for l in A.labels],
        "re": A.mat.real.reshape(-1).tolist(),
        "im": A.mat.imag.reshape(-1).tolist(),
    }


def operator_from_dict(data: dict) -> LabeledOperator:
    labels = [SpaceLabel(l["name"], int(l["dim"])) for l in data["labels"]]
    side = int(np.prod([l.dim for l in labels])) if labels else 1
    re = np.asarray(data["re"], dtype=np.float64).reshape(side, side)
    im = np.asarray(data["im"], dtype=np.float64).reshape(side, side)
    return LabeledOperator(labels, re + 1j * im)


def save_operator(A: LabeledOperator, path: str):
    with open(path, "w") as fh:
        json.dump(operator_to_dict(A), fh)


def load_operator(path: str) -> LabeledOperator:
    with open(path) as fh:
        return operator_from_dict(json.load(fh))
