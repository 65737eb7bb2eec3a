"""Permutation operators, commutant bases, and Haar sampling.

The operator bases here span the commutants of the collective action
U -> U^{(x)n} and the conjugate-collective action U -> U*^{(x)k} (x) U.
Both are obtained from permutation operators (with partial transposes on
the conjugated factors) followed by Gram-Schmidt; for small factor counts
closed-form orthogonal elements are available in exact arithmetic.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .tensor import (
    LabeledOperator,
    SpaceLabel,
    UnitaryMatrix,
    LabeledVector,
    partial_trace,
    partial_transpose,
)

# permutations are one-line images, 0-based: img[a] = pi(a+1) - 1
Permutation = tuple[int, ...]

MAX_COMMUTANT_BYTES = 512 * 1024 * 1024


def all_permutations(n: int) -> list[Permutation]:
    """All n! permutations in lexicographic order (deterministic basis input)."""
    return [tuple(p) for p in itertools.permutations(range(n))]


def compose(p: Permutation, q: Permutation) -> Permutation:
    """(p o q)(x) = p(q(x))."""
    return tuple(p[q[i]] for i in range(len(p)))


def invert(p: Permutation) -> Permutation:
    inv = [0] * len(p)
    for a, b in enumerate(p):
        inv[b] = a
    return tuple(inv)


def aux_labels(n: int, d: int) -> list[SpaceLabel]:
    return [SpaceLabel(f"AUX{i + 1}", d) for i in range(n)]


def permutation_matrix(perm: Permutation, d: int) -> np.ndarray:
    """V_pi sending |i_1..i_n> to |i_{pi^{-1}(1)}..i_{pi^{-1}(n)}>."""
    n = len(perm)
    inv = invert(perm)
    side = d**n
    grid = np.indices([d] * n).reshape(n, side)  # column multi-indices
    weights = d ** np.arange(n - 1, -1, -1)
    cols = weights @ grid
    rows = weights @ grid[list(inv), :]
    V = np.zeros((side, side), dtype=np.complex128)
    V[rows, cols] = 1.0
    return V


def permutation_operator(perm: Permutation, d: int, labels: Sequence[SpaceLabel] | None = None) -> LabeledOperator:
    if labels is None:
        labels = aux_labels(len(perm), d)
    return LabeledOperator(labels, permutation_matrix(perm, d))


def flip_operator(d: int) -> np.ndarray:
    """F = sum_ij |ij><ji|."""
    return permutation_matrix((1, 0), d)


# ---------------------------------------------------------------------------
# Haar sampling
# ---------------------------------------------------------------------------

def haar_unitary(d: int, seed=None) -> UnitaryMatrix:
    """Haar-random special unitary via Ginibre + QR.

    QR phases are fixed by the sign of diag(R), then a global phase moves
    the determinant to 1.  Accepts an integer seed or a Generator.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    q = q * ph
    det = np.linalg.det(q)
    q = q * np.exp(-1j * np.angle(det) / d)
    return UnitaryMatrix(q)


def random_state_vector(dim: int, rng) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_density_matrix(dim: int, rng, rank: int | None = None) -> np.ndarray:
    rank = dim if rank is None else rank
    g = rng.standard_normal((dim, rank)) + 1j * rng.standard_normal((dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_channel_choi(
    in_label: SpaceLabel,
    out_label: SpaceLabel,
    rng,
    env_dim: int = 2,
) -> LabeledOperator:
    """Choi operator of a Haar-random isometry channel in -> out."""
    din, dout = in_label.dim, out_label.dim
    g = rng.standard_normal((dout * env_dim, din)) + 1j * rng.standard_normal((dout * env_dim, din))
    v, _ = np.linalg.qr(g)  # isometry: v†v = 1_in (requires dout*env >= din)
    env = SpaceLabel("AUX999", env_dim)
    vec = v.T.reshape(-1)  # over in (x) (out, env)
    full = LabeledVector([in_label, out_label, env], vec).outer()
    return partial_trace(full, [env.name])


# ---------------------------------------------------------------------------
# Gram-Schmidt and commutant bases
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CommutantBasis:
    """Orthogonal operator basis {P^i} with norms d_i = tr(P^i P^i†)."""

    elements: tuple[LabeledOperator, ...]
    norms: tuple[float, ...]
    group_tag: str
    d: int
    n: int

    def __len__(self):
        return len(self.elements)

    def arrays(self) -> list[np.ndarray]:
        return [e.mat for e in self.elements]

    def export(self, dirpath: str):
        """One JSON file per element plus a manifest with the d_i values."""
        from .tensor import save_operator

        os.makedirs(dirpath, exist_ok=True)
        names = []
        for i, el in enumerate(self.elements):
            fname = f"element_{i:02d}.json"
            save_operator(el, os.path.join(dirpath, fname))
            names.append(fname)
        manifest = {
            "group_tag": self.group_tag,
            "d": self.d,
            "n": self.n,
            "elements": names,
            "norms": list(self.norms),
        }
        with open(os.path.join(dirpath, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=1)


def gram_schmidt(
    ops: Sequence[LabeledOperator],
    group_tag: str = "custom",
    d: int | None = None,
    n: int | None = None,
    rel_tol: float = 1e-8,
) -> CommutantBasis:
    """Orthogonalize a list of operators, dropping dependent inputs.

    Modified Gram-Schmidt with one re-orthogonalization pass; an input is
    dropped when its residual norm falls below rel_tol times its own norm.
    """
    if not ops:
        raise ValueError("empty operator list")
    labels = ops[0].labels
    if any(o.labels != labels for o in ops):
        raise ValueError("operators must share labels")
    kept: list[np.ndarray] = []
    kept_norms: list[float] = []
    any_nonzero = False
    for op in ops:
        v = op.mat.copy()
        vnorm = np.linalg.norm(v)
        if vnorm > 0:
            any_nonzero = True
        for _ in range(2):  # re-orthogonalize for numerical stability
            for b, bn in zip(kept, kept_norms):
                v -= b * (np.vdot(b, v) / bn)
        if np.linalg.norm(v) <= rel_tol * max(vnorm, 1e-300):
            continue
        kept.append(v)
        kept_norms.append(float(np.vdot(v, v).real))
    if not any_nonzero:
        raise ValueError("all inputs are zero")
    if d is None:
        d = labels[0].dim
    if n is None:
        n = len(labels)
    elements = tuple(LabeledOperator(labels, m) for m in kept)
    return CommutantBasis(elements, tuple(kept_norms), group_tag, d, n)


def _guard_memory(n_ops: int, side: int):
    need = n_ops * side * side * 16
    if need > MAX_COMMUTANT_BYTES:
        raise MemoryError(
            f"commutant construction needs ~{need / 2**20:.0f} MiB, "
            f"budget is {MAX_COMMUTANT_BYTES / 2**20:.0f} MiB"
        )


def collective_commutant(d: int, n: int) -> CommutantBasis:
    """Orthogonal basis of {P : [P, U^{(x)n}] = 0} from all n! permutations."""
    if n < 2:
        raise ValueError("need at least two factors")
    _guard_memory(math.factorial(n), d**n)
    ops = [permutation_operator(p, d) for p in all_permutations(n)]
    return gram_schmidt(ops, group_tag="collective", d=d, n=n)


def conjugate_collective_commutant(d: int, k: int) -> CommutantBasis:
    """Orthogonal basis of {P : [P, U*^{(x)k} (x) U] = 0}.

    Spanned by permutation operators partially transposed on the k
    conjugated factors.  For k = 1 the closed pair is returned: the
    normalized projector onto the maximally entangled state and its
    complement.
    """
    if k < 1:
        raise ValueError("need k >= 1")
    labels = aux_labels(k + 1, d)
    if k == 1:
        me = maximally_entangled_projector(d, labels)
        eye = LabeledOperator(labels, np.eye(d * d, dtype=np.complex128))
        perp = eye - me
        return CommutantBasis(
            (me, perp),
            (float(np.vdot(me.mat, me.mat).real), float(np.vdot(perp.mat, perp.mat).real)),
            "conjugate-collective",
            d,
            2,
        )
    n = k + 1
    _guard_memory(math.factorial(n), d**n)
    conj_names = [labels[i].name for i in range(k)]
    ops = []
    for p in all_permutations(n):
        V = permutation_operator(p, d, labels)
        ops.append(partial_transpose(V, conj_names))
    return gram_schmidt(ops, group_tag="conjugate-collective", d=d, n=n)


def maximally_entangled_projector(d: int, labels: Sequence[SpaceLabel]) -> LabeledOperator:
    """|1>><<1| / d across two factors of dimension d."""
    vec = np.eye(d, dtype=np.complex128).reshape(-1)
    return LabeledVector(labels, vec / np.sqrt(d)).outer()


def commutator_residual(
    basis: CommutantBasis,
    group_element: Callable[[UnitaryMatrix], np.ndarray],
    n_samples: int = 20,
    seed: int = 7,
) -> float:
    """Max Frobenius norm of [P^i, g(U)] over Haar samples; oracle check."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        U = haar_unitary(basis.d, rng)
        g = group_element(U)
        for P in basis.arrays():
            r = np.linalg.norm(P @ g - g @ P)
            worst = max(worst, float(r))
    return worst


def collective_action(U: UnitaryMatrix, n: int) -> np.ndarray:
    g = np.array([[1.0 + 0j]])
    for _ in range(n):
        g = np.kron(g, U.mat)
    return g


def conjugate_collective_action(U: UnitaryMatrix, k: int) -> np.ndarray:
    g = np.array([[1.0 + 0j]])
    for _ in range(k):
        g = np.kron(g, U.mat.conj())
    return np.kron(g, U.mat)


# ---------------------------------------------------------------------------
# Closed-form commutant elements (exact arithmetic)
# ---------------------------------------------------------------------------

def _fr(*args) -> Fraction:
    return Fraction(*args)


def exact_permutation_matrix(perm: Permutation, d: int) -> np.ndarray:
    return np.vectorize(Fraction)(permutation_matrix(perm, d).real.astype(int))


def _eye_exact(side: int) -> np.ndarray:
    m = np.full((side, side), _fr(0), dtype=object)
    for i in range(side):
        m[i, i] = _fr(1)
    return m


def symmetric_antisymmetric_generators(d: int) -> list[np.ndarray]:
    """Projectors (1 ± F)/2 on two factors, exact."""
    F = exact_permutation_matrix((1, 0), d)
    eye = _eye_exact(d * d)
    half = _fr(1, 2)
    return [(eye + F) * half, (eye - F) * half]


def entangled_pair_generators(d: int) -> list[np.ndarray]:
    """{|1>><<1|/d, 1 - |1>><<1|/d} on two factors, exact."""
    side = d * d
    me = np.full((side, side), _fr(0), dtype=object)
    for i in range(d):
        for j in range(d):
            me[i * d + i, j * d + j] = _fr(1, d)
    eye = _eye_exact(side)
    return [me, eye - me]


def _exact_kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ra, ca = a.shape
    rb, cb = b.shape
    out = np.empty((ra * rb, ca * cb), dtype=object)
    for i in range(ra):
        for j in range(ca):
            out[i * rb : (i + 1) * rb, j * cb : (j + 1) * cb] = a[i, j] * b
    return out


def three_factor_collective_generators(d: int) -> list[np.ndarray]:
    """Real generators of the commutant of U^{(x)3}, orthogonal and exact.

    Scales are irrelevant to downstream use; the element built from the
    cyclic difference carries an implicit imaginary unit, which drops out
    of every quadratic expression.  For d = 2 the antisymmetric projector
    vanishes and is omitted.
    """
    perms = {
        "id": (0, 1, 2),
        "12": (1, 0, 2),
        "23": (0, 2, 1),
        "31": (2, 1, 0),
        "123": (1, 2, 0),
        "321": (2, 0, 1),
    }
    V = {name: exact_permutation_matrix(p, d) for name, p in perms.items()}
    sixth = _fr(1, 6)
    third = _fr(1, 3)
    r_plus = (V["id"] + V["12"] + V["23"] + V["31"] + V["123"] + V["321"]) * sixth
    r_minus = (V["id"] - V["12"] - V["23"] - V["31"] + V["123"] + V["321"]) * sixth
    r_zero = (V["id"] * 2 - V["123"] - V["321"]) * third
    r_one = V["23"] * 2 - V["31"] - V["12"]
    r_two = V["12"] - V["31"]
    r_three = V["123"] - V["321"]  # true element is i/sqrt(3) times this
    gens = [r_plus, r_minus, r_zero, r_one, r_two, r_three]
    if d == 2:
        gens = [g for g in gens if any(x != 0 for x in g.reshape(-1))]
    return gens


def three_factor_conjugate_generators(d: int) -> list[np.ndarray]:
    """Real generators of the commutant of U* (x) U* (x) U, exact.

    Built from X = 1 (x) |1>><<1| and V = F (x) 1; the commutator element
    carries an implicit imaginary unit.  For d = 2 the element supported on
    the antisymmetric pair subspace vanishes and is omitted.
    """
    side = d**3
    me = entangled_pair_generators(d)[0] * _fr(d, 1)  # |1>><<1| on factors 2,3
    X = _exact_kron(_eye_exact(d), me)
    V = _exact_kron(exact_permutation_matrix((1, 0), d), _eye_exact(d))
    eye = _eye_exact(side)
    p_plus = (eye + V) * _fr(1, 2)
    p_minus = (eye - V) * _fr(1, 2)
    VXV = V @ X @ V
    XV = X @ V
    VX = V @ X
    s_plus = p_plus @ (eye - X * _fr(2, d + 1)) @ p_plus
    s_minus = p_minus @ (eye - X * _fr(2, d - 1)) @ p_minus
    s_zero = (X + VXV) * _fr(d, 1) - (XV + VX)
    s_one = (XV + VX) * _fr(d, 1) - (X + VXV)
    s_two = X - VXV
    s_three = XV - VX  # true element is i/sqrt(d^2-1) times this
    gens = [s_plus, s_minus, s_zero, s_one, s_two, s_three]
    if d == 2:
        gens = [g for g in gens if any(x != 0 for x in g.reshape(-1))]
    return gens


@dataclass(frozen=True)
class SixElementBasis:
    """The closed three-factor commutant list with its independent subset."""

    elements: tuple[LabeledOperator, ...]
    independent: tuple[int, ...]
    d: int
    kind: str  # "collective" or "conjugate-collective"

    def independent_elements(self) -> list[LabeledOperator]:
        return [self.elements[i] for i in self.independent]


def _to_float(m: np.ndarray) -> np.ndarray:
    return np.array([[complex(Fraction(x)) for x in row] for row in m], dtype=np.complex128)


def eggeling_r_basis(d: int) -> SixElementBasis:
    """Six closed-form elements spanning the commutant of U^{(x)3}.

    Three projectors plus three Pauli-like elements; the last one is
    imaginary.  For d = 2 the antisymmetric projector is zero, so the
    reported independent subset has five entries.
    """
    if d < 2:
        raise ValueError("d >= 2 required")
    perms = {
        "12": (1, 0, 2), "23": (0, 2, 1), "31": (2, 1, 0),
        "123": (1, 2, 0), "321": (2, 0, 1),
    }
    V = {name: permutation_matrix(p, d) for name, p in perms.items()}
    eye = np.eye(d**3, dtype=np.complex128)
    s3 = np.sqrt(3.0)
    mats = [
        (eye + V["12"] + V["23"] + V["31"] + V["123"] + V["321"]) / 6.0,
        (eye - V["12"] - V["23"] - V["31"] + V["123"] + V["321"]) / 6.0,
        (2.0 * eye - V["123"] - V["321"]) / 3.0,
        (2.0 * V["23"] - V["31"] - V["12"]) / 3.0,
        (V["12"] - V["31"]) / s3,
        1j * (V["123"] - V["321"]) / s3,
    ]
    labels = aux_labels(3, d)
    elements = tuple(LabeledOperator(labels, m) for m in mats)
    independent = tuple(i for i, m in enumerate(mats) if np.linalg.norm(m) > 1e-12)
    return SixElementBasis(elements, independent, d, "collective")


def eggeling_s_basis(d: int) -> SixElementBasis:
    """Six closed-form elements spanning the commutant of U* (x) U* (x) U."""
    if d < 2:
        raise ValueError("d >= 2 required")
    eye = np.eye(d**3, dtype=np.complex128)
    me = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            me[i * d + i, j * d + j] = 1.0
    X = np.kron(np.eye(d), me)
    V = np.kron(flip_operator(d), np.eye(d))
    p_plus = (eye + V) / 2.0
    p_minus = (eye - V) / 2.0
    VXV = V @ X @ V
    XV = X @ V
    VX = V @ X
    c = d * d - 1.0
    mats = [
        p_plus @ (eye - 2.0 * X / (d + 1.0)) @ p_plus,
        p_minus @ (eye - 2.0 * X / (d - 1.0)) @ p_minus,
        (d * (X + VXV) - (XV + VX)) / c,
        (d * (XV + VX) - (X + VXV)) / c,
        (X - VXV) / np.sqrt(c),
        1j * (XV - VX) / np.sqrt(c),
    ]
    labels = aux_labels(3, d)
    elements = tuple(LabeledOperator(labels, m) for m in mats)
    independent = tuple(i for i, m in enumerate(mats) if np.linalg.norm(m) > 1e-12)
    return SixElementBasis(elements, independent, d, "conjugate-collective")
