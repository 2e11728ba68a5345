"""Homogeneous linear pencils and matrix tuples.

A pencil is a tuple of complex coefficient matrices A_1, ..., A_g of a
common shape d' x d, standing for the linear expression
L(x) = sum_j A_j x_j in noncommuting variables.  Evaluation at a tuple X
of n x n matrices is L(X) = sum_j A_j (x) X_j with (x) the Kronecker
product, a d'n x dn matrix.  The open unit ball of such evaluations over
all n is the pencil ball of L.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import matkernel as mk
from .errors import ArityMismatchError, NotUnitaryError

EQUIV_LEVELS = (1, 2, 3, 4)
EQUIV_SAMPLES = 64
EQUIV_TOL = 1e-8
BOUNDARY_TOL = 1e-8


@dataclass(frozen=True)
class Pencil:
    """Coefficients of a homogeneous linear pencil, shape (g, d', d).

    All-zero pencils are rejected: their ball would be everything and no
    structural statement about them holds.  Internal residual blocks of a
    decomposition may legitimately be zero; those are built with
    ``allow_zero=True``.
    """

    coeffs: np.ndarray
    allow_zero: bool = field(default=False, compare=False)

    def __post_init__(self):
        arr = np.array(self.coeffs, dtype=np.complex128)
        if arr.ndim != 3:
            raise ValueError("coeffs must be a g x d' x d array or list of matrices")
        if arr.shape[0] < 1:
            raise ValueError("pencil needs at least one variable")
        if not np.all(np.isfinite(arr)):
            raise ValueError("pencil coefficients must be finite")
        if not self.allow_zero and not np.any(arr):
            raise ValueError("all-zero pencil rejected")
        object.__setattr__(self, "coeffs", arr)
        arr.setflags(write=False)

    @property
    def g(self) -> int:
        return self.coeffs.shape[0]

    @property
    def d_prime(self) -> int:
        return self.coeffs.shape[1]

    @property
    def d(self) -> int:
        return self.coeffs.shape[2]

    @classmethod
    def from_matrices(cls, mats: Sequence, allow_zero: bool = False) -> "Pencil":
        return cls(np.stack([mk.as_cmatrix(m) for m in mats]), allow_zero=allow_zero)

    def __call__(self, X: "MatrixTuple") -> np.ndarray:
        return evaluate(self, X)


@dataclass(frozen=True)
class MatrixTuple:
    """A g-tuple of square n x n complex matrices, shape (g, n, n)."""

    entries: np.ndarray

    def __post_init__(self):
        arr = np.array(self.entries, dtype=np.complex128)
        if arr.ndim != 3 or arr.shape[1] != arr.shape[2]:
            raise ValueError("entries must be a g x n x n array")
        if arr.shape[1] < 1:
            raise ValueError("matrix size must be >= 1")
        if not np.all(np.isfinite(arr)):
            raise ValueError("tuple entries must be finite")
        object.__setattr__(self, "entries", arr)
        arr.setflags(write=False)

    @property
    def g(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[1]

    @classmethod
    def from_matrices(cls, mats: Sequence) -> "MatrixTuple":
        return cls(np.stack([mk.as_cmatrix(m) for m in mats]))

    @classmethod
    def zeros(cls, g: int, n: int) -> "MatrixTuple":
        return cls(np.zeros((g, n, n), dtype=np.complex128))

    @classmethod
    def ginibre(cls, g: int, n: int, rng) -> "MatrixTuple":
        r = mk.rng_from(rng)
        return cls(np.stack([mk.ginibre(n, n, r) for _ in range(g)]))

    def scaled(self, z: complex) -> "MatrixTuple":
        return MatrixTuple(z * self.entries)

    def direct_sum(self, other: "MatrixTuple") -> "MatrixTuple":
        if self.g != other.g:
            raise ArityMismatchError(f"tuple arities {self.g} and {other.g} differ")
        return MatrixTuple(
            np.stack([mk.direct_sum(a, b) for a, b in zip(self.entries, other.entries)])
        )


@dataclass
class EquivalenceReport:
    """Outcome of sampled norm comparison of two pencils.

    ``equivalent-on-samples`` is evidence, not a proof: equality of pencil
    balls quantifies over every matrix size, and this test only samples.
    A refutation, by contrast, is a hard witness.
    """

    verdict: str  # "equivalent-on-samples" | "refuted"
    levels_tested: list[int]
    samples_per_level: int
    witness: Optional[tuple[int, MatrixTuple, float]] = None

    @property
    def refuted(self) -> bool:
        return self.verdict == "refuted"


def _check_arity(L: Pencil, X: MatrixTuple):
    if L.g != X.g:
        raise ArityMismatchError(f"pencil has {L.g} variables, tuple has {X.g}")


def evaluate(L: Pencil, X: MatrixTuple) -> np.ndarray:
    """L(X) = sum_j A_j (x) X_j, a d'n x dn matrix."""
    _check_arity(L, X)
    n = X.n
    # einsum computes all g Kronecker products and sums them in one pass
    out = np.einsum("jab,jcd->acbd", L.coeffs, X.entries, optimize=True)
    return np.ascontiguousarray(out.reshape(L.d_prime * n, L.d * n))


def in_ball(L: Pencil, X: MatrixTuple, tol: float = BOUNDARY_TOL) -> str:
    """Classify X against the pencil ball: 'inside', 'boundary' or 'outside'."""
    norm = mk.opnorm(evaluate(L, X))
    if norm < 1.0 - tol:
        return "inside"
    if abs(norm - 1.0) <= tol:
        return "boundary"
    return "outside"


def coefficient_matrix(L: Pencil) -> np.ndarray:
    """d'd x g matrix whose columns are the vectorized coefficients."""
    return L.coeffs.reshape(L.g, -1).T


def is_nondegenerate(L: Pencil, tol: float = mk.RANK_TOL) -> bool:
    """True iff the coefficients are linearly independent.

    Equivalent formulations: L(X) = 0 forces X = 0 at every matrix size,
    and already at scalars.
    """
    return mk.numeric_rank(coefficient_matrix(L), tol) == L.g


def scalar_kernel_dimension(L: Pencil, tol: float = mk.RANK_TOL) -> int:
    """Dimension of {c in C^g : L(c) = 0}, found by least squares.

    Independent of the rank route in ``is_nondegenerate``: the kernel is
    read off the small-eigenvalue space of the Gram matrix of the
    vectorized coefficients.
    """
    m = coefficient_matrix(L)
    gram = mk.dagger(m) @ m
    w = np.linalg.eigvalsh(gram)
    scale = max(float(w[-1]), 1e-300)
    return int(np.count_nonzero(w <= (tol**2) * scale))


def equivalent(
    L: Pencil,
    M: Pencil,
    levels: Sequence[int] = EQUIV_LEVELS,
    samples: int = EQUIV_SAMPLES,
    seed=42,
    tol: float = EQUIV_TOL,
) -> EquivalenceReport:
    """Compare ||L(X)|| and ||M(X)|| on seeded Ginibre tuples.

    Refutes on the first sample where the gap exceeds
    ``tol * max(1, ||L(X)||)``; the witness is the first refuting sample in
    (level, sample index) order.  Otherwise reports equivalence on the
    samples tested, which is explicitly not a proof.
    """
    if L.g != M.g:
        raise ArityMismatchError(f"pencil arities {L.g} and {M.g} differ")
    rng = mk.rng_from(seed)
    for n in levels:
        for _ in range(samples):
            X = MatrixTuple.ginibre(L.g, n, rng)
            norm_l = mk.opnorm(evaluate(L, X))
            norm_m = mk.opnorm(evaluate(M, X))
            gap = abs(norm_l - norm_m)
            if gap > tol * max(1.0, norm_l):
                return EquivalenceReport(
                    verdict="refuted",
                    levels_tested=list(levels),
                    samples_per_level=samples,
                    witness=(n, X, gap),
                )
    return EquivalenceReport(
        verdict="equivalent-on-samples",
        levels_tested=list(levels),
        samples_per_level=samples,
    )


def direct_sum(L: Pencil, M: Pencil) -> Pencil:
    """Coefficientwise block-diagonal sum; same variables, stacked blocks."""
    if L.g != M.g:
        raise ArityMismatchError(f"pencil arities {L.g} and {M.g} differ")
    return Pencil(
        np.stack([mk.direct_sum(a, b) for a, b in zip(L.coeffs, M.coeffs)]),
        allow_zero=L.allow_zero or M.allow_zero,
    )


def conjugate(L: Pencil, U: np.ndarray, V: np.ndarray, tol: float = 1e-8) -> Pencil:
    """Pencil with coefficients U A_j V*; U, V must be unitary."""
    U = mk.as_cmatrix(U)
    V = mk.as_cmatrix(V)
    if not mk.is_unitary(U, tol):
        raise NotUnitaryError("U is not unitary at tolerance")
    if not mk.is_unitary(V, tol):
        raise NotUnitaryError("V is not unitary at tolerance")
    if U.shape[0] != L.d_prime or V.shape[0] != L.d:
        raise ArityMismatchError(
            f"conjugators must be {L.d_prime}x{L.d_prime} and {L.d}x{L.d}"
        )
    return Pencil(np.stack([U @ a @ mk.dagger(V) for a in L.coeffs]), allow_zero=L.allow_zero)


def range_basis(L: Pencil, tol: float = mk.RANK_TOL) -> list[np.ndarray]:
    """Orthonormal basis of span{A_j} under the Frobenius inner product.

    For a nondegenerate pencil this has g elements and spans the level-one
    range of the pencil.
    """
    return mk.orthonormalize(list(L.coeffs), tol)
