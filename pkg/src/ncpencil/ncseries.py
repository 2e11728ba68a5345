"""Words and noncommutative polynomials with matrix coefficients.

A word is a tuple of 1-based variable indices; the empty tuple is the
unit word.  A polynomial is a finite map from words to coefficient
matrices of one common shape l' x l; evaluation at a matrix tuple X of
size n follows the convention f(X) = sum_w f_w (x) w(X), an l'n x ln
matrix, where w(X) is the ordered product of the tuple entries.

Only finite (polynomial) series are represented here.  Analytic maps
enter the package as black-box evaluators instead, since no theorem-level
check at this scale needs convergence data.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

import numpy as np

from . import matkernel as mk
from .errors import ArityMismatchError
from .pencil import MatrixTuple, Pencil

Word = Tuple[int, ...]

EMPTY_WORD: Word = ()


def word_key(w: Word) -> tuple:
    """Sort key: by length, then lexicographically on the indices."""
    return (len(w), w)


def all_words(g: int, length: int) -> list[Word]:
    """All g^length words of exactly the given length, in lexicographic order."""
    if length == 0:
        return [EMPTY_WORD]
    words = [EMPTY_WORD]
    for _ in range(length):
        words = [w + (j,) for w in words for j in range(1, g + 1)]
    return words


def _validate_word(w: Word, g: int):
    for j in w:
        if not 1 <= j <= g:
            raise ArityMismatchError(f"word letter {j} outside 1..{g}")


def eval_word(w: Word, X: MatrixTuple) -> np.ndarray:
    """Ordered product X_{j1} X_{j2} ... ; the empty word gives I_n."""
    _validate_word(w, X.g)
    out = np.eye(X.n, dtype=np.complex128)
    for j in w:
        out = out @ X.entries[j - 1]
    return out


@dataclass(frozen=True)
class NCPolynomial:
    """Finite noncommutative polynomial with l' x l matrix coefficients."""

    g: int
    terms: Mapping[Word, np.ndarray]
    shape: Tuple[int, int] = field(default=None)  # (l', l); inferred when omitted

    def __post_init__(self):
        if self.g < 1:
            raise ValueError("g must be >= 1")
        cleaned: Dict[Word, np.ndarray] = {}
        shape = self.shape
        for w, c in self.terms.items():
            w = tuple(int(j) for j in w)
            _validate_word(w, self.g)
            c = mk.as_cmatrix(c)
            if shape is None:
                shape = c.shape
            if c.shape != tuple(shape):
                raise ValueError(f"coefficient for word {w} has shape {c.shape}, expected {tuple(shape)}")
            if np.any(c):
                c = c.copy()
                c.setflags(write=False)
                cleaned[w] = c
        if shape is None:
            raise ValueError("shape must be given for a polynomial with no terms")
        object.__setattr__(self, "terms", cleaned)
        object.__setattr__(self, "shape", (int(shape[0]), int(shape[1])))

    @property
    def l_prime(self) -> int:
        return self.shape[0]

    @property
    def l(self) -> int:
        return self.shape[1]

    @property
    def degree(self) -> int:
        """Largest word length carrying a nonzero coefficient; -1 when zero."""
        return max((len(w) for w in self.terms), default=-1)

    def sorted_words(self) -> list[Word]:
        return sorted(self.terms, key=word_key)

    def coefficient(self, w: Word) -> np.ndarray:
        w = tuple(w)
        if w in self.terms:
            return self.terms[w]
        return np.zeros(self.shape, dtype=np.complex128)

    def __call__(self, X: MatrixTuple) -> np.ndarray:
        return evaluate(self, X)


def evaluate(f: NCPolynomial, X: MatrixTuple) -> np.ndarray:
    """f(X) = sum_w f_w (x) w(X), shape l'n x ln.

    Word values are built by extending memoized prefix products, so a
    dense degree-m polynomial costs one matrix product per stored word.
    """
    if X.g != f.g:
        raise ArityMismatchError(f"polynomial has {f.g} variables, tuple has {X.g}")
    n = X.n
    out = np.zeros((f.l_prime * n, f.l * n), dtype=np.complex128)
    values: Dict[Word, np.ndarray] = {EMPTY_WORD: np.eye(n, dtype=np.complex128)}

    def value(w: Word) -> np.ndarray:
        # extends the longest memoized prefix one letter at a time
        k = len(w)
        while w[:k] not in values:
            k -= 1
        v = values[w[:k]]
        for j in w[k:]:
            k += 1
            v = v @ X.entries[j - 1]
            values[w[:k]] = v
        return v

    for w in f.sorted_words():
        out += mk.kron(f.terms[w], value(w))
    return out


def homogeneous_part(f: NCPolynomial, m: int) -> NCPolynomial:
    """Restriction to words of length exactly m; may have no terms."""
    if m < 0:
        raise ValueError("degree must be >= 0")
    return NCPolynomial(f.g, {w: c for w, c in f.terms.items() if len(w) == m}, shape=f.shape)


def series_of_pencil(L: Pencil) -> NCPolynomial:
    """The degree-one polynomial x_j -> A_j carried by a pencil."""
    return NCPolynomial(L.g, {(j + 1,): L.coeffs[j] for j in range(L.g)}, shape=(L.d_prime, L.d))


def add(f: NCPolynomial, h: NCPolynomial) -> NCPolynomial:
    if f.g != h.g or f.shape != h.shape:
        raise ArityMismatchError("polynomials must share arity and coefficient shape")
    terms = {w: np.array(c) for w, c in f.terms.items()}
    for w, c in h.terms.items():
        terms[w] = terms.get(w, 0) + c
    return NCPolynomial(f.g, terms, shape=f.shape)


def scale(f: NCPolynomial, z: complex) -> NCPolynomial:
    return NCPolynomial(f.g, {w: z * c for w, c in f.terms.items()}, shape=f.shape)


def product(f: NCPolynomial, h: NCPolynomial) -> NCPolynomial:
    """Matrix product of two polynomials: (f h)_w = sum_{w = u v} f_u h_v."""
    if f.g != h.g:
        raise ArityMismatchError("polynomials must share arity")
    if f.l != h.l_prime:
        raise ArityMismatchError(f"inner shapes {f.shape} and {h.shape} do not chain")
    terms: Dict[Word, np.ndarray] = {}
    for u, cu in f.terms.items():
        for v, cv in h.terms.items():
            w = u + v
            terms[w] = terms.get(w, 0) + cu @ cv
    return NCPolynomial(f.g, terms, shape=(f.l_prime, h.l))
