"""Dense complex matrix primitives used by every other module.

All matrices are ``numpy.ndarray`` with dtype complex128.  Operations are
pure; nothing here mutates its arguments.  Tolerances are relative to the
largest singular value of the operand unless stated otherwise.

The random model is complex Ginibre (i.i.d. standard complex Gaussian
entries, variance 1 split evenly between real and imaginary parts) driven
by ``numpy.random.default_rng`` (PCG64).  Ports in other languages can
reproduce the statistics, not the bit streams.
"""

from __future__ import annotations

from typing import Iterable, Optional, Union

import numpy as np

from .errors import NotHermitianError

RANK_TOL = 1e-9

RngLike = Union[int, np.random.Generator]


def as_cmatrix(a) -> np.ndarray:
    """Coerce to a 2-d complex128 array, rejecting NaN/Inf entries."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m.real)) or not np.all(np.isfinite(m.imag)):
        raise ValueError("matrix entries must be finite")
    return m


def rng_from(seed: Optional[RngLike]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def ginibre(rows: int, cols: int, rng: RngLike) -> np.ndarray:
    """Complex Ginibre matrix: i.i.d. standard complex Gaussian entries."""
    r = rng_from(rng)
    return (r.standard_normal((rows, cols)) + 1j * r.standard_normal((rows, cols))) / np.sqrt(2.0)


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(a).T


def kron(a, b) -> np.ndarray:
    """Kronecker product with the first factor owning the coarse block grid.

    Entry ``(i*b.rows + k, j*b.cols + l)`` equals ``a[i, j] * b[k, l]``.
    """
    return np.kron(as_cmatrix(a), as_cmatrix(b))


def opnorm(a) -> float:
    """Operator (spectral) norm: the largest singular value."""
    m = as_cmatrix(a)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def frob_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Frobenius inner product <a, b> = tr(a* b), conjugate-linear in ``a``."""
    return complex(np.vdot(a, b))


def numeric_rank(a, tol: float = RANK_TOL) -> int:
    """Number of singular values above ``tol`` times the largest one."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = as_cmatrix(a)
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def random_unitary(n: int, seed: Optional[RngLike] = None) -> np.ndarray:
    """Haar-distributed n-by-n unitary, deterministic for a fixed seed.

    QR of a complex Ginibre matrix with the phases of R's diagonal
    normalized to 1, so the factorization is unique and the distribution
    is Haar.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = ginibre(n, n, seed)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r).copy()
    d[d == 0] = 1.0
    return q * (d / np.abs(d))


def psd_project(h, tol: float = 1e-10) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm.

    The input must be Hermitian up to a relative asymmetry of ``tol``; it
    is symmetrized internally and its negative eigenvalues are clipped
    at zero.
    """
    m = as_cmatrix(h)
    if m.shape[0] != m.shape[1]:
        raise NotHermitianError(f"matrix is {m.shape[0]}x{m.shape[1]}, not square")
    scale = opnorm(m)
    asym = opnorm(m - dagger(m))
    if asym > tol * max(scale, 1e-300):
        raise NotHermitianError(f"relative asymmetry {asym / max(scale, 1e-300):.3e} exceeds {tol:.1e}")
    sym = (m + dagger(m)) / 2.0
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    return (v * w) @ dagger(v)


def psd_sqrt(h: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Tiny negative eigenvalues from roundoff are clamped to zero.
    """
    sym = (h + dagger(h)) / 2.0
    w, v = np.linalg.eigh(sym)
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ dagger(v)


def orthonormalize(mats: Iterable[np.ndarray], tol: float = RANK_TOL) -> list[np.ndarray]:
    """Orthonormal basis (Frobenius inner product) of the span of ``mats``.

    Computed from the SVD of the stacked vectorizations; the result has
    exactly ``numeric_rank`` elements and spans the same space.
    """
    mats = [as_cmatrix(m) for m in mats]
    if not mats:
        return []
    shape = mats[0].shape
    for m in mats:
        if m.shape != shape:
            raise ValueError("all matrices must share one shape")
    stack = np.stack([m.ravel() for m in mats])
    u, s, vh = np.linalg.svd(stack, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return []
    keep = s > tol * s[0]
    return [vh[i].reshape(shape) for i in range(len(s)) if keep[i]]


def is_unitary(u: np.ndarray, tol: float = 1e-8) -> bool:
    m = as_cmatrix(u)
    if m.shape[0] != m.shape[1]:
        return False
    return opnorm(dagger(m) @ m - np.eye(m.shape[0])) <= tol


def direct_sum(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Block-diagonal sum a (+) b of two matrices."""
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]), dtype=np.complex128)
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0] :, a.shape[1] :] = b
    return out
