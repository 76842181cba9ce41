"""Dense complex linear-algebra kernels shared by the rest of the package.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. Rank decisions
go through a :class:`RankPolicy` so that every caller applies the same
tolerance; an exact path over the Gaussian integers is available for the
BPSK/QPSK alphabets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InvalidInputError",
    "RankDeficiencyError",
    "RankPolicy",
    "as_matrix",
    "numerical_rank",
    "exact_rank",
    "null_space_basis",
    "regularized_ls_solve",
]


class InvalidInputError(ValueError):
    """Raised for malformed numerical inputs (wrong shape, NaN/Inf, ...)."""


class RankDeficiencyError(np.linalg.LinAlgError):
    """Raised when an unregularized normal system is singular."""


@dataclass(frozen=True)
class RankPolicy:
    relative_tolerance: float = 1e-9
    exact_mode: bool = False

    def __post_init__(self):
        if not self.relative_tolerance > 0:
            raise InvalidInputError("relative_tolerance must be positive")


DEFAULT_POLICY = RankPolicy()


def as_matrix(A, name="matrix") -> np.ndarray:
    """Coerce ``A`` to a finite 2-D complex array."""
    A = np.asarray(A, dtype=complex)
    if A.ndim == 1:
        A = A[None, :]
    if A.ndim != 2:
        raise InvalidInputError(f"{name} must be two-dimensional, got ndim={A.ndim}")
    if A.size == 0:
        raise InvalidInputError(f"{name} is empty, shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def _gaussian_integer_rows(A: np.ndarray) -> list[list[tuple[int, int]]]:
    re = np.round(A.real)
    im = np.round(A.imag)
    if not (np.array_equal(re, A.real) and np.array_equal(im, A.imag)):
        raise InvalidInputError("exact_mode requires Gaussian-integer entries")
    return [[(int(a), int(b)) for a, b in zip(r_re, r_im)] for r_re, r_im in zip(re, im)]


def _gmul(x, y):
    return (x[0] * y[0] - x[1] * y[1], x[0] * y[1] + x[1] * y[0])


def _gsub(x, y):
    return (x[0] - y[0], x[1] - y[1])


def _gdiv_exact(x, y):
    norm = y[0] * y[0] + y[1] * y[1]
    re = x[0] * y[0] + x[1] * y[1]
    im = x[1] * y[0] - x[0] * y[1]
    if re % norm or im % norm:
        raise ArithmeticError("inexact Gaussian-integer division in Bareiss step")
    return (re // norm, im // norm)


def exact_rank(A) -> int:
    """Rank by fraction-free (Bareiss) elimination over the Gaussian integers."""
    A = as_matrix(A)
    M = _gaussian_integer_rows(A)
    m, n = A.shape
    prev = (1, 0)
    r = 0
    for c in range(n):
        if r == m:
            break
        piv = next((i for i in range(r, m) if M[i][c] != (0, 0)), None)
        if piv is None:
            continue
        M[r], M[piv] = M[piv], M[r]
        p = M[r][c]
        for i in range(r + 1, m):
            a = M[i][c]
            for j in range(c + 1, n):
                M[i][j] = _gdiv_exact(_gsub(_gmul(p, M[i][j]), _gmul(a, M[r][j])), prev)
            M[i][c] = (0, 0)
        prev = p
        r += 1
    return r


def numerical_rank(A, policy: RankPolicy = DEFAULT_POLICY) -> int:
    """Number of singular values above ``relative_tolerance * s_max``.

    In exact mode the rank comes from :func:`exact_rank` instead.
    """
    A = as_matrix(A)
    if policy.exact_mode:
        return exact_rank(A)
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.count_nonzero(s > policy.relative_tolerance * s[0]))


def null_space_basis(A, policy: RankPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Orthonormal basis (as columns) of the null space of ``A``.

    Returns an ``n x 0`` array when the null space is trivial.
    """
    A = as_matrix(A)
    rank = numerical_rank(A, policy)
    _, _, vh = np.linalg.svd(A, full_matrices=True)
    return vh[rank:].conj().T.copy()


def _ridge(T: np.ndarray, Y: np.ndarray, lam: float) -> np.ndarray:
    # normal equations, no validation; used by the decoders' inner loops
    G = T.conj().T @ T
    if lam:
        G = G + lam * np.eye(G.shape[0])
    return np.linalg.solve(G, T.conj().T @ Y)


def regularized_ls_solve(T, Y, lam: float, policy: RankPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Minimizer of ``||Y - T V||_F^2 + lam ||V||_F^2``, i.e. ``(T^H T + lam I)^{-1} T^H Y``."""
    T = as_matrix(T, "T")
    Y = np.asarray(Y, dtype=complex)
    vector_rhs = Y.ndim == 1
    Y = as_matrix(Y[:, None] if vector_rhs else Y, "Y")
    if T.shape[0] != Y.shape[0]:
        raise InvalidInputError(f"row mismatch: T has {T.shape[0]}, Y has {Y.shape[0]}")
    if not lam >= 0:
        raise InvalidInputError("lam must be nonnegative")
    if lam == 0 and numerical_rank(T, policy) < T.shape[1]:
        raise RankDeficiencyError("T^H T is singular and lam == 0")
    V = _ridge(T, Y, lam)
    return V[:, 0] if vector_rhs else V
