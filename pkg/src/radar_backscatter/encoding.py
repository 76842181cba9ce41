"""Codeword construction, transmission rates and recoverability checks.

Subchannel indices are zero-based throughout: subchannel ``n`` in
``range(plan.N)``. Data matrices are ``D x Q`` arrays whose rows are laid out
as the shared block (``D0`` rows) followed by the private blocks of
subchannels ``0, 1, ..., N-1``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import hadamard

from .numerics import (
    DEFAULT_POLICY,
    InvalidInputError,
    RankPolicy,
    as_matrix,
    exact_rank,
    null_space_basis,
    numerical_rank,
)

log = logging.getLogger(__name__)

__all__ = [
    "ScaleError",
    "PSKAlphabet",
    "EncodingPlan",
    "Verdict",
    "OracleResult",
    "hadamard_pilots",
    "draw_data",
    "build_selection_matrix",
    "data_row_indices",
    "assemble_symbol_matrix",
    "transmission_rate",
    "check_theorem_conditions",
    "check_restrictive_conditions",
    "largest_certified_rate",
    "uniqueness_oracle",
]

EXHAUSTIVE_BUDGET = 2**20

# condition names used in verdicts and reports
PILOT_RANK = "pilot_rank"
NULL_SPACE_INTERSECTION = "null_space_intersection"
SINGLE_SUBCHANNEL_PILOT_RANK = "single_subchannel_pilot_rank"
STACKED_PILOT_DATA_RANK = "stacked_pilot_data_rank"


class ScaleError(RuntimeError):
    """Raised when an exhaustive search would exceed its enumeration budget."""


class PSKAlphabet:
    """M-PSK constellation ``exp(2j*pi*k/M)`` with reflected-Gray bit labels.

    For ``M`` in {2, 4} the points are stored as exact Gaussian integers.
    """

    def __init__(self, M: int):
        if M not in (2, 4, 8, 16):
            raise InvalidInputError(f"unsupported PSK order M={M}")
        self.M = M
        pts = np.exp(2j * np.pi * np.arange(M) / M)
        if M in (2, 4):
            pts = np.round(pts.real) + 1j * np.round(pts.imag)
        self.points = pts
        self.labels = np.arange(M) ^ (np.arange(M) >> 1)
        self.bits_per_symbol = int(np.log2(M))

    def __repr__(self):
        return f"PSKAlphabet(M={self.M})"

    def __eq__(self, other):
        return isinstance(other, PSKAlphabet) and other.M == self.M

    def __hash__(self):
        return hash(("psk", self.M))

    @property
    def is_gaussian_integer(self) -> bool:
        return self.M in (2, 4)

    def nearest_index(self, z) -> np.ndarray:
        """Index of the nearest point; exact ties go to the smaller index."""
        z = np.asarray(z, dtype=complex)
        dist = np.abs(z[..., None] - self.points)
        return np.argmin(dist, axis=-1)

    def slice(self, z) -> np.ndarray:
        return self.points[self.nearest_index(z)]

    def index_of(self, symbols, atol: float = 1e-9) -> np.ndarray:
        """Phase index of symbols that lie on the constellation (else raise)."""
        symbols = np.asarray(symbols, dtype=complex)
        idx = self.nearest_index(symbols)
        if symbols.size and np.max(np.abs(self.points[idx] - symbols)) > atol:
            raise InvalidInputError("entry off the constellation")
        return idx

    def contains(self, symbols, atol: float = 1e-9) -> bool:
        try:
            self.index_of(symbols, atol)
        except InvalidInputError:
            return False
        return True

    def bit_differences(self, a_idx, b_idx) -> np.ndarray:
        """Number of differing Gray-label bits between two index arrays."""
        x = self.labels[np.asarray(a_idx)] ^ self.labels[np.asarray(b_idx)]
        count = np.zeros_like(x)
        for b in range(self.bits_per_symbol):
            count += (x >> b) & 1
        return count

    def random_symbols(self, shape, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(0, self.M, size=shape)]


def hadamard_pilots(count: int, Q: int, offset: int = 0) -> np.ndarray:
    """``count x Q`` pilot block taken from a Sylvester Hadamard matrix.

    The smallest Hadamard order ``>= Q+1`` is used. Its all-one first column
    plays the virtual radar tag, columns ``1..Q`` feed the tags, and rows are
    taken cyclically starting at ``offset``.
    """
    order = 1
    while order < Q + 1:
        order *= 2
    H = hadamard(order).astype(complex)
    rows = (offset + np.arange(count)) % order
    return H[rows][:, 1 : Q + 1].copy()


@dataclass(frozen=True, eq=False)
class EncodingPlan:
    """Block layout of the per-subchannel codeword matrices.

    ``pilots[n]`` is the ``P_n x Q`` pilot block of subchannel ``n``;
    ``Dn[n]`` the number of private data rows, ``D0`` the shared ones.
    """

    Q: int
    L: int
    pilots: tuple
    D0: int
    Dn: tuple
    M: int = 2
    alphabet: PSKAlphabet = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pilots = tuple(np.asarray(p, dtype=complex).reshape(-1, self.Q) for p in self.pilots)
        object.__setattr__(self, "pilots", pilots)
        object.__setattr__(self, "Dn", tuple(int(d) for d in self.Dn))
        object.__setattr__(self, "alphabet", PSKAlphabet(self.M))
        if self.Q < 0 or self.D0 < 0 or any(d < 0 for d in self.Dn):
            raise InvalidInputError("negative block size")
        if len(pilots) != len(self.Dn) or not pilots:
            raise InvalidInputError("need one pilot block and one private count per subchannel")
        for n, (p, d) in enumerate(zip(pilots, self.Dn)):
            if p.shape[0] + self.D0 + d != self.L:
                raise InvalidInputError(
                    f"subchannel {n}: P_n + D0 + D_n = {p.shape[0] + self.D0 + d} != L = {self.L}"
                )
            if not self.alphabet.contains(p):
                raise InvalidInputError(f"subchannel {n}: pilot entry off the constellation")

    @classmethod
    def with_hadamard_pilots(cls, Q: int, L: int, pilot_counts: Sequence[int], D0: int = 0, M: int = 2):
        """Plan whose pilot blocks continue through the Hadamard rows across subchannels."""
        pilots, offset = [], 0
        for count in pilot_counts:
            pilots.append(hadamard_pilots(count, Q, offset))
            offset += count
        Dn = [L - c - D0 for c in pilot_counts]
        return cls(Q=Q, L=L, pilots=tuple(pilots), D0=D0, Dn=tuple(Dn), M=M)

    @property
    def N(self) -> int:
        return len(self.pilots)

    @property
    def pilot_counts(self) -> tuple:
        return tuple(p.shape[0] for p in self.pilots)

    @property
    def P(self) -> int:
        return sum(self.pilot_counts)

    @property
    def D(self) -> int:
        return self.D0 + sum(self.Dn)

    @cached_property
    def row_indices(self) -> tuple:
        return tuple(data_row_indices(self, n) for n in range(self.N))

    def pilot_matrix(self, n: int) -> np.ndarray:
        """``[P_n 1]``."""
        p = self.pilots[n]
        return np.hstack([p, np.ones((p.shape[0], 1))])

    def stacked_pilot_matrix(self) -> np.ndarray:
        """``[P 1]`` with the pilot blocks of all subchannels stacked."""
        return np.vstack([self.pilot_matrix(n) for n in range(self.N)])

    def to_dict(self) -> dict:
        return {
            "Q": self.Q,
            "L": self.L,
            "M": self.M,
            "D0": self.D0,
            "Dn": list(self.Dn),
            "pilots": [[[_fmt_complex(v) for v in row] for row in p] for p in self.pilots],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EncodingPlan":
        Q = int(d["Q"])
        pilots = []
        for block in d["pilots"]:
            rows = [[_parse_complex(v) for v in row] for row in block]
            pilots.append(np.array(rows, dtype=complex).reshape(-1, Q))
        return cls(Q=Q, L=int(d["L"]), pilots=tuple(pilots), D0=int(d["D0"]), Dn=tuple(d["Dn"]), M=int(d.get("M", 2)))

    def __eq__(self, other):
        if not isinstance(other, EncodingPlan):
            return NotImplemented
        return (
            (self.Q, self.L, self.D0, self.Dn, self.M) == (other.Q, other.L, other.D0, other.Dn, other.M)
            and all(np.array_equal(a, b) for a, b in zip(self.pilots, other.pilots))
        )

    __hash__ = None


def _fmt_complex(z) -> object:
    z = complex(z)
    if z.imag == 0:
        return int(z.real) if float(z.real).is_integer() else z.real
    return f"{z.real!r}{z.imag:+}j"


def _parse_complex(v) -> complex:
    if isinstance(v, str):
        return complex(v.replace(" ", ""))
    return complex(v)


def draw_data(plan: EncodingPlan, rng: np.random.Generator) -> np.ndarray:
    """I.i.d. uniform ``D x Q`` data matrix over the plan's alphabet."""
    return plan.alphabet.random_symbols((plan.D, plan.Q), rng)


def _check_subchannel(plan: EncodingPlan, n: int):
    if not 0 <= n < plan.N:
        raise IndexError(f"subchannel index {n} out of range for N={plan.N}")


def data_row_indices(plan: EncodingPlan, n: int) -> np.ndarray:
    """Rows of the data matrix carried by subchannel ``n`` (shared block first)."""
    _check_subchannel(plan, n)
    start = plan.D0 + sum(plan.Dn[:n])
    return np.concatenate([np.arange(plan.D0), start + np.arange(plan.Dn[n])]).astype(int)


def build_selection_matrix(n: int, plan: EncodingPlan) -> np.ndarray:
    """Binary ``(D0+D_n) x D`` matrix ``F`` with ``F @ data == [data_0; data_n]``."""
    idx = data_row_indices(plan, n)
    F = np.zeros((idx.size, plan.D))
    F[np.arange(idx.size), idx] = 1.0
    return F


def assemble_symbol_matrix(plan: EncodingPlan, data, n: int) -> np.ndarray:
    """``L x (Q+1)`` codeword matrix of subchannel ``n``; last column is all-one."""
    data = np.asarray(data, dtype=complex).reshape(-1, plan.Q) if plan.Q else np.zeros((plan.D, 0))
    if data.shape != (plan.D, plan.Q):
        raise InvalidInputError(f"data has shape {data.shape}, plan expects {(plan.D, plan.Q)}")
    body = np.vstack([plan.pilots[n], data[plan.row_indices[n]]])
    return np.hstack([body, np.ones((plan.L, 1))])


def transmission_rate(plan: EncodingPlan) -> Fraction:
    """Bits per subchannel use per tag, as an exact rational."""
    return Fraction(plan.D, plan.N * plan.L) * plan.alphabet.bits_per_symbol


@dataclass(frozen=True)
class Verdict:
    holds: bool
    failed: Optional[str] = None
    reference_subchannel: Optional[int] = None
    details: dict = field(default_factory=dict)

    def __str__(self):
        return "holds" if self.holds else f"fails({self.failed})"


def _with_ones(block: np.ndarray) -> np.ndarray:
    return np.hstack([block, np.ones((block.shape[0], 1))])


def _check_block(plan: EncodingPlan, D0_block) -> np.ndarray:
    D0_block = np.asarray(D0_block, dtype=complex).reshape(-1, plan.Q) if plan.Q else np.zeros((plan.D0, 0))
    if D0_block.shape[0] != plan.D0:
        raise InvalidInputError(f"D0 block has {D0_block.shape[0]} rows, plan expects {plan.D0}")
    if not plan.alphabet.contains(D0_block):
        raise InvalidInputError("D0 block entry off the constellation")
    return D0_block


def _rank(A: np.ndarray, policy: RankPolicy) -> int:
    if A.shape[0] == 0 or A.shape[1] == 0:
        return 0
    return numerical_rank(A, policy)


def _product_rank(C: np.ndarray, B: np.ndarray, policy: RankPolicy) -> int:
    """Rank of ``C @ B`` with the tolerance scaled by ``||C|| ||B||``.

    The product of a data block and a null-space basis can vanish up to
    roundoff; judging it against its own largest singular value would call
    that roundoff full rank.
    """
    if C.shape[0] == 0 or B.shape[1] == 0:
        return 0
    if policy.exact_mode:
        return numerical_rank(C @ B, policy)
    s = np.linalg.svd(C @ B, compute_uv=False)
    scale = np.linalg.norm(C, 2) * np.linalg.norm(B, 2)
    return int(np.count_nonzero(s > policy.relative_tolerance * scale))


# --- exact null spaces over the Gaussian rationals -------------------------


def _q(z):
    return (Fraction(int(round(z.real))), Fraction(int(round(z.imag))))


def _qmul(x, y):
    return (x[0] * y[0] - x[1] * y[1], x[0] * y[1] + x[1] * y[0])


def _qsub(x, y):
    return (x[0] - y[0], x[1] - y[1])


def _qdiv(x, y):
    n = y[0] * y[0] + y[1] * y[1]
    return ((x[0] * y[0] + x[1] * y[1]) / n, (x[1] * y[0] - x[0] * y[1]) / n)


def _exact_null_space(A: np.ndarray) -> np.ndarray:
    """Null-space basis with Gaussian-integer entries (columns), by exact RREF."""
    m, n = A.shape
    if m == 0:
        return np.eye(n, dtype=complex)
    exact_rank(A)  # validates Gaussian-integer entries
    R = [[_q(v) for v in row] for row in A]
    zero = (Fraction(0), Fraction(0))
    pivots = []
    r = 0
    for c in range(n):
        piv = next((i for i in range(r, m) if R[i][c] != zero), None)
        if piv is None:
            continue
        R[r], R[piv] = R[piv], R[r]
        p = R[r][c]
        R[r] = [_qdiv(v, p) for v in R[r]]
        for i in range(m):
            if i != r and R[i][c] != zero:
                f = R[i][c]
                R[i] = [_qsub(a, _qmul(f, b)) for a, b in zip(R[i], R[r])]
        pivots.append(c)
        r += 1
        if r == m:
            break
    basis = []
    for free in (c for c in range(n) if c not in pivots):
        vec = [zero] * n
        vec[free] = (Fraction(1), Fraction(0))
        for i, pc in enumerate(pivots):
            vec[pc] = _qsub(zero, R[i][free])
        denom = 1
        for re, im in vec:
            denom = np.lcm(denom, np.lcm(re.denominator, im.denominator))
        basis.append([complex(int(re * denom), int(im * denom)) for re, im in vec])
    if not basis:
        return np.zeros((n, 0), dtype=complex)
    return np.array(basis, dtype=complex).T


def _null(A: np.ndarray, policy: RankPolicy) -> np.ndarray:
    if A.shape[0] == 0:
        return np.eye(A.shape[1], dtype=complex)
    if policy.exact_mode:
        return _exact_null_space(A)
    return null_space_basis(A, policy)


def check_theorem_conditions(plan: EncodingPlan, D0_block, policy: RankPolicy = DEFAULT_POLICY) -> Verdict:
    """Sufficient conditions for unique noiseless recovery.

    ``pilot_rank``: the stacked ``[P 1]`` has rank ``Q+1``.
    ``null_space_intersection``: for some reference subchannel ``m``, the
    Minkowski sum ``null([P_n 1]) + null([P_m 1])`` meets ``null([D0 1])``
    only at zero for every ``n``. A subspace ``col(B)`` meets ``null(C)``
    trivially iff ``rank(C B) == rank(B)``.
    """
    D0_block = _check_block(plan, D0_block)
    Q1 = plan.Q + 1
    stacked = plan.stacked_pilot_matrix()
    pilot_rank = _rank(stacked, policy)
    if pilot_rank < Q1:
        return Verdict(False, PILOT_RANK, details={"pilot_rank": pilot_rank})

    nulls = [_null(plan.pilot_matrix(n), policy) for n in range(plan.N)]
    shared = _with_ones(D0_block)
    for m in range(plan.N):
        ok = True
        for n in range(plan.N):
            basis = np.hstack([nulls[n], nulls[m]])
            r = _rank(basis, policy)
            if r and _product_rank(shared, basis, policy) != r:
                ok = False
                break
        if ok:
            return Verdict(True, reference_subchannel=m, details={"pilot_rank": pilot_rank})
    return Verdict(False, NULL_SPACE_INTERSECTION, details={"pilot_rank": pilot_rank})


def check_restrictive_conditions(plan: EncodingPlan, D0_block, policy: RankPolicy = DEFAULT_POLICY) -> Verdict:
    """Stronger, rank-only conditions that imply :func:`check_theorem_conditions`.

    Some subchannel carries a full-rank ``[P_m 1]`` and every stacked
    ``[P_n 1; D0 1]`` has rank ``Q+1``.
    """
    D0_block = _check_block(plan, D0_block)
    Q1 = plan.Q + 1
    full = [m for m in range(plan.N) if _rank(plan.pilot_matrix(m), policy) == Q1]
    if not full:
        return Verdict(False, SINGLE_SUBCHANNEL_PILOT_RANK)
    shared = _with_ones(D0_block)
    for n in range(plan.N):
        if _rank(np.vstack([plan.pilot_matrix(n), shared]), policy) < Q1:
            return Verdict(False, STACKED_PILOT_DATA_RANK, reference_subchannel=full[0], details={"subchannel": n})
    return Verdict(True, reference_subchannel=full[0])


def largest_certified_rate(L: int, Q: int, M: int = 2, N: int = 1, policy: RankPolicy = DEFAULT_POLICY) -> Fraction:
    """Highest rate reachable with Hadamard pilots and no shared data block.

    Pilot counts are tried from 1 upwards; the first count whose plan passes
    :func:`check_theorem_conditions` fixes the rate.
    """
    if L < Q + 2 or Q < 1:
        raise InvalidInputError(f"infeasible dimensions L={L}, Q={Q}: need L >= Q+2")
    for count in range(1, L):
        plan = EncodingPlan.with_hadamard_pilots(Q, L, [count] * N, D0=0, M=M)
        if check_theorem_conditions(plan, np.zeros((0, Q)), policy).holds:
            return transmission_rate(plan)
    raise InvalidInputError(f"no certified plan for L={L}, Q={Q}")


# --- brute-force uniqueness oracle -----------------------------------------


@dataclass(frozen=True)
class OracleResult:
    unique: bool
    witness: Optional[np.ndarray] = None
    passing: int = 0
    candidates: int = 0


def enumerate_candidates(M: int, D: int, Q: int, chunk: int = 4096):
    """Yield ``(c, D, Q)`` index arrays over all data matrices.

    Candidates come in lexicographic order of the column-major vectorized
    index matrix.
    """
    total = M ** (D * Q)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        digits = np.empty((flat.size, D * Q), dtype=int)
        rem = flat.copy()
        for pos in range(D * Q - 1, -1, -1):
            digits[:, pos] = rem % M
            rem //= M
        yield digits.reshape(flat.size, Q, D).transpose(0, 2, 1)


def _structured(V: np.ndarray, Q: int, K_bar: int, max_delay: int, rtol: float) -> np.ndarray:
    """Mask over candidates: rows ``q < Q`` of every ``V_n`` sit in a common window.

    ``V`` has shape ``(c, N, Q+1, K_s)``.
    """
    c, N, _, K_s = V.shape
    scale = np.sqrt(np.sum(np.abs(V) ** 2, axis=(2, 3), keepdims=True)) + 1e-300
    energy = np.abs(V[:, :, :Q, :]) / scale  # (c, N, Q, K_s)
    ok = np.ones(c, dtype=bool)
    for q in range(Q):
        any_d = np.zeros(c, dtype=bool)
        for d in range(max_delay + 1):
            outside = np.ones(K_s, dtype=bool)
            outside[d : d + K_bar] = False
            leak = energy[:, :, q, outside].max(axis=(1, 2)) if outside.any() else np.zeros(c)
            any_d |= leak <= rtol
        ok &= any_d
    return ok


def uniqueness_oracle(
    plan: EncodingPlan,
    true_data,
    channel,
    max_delay: Optional[int] = None,
    policy: RankPolicy = DEFAULT_POLICY,
    budget: int = EXHAUSTIVE_BUDGET,
) -> OracleResult:
    """Exhaustively check whether the noiseless factorization is unique.

    Every candidate data matrix ``U`` builds left factors ``T_n``; it passes
    when each noiseless ``Y_n`` lies in ``col(T_n)`` and the implied right
    factors have the shifted-support structure with a common per-tag offset
    no larger than ``max_delay``. Unique iff the true data is the only
    passing candidate; otherwise the lexicographically smallest other
    passing candidate is returned as witness.
    """
    M, D, Q = plan.M, plan.D, plan.Q
    total = M ** (D * Q)
    if total > budget:
        raise ScaleError(f"{total} candidates exceed the exhaustive budget {budget}")
    true_data = np.asarray(true_data, dtype=complex).reshape(D, Q)
    true_idx = plan.alphabet.index_of(true_data)
    K_bar = channel.K_bar
    A = channel.response_matrices()
    K_s = A.shape[-1]
    if max_delay is None:
        max_delay = K_s - K_bar
    Y = np.stack([assemble_symbol_matrix(plan, true_data, n) @ A[n] for n in range(plan.N)])
    ynorm = np.sqrt(np.sum(np.abs(Y) ** 2, axis=(1, 2)))
    tol = max(policy.relative_tolerance * 1e2, 1e-9)

    passing, witness = 0, None
    pts = plan.alphabet.points
    for idx in enumerate_candidates(M, D, Q):
        U = pts[idx]
        c = U.shape[0]
        ok = np.ones(c, dtype=bool)
        V_all = np.empty((c, plan.N, Q + 1, K_s), dtype=complex)
        for n in range(plan.N):
            P = np.broadcast_to(plan.pilots[n], (c,) + plan.pilots[n].shape)
            body = np.concatenate([P, U[:, plan.row_indices[n], :]], axis=1)
            T = np.concatenate([body, np.ones((c, plan.L, 1))], axis=2)
            V = np.linalg.pinv(T) @ Y[n]
            resid = np.sqrt(np.sum(np.abs(Y[n] - T @ V) ** 2, axis=(1, 2)))
            ok &= resid <= tol * ynorm[n]
            V_all[:, n] = V
        if ok.any():
            ok[ok] = _structured(V_all[ok], Q, K_bar, max_delay, tol)
        for i in np.flatnonzero(ok):
            passing += 1
            if witness is None and not np.array_equal(idx[i], true_idx):
                witness = U[i].copy()
    return OracleResult(unique=witness is None, witness=witness, passing=passing, candidates=total)
