"""Closed-form and exhaustive block updates of the alternating decoders.

Shapes used throughout: ``Y`` is ``(N, L, K_s)``, left factors ``T`` are
``(N, L, Q+1)``, right factors ``V`` are ``(N, Q+1, K_s)``, the data estimate
``U`` is ``(D, Q)``. An optional boolean ``mask`` shaped like ``Y`` marks the
observed entries; unobserved entries are never read. Columns (or rows) that
are fully observed take the same arithmetic as the unmasked formulas.
"""

from __future__ import annotations

import itertools
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..encoding import EXHAUSTIVE_BUDGET, EncodingPlan, ScaleError
from ..numerics import RankDeficiencyError, _ridge

__all__ = [
    "build_left_factors",
    "objective",
    "update_V",
    "update_U_relaxed",
    "update_U_exhaustive",
    "update_delay_and_v",
    "update_g",
    "alphabet_candidates",
]


def build_left_factors(plan: EncodingPlan, U: np.ndarray) -> np.ndarray:
    """Stack of ``T_n = [[P_n, 1], [F_n U, 1]]`` for all subchannels."""
    dtype = np.result_type(U.dtype, complex)
    T = np.ones((plan.N, plan.L, plan.Q + 1), dtype=dtype)
    for n in range(plan.N):
        p = plan.pilots[n].shape[0]
        T[n, :p, : plan.Q] = plan.pilots[n]
        T[n, p:, : plan.Q] = U[plan.row_indices[n]]
    return T


def objective(Y, T, V, U, lambda_u: float, lambda_v: float, mask=None) -> float:
    resid = Y - T @ V
    if mask is not None:
        resid = np.where(mask, resid, 0)
    fit = np.sum(resid.real**2 + resid.imag**2)
    return float(fit + lambda_u * np.sum(np.abs(U) ** 2) + lambda_v * np.sum(np.abs(V) ** 2))


def update_V(T: np.ndarray, Y: np.ndarray, lambda_v: float, mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Ridge solution ``(T^H T + lambda_v I)^{-1} T^H Y`` for one subchannel.

    With a mask each column uses only its observed rows.
    """
    if mask is None:
        return _ridge(T, Y, lambda_v)
    V = np.empty((T.shape[1], Y.shape[1]), dtype=complex)
    full = mask.all(axis=0)
    if full.any():
        V[:, full] = _ridge(T, Y[:, full], lambda_v)
    cols = np.flatnonzero(~full)
    if cols.size:
        E = mask[:, cols].astype(float)
        G = np.einsum("lk,li,lj->kij", E, T.conj(), T) + lambda_v * np.eye(T.shape[1])
        b = np.einsum("lk,li->ki", E * Y[:, cols], T.conj())
        try:
            V[:, cols] = np.linalg.solve(G, b[..., None])[..., 0].T
        except np.linalg.LinAlgError as exc:
            raise RankDeficiencyError("singular masked normal matrix in some column") from exc
    return V


def _data_blocks(plan: EncodingPlan, Y, V, mask):
    """Per subchannel: (U rows, G_n, data-row targets Y_n2 - 1 g_n^T, data-row mask)."""
    Q = plan.Q
    for n in range(plan.N):
        p = plan.pilots[n].shape[0]
        G = V[n, :Q].T
        R = Y[n, p:] - V[n, Q][None, :]
        E = None if mask is None else mask[n, p:]
        yield plan.row_indices[n], G, R, E


def update_U_relaxed(Y, V, plan: EncodingPlan, lambda_u: float, mask=None) -> np.ndarray:
    """Unconstrained minimizer over complex ``U`` of the data-row fit.

    The ``(DQ) x (DQ)`` normal matrix is block diagonal with one ``Q x Q``
    block per data row, so it is solved row by row.
    """
    D, Q = plan.D, plan.Q
    H = np.zeros((D, Q, Q), dtype=complex)
    b = np.zeros((D, Q), dtype=complex)
    for rows, G, R, E in _data_blocks(plan, Y, V, mask):
        GhG = G.conj().T @ G
        if E is None:
            H[rows] += GhG
            b[rows] += R @ G.conj()
            continue
        full = E.all(axis=1)
        H[rows[full]] += GhG
        part = np.flatnonzero(~full)
        H[rows[part]] += np.einsum("ik,kq,kr->iqr", E[part].astype(float), G.conj(), G)
        b[rows] += np.where(E, R, 0) @ G.conj()
    H += lambda_u * np.eye(Q)
    try:
        return np.linalg.solve(H, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        raise RankDeficiencyError("singular data normal matrix; use lambda_u > 0") from exc


def alphabet_candidates(alphabet, Q: int) -> np.ndarray:
    """All ``|X|^Q`` rows, lexicographic in the phase indices."""
    idx = np.array(list(itertools.product(range(alphabet.M), repeat=Q)), dtype=int).reshape(-1, Q)
    return alphabet.points[idx]


def update_U_exhaustive(Y, V, plan: EncodingPlan, lambda_u: float, mask=None, budget: int = EXHAUSTIVE_BUDGET):
    """Global minimizer over ``U`` in the alphabet of the data-row fit.

    The fit separates over data rows, so the search is exact when run
    independently on each row's ``|X|^Q`` candidates. Ties resolve to the
    lexicographically smallest index vector.
    """
    if plan.M ** (plan.D * plan.Q) > budget:
        raise ScaleError(f"|X|^(DQ) = {plan.M}^{plan.D * plan.Q} exceeds the exhaustive budget {budget}")
    X = alphabet_candidates(plan.alphabet, plan.Q)
    cost = np.zeros((plan.D, X.shape[0]))
    for rows, G, R, E in _data_blocks(plan, Y, V, mask):
        diff = R[:, :, None] - (G @ X.T)[None]
        sq = diff.real**2 + diff.imag**2
        if E is not None:
            sq = np.where(E[:, :, None], sq, 0)
        cost[rows] += sq.sum(axis=1)
    cost += lambda_u * np.sum(np.abs(X) ** 2, axis=1)
    return X[np.argmin(cost, axis=1)]


def update_delay_and_v(q: int, T, V, Y, lambda_v: float, K_bar: int, max_delay: int, mask=None):
    """Joint update of tag ``q``'s delay and per-subchannel responses.

    For each candidate delay the responses take their ridge solution on the
    window; the returned delay minimizes the block objective (smallest on
    ties). Returns ``(delay, vbar, f)`` with ``vbar`` of shape ``(N, K_bar)``
    and ``f`` the block objective per candidate delay, constants included.
    """
    t = T[:, :, q]
    others = [j for j in range(T.shape[2]) if j != q]
    Ybar = Y - T[:, :, others] @ V[:, others]
    at2 = t.real**2 + t.imag**2
    den = lambda_v + at2.sum(axis=1)[:, None] * np.ones(Y.shape[2])
    if mask is not None:
        Ybar = np.where(mask, Ybar, 0)
        masked_den = lambda_v + np.einsum("nl,nlk->nk", at2, mask.astype(float))
        den = np.where(mask.all(axis=1), den, masked_den)
        if np.any(den == 0):
            raise RankDeficiencyError("fully masked column with lambda_v == 0")
    num = np.einsum("nl,nlk->nk", t.conj(), Ybar)
    gain = (num.real**2 + num.imag**2) / den
    energy = np.sum(Ybar.real**2 + Ybar.imag**2)
    windows = sliding_window_view(gain, K_bar, axis=1)[:, : max_delay + 1]
    f = energy - windows.sum(axis=(0, 2))
    d = int(np.argmin(f))
    vbar = num[:, d : d + K_bar] / den[:, d : d + K_bar]
    return d, vbar, f


def update_g(T, V, Y, lambda_v: float, mask=None) -> np.ndarray:
    """Radar rows minimizing the fit with all tag contributions fixed, ``(N, K_s)``."""
    Q = T.shape[2] - 1
    R = Y - T[:, :, :Q] @ V[:, :Q]
    if mask is None:
        return R.sum(axis=1) / (Y.shape[1] + lambda_v)
    den = mask.sum(axis=1) + lambda_v
    if np.any(den == 0):
        raise RankDeficiencyError("fully masked column with lambda_v == 0")
    return np.where(mask, R, 0).sum(axis=1) / den
