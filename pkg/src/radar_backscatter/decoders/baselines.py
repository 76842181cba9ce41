"""Reference decoders: pilot-only LMMSE, unstructured ALS, genie ML with known channel."""

from __future__ import annotations

import numpy as np

from ..encoding import EXHAUSTIVE_BUDGET, EncodingPlan, ScaleError
from ..model import MeasurementSet, SystemConfig, channel_covariances
from ..numerics import InvalidInputError, _ridge
from .alternating import DecodeResult, DecoderSettings, _check_dims, _initial_data, _stopped
from .updates import alphabet_candidates, build_left_factors

__all__ = [
    "InfeasibleError",
    "AmbiguityError",
    "lmmse_baseline_decode",
    "plain_als_baseline_decode",
    "ml_csi_decode",
]


class InfeasibleError(RuntimeError):
    """The decoder cannot run on this plan (e.g. a subchannel without pilots)."""


class AmbiguityError(np.linalg.LinAlgError):
    """Pilot-based ambiguity removal failed."""


def lmmse_baseline_decode(meas: MeasurementSet, plan: EncodingPlan, config: SystemConfig) -> DecodeResult:
    """Two-stage linear MMSE: channel from pilots, then data from the channel estimate.

    Uses the generator's second-order statistics as priors. Shared data rows
    combine the observations of every subchannel.
    """
    _check_dims(meas, plan)
    if meas.mask is not None:
        raise InvalidInputError("the LMMSE baseline does not handle masks")
    Y = meas.Y
    N, Q, K_s = plan.N, plan.Q, Y.shape[2]
    sigma2 = config.noise_power
    tag_cov, radar_cov = channel_covariances(config)
    prior = np.zeros(((Q + 1) * K_s,) * 2)
    for q in range(Q):
        prior[q * K_s : (q + 1) * K_s, q * K_s : (q + 1) * K_s] = tag_cov
    prior[Q * K_s :, Q * K_s :] = radar_cov

    A_hat = np.empty((N, Q + 1, K_s), dtype=complex)
    for n in range(N):
        p = plan.pilots[n].shape[0]
        if p == 0:
            raise InfeasibleError(f"subchannel {n} carries no pilots")
        # rows of Y_p stacked: y = (X_p kron I) a, a = rows of A_n stacked
        H = np.kron(plan.pilot_matrix(n), np.eye(K_s))
        y = Y[n, :p].reshape(-1)
        S = H @ prior @ H.conj().T + sigma2 * np.eye(H.shape[0])
        a = prior @ H.conj().T @ np.linalg.solve(S, y)
        A_hat[n] = a.reshape(Q + 1, K_s)

    H = np.zeros((plan.D, Q, Q), dtype=complex)
    b = np.zeros((plan.D, Q), dtype=complex)
    for n in range(N):
        p = plan.pilots[n].shape[0]
        G = A_hat[n, :Q].T
        rows = plan.row_indices[n]
        H[rows] += G.conj().T @ G
        b[rows] += (Y[n, p:] - A_hat[n, Q]) @ G.conj()
    # unit-power symbols
    H += sigma2 * np.eye(Q)
    U_soft = np.linalg.solve(H, b[..., None])[..., 0]
    return DecodeResult(plan.alphabet.slice(U_soft), A_hat, np.array([]), 0, True, U_soft=U_soft)


def plain_als_baseline_decode(meas: MeasurementSet, plan: EncodingPlan, settings: DecoderSettings = DecoderSettings()):
    """Unstructured regularized ALS on ``Y_1 = T_1 V_1``, then pilot-based disambiguation.

    After convergence ``R^{-1} = pinv(T_p) [P_1 1]`` maps the factors back
    to the codeword basis: data ``[T_d R^{-1}]_{:, :Q}`` (sliced) and
    channel ``R V``.
    """
    _check_dims(meas, plan)
    if plan.N != 1:
        raise InfeasibleError("the ALS baseline is defined for a single subchannel")
    if meas.mask is not None:
        raise InvalidInputError("the ALS baseline does not handle masks")
    Y = meas.Y[0]
    lu, lv = settings.lambda_u, settings.lambda_v
    Q1 = plan.Q + 1
    T = build_left_factors(plan, _initial_data(plan, settings))[0]
    trace, converged = [], False
    for _ in range(settings.max_iterations):
        V = _ridge(T, Y, lv)
        T = np.linalg.solve(V @ V.conj().T + lu * np.eye(Q1), V @ Y.conj().T).conj().T
        f = np.sum(np.abs(Y - T @ V) ** 2) + lu * np.sum(np.abs(T) ** 2) + lv * np.sum(np.abs(V) ** 2)
        trace.append(float(f))
        if _stopped(trace, settings.rel_tolerance):
            converged = True
            break
    p = plan.pilots[0].shape[0]
    if p < Q1:
        raise AmbiguityError(f"{p} pilot rows cannot resolve a {Q1}x{Q1} ambiguity")
    R_inv = np.linalg.pinv(T[:p]) @ plan.pilot_matrix(0)
    if np.linalg.matrix_rank(R_inv) < Q1:
        raise AmbiguityError("pilot-based ambiguity matrix is singular")
    U_soft = (T[p:] @ R_inv)[:, : plan.Q]
    A_hat = np.linalg.solve(R_inv, V)
    return DecodeResult(plan.alphabet.slice(U_soft), A_hat[None], np.array(trace), len(trace), converged, U_soft=U_soft)


def ml_csi_decode(meas: MeasurementSet, plan: EncodingPlan, A_true, budget: int = EXHAUSTIVE_BUDGET) -> DecodeResult:
    """Maximum-likelihood data with the true subchannel matrices known.

    The likelihood separates over data rows, so each row is searched over
    its ``|X|^Q`` candidates; ties resolve lexicographically.
    """
    _check_dims(meas, plan)
    if plan.M ** (plan.D * plan.Q) > budget:
        raise ScaleError(f"|X|^(DQ) = {plan.M}^{plan.D * plan.Q} exceeds the exhaustive budget {budget}")
    A_true = np.asarray(A_true, dtype=complex)
    Y, mask, Q = meas.Y, meas.mask, plan.Q
    X = alphabet_candidates(plan.alphabet, Q)
    cost = np.zeros((plan.D, X.shape[0]))
    for n in range(plan.N):
        p = plan.pilots[n].shape[0]
        R = Y[n, p:] - A_true[n, Q]
        diff = R[:, :, None] - (A_true[n, :Q].T @ X.T)[None]
        sq = np.abs(diff) ** 2
        if mask is not None:
            sq = np.where(mask[n, p:, :, None], sq, 0)
        cost[plan.row_indices[n]] += sq.sum(axis=1)
    U_hat = X[np.argmin(cost, axis=1)]
    return DecodeResult(U_hat, A_true.copy(), np.array([]), 0, True)
