"""Semi-blind block-coordinate-descent decoders.

Two families share the data-symbol update:

* ``asce`` / ``r_asce`` fit unstructured subchannel matrices ``V_n``;
* ``asce_d`` / ``r_asce_d`` fit per-tag delays, windowed tag responses and
  free radar rows.

The plain names search the data exhaustively over the alphabet, the ``r_``
variants relax it to complex values and slice once at convergence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from ..encoding import EXHAUSTIVE_BUDGET, EncodingPlan
from ..model import MeasurementSet
from ..numerics import InvalidInputError, RankDeficiencyError
from .updates import (
    build_left_factors,
    objective,
    update_delay_and_v,
    update_g,
    update_U_exhaustive,
    update_U_relaxed,
    update_V,
)

__all__ = [
    "DecoderSettings",
    "DecodeResult",
    "asce_decode",
    "r_asce_decode",
    "asce_d_decode",
    "r_asce_d_decode",
    "decode_with_mask",
    "DECODERS",
]


@dataclass(frozen=True)
class DecoderSettings:
    lambda_u: float = 1.0
    lambda_v: float = 0.1
    max_iterations: int = 500
    rel_tolerance: float = 1e-8
    exhaustive_u: bool = False
    init_seed: int = 0
    budget: int = EXHAUSTIVE_BUDGET
    init: str = "pilot"  # "pilot" or "random"

    def __post_init__(self):
        if self.init not in ("pilot", "random"):
            raise InvalidInputError(f"init must be 'pilot' or 'random', got {self.init!r}")
        if not self.rel_tolerance > 0:
            raise InvalidInputError("rel_tolerance must be positive")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be >= 1")


@dataclass
class DecodeResult:
    U_hat: np.ndarray  # sliced data estimate (D, Q)
    V_hat: np.ndarray  # subchannel estimates (N, Q+1, K_s)
    objective_trace: np.ndarray
    iterations: int
    converged: bool
    delays_hat: Optional[np.ndarray] = None
    U_soft: Optional[np.ndarray] = None


def _check_dims(meas: MeasurementSet, plan: EncodingPlan):
    N, L, K_s = meas.Y.shape
    if N != plan.N or L != plan.L:
        raise InvalidInputError(f"measurements (N={N}, L={L}) do not match plan (N={plan.N}, L={plan.L})")
    if plan.Q + 1 > K_s:
        raise InvalidInputError("Q+1 exceeds K_s")


def _stopped(trace, tol) -> bool:
    return len(trace) >= 2 and abs(trace[-1] - trace[-2]) < tol * trace[-2]


def _initial_data(plan: EncodingPlan, settings: DecoderSettings) -> np.ndarray:
    rng = np.random.default_rng(settings.init_seed)
    return plan.alphabet.random_symbols((plan.D, plan.Q), rng)


def _pilot_mask(meas: MeasurementSet, plan: EncodingPlan) -> np.ndarray:
    mask = np.zeros(meas.Y.shape, dtype=bool)
    for n in range(plan.N):
        mask[n, : plan.pilots[n].shape[0]] = True
    if meas.mask is not None:
        mask &= meas.mask
    return mask


def _structured_sweep(T, V, Y, lam, K_bar, max_delay, mask, delays):
    Q = T.shape[2] - 1
    for q in range(Q):
        d, vbar, _ = update_delay_and_v(q, T, V, Y, lam, K_bar, max_delay, mask)
        delays[q] = d
        V[:, q] = 0
        V[:, q, d : d + K_bar] = vbar
    V[:, Q] = update_g(T, V, Y, lam, mask)


def _fit_channels(T, meas: MeasurementSet, lambda_v, mask=None):
    return np.stack([update_V(T[n], meas.Y[n], lambda_v, None if mask is None else mask[n]) for n in range(T.shape[0])])


def _starting_point(meas, plan, settings):
    """Data estimate and channel the iterations start from.

    With ``init="pilot"`` every ``V_n`` is first fitted by ridge on the pilot
    rows alone and the variant's own data update gives the starting data;
    the starting channel is then refitted on all observed rows. With
    ``init="random"`` (or when the pilot fit is singular because
    ``lambda_v = 0``) the data are drawn uniformly from the alphabet and the
    channel starts at zero.
    """
    V = np.zeros((plan.N, plan.Q + 1, meas.Y.shape[2]), dtype=complex)
    if settings.init == "random":
        return _initial_data(plan, settings), V
    T = build_left_factors(plan, np.zeros((plan.D, plan.Q)))
    try:
        V = _fit_channels(T, meas, settings.lambda_v, _pilot_mask(meas, plan))
        U = _update_U(meas.Y, V, plan, settings, meas.mask)
        return U, _fit_channels(build_left_factors(plan, U), meas, settings.lambda_v, meas.mask)
    except RankDeficiencyError:
        return _initial_data(plan, settings), V


def _update_U(Y, V, plan, settings, mask):
    if settings.exhaustive_u:
        return update_U_exhaustive(Y, V, plan, settings.lambda_u, mask, settings.budget)
    return update_U_relaxed(Y, V, plan, settings.lambda_u, mask)


def _finish(plan, U, settings):
    if settings.exhaustive_u:
        return U, None
    return plan.alphabet.slice(U), U


def unstructured_decode(meas: MeasurementSet, plan: EncodingPlan, settings: DecoderSettings) -> DecodeResult:
    """Alternate ridge updates of every ``V_n`` with the data update."""
    _check_dims(meas, plan)
    Y, mask = meas.Y, meas.mask
    U, _ = _starting_point(meas, plan, settings)
    trace = []
    converged = False
    for _ in range(settings.max_iterations):
        T = build_left_factors(plan, U)
        V = _fit_channels(T, meas, settings.lambda_v, mask)
        U = _update_U(Y, V, plan, settings, mask)
        T = build_left_factors(plan, U)
        trace.append(objective(Y, T, V, U, settings.lambda_u, settings.lambda_v, mask))
        if _stopped(trace, settings.rel_tolerance):
            converged = True
            break
    U_hat, U_soft = _finish(plan, U, settings)
    return DecodeResult(U_hat, V, np.array(trace), len(trace), converged, U_soft=U_soft)


def structured_decode(
    meas: MeasurementSet,
    plan: EncodingPlan,
    settings: DecoderSettings,
    K_bar: int,
    max_delay: Optional[int] = None,
) -> DecodeResult:
    """Cyclic updates of each tag's (delay, responses), the radar rows, then the data."""
    _check_dims(meas, plan)
    Y, mask = meas.Y, meas.mask
    N, Q, K_s = plan.N, plan.Q, Y.shape[2]
    if max_delay is None:
        max_delay = K_s - K_bar
    if not 0 <= max_delay <= K_s - K_bar:
        raise InvalidInputError(f"max_delay={max_delay} outside [0, K_s - K_bar]")
    lam = settings.lambda_v
    # the first sweep subtracts the starting radar and tag rows from each tag's residual
    U, V = _starting_point(meas, plan, settings)
    delays = np.zeros(Q, dtype=int)
    trace = []
    converged = False
    for _ in range(settings.max_iterations):
        T = build_left_factors(plan, U)
        _structured_sweep(T, V, Y, lam, K_bar, max_delay, mask, delays)
        U = _update_U(Y, V, plan, settings, mask)
        T = build_left_factors(plan, U)
        trace.append(objective(Y, T, V, U, settings.lambda_u, lam, mask))
        if _stopped(trace, settings.rel_tolerance):
            converged = True
            break
    U_hat, U_soft = _finish(plan, U, settings)
    return DecodeResult(U_hat, V.copy(), np.array(trace), len(trace), converged, delays.copy(), U_soft)


def asce_decode(meas, plan, settings=DecoderSettings()) -> DecodeResult:
    return unstructured_decode(meas, plan, replace(settings, exhaustive_u=True))


def r_asce_decode(meas, plan, settings=DecoderSettings()) -> DecodeResult:
    return unstructured_decode(meas, plan, replace(settings, exhaustive_u=False))


def asce_d_decode(meas, plan, settings=DecoderSettings(), K_bar: int = 3, max_delay=None) -> DecodeResult:
    return structured_decode(meas, plan, replace(settings, exhaustive_u=True), K_bar, max_delay)


def r_asce_d_decode(meas, plan, settings=DecoderSettings(), K_bar: int = 3, max_delay=None) -> DecodeResult:
    return structured_decode(meas, plan, replace(settings, exhaustive_u=False), K_bar, max_delay)


DECODERS = {
    "asce": asce_decode,
    "r_asce": r_asce_decode,
    "asce_d": asce_d_decode,
    "r_asce_d": r_asce_d_decode,
}


def decode_with_mask(meas: MeasurementSet, plan, settings, variant: str, K_bar: int = 3, max_delay=None):
    """Run one of the four alternating decoders on partially observed measurements."""
    if meas.mask is None:
        raise InvalidInputError("decode_with_mask needs a measurement mask")
    if variant not in DECODERS:
        raise InvalidInputError(f"unknown variant {variant!r}; choose from {sorted(DECODERS)}")
    if variant.endswith("_d"):
        return DECODERS[variant](meas, plan, settings, K_bar, max_delay)
    return DECODERS[variant](meas, plan, settings)
