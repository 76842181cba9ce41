"""Monte Carlo harness: BER and NRMSE of the decoders along one sweep axis.

Every trial draws its own channel, data, noise and mask from a sub-seed
derived from ``(base_seed, axis index, trial)`` (or ``(base_seed, trial)``
when ``paired`` is set, which reuses the same frames at every axis point).
All decoders at one (point, trial) see the identical measurement set.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np

from .decoders import (
    AmbiguityError,
    DecoderSettings,
    InfeasibleError,
    asce_d_decode,
    asce_decode,
    lmmse_baseline_decode,
    ml_csi_decode,
    plain_als_baseline_decode,
    r_asce_d_decode,
    r_asce_decode,
)
from .encoding import (
    EncodingPlan,
    PSKAlphabet,
    ScaleError,
    assemble_symbol_matrix,
    check_theorem_conditions,
    draw_data,
    transmission_rate,
)
from .model import (
    SystemConfig,
    assemble_measurements,
    draw_mask,
    expected_channel_energy,
    generate_channel,
)
from .numerics import InvalidInputError, RankDeficiencyError

__all__ = [
    "AXES",
    "DECODER_NAMES",
    "WORKERS_ENV",
    "Scenario",
    "DecoderStats",
    "MetricPoint",
    "bit_error_counts",
    "compute_ber",
    "compute_nrmse",
    "point_setup",
    "run_scenario",
    "paired_difference",
]

AXES = ("snr_db", "pilots", "data", "d0", "d0_pilot_trade", "mask_fraction", "M", "Q", "N")
DECODER_NAMES = ("asce", "r_asce", "asce_d", "r_asce_d", "ml_csi", "lmmse", "als")
WORKERS_ENV = "RADAR_BACKSCATTER_WORKERS"

# failures recorded per point instead of aborting the sweep
_RECORDED = (ScaleError, InfeasibleError, AmbiguityError, RankDeficiencyError, InvalidInputError)


# --- metrics -----------------------------------------------------------------


def bit_error_counts(U_hat, D_true, alphabet: PSKAlphabet, D0: int = 0) -> Tuple[int, int, int]:
    """Differing Gray bits: (overall, first ``D0`` rows, remaining rows)."""
    U_hat = np.asarray(U_hat)
    D_true = np.asarray(D_true)
    if U_hat.shape != D_true.shape:
        raise InvalidInputError(f"shape mismatch {U_hat.shape} vs {D_true.shape}")
    if not 0 <= D0 <= D_true.shape[0]:
        raise InvalidInputError(f"D0={D0} outside [0, {D_true.shape[0]}]")
    diff = alphabet.bit_differences(alphabet.index_of(U_hat), alphabet.index_of(D_true))
    repeated = int(diff[:D0].sum())
    private = int(diff[D0:].sum())
    return repeated + private, repeated, private


def compute_ber(U_hat, D_true, alphabet: PSKAlphabet, D0: int = 0) -> Tuple[float, float, float]:
    """Bit error rates overall, on the repeated block and on the private block.

    An empty block reports 0.
    """
    total, repeated, private = bit_error_counts(U_hat, D_true, alphabet, D0)
    D, Q = np.asarray(D_true).shape
    bits = alphabet.bits_per_symbol * Q

    def rate(count, rows):
        return count / (rows * bits) if rows * bits else 0.0

    return rate(total, D), rate(repeated, D0), rate(private, D - D0)


def compute_nrmse(V_hats, A_trues, config: SystemConfig) -> float:
    """Root of the mean squared response error over the expected response energy.

    ``V_hats`` and ``A_trues`` are sequences (one entry per trial) of
    ``(N, Q+1, K_s)`` arrays.
    """
    V_hats = [np.asarray(v) for v in V_hats]
    A_trues = [np.asarray(a) for a in A_trues]
    if len(V_hats) != len(A_trues) or not V_hats:
        raise InvalidInputError("need matching, non-empty trial lists")
    sq = [np.sum(np.abs(a - v) ** 2) for v, a in zip(V_hats, A_trues)]
    return math.sqrt(float(np.mean(sq)) / expected_channel_energy(config))


# --- scenarios ---------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    """One sweep: a base configuration and plan, a single varying axis, the decoders."""

    name: str
    config: SystemConfig
    plan: EncodingPlan
    decoders: Tuple[str, ...]
    axis: str
    values: Tuple[float, ...]
    trials: int = 2000
    base_seed: int = 0
    paired: bool = False
    mask_fraction: float = 0.0
    max_iterations: int = 500
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "decoders", tuple(self.decoders))
        object.__setattr__(self, "values", tuple(self.values))
        if self.axis not in AXES:
            raise InvalidInputError(f"unknown axis {self.axis!r}; choose from {AXES}")
        if not self.values:
            raise InvalidInputError("sweep needs at least one value")
        if self.trials < 1:
            raise InvalidInputError("trials must be >= 1")
        unknown = [d for d in self.decoders if d not in DECODER_NAMES]
        if unknown or not self.decoders:
            raise InvalidInputError(f"unknown or missing decoders {unknown}; choose from {DECODER_NAMES}")
        if (self.config.Q, self.config.N, self.config.L, self.config.M) != (
            self.plan.Q,
            self.plan.N,
            self.plan.L,
            self.plan.M,
        ):
            raise InvalidInputError("config (Q, N, L, M) disagrees with the plan")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "description": self.description,
            "decoders": list(self.decoders),
            "trials": self.trials,
            "base_seed": self.base_seed,
            "paired": self.paired,
            "mask_fraction": self.mask_fraction,
            "max_iterations": self.max_iterations,
            "sweep": {"axis": self.axis, "values": list(self.values)},
            "config": self.config.to_dict(),
            "plan": self.plan.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        """Build from a nested mapping.

        ``plan`` holds either explicit pilot blocks or ``pilot_counts`` (and
        optionally ``D0``) for Hadamard pilots; ``Q``, ``L``, ``M`` and ``N``
        come from ``config`` in the latter case.
        """
        d = dict(d)
        known = {"name", "description", "decoders", "trials", "base_seed", "paired", "mask_fraction",
                 "max_iterations", "sweep", "config", "plan"}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown scenario keys: {sorted(unknown)}")
        for key in ("name", "decoders", "sweep", "config", "plan"):
            if key not in d:
                raise InvalidInputError(f"scenario is missing {key!r}")
        config = SystemConfig.from_dict(d["config"])
        plan_d = dict(d["plan"])
        if "pilot_counts" in plan_d:
            extra = set(plan_d) - {"pilot_counts", "D0"}
            if extra:
                raise InvalidInputError(f"unknown plan keys: {sorted(extra)}")
            counts = list(plan_d["pilot_counts"])
            if len(counts) != config.N:
                raise InvalidInputError(f"{len(counts)} pilot counts for N={config.N}")
            plan = EncodingPlan.with_hadamard_pilots(config.Q, config.L, counts, plan_d.get("D0", 0), config.M)
        else:
            plan = EncodingPlan.from_dict(plan_d)
        sweep = d["sweep"]
        if set(sweep) != {"axis", "values"}:
            raise InvalidInputError("sweep needs exactly 'axis' and 'values'")
        return cls(
            name=str(d["name"]),
            config=config,
            plan=plan,
            decoders=tuple(d["decoders"]),
            axis=sweep["axis"],
            values=tuple(sweep["values"]),
            trials=int(d.get("trials", 2000)),
            base_seed=int(d.get("base_seed", 0)),
            paired=bool(d.get("paired", False)),
            mask_fraction=float(d.get("mask_fraction", 0.0)),
            max_iterations=int(d.get("max_iterations", 500)),
            description=str(d.get("description", "")),
        )


def _counts(plan: EncodingPlan) -> List[int]:
    return list(plan.pilot_counts)


def _hadamard(config: SystemConfig, counts, D0, L=None, Q=None, M=None):
    Q = config.Q if Q is None else Q
    L = config.L if L is None else L
    M = config.M if M is None else M
    plan = EncodingPlan.with_hadamard_pilots(Q, L, counts, D0, M)
    return config.replace(Q=Q, N=plan.N, L=L, M=M), plan


def point_setup(s: Scenario, value) -> Tuple[SystemConfig, EncodingPlan, float]:
    """Configuration, plan and mask fraction at one axis value.

    Axes other than ``snr_db`` and ``mask_fraction`` rebuild the plan with
    Hadamard pilots:

    * ``pilots``: every subchannel carries ``value`` pilots, ``L`` fixed;
    * ``data``: every private block has ``value`` rows, ``L`` grows;
    * ``d0``: shared block of ``value`` rows, pilots and ``L`` fixed;
    * ``d0_pilot_trade``: shared block of ``value`` rows, the remaining rows
      split evenly between pilots and private data;
    * ``M``: alphabet size, data bits per frame held fixed by trading data
      rows for pilots;
    * ``Q``, ``N``: tag and subchannel counts, pilot counts per subchannel kept.
    """
    config, plan, rho = s.config, s.plan, s.mask_fraction
    counts, D0 = _counts(plan), plan.D0
    axis = s.axis
    if axis == "snr_db":
        return config.replace(snr_db=float(value)), plan, rho
    if axis == "mask_fraction":
        return config, plan, float(value)
    v = int(value)
    if v != value:
        raise InvalidInputError(f"axis {axis} needs integer values, got {value}")
    if axis == "pilots":
        config, plan = _hadamard(config, [v] * plan.N, D0)
    elif axis == "data":
        if len(set(counts)) != 1:
            raise InvalidInputError("the data axis needs equal pilot counts")
        config, plan = _hadamard(config, counts, D0, L=counts[0] + D0 + v)
    elif axis == "d0":
        config, plan = _hadamard(config, counts, v)
    elif axis == "d0_pilot_trade":
        p = (config.L - v) // 2
        config, plan = _hadamard(config, [p] * plan.N, v)
    elif axis == "M":
        bits = plan.alphabet.bits_per_symbol
        new_bits = int(round(math.log2(v)))
        rows = [D0] + list(plan.Dn)
        if any(r * bits % new_bits for r in rows):
            raise InvalidInputError(f"M={v}: data rows {rows} cannot keep the bit count")
        D0_new = D0 * bits // new_bits
        Dn_new = [r * bits // new_bits for r in plan.Dn]
        new_counts = [config.L - D0_new - r for r in Dn_new]
        config, plan = _hadamard(config, new_counts, D0_new, M=v)
    elif axis == "Q":
        config, plan = _hadamard(config, counts, D0, Q=v)
    elif axis == "N":
        config, plan = _hadamard(config, [counts[0]] * v, D0)
    return config, plan, rho


# --- results -----------------------------------------------------------------


@dataclass
class DecoderStats:
    ber: float
    ber_se: float
    ber_repeated: float
    ber_private: float
    nrmse: float
    mean_iters: float
    converged_fraction: float
    frames: int  # frames decoded without error
    failures: int = 0
    failure_message: str = ""
    bit_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))  # per trial, nan on failure
    sq_errors: np.ndarray = field(default_factory=lambda: np.zeros(0))  # per trial sum_n ||A_n - V_n||^2


@dataclass
class MetricPoint:
    axis: str
    value: float
    rate: Fraction
    trials: int
    condition_failures: int
    decoders: Dict[str, DecoderStats]

    def rows(self) -> List[dict]:
        out = []
        for name, st in self.decoders.items():
            out.append(
                {
                    self.axis: self.value,
                    "decoder": name,
                    "ber": st.ber,
                    "ber_se": st.ber_se,
                    "ber_repeated": st.ber_repeated,
                    "ber_private": st.ber_private,
                    "nrmse": st.nrmse,
                    "mean_iters": st.mean_iters,
                    "converged_fraction": st.converged_fraction,
                    "trials": self.trials,
                    "frames": st.frames,
                    "failures": st.failures,
                    "condition_failures": self.condition_failures,
                    "rate": float(self.rate),
                    "note": st.failure_message,
                }
            )
        return out


# --- execution ---------------------------------------------------------------


@dataclass(frozen=True)
class _Point:
    config: SystemConfig
    plan: EncodingPlan
    mask_fraction: float
    decoders: Tuple[str, ...]
    base_seed: int
    key: Tuple[int, ...]  # spawn-key prefix, () when paired
    max_iterations: int


def _decode(name, meas, plan, config, settings, channel):
    if name == "asce":
        return asce_decode(meas, plan, settings)
    if name == "r_asce":
        return r_asce_decode(meas, plan, settings)
    if name == "asce_d":
        return asce_d_decode(meas, plan, settings, config.K_bar, config.max_delay)
    if name == "r_asce_d":
        return r_asce_d_decode(meas, plan, settings, config.K_bar, config.max_delay)
    if name == "ml_csi":
        return ml_csi_decode(meas, plan, channel.response_matrices(), settings.budget)
    if name == "lmmse":
        return lmmse_baseline_decode(meas, plan, config)
    if name == "als":
        return plain_als_baseline_decode(meas, plan, settings)
    raise InvalidInputError(f"unknown decoder {name!r}")


def _run_trial(pt: _Point, trial: int):
    """Per-decoder (total, repeated, private errors, sq error, iterations, converged, message)."""
    seq = np.random.SeedSequence(pt.base_seed, spawn_key=pt.key + (trial,))
    frame_seq, mask_seq, init_seq = seq.spawn(3)
    rng = np.random.default_rng(frame_seq)
    config, plan = pt.config, pt.plan
    channel = generate_channel(config, rng)
    data = draw_data(plan, rng)
    X = [assemble_symbol_matrix(plan, data, n) for n in range(plan.N)]
    meas = assemble_measurements(X, channel, config.noise_power, rng)
    if pt.mask_fraction > 0:
        meas = meas.with_mask(draw_mask(meas.Y.shape, pt.mask_fraction, np.random.default_rng(mask_seq)))
    cond_fail = plan.D0 > 0 and not check_theorem_conditions(plan, data[: plan.D0]).holds
    settings = DecoderSettings(
        lambda_u=config.lambda_u,
        lambda_v=config.lambda_v,
        max_iterations=pt.max_iterations,
        init_seed=int(init_seq.generate_state(1)[0]),
    )
    A = channel.response_matrices()
    out = []
    for name in pt.decoders:
        try:
            res = _decode(name, meas, plan, config, settings, channel)
        except _RECORDED as exc:
            out.append((np.nan, np.nan, np.nan, np.nan, np.nan, False, f"{type(exc).__name__}: {exc}"))
            continue
        tot, rep, priv = bit_error_counts(res.U_hat, data, plan.alphabet, plan.D0)
        sq = float(np.sum(np.abs(A - res.V_hat) ** 2))
        out.append((tot, rep, priv, sq, res.iterations, res.converged, ""))
    return cond_fail, out


def _run_chunk(args):
    pt, trials = args
    return [_run_trial(pt, t) for t in trials]


def _aggregate(axis, value, pt: _Point, results) -> MetricPoint:
    config, plan = pt.config, pt.plan
    bits = plan.alphabet.bits_per_symbol * plan.Q
    energy = expected_channel_energy(config)
    stats = {}
    for j, name in enumerate(pt.decoders):
        rec = [r[1][j] for r in results]
        ok = [r for r in rec if not r[6]]
        errs = np.array([r[0] for r in rec], dtype=float)
        sq = np.array([r[3] for r in rec], dtype=float)
        msg = next((r[6] for r in rec if r[6]), "")
        if not ok:
            stats[name] = DecoderStats(*(np.nan,) * 7, 0, len(rec), msg, errs, sq)
            continue
        tot = np.array([r[0] for r in ok], dtype=float)
        per_frame = tot / (plan.D * bits)
        se = float(per_frame.std(ddof=1) / math.sqrt(len(ok))) if len(ok) > 1 else float("nan")
        rep = sum(r[1] for r in ok)
        priv = sum(r[2] for r in ok)
        stats[name] = DecoderStats(
            ber=float(per_frame.mean()),
            ber_se=se,
            ber_repeated=rep / (len(ok) * plan.D0 * bits) if plan.D0 else 0.0,
            ber_private=priv / (len(ok) * (plan.D - plan.D0) * bits) if plan.D > plan.D0 else 0.0,
            nrmse=math.sqrt(float(np.mean([r[3] for r in ok])) / energy),
            mean_iters=float(np.mean([r[4] for r in ok])),
            converged_fraction=float(np.mean([r[5] for r in ok])),
            frames=len(ok),
            failures=len(rec) - len(ok),
            failure_message=msg,
            bit_errors=errs,
            sq_errors=sq,
        )
    cond = sum(1 for r in results if r[0])
    return MetricPoint(axis, value, transmission_rate(plan), len(results), cond, stats)


def _workers(workers: Optional[int]) -> int:
    if workers is None:
        raw = os.environ.get(WORKERS_ENV, "1")
        try:
            workers = int(raw)
        except ValueError as exc:
            raise InvalidInputError(f"{WORKERS_ENV}={raw!r} is not an integer") from exc
    if workers < 1:
        raise InvalidInputError("worker count must be >= 1")
    return workers


def run_scenario(s: Scenario, workers: Optional[int] = None, chunk: int = 50) -> List[MetricPoint]:
    """Run every decoder on every (axis point, trial) and reduce to one MetricPoint per point.

    ``workers`` defaults to the ``RADAR_BACKSCATTER_WORKERS`` environment
    variable (1 when unset). Results do not depend on it.
    """
    workers = _workers(workers)
    points = []
    for i, value in enumerate(s.values):
        config, plan, rho = point_setup(s, value)
        key = () if s.paired else (i,)
        points.append(_Point(config, plan, rho, s.decoders, s.base_seed, key, s.max_iterations))
    tasks = []
    for i, pt in enumerate(points):
        for start in range(0, s.trials, chunk):
            tasks.append((i, (pt, range(start, min(start + chunk, s.trials)))))
    if workers == 1:
        outputs = [_run_chunk(t) for _, t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outputs = list(ex.map(_run_chunk, [t for _, t in tasks]))
    per_point: List[list] = [[] for _ in points]
    for (i, _), out in zip(tasks, outputs):
        per_point[i].extend(out)
    return [_aggregate(s.axis, v, pt, res) for v, pt, res in zip(s.values, points, per_point)]


def paired_difference(a: DecoderStats, b: DecoderStats, bits_per_frame: int) -> Tuple[float, float]:
    """Mean and standard error of the per-frame BER difference ``a - b`` over common frames."""
    x = (a.bit_errors - b.bit_errors) / bits_per_frame
    x = x[~np.isnan(x)]
    if x.size < 2:
        return float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
