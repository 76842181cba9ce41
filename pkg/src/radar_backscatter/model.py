"""Statistical channel model and measurement synthesis.

Each subchannel ``n`` produces an ``L x K_s`` measurement ``Y_n = X_n A_n + W_n``
where the rows of ``A_n`` are the tags' delayed responses followed by the
unstructured radar interference row.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Sequence

import numpy as np

from .numerics import InvalidInputError

__all__ = [
    "SystemConfig",
    "ChannelRealization",
    "MeasurementSet",
    "db_to_linear",
    "build_shift_matrix",
    "generate_channel",
    "assemble_measurements",
    "draw_mask",
    "expected_channel_energy",
]


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


@dataclass(frozen=True)
class SystemConfig:
    """Scenario parameters. Powers are derived from the ratios with ``noise_power`` fixed."""

    Q: int = 2
    N: int = 1
    L: int = 8
    K_s: int = 8
    K_bar: int = 3
    M: int = 2
    max_delay: Optional[int] = None
    snr_db: float = 10.0
    sir_db: float = -10.0
    kappa_alpha_db: float = -10.0
    kappa_i_db: float = -10.0
    lambda_u: float = 1.0
    lambda_v: float = 0.1
    noise_power: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_delay is None:
            object.__setattr__(self, "max_delay", self.K_s - self.K_bar)
        problems = []
        if self.N < 1:
            problems.append("N >= 1")
        if not self.Q + 1 <= min(self.L, self.K_s):
            problems.append("Q+1 <= min(L, K_s)")
        if not 1 <= self.K_bar <= self.K_s:
            problems.append("1 <= K_bar <= K_s")
        if not 0 <= self.max_delay <= self.K_s - self.K_bar:
            problems.append("0 <= max_delay <= K_s - K_bar")
        if self.M not in (2, 4, 8, 16):
            problems.append("M in {2,4,8,16}")
        if self.noise_power <= 0:
            problems.append("noise_power > 0")
        if self.lambda_u < 0 or self.lambda_v < 0:
            problems.append("nonnegative regularization")
        if problems:
            raise InvalidInputError("invalid SystemConfig: need " + ", ".join(problems))

    def replace(self, **changes) -> "SystemConfig":
        if "K_s" in changes or "K_bar" in changes:
            changes.setdefault("max_delay", None)
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SystemConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    # power calibration; SNR and INR are per-entry response powers over noise
    @property
    def snr(self) -> float:
        return db_to_linear(self.snr_db)

    @property
    def inr(self) -> float:
        return self.snr / db_to_linear(self.sir_db)

    @property
    def sigma2_alpha_dif(self) -> float:
        return self.snr * self.noise_power / (db_to_linear(self.kappa_alpha_db) + 1)

    @property
    def sigma2_alpha_spe(self) -> float:
        return db_to_linear(self.kappa_alpha_db) * self.sigma2_alpha_dif

    @property
    def sigma2_i_dif(self) -> float:
        return self.inr * self.noise_power / (db_to_linear(self.kappa_i_db) + 1)

    @property
    def sigma2_i_spe(self) -> float:
        return db_to_linear(self.kappa_i_db) * self.sigma2_i_dif


@dataclass(frozen=True)
class ChannelRealization:
    delays: np.ndarray  # (Q,) integer offsets
    tag_responses: np.ndarray  # (N, Q, K_bar)
    radar_rows: np.ndarray  # (N, K_s)

    @property
    def N(self) -> int:
        return self.radar_rows.shape[0]

    @property
    def Q(self) -> int:
        return self.tag_responses.shape[1]

    @property
    def K_bar(self) -> int:
        return self.tag_responses.shape[2]

    @property
    def K_s(self) -> int:
        return self.radar_rows.shape[1]

    def response_matrix(self, n: int) -> np.ndarray:
        """``(Q+1) x K_s`` matrix: shifted tag responses, then the radar row."""
        A = np.zeros((self.Q + 1, self.K_s), dtype=complex)
        for q, d in enumerate(self.delays):
            A[q, d : d + self.K_bar] = self.tag_responses[n, q]
        A[self.Q] = self.radar_rows[n]
        return A

    def response_matrices(self) -> np.ndarray:
        return np.stack([self.response_matrix(n) for n in range(self.N)])


@dataclass(frozen=True)
class MeasurementSet:
    Y: np.ndarray  # (N, L, K_s)
    mask: Optional[np.ndarray] = None  # (N, L, K_s) bool, True = observed

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=complex)
        if Y.ndim != 3:
            raise InvalidInputError("Y must have shape (N, L, K_s)")
        object.__setattr__(self, "Y", Y)
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != Y.shape:
                raise InvalidInputError(f"mask shape {mask.shape} != Y shape {Y.shape}")
            object.__setattr__(self, "mask", mask)

    @property
    def N(self) -> int:
        return self.Y.shape[0]

    def with_mask(self, mask) -> "MeasurementSet":
        return MeasurementSet(self.Y, mask)


def build_shift_matrix(k: int, K_bar: int, K_s: int) -> np.ndarray:
    """``K_s x K_bar`` matrix with an identity block starting at row ``k``."""
    if not 0 <= k <= K_s - K_bar:
        raise InvalidInputError(f"invalid delay {k} for K_s={K_s}, K_bar={K_bar}")
    S = np.zeros((K_s, K_bar))
    S[k : k + K_bar] = np.eye(K_bar)
    return S


def _cn(rng: np.random.Generator, shape, var: float) -> np.ndarray:
    return np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_channel(config: SystemConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw delays, specular-plus-diffuse tag responses and radar rows."""
    Q, N, K_s, K_bar = config.Q, config.N, config.K_s, config.K_bar
    delays = rng.integers(0, config.max_delay + 1, size=Q)
    phase = np.exp(2j * np.pi * rng.random((N, Q)))
    tags = np.sqrt(config.sigma2_alpha_spe) * phase[:, :, None] * np.ones(K_bar)
    tags = tags + _cn(rng, (N, Q, K_bar), config.sigma2_alpha_dif)
    phase_i = np.exp(2j * np.pi * rng.random(N))
    radar = np.sqrt(config.sigma2_i_spe) * phase_i[:, None] * np.ones(K_s)
    radar = radar + _cn(rng, (N, K_s), config.sigma2_i_dif)
    return ChannelRealization(delays=delays, tag_responses=tags, radar_rows=radar)


def draw_mask(shape, mask_fraction: float, rng: np.random.Generator) -> Optional[np.ndarray]:
    """Each entry is observed independently with probability ``1 - mask_fraction``.

    The observation test is ``u >= mask_fraction`` on one uniform draw per
    entry, so masks drawn from the same stream are nested in the fraction.
    """
    if not 0 <= mask_fraction < 1:
        raise InvalidInputError("mask_fraction must be in [0, 1)")
    u = rng.random(shape)
    if mask_fraction == 0:
        return None
    return u >= mask_fraction


def assemble_measurements(
    X: Sequence[np.ndarray],
    channel: ChannelRealization,
    noise_power: float,
    rng: np.random.Generator,
    mask_fraction: float = 0.0,
    mask_rng: Optional[np.random.Generator] = None,
) -> MeasurementSet:
    """``Y_n = X_n A_n + W_n`` with circular Gaussian noise of variance ``noise_power``."""
    X = [np.asarray(x, dtype=complex) for x in X]
    if len(X) != channel.N:
        raise InvalidInputError(f"{len(X)} symbol matrices for {channel.N} subchannels")
    L = X[0].shape[0]
    for n, x in enumerate(X):
        if x.shape != (L, channel.Q + 1):
            raise InvalidInputError(f"X[{n}] has shape {x.shape}, expected {(L, channel.Q + 1)}")
        if not np.allclose(x[:, -1], 1):
            raise InvalidInputError(f"X[{n}] last column must be all-one")
    A = channel.response_matrices()
    Y = np.stack([X[n] @ A[n] for n in range(channel.N)])
    if noise_power > 0:
        Y = Y + _cn(rng, Y.shape, noise_power)
    mask = None
    if mask_fraction > 0 or mask_rng is not None:
        mask = draw_mask(Y.shape, mask_fraction, mask_rng if mask_rng is not None else rng)
    return MeasurementSet(Y=Y, mask=mask)


def expected_channel_energy(config: SystemConfig) -> float:
    """Mean of ``sum_n ||A_n||_F^2`` under the generator's statistics."""
    tag = config.N * config.Q * config.K_bar * (config.sigma2_alpha_spe + config.sigma2_alpha_dif)
    radar = config.N * config.K_s * (config.sigma2_i_spe + config.sigma2_i_dif)
    return tag + radar


def channel_covariances(config: SystemConfig):
    """Second-order statistics of one tag row and of the radar row of ``A_n``.

    Random specular phases make both zero-mean; the tag covariance averages
    the windowed specular-plus-diffuse covariance over the uniform delays.
    """
    K_s, K_bar = config.K_s, config.K_bar
    n_delays = config.max_delay + 1
    occ = np.zeros((n_delays, K_s))
    for d in range(n_delays):
        occ[d, d : d + K_bar] = 1.0
    both = occ.T @ occ / n_delays
    tag = config.sigma2_alpha_spe * both + config.sigma2_alpha_dif * np.diag(occ.mean(axis=0))
    radar = config.sigma2_i_spe * np.ones((K_s, K_s)) + config.sigma2_i_dif * np.eye(K_s)
    return tag, radar
