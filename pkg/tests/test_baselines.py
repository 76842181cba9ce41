import numpy as np
import pytest

from radar_backscatter.decoders import (
    AmbiguityError,
    DecoderSettings,
    InfeasibleError,
    lmmse_baseline_decode,
    ml_csi_decode,
    plain_als_baseline_decode,
)
from radar_backscatter.encoding import EncodingPlan, ScaleError, assemble_symbol_matrix, draw_data
from radar_backscatter.model import SystemConfig, assemble_measurements, generate_channel
from radar_backscatter.numerics import InvalidInputError

PLAN = EncodingPlan.with_hadamard_pilots(2, 8, [4])


def frame(plan=PLAN, seed=0, snr_db=10.0, noise=1.0, **config):
    rng = np.random.default_rng(seed)
    config = SystemConfig(Q=plan.Q, N=plan.N, L=plan.L, M=plan.M, snr_db=snr_db, **config)
    data = draw_data(plan, rng)
    channel = generate_channel(config, rng)
    X = [assemble_symbol_matrix(plan, data, n) for n in range(plan.N)]
    return config, data, channel, assemble_measurements(X, channel, noise, rng)


class TestLMMSE:
    def test_outputs_on_constellation(self):
        for seed in range(20):
            config, _, _, meas = frame(seed=seed)
            r = lmmse_baseline_decode(meas, PLAN, config)
            assert PLAN.alphabet.contains(r.U_hat)

    def test_vanishing_noise_gives_exact_channel(self):
        # square full-rank pilots, no noise, and a prior far above the noise floor
        plan = EncodingPlan.with_hadamard_pilots(3, 8, [4])
        config, data, channel, meas = frame(plan, seed=1, snr_db=120.0, noise=0.0)
        r = lmmse_baseline_decode(meas, plan, config)
        A = channel.response_matrices()
        assert np.abs(r.V_hat - A).max() <= 1e-6 * np.abs(A).max()
        assert np.array_equal(r.U_hat, data)

    def test_subchannel_without_pilots(self):
        plan = EncodingPlan.with_hadamard_pilots(2, 8, [4, 0], D0=2)
        config, _, _, meas = frame(plan)
        with pytest.raises(InfeasibleError):
            lmmse_baseline_decode(meas, plan, config)

    def test_rejects_mask(self):
        config, _, _, meas = frame()
        with pytest.raises(InvalidInputError):
            lmmse_baseline_decode(meas.with_mask(np.ones(meas.Y.shape, dtype=bool)), PLAN, config)

    def test_uses_every_subchannel_for_shared_rows(self):
        plan = EncodingPlan.with_hadamard_pilots(2, 8, [4, 4], D0=4)
        errors = 0
        for seed in range(100):
            config, data, _, meas = frame(plan, seed=seed, snr_db=14.0)
            errors += np.count_nonzero(lmmse_baseline_decode(meas, plan, config).U_hat != data)
        assert errors / (100 * data.size) < 0.05


class TestALS:
    def test_monotone_trace(self):
        for seed in range(20):
            _, _, _, meas = frame(seed=seed)
            r = plain_als_baseline_decode(meas, PLAN)
            assert np.all(np.diff(r.objective_trace) <= 1e-12 * r.objective_trace[:-1])

    def test_noiseless_fixed_point_reproduces_measurements(self):
        s = DecoderSettings(lambda_u=1e-12, lambda_v=1e-12, rel_tolerance=1e-14, max_iterations=2000)
        for seed in range(10):
            _, data, channel, meas = frame(seed=seed, noise=0.0)
            r = plain_als_baseline_decode(meas, PLAN, s)
            # the returned factors are in the codeword basis
            T = assemble_symbol_matrix(PLAN, r.U_soft, 0)
            resid = np.linalg.norm(meas.Y[0] - T @ r.V_hat[0])
            assert resid <= 1e-9 * np.linalg.norm(meas.Y[0])
            assert np.array_equal(r.U_hat, data)

    def test_needs_enough_pilots(self):
        plan = EncodingPlan.with_hadamard_pilots(2, 8, [2])
        _, _, _, meas = frame(plan)
        with pytest.raises(AmbiguityError):
            plain_als_baseline_decode(meas, plan)

    def test_single_subchannel_only(self):
        plan = EncodingPlan.with_hadamard_pilots(2, 8, [4, 4])
        _, _, _, meas = frame(plan)
        with pytest.raises(InfeasibleError):
            plain_als_baseline_decode(meas, plan)


class TestMLCSI:
    def test_noiseless_truth(self, shared_block_plan):
        plan, _ = shared_block_plan
        for seed in range(10):
            _, data, channel, meas = frame(plan, seed=seed, noise=0.0)
            r = ml_csi_decode(meas, plan, channel.response_matrices())
            assert np.array_equal(r.U_hat, data)

    def test_single_symbol_matched_filter(self):
        plan = EncodingPlan.with_hadamard_pilots(1, 3, [2])  # D = Q = 1
        for seed in range(50):
            _, _, channel, meas = frame(plan, seed=seed, snr_db=0.0)
            A = channel.response_matrix(0)
            y = meas.Y[0, 2]
            cost = [np.sum(np.abs(y - (s * A[0] + A[1])) ** 2) for s in (1, -1)]
            expected = 1 if cost[0] <= cost[1] else -1
            assert ml_csi_decode(meas, plan, channel.response_matrices()).U_hat[0, 0] == expected

    def test_is_the_lower_envelope(self):
        from radar_backscatter.decoders import DECODERS

        errs = {"ml": 0, **{k: 0 for k in DECODERS}}
        for seed in range(300):
            _, data, channel, meas = frame(seed=seed, snr_db=4.0)
            errs["ml"] += not np.array_equal(ml_csi_decode(meas, PLAN, channel.response_matrices()).U_hat, data)
            for k, f in DECODERS.items():
                errs[k] += not np.array_equal(f(meas, PLAN).U_hat, data)
        assert all(errs["ml"] <= errs[k] for k in DECODERS)

    def test_budget(self):
        plan = EncodingPlan.with_hadamard_pilots(3, 12, [4])
        _, _, channel, meas = frame(plan)
        with pytest.raises(ScaleError):
            ml_csi_decode(meas, plan, channel.response_matrices())
