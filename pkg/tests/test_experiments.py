from fractions import Fraction

import numpy as np
import pytest

from radar_backscatter.encoding import EncodingPlan, PSKAlphabet
from radar_backscatter.experiments import (
    Scenario,
    bit_error_counts,
    compute_ber,
    compute_nrmse,
    paired_difference,
    point_setup,
    run_scenario,
)
from radar_backscatter.model import SystemConfig, expected_channel_energy, generate_channel
from radar_backscatter.numerics import InvalidInputError

BPSK, QPSK = PSKAlphabet(2), PSKAlphabet(4)


def scenario(**kw):
    base = dict(
        name="t",
        config=SystemConfig(),
        plan=EncodingPlan.with_hadamard_pilots(2, 8, [4]),
        decoders=("r_asce", "asce_d"),
        axis="snr_db",
        values=(6.0, 12.0),
        trials=6,
        base_seed=5,
    )
    base.update(kw)
    return Scenario(**base)


class TestBER:
    def test_perfect(self, rng):
        D = BPSK.random_symbols((4, 4), rng)
        assert compute_ber(D, D, BPSK, 2) == (0.0, 0.0, 0.0)

    def test_single_flip(self, rng):
        D = BPSK.random_symbols((4, 4), rng)
        U = D.copy()
        U[3, 1] *= -1
        assert compute_ber(U, D, BPSK) == (1 / 16, 0.0, 1 / 16)

    def test_gray_adjacent_qpsk(self):
        D = np.array([[1 + 0j]])
        assert compute_ber(np.array([[1j]]), D, QPSK)[0] == 0.5
        assert compute_ber(np.array([[-1 + 0j]]), D, QPSK)[0] == 1.0

    def test_decomposition_identity(self, rng):
        for _ in range(200):
            M = int(rng.choice([2, 4, 8]))
            a = PSKAlphabet(M)
            D, Q = rng.integers(1, 8, size=2)
            D0 = int(rng.integers(0, D + 1))
            U, T = a.random_symbols((D, Q), rng), a.random_symbols((D, Q), rng)
            tot, rep, priv = bit_error_counts(U, T, a, D0)
            assert tot == rep + priv

    def test_off_constellation(self):
        with pytest.raises(InvalidInputError):
            compute_ber(np.array([[0.3]]), np.array([[1.0]]), BPSK)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            compute_ber(np.ones((2, 2)), np.ones((2, 3)), BPSK)


class TestNRMSE:
    def test_exact(self, rng):
        A = [generate_channel(SystemConfig(), rng).response_matrices() for _ in range(5)]
        assert compute_nrmse(A, A, SystemConfig()) == 0.0

    def test_zero_estimate_is_about_one(self):
        c = SystemConfig(N=2)
        rng = np.random.default_rng(0)
        A = [generate_channel(c, rng).response_matrices() for _ in range(10000)]
        assert compute_nrmse([np.zeros_like(a) for a in A], A, c) == pytest.approx(1.0, rel=0.02)


class TestScenario:
    def test_round_trip(self):
        s = scenario(paired=True, mask_fraction=0.1)
        assert Scenario.from_dict(s.to_dict()) == s

    def test_pilot_count_form(self):
        d = scenario().to_dict()
        d["plan"] = {"pilot_counts": [4]}
        assert Scenario.from_dict(d).plan == scenario().plan

    @pytest.mark.parametrize(
        "changes",
        [dict(axis="snr"), dict(values=()), dict(trials=0), dict(decoders=("zf",)), dict(config=SystemConfig(Q=3))],
    )
    def test_invalid(self, changes):
        with pytest.raises(InvalidInputError):
            scenario(**changes)

    def test_sweep_needs_one_axis(self):
        d = scenario().to_dict()
        d["sweep"]["extra"] = 1
        with pytest.raises(InvalidInputError):
            Scenario.from_dict(d)


class TestPointSetup:
    def test_pilots(self):
        _, plan, _ = point_setup(scenario(axis="pilots", values=(3,)), 3)
        assert plan.pilot_counts == (3,) and plan.L == 8 and plan.D == 5

    def test_data(self):
        config, plan, _ = point_setup(scenario(axis="data", values=(50,)), 50)
        assert plan.L == config.L == 54 and plan.D == 50

    def test_d0(self):
        s = scenario(config=SystemConfig(N=2, L=16), plan=EncodingPlan.with_hadamard_pilots(2, 16, [4, 4]))
        s = scenario(config=s.config, plan=s.plan, axis="d0", values=(8,))
        _, plan, _ = point_setup(s, 8)
        assert plan.D0 == 8 and plan.Dn == (4, 4)

    def test_d0_pilot_trade(self):
        s = scenario(axis="d0_pilot_trade", values=(2,))
        _, plan, _ = point_setup(s, 2)
        assert plan.pilot_counts == (3,) and plan.D0 == 2 and plan.Dn == (3,)

    def test_qpsk_keeps_bit_count(self):
        s = scenario(config=SystemConfig(Q=3, L=52, K_s=8), plan=EncodingPlan.with_hadamard_pilots(3, 52, [4]))
        s = scenario(config=s.config, plan=s.plan, axis="M", values=(2, 4))
        _, plan, _ = point_setup(s, 4)
        assert plan.D * plan.alphabet.bits_per_symbol == 48 and plan.M == 4
        assert plan.pilot_counts == (28,)

    def test_tags_and_subchannels(self):
        config, plan, _ = point_setup(scenario(axis="Q", values=(3,)), 3)
        assert config.Q == plan.Q == 3
        config, plan, _ = point_setup(scenario(axis="N", values=(3,)), 3)
        assert config.N == plan.N == 3

    def test_mask_fraction(self):
        assert point_setup(scenario(axis="mask_fraction", values=(0.3,)), 0.3)[2] == 0.3

    def test_integer_axes_reject_fractions(self):
        with pytest.raises(InvalidInputError):
            point_setup(scenario(axis="pilots", values=(2.5,)), 2.5)


class TestRun:
    def test_deterministic(self):
        a, b = run_scenario(scenario()), run_scenario(scenario())
        assert [p.rows() for p in a] == [p.rows() for p in b]

    def test_parallel_matches_serial(self):
        a = run_scenario(scenario(), workers=1, chunk=2)
        b = run_scenario(scenario(), workers=2, chunk=4)
        assert [p.rows() for p in a] == [p.rows() for p in b]

    def test_point_contents(self):
        points = run_scenario(scenario())
        assert [p.value for p in points] == [6.0, 12.0]
        for p in points:
            assert p.rate == Fraction(1, 2) and p.trials == 6 and p.condition_failures == 0
            for st in p.decoders.values():
                assert 0 <= st.ber <= 1 and st.nrmse >= 0 and st.frames == 6
                assert st.bit_errors.shape == (6,)

    def test_failures_are_recorded(self):
        # three tags over 12 data rows is beyond the exhaustive budget
        s = scenario(
            config=SystemConfig(Q=3, L=16),
            plan=EncodingPlan.with_hadamard_pilots(3, 16, [4]),
            decoders=("asce", "r_asce"),
            values=(10.0,),
            trials=2,
        )
        (p,) = run_scenario(s)
        assert p.decoders["asce"].failures == 2 and p.decoders["asce"].frames == 0
        assert "ScaleError" in p.decoders["asce"].failure_message
        assert p.decoders["r_asce"].frames == 2

    def test_condition_failures_counted(self):
        # split pilots: whether a frame is certified depends on its shared data block
        s = scenario(
            config=SystemConfig(Q=3, N=2, L=7),
            plan=EncodingPlan.with_hadamard_pilots(3, 7, [3, 2], D0=3),
            decoders=("r_asce",),
            values=(10.0,),
            trials=40,
        )
        (p,) = run_scenario(s)
        assert 0 < p.condition_failures < 40

    def test_no_condition_failures_without_shared_rows(self):
        s = scenario(config=SystemConfig(N=2), plan=EncodingPlan.with_hadamard_pilots(2, 8, [4, 4]), trials=4)
        assert all(p.condition_failures == 0 for p in run_scenario(s))

    def test_paired_points_share_frames(self):
        s = scenario(axis="mask_fraction", values=(0.0, 0.0), paired=True, trials=4)
        a, b = run_scenario(s)
        assert a.rows() == b.rows()

    def test_paired_difference(self):
        (p,) = run_scenario(scenario(values=(6.0,), trials=20))
        mean, se = paired_difference(p.decoders["r_asce"], p.decoders["asce_d"], 8)
        assert mean == pytest.approx(p.decoders["r_asce"].ber - p.decoders["asce_d"].ber)
        assert se >= 0

    def test_nrmse_decreases_with_snr(self):
        points = run_scenario(scenario(values=(0.0, 8.0, 16.0), trials=40, decoders=("asce", "r_asce", "asce_d", "r_asce_d")))
        for name in points[0].decoders:
            nrmse = [p.decoders[name].nrmse for p in points]
            assert nrmse[0] > nrmse[1] > nrmse[2]

    def test_nrmse_matches_helper(self):
        (p,) = run_scenario(scenario(values=(6.0,)))
        st = p.decoders["r_asce"]
        expected = np.sqrt(st.sq_errors.mean() / expected_channel_energy(SystemConfig(snr_db=6.0)))
        assert st.nrmse == pytest.approx(expected)
