"""Decoding when part of the measurement matrix is lost.

Masked entries are left out of the fit; a larger missing fraction costs
accuracy but the decoders keep working. The same frames are reused at every
fraction, and the masks are nested, so the comparison is paired.
"""

import numpy as np

from radar_backscatter.decoders import DecoderSettings, decode_with_mask, r_asce_d_decode
from radar_backscatter.encoding import EncodingPlan, assemble_symbol_matrix, draw_data
from radar_backscatter.model import SystemConfig, assemble_measurements, draw_mask, generate_channel

config = SystemConfig(Q=2, N=2, L=16, snr_db=10.0)
plan = EncodingPlan.with_hadamard_pilots(2, 16, [4, 4], D0=8)
fractions = [0.0, 0.1, 0.3, 0.5]
errors = np.zeros(len(fractions))
frames = 100

for seed in range(frames):
    rng = np.random.default_rng(seed)
    data = draw_data(plan, rng)
    channel = generate_channel(config, rng)
    meas = assemble_measurements([assemble_symbol_matrix(plan, data, n) for n in range(2)], channel, 1.0, rng)
    for i, rho in enumerate(fractions):
        if rho == 0:
            r = r_asce_d_decode(meas, plan, DecoderSettings(), config.K_bar)
        else:
            mask = draw_mask(meas.Y.shape, rho, np.random.default_rng(10_000 + seed))
            r = decode_with_mask(meas.with_mask(mask), plan, DecoderSettings(), "r_asce_d", config.K_bar)
        errors[i] += np.count_nonzero(r.U_hat != data)

for rho, e in zip(fractions, errors):
    print(f"missing {rho:4.0%}  BER {e / (frames * plan.D * plan.Q):.4f}")
