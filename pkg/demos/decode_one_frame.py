"""Decode a single frame with every decoder and print what each one recovers.

One subchannel, two tags, eight radar periods of which four carry pilots.
Run with ``python demos/decode_one_frame.py``.
"""

import numpy as np

from radar_backscatter.decoders import DECODERS, DecoderSettings, ml_csi_decode
from radar_backscatter.encoding import EncodingPlan, assemble_symbol_matrix, draw_data
from radar_backscatter.experiments import compute_ber
from radar_backscatter.model import SystemConfig, assemble_measurements, generate_channel

config = SystemConfig(Q=2, N=1, L=8, snr_db=10.0)
plan = EncodingPlan.with_hadamard_pilots(config.Q, config.L, [4])
rng = np.random.default_rng(2024)

data = draw_data(plan, rng)
channel = generate_channel(config, rng)
X = [assemble_symbol_matrix(plan, data, n) for n in range(plan.N)]
meas = assemble_measurements(X, channel, config.noise_power, rng)

print("true delays:", channel.delays)
print("true data (rows are radar periods, columns are tags):")
print(data.real.astype(int))
print()

settings = DecoderSettings(lambda_u=config.lambda_u, lambda_v=config.lambda_v)
for name, decode in DECODERS.items():
    if name.endswith("_d"):
        r = decode(meas, plan, settings, config.K_bar)
    else:
        r = decode(meas, plan, settings)
    ber = compute_ber(r.U_hat, data, plan.alphabet)[0]
    trace = ", ".join(f"{f:.2f}" for f in r.objective_trace[:6])
    delays = "" if r.delays_hat is None else f" delays={r.delays_hat}"
    print(f"{name:9s} iters={r.iterations:3d} BER={ber:.3f}{delays}")
    print(f"          objective: {trace}{' ...' if r.iterations > 6 else ''}")

genie = ml_csi_decode(meas, plan, channel.response_matrices())
print(f"{'ml_csi':9s} BER={compute_ber(genie.U_hat, data, plan.alphabet)[0]:.3f} (true channel known)")
