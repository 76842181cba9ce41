"""Which pilot layouts guarantee a unique noiseless decoding?

Checks a few plans against the rank conditions, cross-checks one of them
with the brute-force oracle, and prints the largest certified rate for a
range of frame lengths.
"""

import numpy as np

from radar_backscatter.cli import load_plan, preset_path
from radar_backscatter.encoding import (
    EncodingPlan,
    check_restrictive_conditions,
    check_theorem_conditions,
    draw_data,
    largest_certified_rate,
    transmission_rate,
    uniqueness_oracle,
)
from radar_backscatter.model import SystemConfig, generate_channel


def show(label, plan, block):
    th = check_theorem_conditions(plan, block)
    rs = check_restrictive_conditions(plan, block)
    print(f"{label:38s} rate={str(transmission_rate(plan)):5s} conditions: {th}  rank-only: {rs}")


# two subchannels whose pilots are only jointly full rank; the shared rows fill the gap
plan, block = load_plan(preset_path("shared_block_plan"))
show("shared block, split pilots", plan, block)
show("shared block replaced by a repeated row", plan, np.repeat(block[:1], 3, axis=0))
show("one subchannel, Q+1 pilots", EncodingPlan.with_hadamard_pilots(2, 8, [3]), np.zeros((0, 2)))
show("one subchannel, Q pilots", EncodingPlan.with_hadamard_pilots(2, 8, [2]), np.zeros((0, 2)))

# the oracle enumerates every data matrix; too few pilots leaves a rival explanation
short = EncodingPlan.with_hadamard_pilots(1, 3, [1])
for seed in range(100):
    rng = np.random.default_rng(seed)
    data = draw_data(short, rng)
    result = uniqueness_oracle(short, data, generate_channel(SystemConfig(Q=1, L=3), rng))
    if not result.unique:
        print(f"\none pilot, one tag (seed {seed}): data {data.ravel().real} also explained by "
              f"{result.witness.ravel().real} ({result.passing} of {result.candidates} candidates fit)")
        break

print("\nlargest certified rate, one subchannel, BPSK")
print("  L   Q=1      Q=2")
for L in range(4, 20, 2):
    print(f"{L:3d}   {float(largest_certified_rate(L, 1)):.4f}   {float(largest_certified_rate(L, 2)):.4f}")
