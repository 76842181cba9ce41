"""A small BER-versus-SNR sweep with the bundled ``fig3`` scenario.

The preset runs 2000 frames per point; this demo uses 200 so it finishes in
about a minute. Use ``radar-backscatter sweep fig3 --out DIR`` for the full run.
"""

from radar_backscatter.cli import load_scenario
from radar_backscatter.experiments import Scenario, run_scenario

s = load_scenario("fig3")
s = Scenario.from_dict({**s.to_dict(), "trials": 200, "sweep": {"axis": "snr_db", "values": [0.0, 4.0, 8.0, 12.0]}})
points = run_scenario(s)

names = list(s.decoders)
print("SNR dB  " + "  ".join(f"{n:>9s}" for n in names))
for p in points:
    print(f"{p.value:6.1f}  " + "  ".join(f"{p.decoders[n].ber:9.5f}" for n in names))
print("\nNRMSE of the channel estimates")
for p in points:
    print(f"{p.value:6.1f}  " + "  ".join(f"{p.decoders[n].nrmse:9.4f}" for n in names if n != "ml_csi"))
