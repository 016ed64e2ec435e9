"""Outage probability of a link with lognormal signal and interference.

Outage means SIR = e^{X0} / sum e^{X_i} <= threshold.  The simulated value is
compared with the bound-based and approximate forms, which average the sum
CCDF over the signal with Gauss-Hermite quadrature.
"""
from lognsum import GaussianParams, MCConfig, outage_estimate

signal = GaussianParams.from_db(10.0, 8.0)
interferers = [GaussianParams.from_db(0.0, 8.0)] * 4
for th_db in (0.0, 5.0, 10.0):
    th = 10 ** (th_db / 10)
    mc = outage_estimate(signal, interferers, th, "mc", MCConfig(samples=1_000_000))
    line = f"threshold {th_db:4.1f} dB: MC {mc.value:.4f} +- {mc.stderr:.4f}"
    for method in ("bound", "clt", "farley"):
        line += f"  {method} {outage_estimate(signal, interferers, th, method).value:.4f}"
    print(line)
