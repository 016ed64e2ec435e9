"""Closed-form approximations against simulation.

approx_n2 replaces an expectation over a truncated normal by the function at
its mean; Farley's bound ignores all but the largest term.  The large-N form
approximates the log of a shifted product by a normal law.
"""
import numpy as np

from lognsum import GaussianParams, MCConfig, approx_n2, approx_recursive, clt_ccdf, empirical_cdf, farley_ccdf, x0_epsilon

for sigma in (0.5, 1.0):
    p = GaussianParams(0.0, sigma)
    g = 2.0 * np.exp(np.linspace(-1.5 * sigma, 1.5 * sigma, 7))
    mc = empirical_cdf([p, p], g, MCConfig(samples=2_000_000))
    print(f"N=2 sigma={sigma:g}   gamma      MC   approx   Farley   epsilon")
    for i, gi in enumerate(g):
        print(f"          {gi:8.3f} {mc.ccdf[i]:7.4f} {1 - approx_n2(gi, p):8.4f} "
              f"{farley_ccdf(gi, p, 2):8.4f} {x0_epsilon(gi, p):9.4f}")

p = GaussianParams(0.0, 2.0)
g = np.array([50.0, 200.0, 1000.0])
mc = empirical_cdf([p] * 3, g, MCConfig(samples=2_000_000))
print("\nN=3 sigma=2, right tail: the approximation closes in on the CCDF as gamma grows")
for i, gi in enumerate(g):
    a = 1 - approx_recursive(gi, p, 3)
    print(f"  gamma={gi:6g}  MC {mc.ccdf[i]:.5f}  approx {a:.5f}  ({a / mc.ccdf[i] - 1:+.1%})")

p = GaussianParams(0.0, 1.0)
mc = empirical_cdf([p] * 30, [70.0], MCConfig(samples=1_000_000))
print(f"\nN=30, gamma=70: MC CCDF {mc.ccdf[0]:.4f}")
for delta in (10.0, 50.0, 100.0, 200.0):
    print(f"  large-N form, delta={delta:5g}: {clt_ccdf(70.0, p, delta, 30):.4f}")
