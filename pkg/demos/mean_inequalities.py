"""The tangential mean sits between the geometric and arithmetic means.

TM(y; delta) = prod (delta + y_i)^(1/N) - delta moves from GM towards AM as
the shift delta grows, and the remaining gap shrinks like 1/delta.
"""
import numpy as np

from lognsum import am_tm_gap, arithmetic_mean, geometric_mean, tangential_mean

y = np.array([0.2, 1.0, 3.5, 7.0])
print(f"y = {y}")
print(f"GM = {geometric_mean(y):.6f}   AM = {arithmetic_mean(y):.6f}")
print(f"{'delta':>8} {'TM':>10} {'AM - TM':>12} {'gap x delta':>12}")
for delta in (0.1, 1.0, 10.0, 100.0, 1000.0, 10000.0):
    gap = am_tm_gap(y, delta)
    print(f"{delta:8g} {tangential_mean(y, delta):10.6f} {gap:12.3e} {gap * delta:12.5f}")
# gap * delta settles at half the (population) variance of y
print(f"var(y) / 2 = {np.var(y) / 2:.5f}")
