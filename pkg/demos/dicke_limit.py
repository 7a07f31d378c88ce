"""Dicke limit: peak rate and delay time on the symmetric ladder.

Run with ``python demos/dicke_limit.py``. Prints R_peak / N^2, which creeps
down toward 1/5, and compares the peak time with two closed-form estimates.
"""
import numpy as np

from supercorr import evolve_ladder, find_peak, peak_time_formula, peak_time_literature

# %% peak rate and time for a range of N
ns = [4, 8, 16, 32, 64, 128, 256, 512]
print(f"{'N':>5} {'R_peak/N^2':>11} {'t_peak':>9} {'ln(N-1)/(N+1)':>14} {'lnN/N':>8}")
for n in ns:
    pk = find_peak(evolve_ladder(n))
    print(f"{n:5d} {pk.r_peak / n**2:11.5f} {pk.t_peak:9.5f} {peak_time_formula(n):14.5f} "
          f"{peak_time_literature(n):8.5f}")

# %% the whole burst for N = 50, coarse text plot
tr = evolve_ladder(50)
for t, r in zip(tr.t[::12], tr.rate[::12]):
    print(f"t={t:6.3f} " + "#" * int(60 * r / tr.rate.max()))
print(f"photons emitted before the early stop: {tr.emitted():.3f} of 50")
