"""Scaling of the peak rate with N: free-space chain versus waveguide.

A chain in free space settles on R_peak proportional to N, while a chain
coupled to a waveguide keeps the Dicke-like N^2 law. Order-2 cumulants,
so each point takes a few seconds at most.
"""
import math

import numpy as np

from supercorr import (build_free_space, build_lattice, build_waveguide, evolve_moments,
                       find_peak, fit_scaling)

# %% free-space chain, a = 0.1 lambda0, circular dipoles
chain = []
for n in (25, 50, 100, 144):
    pk = find_peak(evolve_moments(build_free_space(build_lattice("chain", n, 0.1, "circular")), 2))
    chain.append((n, pk.r_peak))
    print(f"chain N={n:4d}: R_peak/N = {pk.r_peak / n:.4f}, t_peak = {pk.t_peak:.4f}")
print("chain exponent:", round(fit_scaling(chain).beta, 3))

# %% waveguide chains at a few phases
for ka in (math.pi / 4, math.pi / 2, math.pi):
    pts, times = [], []
    for n in range(20, 101, 20):
        pk = find_peak(evolve_moments(build_waveguide(n, ka), 2))
        pts.append((n, pk.r_peak))
        times.append(pk.t_peak * n / math.log(n))
    fit = fit_scaling(pts)
    print(f"waveguide ka={ka:.3f}: beta = {fit.beta:.3f}, "
          f"t_peak N/lnN = {np.round(times, 3).tolist()}")
