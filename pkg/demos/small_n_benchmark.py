"""Exact master equation against the order-2 and order-3 cumulant closures at N = 8.

Three coupling models: all-to-all, a free-space chain and a waveguide.
Order 2 overshoots the peak, order 3 lands close to the exact value.
"""
import math

from supercorr import (build_dicke, build_free_space, build_lattice, build_waveguide,
                       evolve_exact, evolve_moments, find_peak)

models = {
    "all-to-all": build_dicke(8),
    "chain a=0.2 circ": build_free_space(build_lattice("chain", 8, 0.2, "circular")),
    "waveguide ka=pi/2": build_waveguide(8, math.pi / 2),
}

print(f"{'model':>18} {'exact':>9} {'order 2':>9} {'order 3':>9}   t_peak exact / o3")
for name, model in models.items():
    ex = find_peak(evolve_exact(model))
    o2 = find_peak(evolve_moments(model, 2))
    o3 = find_peak(evolve_moments(model, 3))
    print(f"{name:>18} {ex.r_peak:9.4f} {o2.r_peak:9.4f} {o3.r_peak:9.4f}   "
          f"{ex.t_peak:.4f} / {o3.t_peak:.4f}")
