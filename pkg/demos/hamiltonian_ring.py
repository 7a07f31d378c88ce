"""Coherent dipole-dipole shifts on a ring of ten emitters (exact solver).

Turning on the Hamiltonian lowers the peak at small spacing; the effect
fades as the ring grows. Takes a few minutes: each exact N = 10 run with
the Hamiltonian needs many short steps.
"""
from supercorr import build_lattice, evolve_exact, find_peak

for a in (0.05, 0.1, 0.15, 0.2):
    arr = build_lattice("ring", 10, a, "circular")
    off = find_peak(evolve_exact(arr, with_hamiltonian=False))
    on = find_peak(evolve_exact(arr, with_hamiltonian=True))
    print(f"a={a:.2f}: R_peak {off.r_peak:8.4f} -> {on.r_peak:8.4f} with H, "
          f"t_peak {off.t_peak:.4f} -> {on.t_peak:.4f}")
