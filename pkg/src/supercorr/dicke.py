"""Permutation-symmetric decay on the Dicke ladder.

With all pairwise rates equal to Gamma the fully inverted state only visits
the N + 1 symmetric states, labelled by the excitation number m. The decay
is then a pure death process with rates h_m = m (N - m + 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .integrate import IntegratorConfig, Trajectory, run_observed


@dataclass
class LadderState:
    populations: np.ndarray  # p_m for m = 0..N
    n_emitters: int
    time: float = 0.0

    @classmethod
    def fully_excited(cls, n):
        p = np.zeros(n + 1)
        p[n] = 1.0
        return cls(p, n, 0.0)


def ladder_rates(n: int) -> np.ndarray:
    """h_m = m (N - m + 1) for m = 0..N."""
    if n < 1:
        raise DomainError(f"need at least one emitter, got N={n}")
    m = np.arange(n + 1, dtype=float)
    return m * (n - m + 1)


def ladder_derivative(p, h) -> np.ndarray:
    flux = h * p
    d = -flux
    d[:-1] += flux[1:]
    return d


def evolve_ladder(n: int, config: IntegratorConfig | None = None) -> Trajectory:
    """Integrate the ladder populations from p_N = 1; R(t) = sum_m h_m p_m."""
    config = config or IntegratorConfig()
    h = ladder_rates(n)
    m = np.arange(n + 1, dtype=float)

    def observe(t, p):
        return float(h @ p), float(m @ p)

    def step_check(t, p, f):
        return (float(m @ f) + float(h @ p)) / n

    return run_observed(lambda t, p: ladder_derivative(p, h),
                        LadderState.fully_excited(n).populations, config, observe, n,
                        step_check=step_check, method="dicke",
                        extra_meta={"geometry": f"dicke ladder N={n}"})


def peak_time_formula(n: int) -> float:
    """Delay time ln(N-1)/(N+1) in units of 1/Gamma."""
    if n < 2:
        raise DomainError(f"peak time formula needs N >= 2, got N={n}")
    return math.log(n - 1) / (n + 1)


def peak_time_literature(n: int) -> float:
    """The older large-N estimate ln(N)/N."""
    if n < 2:
        raise DomainError(f"peak time formula needs N >= 2, got N={n}")
    return math.log(n) / n
