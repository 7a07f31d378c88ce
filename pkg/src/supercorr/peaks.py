"""Peak extraction and power-law fits for emission-rate trajectories."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

TIE_TOL = 1e-12


@dataclass(frozen=True)
class PeakResult:
    r_peak: float
    t_peak: float
    refined: bool
    boundary_peak: bool
    method: str = ""
    n_emitters: int = 0


def _vertex(t, r):
    # parabola through three points, returned as (t_v, r_v) or None if degenerate
    (t0, t1, t2), (r0, r1, r2) = t, r
    d01 = (r1 - r0) / (t1 - t0)
    d12 = (r2 - r1) / (t2 - t1)
    curv = (d12 - d01) / (t2 - t0)
    if not curv < 0:
        return None
    tv = 0.5 * (t0 + t1) - d01 / (2.0 * curv)
    tv = min(max(tv, t0), t2)
    rv = r1 + d01 * (tv - t1) + curv * (tv - t0) * (tv - t1)
    return tv, rv


def find_peak(traj=None, *, t=None, rate=None, method=None, n_emitters=None,
              tie_tol: float = TIE_TOL) -> PeakResult:
    """Global maximum of R(t), refined by the vertex of the bracketing parabola.

    Accepts a Trajectory or explicit ``t``/``rate`` arrays. Samples within
    ``tie_tol`` of the maximum count as ties and the earliest one wins.
    """
    if traj is not None:
        t, rate = traj.t, traj.rate
        method = method if method is not None else traj.meta.get("method", "")
        n_emitters = n_emitters if n_emitters is not None else traj.meta.get("N", 0)
    t = np.asarray(t, float)
    r = np.asarray(rate, float)
    if t.shape != r.shape or t.ndim != 1:
        raise DomainError("time and rate samples must be 1-d arrays of equal length")
    if len(t) < 3:
        raise DomainError(f"need at least 3 samples to locate a peak, got {len(t)}")
    top = float(np.max(r))
    i = int(np.flatnonzero(r >= top - tie_tol)[0])
    method, n_emitters = method or "", int(n_emitters or 0)
    if i == 0:
        return PeakResult(float(r[0]), 0.0, False, True, method, n_emitters)
    if i == len(t) - 1:
        return PeakResult(float(r[i]), float(t[i]), False, False, method, n_emitters)
    v = _vertex(t[i - 1:i + 2], r[i - 1:i + 2])
    if v is None or v[1] < r[i]:
        return PeakResult(float(r[i]), float(t[i]), False, False, method, n_emitters)
    return PeakResult(float(v[1]), float(v[0]), True, False, method, n_emitters)


@dataclass(frozen=True)
class ScalingFit:
    beta: float
    intercept: float  # log of the prefactor
    residual: float  # rms deviation in log space

    @property
    def prefactor(self) -> float:
        return float(np.exp(self.intercept))

    def to_dict(self):
        return {"beta": self.beta, "prefactor": self.prefactor,
                "intercept": self.intercept, "residual": self.residual}


def fit_scaling(points) -> ScalingFit:
    """Least-squares fit of log R = beta log N + c."""
    pts = np.asarray(list(points), float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DomainError("fit_scaling needs at least 3 (N, R_peak) pairs")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise DomainError("fit_scaling needs positive, finite values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    beta, c = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (beta * x + c)) ** 2)))
    return ScalingFit(float(beta), float(c), resid)
