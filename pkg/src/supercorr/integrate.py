"""Adaptive Dormand-Prince 5(4) integration shared by every solver.

The error norm is the maximum over components of
``|err_i| / (abs_tol + rel_tol * max(|y_i|, |y_new_i|))``; a step is
accepted iff the norm is <= 1. Samples are produced from the 4th-order
continuous extension so peaks can be resolved between steps.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, IntegrationError

# Dormand-Prince tableau
C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])
# continuous extension (Shampine); columns multiply theta, theta^2, theta^3, theta^4
P = np.array([
    [1.0, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0.0, 0.0, 0.0, 0.0],
    [0.0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0.0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0.0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0.0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0.0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

SAFETY = 0.9
MIN_FACTOR = 0.2
MAX_FACTOR = 5.0
# PI controller exponents for a 4th-order error estimate
ALPHA = 0.7 / 5
BETA = 0.4 / 5


@dataclass
class IntegratorConfig:
    """Integration settings. Times are in units of 1/Gamma.

    ``refine`` dense samples are taken inside every accepted step unless
    ``sample_stride`` requests a uniform grid instead. ``early_stop`` ends a
    run once the rate has fallen below ``early_stop_fraction`` of its running
    maximum while decreasing; ``depletion`` ends it once the remaining
    excitation drops below that fraction of N.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    t_max: float = 5.0
    max_steps: int = 1_000_000
    sample_stride: float | None = None
    refine: int = 4
    early_stop: bool = True
    early_stop_fraction: float = 0.05
    depletion: float | None = None
    first_step: float | None = None

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("tolerances must be positive")
        if not self.t_max > 0:
            raise DomainError("t_max must be positive")
        if self.sample_stride is not None and not self.sample_stride > 0:
            raise DomainError("sample_stride must be positive")
        if self.refine < 1:
            raise DomainError("refine must be >= 1")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class Solution:
    t: np.ndarray
    obs: np.ndarray  # (n_samples, n_obs)
    y_final: np.ndarray
    t_final: float
    n_steps: int
    n_rejected: int
    n_evals: int
    stopped_by: str  # "t_max", "stop" or "failure"
    step_checks: list = field(default_factory=list)


def _initial_step(fun, t0, y0, f0, rtol, atol):
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = fun(t0 + h0, y0 + h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def integrate_generic(fun, y0, config: IntegratorConfig, *, t0: float = 0.0,
                      observe=None, stop=None, step_check=None, validate=None) -> Solution:
    """Integrate ``dy/dt = fun(t, y)`` from ``t0`` to ``config.t_max``.

    ``observe(t, y)`` maps a state to the recorded observables (defaults to
    ``y`` itself). ``stop(t, obs_row)`` is called for each new sample and may
    end the run by returning True. ``step_check(t, y, dydt)`` runs on every
    accepted step and its return values are collected. ``validate(t, y)``
    may raise to abort; it runs on every accepted step.

    Raises IntegrationError on step-size underflow, non-finite values or
    when ``max_steps`` is exhausted; ``partial`` then holds the Solution so far.
    """
    y = np.array(y0, dtype=float)
    if y.ndim != 1:
        raise DomainError("state must be a 1-d real array")
    if observe is None:
        def observe(_t, yy):
            return yy.copy()
    rtol, atol = config.rel_tol, config.abs_tol
    t_end = t0 + config.t_max
    t = float(t0)

    ts = [t]
    obs = [np.atleast_1d(observe(t, y))]
    checks = []
    n_steps = n_rej = 0

    f = fun(t, y)
    n_evals = 1
    if not np.all(np.isfinite(f)):
        raise IntegrationError("non-finite derivative at start", t, None)
    if step_check is not None:
        checks.append(step_check(t, y, f))
    if stop is not None and stop(t, obs[0]):
        return Solution(np.array(ts), np.array(obs), y, t, 0, 0, n_evals, "stop", checks)

    h = config.first_step or _initial_step(fun, t, y, f, rtol, atol)
    n_evals += 1
    h = min(h, t_end - t)
    next_sample = t + config.sample_stride if config.sample_stride else None
    err_prev = 1e-4
    rejected_last = False
    K = np.empty((7, y.size))

    def partial():
        return Solution(np.array(ts), np.array(obs), y, t, n_steps, n_rej, n_evals, "failure", checks)

    while t < t_end:
        if n_steps >= config.max_steps:
            raise IntegrationError(f"max_steps={config.max_steps} exceeded", t, partial())
        min_h = 16 * np.spacing(max(abs(t), 1.0))
        if h < min_h:
            raise IntegrationError(f"step size underflow (h={h:.3e})", t, partial())

        K[0] = f
        for s in range(1, 7):
            dy = np.dot(A[s], K[:s]) if s > 1 else A[1][0] * K[0]
            K[s] = fun(t + C[s] * h, y + h * dy)
        n_evals += 6
        y_new = y + h * np.dot(B[:6], K[:6])
        f_new = K[6]
        err = h * np.dot(E, K)
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        with np.errstate(invalid="ignore", over="ignore"):
            err_norm = float(np.max(np.abs(err) / scale))
        if not np.isfinite(err_norm) or not np.all(np.isfinite(y_new)):
            # treat as a rejection with aggressive shrink; underflow check ends hopeless cases
            h *= MIN_FACTOR
            n_rej += 1
            rejected_last = True
            continue

        if err_norm > 1.0:
            h *= max(MIN_FACTOR, SAFETY * err_norm ** (-1 / 5))
            n_rej += 1
            rejected_last = True
            continue

        # accepted step: emit samples from the dense output
        t_new = t + h
        if config.sample_stride:
            thetas = []
            while next_sample is not None and next_sample <= t_new + 1e-14 * max(1.0, t_new):
                thetas.append((next_sample - t) / h)
                next_sample += config.sample_stride
            if t_new >= t_end and (not thetas or thetas[-1] < 1.0):
                thetas.append(1.0)
        else:
            thetas = [(i + 1) / config.refine for i in range(config.refine)]
        Q = P.T @ K  # (4, dim)
        halt = False
        for th in thetas:
            if th >= 1.0:
                y_s, t_s = y_new, t_new
            else:
                y_s = y + h * ((th * np.array([1.0, th, th**2, th**3])) @ Q)
                t_s = t + th * h
            ts.append(t_s)
            obs.append(np.atleast_1d(observe(t_s, y_s)))
            if stop is not None and stop(t_s, obs[-1]):
                halt = True
                break

        t, y, f = t_new, y_new, f_new
        n_steps += 1
        if validate is not None:
            try:
                validate(t, y)
            except IntegrationError as exc:
                exc.partial = partial()
                raise
        if step_check is not None:
            checks.append(step_check(t, y, f))
        if halt:
            return Solution(np.array(ts), np.array(obs), y, t, n_steps, n_rej, n_evals, "stop", checks)

        factor = SAFETY * max(err_norm, 1e-10) ** (-ALPHA) * err_prev ** BETA
        factor = min(MAX_FACTOR, max(MIN_FACTOR, factor))
        if rejected_last:
            factor = min(1.0, factor)
        err_prev = max(err_norm, 1e-4)
        rejected_last = False
        h = min(h * factor, t_end - t) if t < t_end else h

    return Solution(np.array(ts), np.array(obs), y, t, n_steps, n_rej, n_evals, "t_max", checks)


@dataclass
class Trajectory:
    """Sampled emission rate ``rate`` and remaining excitation ``n_exc`` versus ``t``.

    Rates are in units of Gamma, times in 1/Gamma.
    """

    t: np.ndarray
    rate: np.ndarray
    n_exc: np.ndarray
    meta: dict = field(default_factory=dict)
    final: np.ndarray | None = field(default=None, repr=False)  # solver state at t[-1]

    @property
    def samples(self):
        return list(zip(self.t.tolist(), self.rate.tolist(), self.n_exc.tolist()))

    @property
    def n(self) -> int:
        return int(self.meta.get("N", round(self.n_exc[0])))

    def emitted(self) -> float:
        """Photons emitted over the sampled window (trapezoid rule on R)."""
        return float(np.trapezoid(self.rate, self.t))


class RateStop:
    """Stop rule: past the peak, rate below a fraction of its running max, or depletion."""

    def __init__(self, config: IntegratorConfig, n_emitters: int, rate_index=0, exc_index=1):
        self.cfg = config
        self.n = n_emitters
        self.ri, self.ei = rate_index, exc_index
        self.r_max = -np.inf
        self.r_prev = None
        self.reason = None

    def __call__(self, t, row):
        r = float(row[self.ri])
        falling = self.r_prev is not None and r < self.r_prev
        self.r_prev = r
        self.r_max = max(self.r_max, r)
        cfg = self.cfg
        if cfg.depletion is not None and float(row[self.ei]) < cfg.depletion * self.n:
            self.reason = "depleted"
            return True
        if cfg.early_stop and falling and r < cfg.early_stop_fraction * self.r_max:
            self.reason = "early_stop"
            return True
        return False


def run_observed(fun, y0, config, observe, n_emitters, *, validate=None, step_check=None,
                 method="", extra_meta=None) -> Trajectory:
    """Integrate and package the (rate, n_exc) observables as a Trajectory.

    ``observe`` must return ``(rate, n_exc)``. Negative rates within 1e-8 are
    clamped to zero and counted in ``meta['clamped']``. On failure the
    IntegrationError carries a partial Trajectory.
    """
    stopper = RateStop(config, n_emitters)
    t_start = time.perf_counter()
    try:
        sol = integrate_generic(fun, y0, config, observe=observe, stop=stopper,
                                step_check=step_check, validate=validate)
    except IntegrationError as exc:
        part = exc.partial
        if part is not None:
            exc.partial = _package(part, config, n_emitters, method, extra_meta,
                                   time.perf_counter() - t_start, "failed")
        raise
    return _package(sol, config, n_emitters, method, extra_meta,
                    time.perf_counter() - t_start, stopper.reason or sol.stopped_by)


def _package(sol, config, n_emitters, method, extra_meta, wall, reason):
    rate = sol.obs[:, 0].copy()
    n_exc = sol.obs[:, 1].copy()
    clamped = int(np.sum((rate < 0) & (rate >= -1e-8)))
    rate[(rate < 0) & (rate >= -1e-8)] = 0.0
    meta = {
        "method": method,
        "N": n_emitters,
        "rel_tol": config.rel_tol,
        "abs_tol": config.abs_tol,
        "t_max": config.t_max,
        "n_steps": sol.n_steps,
        "n_rejected": sol.n_rejected,
        "n_evals": sol.n_evals,
        "stopped_by": reason,
        "t_final": sol.t_final,
        "walltime_s": wall,
        "clamped": clamped,
    }
    if sol.step_checks:
        meta["max_balance_residual"] = float(np.max(np.abs(sol.step_checks)))
    if extra_meta:
        meta.update(extra_meta)
    return Trajectory(sol.t, rate, n_exc, meta, sol.y_final)
