import math

import numpy as np
import pytest

from supercorr.dicke import evolve_ladder, ladder_derivative, ladder_rates
from supercorr.errors import DomainError, IntegrationError
from supercorr.integrate import IntegratorConfig, integrate_generic

QUIET = dict(early_stop=False)


def test_exponential():
    sol = integrate_generic(lambda t, y: -y, np.array([1.0]), IntegratorConfig(t_max=1.0, **QUIET))
    assert abs(sol.y_final[0] - math.exp(-1)) < 1e-6
    assert sol.t_final == 1.0


def test_harmonic_oscillator_period():
    f = lambda t, y: np.array([y[1], -y[0]])
    sol = integrate_generic(f, np.array([1.0, 0.0]), IntegratorConfig(t_max=2 * math.pi, **QUIET))
    assert abs(np.hypot(*sol.y_final) - 1.0) < 1e-5
    assert np.max(np.abs(sol.y_final - [1, 0])) < 1e-5


def test_dense_samples_are_accurate():
    sol = integrate_generic(lambda t, y: -y, np.array([1.0]),
                            IntegratorConfig(t_max=2.0, sample_stride=0.01, **QUIET),
                            observe=lambda t, y: (y[0],))
    np.testing.assert_allclose(sol.obs[:, 0], np.exp(-sol.t), rtol=1e-6)
    assert np.all(np.diff(sol.t) > 0)


def rk4_fixed(fun, y0, t_end, dt):
    y, t = y0.copy(), 0.0
    ts, ys = [0.0], [y0.copy()]
    steps = int(round(t_end / dt))
    for _ in range(steps):
        k1 = fun(t, y)
        k2 = fun(t + dt / 2, y + dt / 2 * k1)
        k3 = fun(t + dt / 2, y + dt / 2 * k2)
        k4 = fun(t + dt, y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += dt
        ts.append(t)
        ys.append(y)
    return np.array(ts), np.array(ys)


def test_ladder_matches_fixed_step_rk4():
    n = 50
    h = ladder_rates(n)
    p0 = np.zeros(n + 1)
    p0[-1] = 1.0
    t_ref, y_ref = rk4_fixed(lambda t, p: ladder_derivative(p, h), p0, 0.2, 1e-5)
    r_ref = y_ref @ h
    tr = evolve_ladder(n, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, t_max=0.2, **QUIET))
    r_interp = np.interp(tr.t, t_ref, r_ref)
    assert np.max(np.abs(tr.rate - r_interp) / np.max(r_ref)) < 1e-6


def test_nan_raises_with_partial():
    def f(t, y):
        return np.array([np.nan]) if t > 0.5 else -y
    with pytest.raises(IntegrationError) as info:
        integrate_generic(f, np.array([1.0]), IntegratorConfig(t_max=1.0, **QUIET))
    assert info.value.partial is not None
    assert 0 < info.value.t_last <= 0.5 + 1e-12


def test_max_steps():
    with pytest.raises(IntegrationError, match="steps"):
        integrate_generic(lambda t, y: -y, np.array([1.0]),
                          IntegratorConfig(t_max=10.0, max_steps=3, **QUIET))


def test_config_validation():
    with pytest.raises(DomainError):
        IntegratorConfig(rel_tol=0)
    with pytest.raises(DomainError):
        IntegratorConfig(t_max=-1)


def test_deterministic():
    a = evolve_ladder(30)
    b = evolve_ladder(30)
    np.testing.assert_array_equal(a.t, b.t)
    np.testing.assert_array_equal(a.rate, b.rate)
