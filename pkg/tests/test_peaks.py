import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from supercorr.errors import DomainError
from supercorr.peaks import find_peak, fit_scaling


def test_parabola_recovery():
    t = np.array([0.8, 1.1, 1.4])
    pk = find_peak(t=t, rate=4 - (t - 1) ** 2)
    assert abs(pk.t_peak - 1.0) < 1e-12 and abs(pk.r_peak - 4.0) < 1e-12
    assert pk.refined and not pk.boundary_peak


def test_monotone_decay_is_boundary():
    t = np.linspace(0, 3, 50)
    pk = find_peak(t=t, rate=7 * np.exp(-t), n_emitters=7)
    assert pk.boundary_peak and pk.t_peak == 0.0 and pk.r_peak == 7.0


def test_too_few_samples():
    with pytest.raises(DomainError):
        find_peak(t=[0, 1], rate=[1, 2])


def test_plateau_earliest_wins():
    pk = find_peak(t=[0, 1, 2, 3, 4], rate=[0, 1, 2, 2, 1])
    assert 1.0 <= pk.t_peak <= 3.0
    pk = find_peak(t=[0, 1, 2, 3, 4, 5], rate=[0, 3, 1, 3, 1, 0])
    assert pk.t_peak <= 2.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 5.0), st.floats(0.1, 100.0), st.integers(5, 60))
def test_refinement_stays_in_bracket_and_scales(t0, scale, m):
    t = np.linspace(0, 6, m)
    r = np.exp(-((t - t0) ** 2))
    a = find_peak(t=t, rate=r)
    b = find_peak(t=t, rate=scale * r)
    assert abs(a.t_peak - b.t_peak) <= 1e-12 * max(1.0, a.t_peak)
    assert abs(b.r_peak - scale * a.r_peak) <= 1e-12 * scale * a.r_peak
    if not a.boundary_peak:
        i = int(np.argmax(r))
        lo, hi = t[max(i - 1, 0)], t[min(i + 1, m - 1)]
        assert lo <= a.t_peak <= hi
        assert a.r_peak >= r[0] - 1e-9
    else:
        assert a.t_peak == 0.0


def test_fit_exact_laws():
    assert abs(fit_scaling([(10, 20), (20, 40), (40, 80)]).beta - 1.0) < 1e-12
    fit = fit_scaling([(10, 100), (20, 400), (40, 1600)])
    assert abs(fit.beta - 2.0) < 1e-12
    assert abs(fit.prefactor - 1.0) < 1e-10
    assert fit.residual < 1e-12


def test_fit_rejects_bad_points():
    with pytest.raises(DomainError):
        fit_scaling([(10, 1), (20, 0), (30, 3)])
    with pytest.raises(DomainError):
        fit_scaling([(10, 1), (20, 2)])
