import math

import numpy as np
import pytest

from supercorr.dicke import evolve_ladder, ladder_rates, peak_time_formula, peak_time_literature
from supercorr.errors import DomainError
from supercorr.integrate import IntegratorConfig
from supercorr.peaks import find_peak
from supercorr.validation import two_atom_rate


def test_rates():
    np.testing.assert_array_equal(ladder_rates(2), [0, 2, 2])
    assert ladder_rates(4)[2] == 6
    assert ladder_rates(10)[5] == 30
    assert ladder_rates(10).max() == 30
    with pytest.raises(DomainError):
        ladder_rates(0)


def test_formula_values():
    assert peak_time_formula(2) == 0.0
    assert abs(peak_time_formula(10) - 0.19975) < 1e-5
    assert abs(peak_time_formula(100) - 0.045497) < 1e-6
    assert abs(peak_time_literature(10) - math.log(10) / 10) < 1e-15
    for bad in (0, 1):
        with pytest.raises(DomainError):
            peak_time_formula(bad)


def test_two_atom_closed_form():
    tr = evolve_ladder(2, IntegratorConfig(rel_tol=1e-10, abs_tol=1e-13, t_max=3.0, early_stop=False))
    np.testing.assert_allclose(tr.rate, two_atom_rate(tr.t), rtol=1e-8)
    pk = find_peak(tr)
    assert pk.boundary_peak and pk.r_peak == 2.0


def test_large_n_asymptote():
    pk = find_peak(evolve_ladder(200))
    assert abs(pk.r_peak / 200**2 / 0.2 - 1) < 0.02


def test_peak_ratio_increases_toward_one_fifth():
    ratios = [find_peak(evolve_ladder(n)).r_peak / n**2 for n in (8, 16, 32, 64, 128, 256)]
    assert all(b < a for a, b in zip(ratios, ratios[1:]))  # decreasing from above
    assert ratios[-1] > 0.19


def test_populations_stay_normalized():
    tr = evolve_ladder(40, IntegratorConfig(t_max=0.5, early_stop=False))
    p = tr.final
    assert abs(p.sum() - 1) < 1e-10
    assert p.min() > -1e-12


def test_peak_time_offset_from_formula():
    # the formula is only a comparator: the ladder peak is about 6-7% later
    for n in (10, 100):
        dev = find_peak(evolve_ladder(n)).t_peak / peak_time_formula(n) - 1
        assert 0.05 < dev < 0.08
