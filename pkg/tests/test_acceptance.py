"""Acceptance suite: one test and one PASS/FAIL line per numbered check.

Checks 2 and 8 are known to fail; see README for the analysis. They are not
marked xfail so the report stays honest.
"""
import math

import pytest

from supercorr import validation as v


@pytest.fixture(scope="module")
def ctx():
    return v.Context(threads=1)


def test_tolerances_pinned():
    assert (v.DICKE_RATIO, v.DICKE_RATIO_TOL, v.DICKE_RUNTIME) == (0.2, 0.004, 1.0)
    assert (v.PEAK_TIME_TOL, v.PEAK_TIME_RUNTIME) == (0.03, 5.0)
    assert (v.TWO_ATOM_REL, v.TWO_ATOM_ORDER3_TOL) == (1e-6, 0.02)
    assert (v.SMALL_N_RATE_TOL, v.SMALL_N_TIME_TOL, v.SMALL_N_RUNTIME) == (0.05, 0.10, 120.0)
    assert (v.WG_BETA, v.WG_BETA_TOL, v.WG_TIME_TOL, v.WG_RUNTIME) == (2.0, 0.1, 0.15, 300.0)
    assert (v.CHAIN_SPREAD_TOL, v.CHAIN_BETA, v.CHAIN_BETA_TOL, v.CHAIN_RUNTIME) == (0.10, 1.0, 0.15, 1800.0)
    assert (v.EMITTED_TOL, v.DEPLETION) == (0.01, 1e-3)
    assert (v.ALGEBRA_TOL, v.ALGEBRA_GEOMETRIES, v.CONFLUENCE_SAMPLES) == (1e-10, 20, 1000)
    assert v.WG_NS == tuple(range(20, 101, 10))
    assert v.WG_KAS == (math.pi / 4, math.pi)
    assert v.CHAIN_NS == (100, 144, 196)
    assert v.LADDER_NS == (10, 50, 100, 200)


@pytest.mark.parametrize("number", sorted(v.CHECKS), ids=lambda n: f"check{n:02d}")
def test_check(number, ctx, capsys):
    res = v.run_check(number, ctx)
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.detail
