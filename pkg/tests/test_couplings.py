import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from supercorr.couplings import (K0, CouplingModel, build_dicke, build_free_space, build_waveguide,
                                 emission_rate, emission_rate_eigen, green_tensor,
                                 jump_decomposition, projected_green)
from supercorr.errors import DomainError
from supercorr.geometry import CIRCULAR, LINEAR, EmitterArray, build_lattice
from supercorr.validation import random_array, random_correlations


def gamma_of(r, d):
    return 6 * math.pi / K0 * projected_green(np.asarray(r, float), d).imag


def test_green_tensor_longitudinal_distance():
    assert abs(gamma_of((1, 0, 0), LINEAR) - 3 / (8 * math.pi**2)) < 1e-12
    assert abs(gamma_of((1, 0, 0), LINEAR) - 0.037995) < 1e-6


def test_green_tensor_half_wavelength_circular():
    assert abs(gamma_of((0, 0, 0.5), CIRCULAR) + 3 / (2 * math.pi**2)) < 1e-12
    assert abs(gamma_of((0, 0, 0.5), CIRCULAR) + 0.151982) < 1e-6


@pytest.mark.parametrize("d", [LINEAR, CIRCULAR, np.array([1, 1, 1]) / math.sqrt(3)])
def test_green_small_distance_limit(d):
    assert abs(gamma_of((1e-3, 0, 0), d) - 1.0) < 1e-5


def test_green_tensor_zero_vector():
    with pytest.raises(DomainError):
        green_tensor(np.zeros(3))


def test_green_tensor_symmetric():
    g = green_tensor(np.array([0.3, -0.2, 0.7]))
    np.testing.assert_allclose(g, g.T, atol=1e-14)


def test_free_space_basic():
    assert build_free_space(build_lattice("chain", (1,), 1.0)).gamma.tolist() == [[1.0]]
    g = build_free_space(build_lattice("chain", (2,), 1.0, "linear")).gamma
    assert abs(g[0, 1] - 0.037995) < 1e-6
    # transverse dipoles: Gamma_12 = 1 - (k0 a)^2 / 5 + O((k0 a)^4)
    g = build_free_space(build_lattice("chain", (2,), 0.02, "linear")).gamma
    x = K0 * 0.02
    assert abs(g[0, 1] - (1 - x**2 / 5)) < x**4 / 50


@pytest.mark.parametrize("pol", ["linear", "circular"])
def test_free_space_dicke_limit(pol):
    g = build_free_space(build_lattice("chain", (2,), 1e-3, pol)).gamma
    assert np.max(np.abs(g - 1)) < 1e-5


def test_free_space_hamiltonian_flag():
    arr = build_lattice("chain", (3,), 0.2, "circular")
    assert build_free_space(arr).j is None
    m = build_free_space(arr, include_hamiltonian=True)
    assert np.all(np.diag(m.j) == 0)
    r = np.array([0.2, 0, 0])
    assert abs(m.j[0, 1] + 3 * math.pi / K0 * projected_green(r, CIRCULAR).real) < 1e-12


def test_coincident_emitters_rejected():
    arr = EmitterArray(np.array([[0, 0, 0], [0, 0, 0.0]]), LINEAR, "custom")
    with pytest.raises(DomainError):
        build_free_space(arr)


def test_waveguide_entries():
    assert np.all(build_waveguide(6, 2 * math.pi).gamma == 1.0)
    np.testing.assert_array_equal(build_waveguide(5, 4 * math.pi).gamma, build_dicke(5).gamma)
    g = build_waveguide(5, math.pi / 2).gamma
    assert abs(g[0, 2] + 1) < 1e-15
    g = build_waveguide(5, math.pi / 4).gamma
    assert abs(g[1, 2] - 1 / math.sqrt(2)) < 1e-15


def test_asymmetric_model_rejected():
    with pytest.raises(DomainError):
        CouplingModel(np.array([[1.0, 0.2], [0.1, 1.0]]))


def test_decomposition_two_atoms():
    dec = jump_decomposition(build_dicke(2))
    np.testing.assert_allclose(dec.rates, [2, 0], atol=1e-14)
    s = 1 / math.sqrt(2)
    np.testing.assert_allclose(dec.coefficients[0], [s, s], atol=1e-14)
    np.testing.assert_allclose(np.abs(dec.coefficients[1]), [s, s], atol=1e-14)
    assert dec.coefficients[1][0].real * dec.coefficients[1][1].real < 0


def test_decomposition_waveguide_pi():
    m = build_waveguide(3, math.pi)
    np.testing.assert_allclose(m.gamma, [[1, -1, 1], [-1, 1, -1], [1, -1, 1]], atol=1e-15)
    dec = jump_decomposition(m)
    np.testing.assert_allclose(dec.rates, [3, 0, 0], atol=1e-12)
    np.testing.assert_allclose(dec.coefficients[0], np.array([1, -1, 1]) / math.sqrt(3), atol=1e-12)


def test_decomposition_rejects_negative_spectrum():
    with pytest.raises(DomainError):
        jump_decomposition(CouplingModel(np.array([[1.0, 2.0], [2.0, 1.0]])))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 10), st.integers(0, 2**31))
def test_sum_rule_and_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    model = build_free_space(random_array(rng, n))
    dec = jump_decomposition(model)
    c = dec.coefficients
    np.testing.assert_allclose(c @ c.conj().T, np.eye(n), atol=1e-10)
    np.testing.assert_allclose(np.einsum("k,kn->n", dec.rates, np.abs(c) ** 2), 1.0, atol=1e-10)
    np.testing.assert_allclose(dec.reconstruct(), model.gamma, atol=1e-10)
    corr = random_correlations(rng, n)
    assert abs(emission_rate(model, corr) - emission_rate_eigen(dec, corr)) < 1e-10


def test_emission_rate_limits():
    m = build_free_space(build_lattice("chain", (5,), 0.3, "circular"))
    assert abs(emission_rate(m, np.eye(5)) - 5.0) < 1e-14
    assert emission_rate(m, np.zeros((5, 5))) == 0.0


def test_emission_rate_is_linear(rng):
    m = build_waveguide(4, 1.0)
    a, b = random_correlations(rng, 4), random_correlations(rng, 4)
    lhs = emission_rate(m, 0.3 * a + 0.5 * b)
    assert abs(lhs - 0.3 * emission_rate(m, a) - 0.5 * emission_rate(m, b)) < 1e-12


def test_emission_rate_rejects_non_hermitian():
    m = build_dicke(2)
    with pytest.raises(DomainError):
        emission_rate(m, np.array([[0.5, 0.3j], [0.3j, 0.5]]))
