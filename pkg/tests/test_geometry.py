import math

import numpy as np
import pytest

from supercorr.errors import DomainError, ParseError
from supercorr.geometry import CIRCULAR, LINEAR, build_lattice, load_custom


def test_chain_positions():
    arr = build_lattice("chain", (3,), 0.5, "linear")
    np.testing.assert_allclose(arr.positions, [[0, 0, 0], [0.5, 0, 0], [1.0, 0, 0]])
    np.testing.assert_array_equal(arr.polarization, LINEAR)
    assert arr.n == 3


def test_ring_radius_and_spacing():
    arr = build_lattice("ring", (4,), 0.1, "circular")
    r = np.linalg.norm(arr.positions, axis=1)
    np.testing.assert_allclose(r, 0.1 / (2 * math.sin(math.pi / 4)))
    assert abs(r[0] - 0.070711) < 1e-6
    d = arr.pairwise_distances()
    np.testing.assert_allclose([d[i, (i + 1) % 4] for i in range(4)], 0.1)
    np.testing.assert_allclose(arr.polarization, CIRCULAR)


def test_cube_nearest_neighbour():
    arr = build_lattice("cube", (3, 3, 3), 0.2, "linear")
    assert arr.n == 27
    d = arr.pairwise_distances()
    np.fill_diagonal(d, np.inf)
    assert abs(d.min() - 0.2) < 1e-12


def test_square_layout():
    arr = build_lattice("square", (2, 3), 0.3)
    assert arr.n == 6
    assert np.all(arr.positions[:, 2] == 0)


@pytest.mark.parametrize("kind,dims,a", [
    ("chain", (0,), 0.1), ("chain", (3,), 0.0), ("chain", (3,), -1.0),
    ("square", (3,), 0.1), ("cube", (2, 2), 0.1), ("hexagon", (3,), 0.1)])
def test_bad_lattices(kind, dims, a):
    with pytest.raises(DomainError):
        build_lattice(kind, dims, a)


def test_positions_are_read_only():
    arr = build_lattice("chain", (3,), 0.5)
    with pytest.raises(ValueError):
        arr.positions[0, 0] = 1.0


def test_custom_round_trip(tmp_path):
    p = tmp_path / "two.txt"
    p.write_text("# two emitters\nd = (0 0 0 0 1 0)\n0 0 0\n0 0 0.25\n")
    arr = load_custom(p)
    assert arr.n == 2
    np.testing.assert_allclose(arr.positions[1], [0, 0, 0.25])
    np.testing.assert_allclose(arr.polarization, LINEAR)


def test_custom_duplicate_names_line(tmp_path):
    p = tmp_path / "dup.txt"
    p.write_text("d = (0 0 0 0 1 0)\n0 0 0\n1 0 0\n0 0 0\n")
    with pytest.raises(ParseError, match="line 4"):
        load_custom(p)


def test_custom_empty(tmp_path):
    p = tmp_path / "empty.txt"
    p.write_text("")
    with pytest.raises(ParseError, match="no emitters"):
        load_custom(p)


def test_custom_polarization_normalization(tmp_path, caplog):
    p = tmp_path / "almost.txt"
    p.write_text("d = (0 0 0 0 1.0000004 0)\n0 0 0\n")
    arr = load_custom(p)
    assert abs(np.linalg.norm(arr.polarization) - 1) < 1e-15
    p.write_text("d = (0 0 0 0 1.1 0)\n0 0 0\n")
    with pytest.raises(ParseError, match="line 1"):
        load_custom(p)


def test_custom_malformed_row(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("d = (0 0 0 0 1 0)\n0 0\n")
    with pytest.raises(ParseError, match="line 2"):
        load_custom(p)
