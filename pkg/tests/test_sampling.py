import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from molelab.params import ParameterSpace, ParameterSpec
from molelab.sampling import grid, lhs


def unit_space(d):
    return ParameterSpace([ParameterSpec(f"x{k}", 0.0, 1.0) for k in range(d)])


def test_lhs_quartiles():
    pts = lhs(unit_space(2), 4, seed=3)
    for k in range(2):
        assert sorted(np.floor(pts[:, k] * 4).astype(int)) == [0, 1, 2, 3]


def test_lhs_single_point_and_determinism():
    s = ParameterSpace([ParameterSpec("a", 2, 3), ParameterSpec("b", 1e-3, 1, "logarithmic")])
    one = lhs(s, 1, seed=0)
    assert one.shape == (1, 2)
    s.validate(one[0])
    np.testing.assert_array_equal(lhs(s, 30, seed=9), lhs(s, 30, seed=9))
    assert not np.array_equal(lhs(s, 30, seed=9), lhs(s, 30, seed=10))


def test_lhs_rejects_empty():
    with pytest.raises(ValueError):
        lhs(unit_space(1), 0, seed=0)


def test_lhs_centered_flag():
    pts = lhs(unit_space(3), 5, seed=1, centered=True)
    np.testing.assert_allclose(np.sort(pts, axis=0), np.tile((np.arange(5) + 0.5)[:, None] / 5, (1, 3)))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_lhs_stratification_property(d, n, seed):
    space = ParameterSpace([ParameterSpec(f"x{k}", -1.0 - k, 2.0 + k * k) for k in range(d)])
    u = space.to_unit(lhs(space, n, seed=seed))
    strata = np.floor(u * n).astype(int)
    for k in range(d):
        assert sorted(strata[:, k]) == list(range(n))


def test_grid_examples():
    assert grid(unit_space(2), (3, 2)).shape == (6, 2)
    s = ParameterSpace([ParameterSpec("a", 0.0, 10.0)])
    np.testing.assert_allclose(grid(s, (3,))[:, 0], [0, 5, 10])
    np.testing.assert_allclose(grid(s, (1,))[:, 0], [5])


def test_grid_lexicographic_and_log_levels():
    s = ParameterSpace([ParameterSpec("a", 0, 1), ParameterSpec("b", 1, 100, "logarithmic")])
    g = grid(s, (2, 3))
    np.testing.assert_allclose(g, [[0, 1], [0, 10], [0, 100], [1, 1], [1, 10], [1, 100]])


def test_grid_rejects_zero_levels():
    with pytest.raises(ValueError):
        grid(unit_space(2), (2, 0))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 5), min_size=1, max_size=4))
def test_grid_in_bounds_and_distinct(levels):
    space = ParameterSpace([ParameterSpec(f"x{k}", k, 2 * k + 1) for k in range(len(levels))])
    g = grid(space, levels)
    assert len(g) == np.prod(levels)
    for row in g:
        space.validate(row)
    assert len({tuple(r) for r in g}) == len(g)
