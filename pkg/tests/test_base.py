import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randtmc.base import (
    BaseSystem,
    advance,
    base_average,
    induced_map,
    induced_times,
    jump_map,
    return_structure,
    return_times,
    weight_of,
)
from randtmc.errors import ConfigError, NonFinite


def test_advance_examples():
    assert advance(BaseSystem.cyclic(3), 0, 4) == 1
    assert advance(BaseSystem.cyclic(5), 3, 0) == 3
    assert advance(BaseSystem.cyclic(2), 1, -3) == 0


def test_return_times_examples():
    assert return_times(BaseSystem.cyclic(3), 0, {0}, 10) == [3, 6, 9]
    b = BaseSystem.cyclic(4)
    assert return_times(b, 2, b.states, 6) == [1, 2, 3, 4, 5, 6]
    assert return_times(BaseSystem.cyclic(2), 0, {1}, 5) == [1, 3, 5]


def test_induced_and_jump_examples():
    assert induced_map(BaseSystem.cyclic(4), {0, 2}, 0) == (2, 2)
    assert induced_map(BaseSystem.cyclic(7), {3}, 3) == (7, 3)
    assert induced_map(BaseSystem.cyclic(6), {0, 1}, 1) == (5, 0)
    assert jump_map(BaseSystem.cyclic(3), {0}, 4, 0) == (6, 0)
    assert jump_map(BaseSystem.cyclic(5), {0, 2}, 3, 2) == (3, 0)


def test_induced_and_jump_preconditions():
    with pytest.raises(ValueError):
        induced_map(BaseSystem.cyclic(4), {0}, 1)
    with pytest.raises(ValueError):
        jump_map(BaseSystem.cyclic(4), {0}, 0, 0)


def test_base_average_examples():
    assert base_average(BaseSystem.cyclic(3), lambda w: 2.5) == pytest.approx(2.5)
    assert base_average(BaseSystem.cyclic(2), [0.0, 4.0]) == pytest.approx(2.0)
    assert base_average(BaseSystem.cyclic(2), np.log([1.0, 1.0])) == 0.0
    with pytest.raises(NonFinite):
        base_average(BaseSystem.cyclic(2), [0.0, np.inf])


def test_invalid_bases():
    with pytest.raises(ConfigError):
        BaseSystem.cyclic(0)
    with pytest.raises(ConfigError):
        BaseSystem((0, 0), (0.5, 0.5))
    with pytest.raises(ConfigError):
        BaseSystem((1, 0), (0.3, 0.7))


def test_sampled_path_seeded():
    P = [[0.9, 0.1], [0.2, 0.8]]
    a = BaseSystem.sample_markov_path(P, 50, seed=7)
    b = BaseSystem.sample_markov_path(P, 50, seed=7)
    assert a.labels == b.labels and a.mode == "sampled-path"
    assert a.orbit_period(0) == 50
    assert weight_of(a, range(10)) == pytest.approx(0.2)


def test_return_structure():
    rs = return_structure(BaseSystem.cyclic(6), {0, 3}, 12)
    assert rs.times[1] == [2, 5, 8, 11]
    assert rs.first_return == {0: 3, 3: 3}
    assert rs.induced_step == {0: 3, 3: 0}


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 9), w=st.integers(0, 8), j=st.integers(-27, 27), k=st.integers(-27, 27))
def test_advance_group_action(p, w, j, k):
    b = BaseSystem.cyclic(p)
    w %= p
    assert advance(b, w, j + k) == advance(b, advance(b, w, j), k)
    assert advance(b, advance(b, w, k), -k) == w


@settings(max_examples=60, deadline=None)
@given(p=st.integers(1, 8), data=st.data())
def test_return_times_match_scan(p, data):
    b = BaseSystem.cyclic(p)
    target = data.draw(st.sets(st.integers(0, p - 1), min_size=1))
    w = data.draw(st.integers(0, p - 1))
    n_max = data.draw(st.integers(1, 30))
    scan = [n for n in range(1, n_max + 1) if (w + n) % p in target]
    assert return_times(b, w, target, n_max) == scan


@settings(max_examples=40, deadline=None)
@given(p=st.integers(1, 8), data=st.data())
def test_induced_times_over_one_cycle(p, data):
    b = BaseSystem.cyclic(p)
    target = data.draw(st.sets(st.integers(0, p - 1), min_size=1))
    w = data.draw(st.sampled_from(sorted(target)))
    # one full induced cycle visits every target state once and spans the period
    assert induced_times(b, target, w, len(target)) == p
