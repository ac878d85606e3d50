import math
import pickle

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import keys, multi_index
from kamnls.index_core import (
    MonomialKey,
    MultiIndex,
    SigmaParams,
    Truncation,
    compute_c_sigma,
    decreasing_rearrangement,
    floor_bracket,
    mode_index,
    momentum,
    support,
)


def superadd(x, y, sigma):
    return math.log(x + y) ** sigma - math.log(x) ** sigma - 0.5 * math.log(y) ** sigma


# -- c(sigma) ----------------------------------------------------------------


@pytest.mark.parametrize("sigma", [2.5, 3.0, 4.0])
def test_c_sigma_boundary_and_minimality(sigma):
    c = compute_c_sigma(sigma)
    assert c >= 2
    assert superadd(c, c, sigma) <= 0
    # independent scan: y = c works on a coarse grid, and y = c - 1 fails somewhere
    xs = np.geomspace(c, 1e12, 400)
    assert all(superadd(x, c, sigma) <= 1e-12 for x in xs)
    if c > 2:
        xs = np.geomspace(c - 1, 1e6, 4000)
        assert any(superadd(x, c - 1, sigma) > 0 for x in xs)


def test_c_sigma_independent_per_sigma():
    c3, c4 = compute_c_sigma(3.0), compute_c_sigma(4.0)
    assert c3 == 121
    assert c4 == 664
    assert compute_c_sigma(2.5) == 52


def test_c_sigma_requires_sigma_above_two():
    with pytest.raises(ValueError):
        compute_c_sigma(2.0)


# -- floor bracket -----------------------------------------------------------


def test_floor_bracket_examples():
    p = SigmaParams.from_sigma(3.0)
    assert floor_bracket(0, p) == p.c_sigma
    assert floor_bracket(p.c_sigma, p) == p.c_sigma
    assert floor_bracket(-p.c_sigma, p) == p.c_sigma
    assert p.c_sigma < 10**6
    assert floor_bracket(10**6, p) == 10**6


@given(st.integers(-(10**7), 10**7), st.sampled_from([2.5, 3.0, 4.0]))
def test_floor_bracket_positive_log(n, sigma):
    p = SigmaParams.from_sigma(sigma)
    f = floor_bracket(n, p)
    assert f >= p.c_sigma >= 2
    assert math.log(f) > 0
    assert p.L(n) == pytest.approx(math.log(f) ** sigma, rel=1e-15)


# -- momentum, support, rearrangement ----------------------------------------


def test_momentum_examples():
    k = MultiIndex({1: 2, -3: 1})
    assert momentum(k, k) == 0
    assert momentum(MultiIndex({2: 1}), MultiIndex({1: 1})) == 1
    assert momentum(MultiIndex({3: 2, -1: 1}), MultiIndex({0: 3})) == 5


@given(multi_index(), multi_index())
def test_momentum_antisymmetric(k, kp):
    assert momentum(k, kp) == -momentum(kp, k)


def test_support_examples():
    assert support(MonomialKey()) == frozenset()
    assert support(MonomialKey.make(a={5: 1})) == {5}
    assert support(MonomialKey.make(k={1: 1}, kp={-1: 2})) == {1, -1}


def test_rearrangement_examples():
    assert decreasing_rearrangement(MonomialKey.make(a={2: 1}, k={-3: 1}))[0] == (3, 2, 2)
    assert decreasing_rearrangement(MonomialKey())[0] == ()
    assert decreasing_rearrangement(MonomialKey.make(k={1: 2}, kp={1: 1}))[0] == (1, 1, 1)


def test_rearrangement_tie_break_positive_first():
    key = MonomialKey.make(k={-2: 1}, kp={2: 1, 1: 1})
    assert decreasing_rearrangement(key)[1] == (2, -2, 1)


@given(keys())
def test_rearrangement_length_is_degree(key):
    abs_seq, signed = decreasing_rearrangement(key)
    assert len(abs_seq) == key.degree() == sum(2 * e for _, e in key.a.items) + key.k.degree() + key.kp.degree()
    assert list(abs_seq) == sorted(abs_seq, reverse=True)
    assert [abs(n) for n in signed] == list(abs_seq)


# -- canonical keys ----------------------------------------------------------


@given(st.dictionaries(st.integers(-5, 5), st.integers(1, 3), max_size=5), st.randoms())
def test_canonical_equality_any_insertion_order(d, rnd):
    items = list(d.items())
    rnd.shuffle(items)
    a, b = MultiIndex(dict(items)), MultiIndex(d)
    assert a == b and hash(a) == hash(b)
    assert [n for n, _ in a.items] == sorted(d)


def test_multiindex_rejects_bad_exponents():
    assert MultiIndex({1: 0}) == MultiIndex()
    with pytest.raises(ValueError):
        MultiIndex({1: -1})


def test_key_is_immutable_and_picklable():
    key = MonomialKey.make(a={0: 1}, k={1: 2}, kp={-1: 1})
    with pytest.raises(AttributeError):
        key.a = MultiIndex()
    assert pickle.loads(pickle.dumps(key)) == key
    assert key.degree() == 5


def test_truncation_bounds():
    tr = Truncation(2, 4)
    assert list(tr.modes()) == [-2, -1, 0, 1, 2]
    assert tr.admits(MonomialKey.make(k={2: 2}, kp={-2: 2}))
    assert not tr.admits(MonomialKey.make(k={3: 1}))
    assert not tr.admits(MonomialKey.make(a={1: 2}, k={0: 1}))
    with pytest.raises(ValueError):
        Truncation(2, 65)
    assert mode_index(-2, 2) == -2 and mode_index(2, 2) == 2
    with pytest.raises(ValueError):
        mode_index(3, 2)
