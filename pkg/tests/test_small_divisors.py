import math
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from kamnls.index_core import MultiIndex
from kamnls.kam import KamSchedule, RHO0
from kamnls.oracles import dio_oracle
from kamnls.small_divisors import (
    DioParams,
    FrequencyVector,
    dio_lower_bound,
    dist_to_int,
    divisor,
    enumerate_signed,
    log_product_bound,
    product_lower_bound,
    sample_omega,
    truncation_threshold,
    verify_diophantine,
)


def test_divisor_examples():
    k = MultiIndex({1: 2, -2: 1})
    om = sample_omega(0, 3)
    assert divisor(k, k, om) == 0
    assert divisor(MultiIndex({1: 1}), MultiIndex({0: 1}), {}) == 1
    got = divisor(MultiIndex({2: 1}), MultiIndex({1: 2}), om)
    assert got == pytest.approx(4 + om[2] - 2 * (1 + om[1]))


def test_frequency_roles():
    with pytest.raises(ValueError):
        FrequencyVector({0: 1.5}, "omega")
    FrequencyVector({0: 1.5}, "Vtilde")
    with pytest.raises(ValueError):
        FrequencyVector({0: 2.5}, "Vtilde")
    assert sample_omega(7, 4).sup() < 1


def test_dio_lower_bound_examples():
    assert dio_lower_bound({0: 1}, DioParams(0.1)) == pytest.approx(0.05)
    assert dio_lower_bound({2: 1}, DioParams(1.0)) == pytest.approx(1 / 17)
    assert dio_lower_bound({1: 1, -1: -1}, DioParams(1.0)) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        dio_lower_bound({}, DioParams(1.0))
    with pytest.raises(ValueError):
        DioParams(0.0)


@given(st.dictionaries(st.integers(-6, 6), st.integers(-4, 4).filter(bool), min_size=1, max_size=4), st.integers(-6, 6))
def test_dio_lower_bound_monotone(l, n):
    p = DioParams(1.0)
    base = dio_lower_bound(l, p)
    grown = dict(l)
    grown[n] = grown.get(n, 0) + (1 if grown.get(n, 0) >= 0 else -1)
    assert dio_lower_bound(grown, p) <= base
    if n not in l:
        assert dio_lower_bound({**l, n: 1}, p) < base


def test_enumerate_signed_count():
    # nonzero vectors on 3 modes with l1 size <= 1: 6; <= 2: 6 + 6 + 12 = 24
    assert len(list(enumerate_signed([-1, 0, 1], 1))) == 6
    assert len(list(enumerate_signed([-1, 0, 1], 2))) == 24
    seen = [tuple(sorted(v.items())) for v in enumerate_signed([-2, -1, 0, 1, 2], 3)]
    assert len(seen) == len(set(seen))


def test_verify_small_example_by_hand():
    om = FrequencyVector({-1: 0.3, 0: 0.7, 1: 0.5}, "omega")
    p = DioParams(0.05, 1, 1)
    rep = verify_diophantine(om, p)
    assert rep.count_checked == 6
    ratios = []
    for n, s in product((-1, 0, 1), (1, -1)):
        x = s * om[n]
        ratios.append(abs(x - round(x)) / (0.05 / 2))
    assert rep.worst_ratio == pytest.approx(min(ratios))
    assert rep.ok


def test_verify_gamma_to_zero_always_true():
    om = sample_omega(1, 2)
    assert verify_diophantine(om, DioParams(1e-300, 2, 2)).ok


def test_verify_detects_rational_resonance():
    om = FrequencyVector({-1: 0.3, 0: 0.1, 1: 0.5}, "omega")
    rep = verify_diophantine(om, DioParams(0.01, 1, 2))
    assert not rep.ok
    assert rep.worst_ratio == 0.0
    assert rep.worst_l in ({1: 2}, {1: -2})


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("support,size", [(1, 1), (2, 2), (3, 2)])
def test_verify_agrees_with_oracle(seed, support, size):
    om = sample_omega(seed, support)
    p = DioParams(0.05, support, size)
    rep = verify_diophantine(om, p)
    ratio, l = dio_oracle(om, support, size, 0.05)
    assert rep.worst_ratio == pytest.approx(ratio, rel=1e-12)


def test_verify_budget_flags_partial():
    rep = verify_diophantine(sample_omega(0, 3), DioParams(0.05, 3, 3), budget=10)
    assert rep.partial


def test_verify_threads_deterministic():
    om = sample_omega(2, 3)
    p = DioParams(0.05, 3, 3)
    a, b = verify_diophantine(om, p), verify_diophantine(om, p, threads=4)
    assert a.to_json() == b.to_json()


def test_dist_to_int():
    assert dist_to_int(2.25) == pytest.approx(0.25)
    assert dist_to_int(-0.9) == pytest.approx(0.1)


# -- thresholds --------------------------------------------------------------


def test_threshold_formula():
    sch = KamSchedule(r=200 * RHO0, mu0=400 * RHO0, eps0=1e-8, sigma=3.0)
    th = truncation_threshold(0, sch)
    B = 3 * 4**3 * (2 * 4 * math.log(4) ** 2 / RHO0) * math.log(1 / 1e-12)
    assert th.B == pytest.approx(B, rel=1e-12)
    assert th.N == math.ceil(math.exp(B ** (1 / 3)))
    assert th.M == math.ceil(B ** (2 / 3) / math.log(B) ** 3)


def test_threshold_degenerates_as_eps0_to_one():
    sch = KamSchedule(r=200 * RHO0, mu0=400 * RHO0, eps0=1 - 1e-15, sigma=3.0)
    th = truncation_threshold(0, sch)
    assert 0 < th.B < 1e-6
    # exp(B^{1/sigma}) tends to 1 from above, so the ceiling settles at 2
    assert math.exp(th.B ** (1 / 3)) - 1 < 1e-2
    assert th.N == 2


def test_threshold_monotone_in_s():
    sch = KamSchedule(r=200 * RHO0, mu0=400 * RHO0, eps0=0.999, sigma=3.0)
    Ns = [truncation_threshold(s, sch).N for s in range(5)]
    Bs = [truncation_threshold(s, sch).B for s in range(5)]
    assert all(b1 < b2 for b1, b2 in zip(Bs, Bs[1:]))
    assert all(n1 <= n2 for n1, n2 in zip(Ns, Ns[1:]))
    assert Ns[-1] > Ns[0]


def test_product_bound_at_B_equal_e():
    assert log_product_bound(math.e, 3.0) == pytest.approx(-100 * math.e)
    with pytest.raises(ValueError):
        log_product_bound(1.0, 3.0)


@pytest.mark.xfail(
    strict=True,
    reason="margin turns positive only once ln B_s exceeds ~1e5, far beyond double range",
)
def test_product_bound_margin_positive_at_sigma3():
    sch = KamSchedule(r=200 * RHO0, mu0=400 * RHO0, eps0=1e-8, sigma=3.0)
    for s in range(6):
        assert product_lower_bound(s, sch).ok


def test_product_bound_margin_is_reported():
    sch = KamSchedule(r=200 * RHO0, mu0=400 * RHO0, eps0=1e-8, sigma=3.0)
    pb = product_lower_bound(0, sch)
    assert pb.margin == pytest.approx(pb.log_bound - pb.log_lambda)
    assert pb.log_lambda == pytest.approx(0.01 * math.log(1e-8))
    near2 = KamSchedule(r=200 * RHO0, mu0=400 * RHO0, eps0=1e-3, sigma=2.05)
    assert not product_lower_bound(0, near2).ok
