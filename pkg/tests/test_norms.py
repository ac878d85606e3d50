import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import polynomials
from kamnls.hamiltonian import Hamiltonian, TaggedHamiltonian
from kamnls.homological import split_perturbation
from kamnls.index_core import MonomialKey, Truncation
from kamnls.norms import (
    NormWeights,
    ham_norm,
    ham_norm_plus,
    log_ham_norm,
    log_n2_plain_constant,
    log_n2_plus_constant,
    part_norm,
    seq_norm,
)
from kamnls.oracles import random_polynomial

W = NormWeights(rho=0.05, mu=0.4, r=1.0, sigma=3.0)
TR = Truncation(3, 6, coeff_floor=0.0)


def test_weights_validation():
    with pytest.raises(ValueError):
        NormWeights(0.0, 1.0, 1.0, 3.0)
    with pytest.raises(ValueError):
        NormWeights(0.1, 1.0, 1.0, 2.0)


# -- sequence norm -----------------------------------------------------------


def test_seq_norm_examples():
    assert seq_norm({}, W) == 0.0
    assert seq_norm({0: 0j}, W) == 0.0
    c = W.sp.c_sigma
    assert seq_norm({0: 1.0}, W) == pytest.approx(math.exp(math.log(c) ** 3))
    w = NormWeights(0.05, 0.4, 0.01, 3.0)
    q = {n: math.exp(-w.r * w.L(n)) for n in range(-10, 11)}
    assert seq_norm(q, w) == pytest.approx(1.0, rel=1e-12)


# -- Hamiltonian norm --------------------------------------------------------


def test_ham_norm_examples():
    assert ham_norm(Hamiltonian({}, TR), W) == 0.0
    B = 2.5 - 1j
    H = Hamiltonian({MonomialKey.make(k={2: 1}, kp={2: 1}): B}, TR)
    c = W.sp.c_sigma
    # rho-part cancels (2 L(2) - 2 L(n1*)), momentum zero gives floor c
    expected = abs(B) * math.exp(W.mu * math.log(c) ** 3)
    assert ham_norm(H, W) == pytest.approx(expected, rel=1e-12)


def test_ham_norm_hand_weight_with_momentum():
    w = NormWeights(0.01, 0.02, 1.0, 2.5)
    H = Hamiltonian({MonomialKey.make(a={1: 1}, k={3: 2}, kp={-2: 1}): 1.0}, Truncation(3, 6, 0.0))
    L = w.L
    # rearrangement (3, 3, 2, 1, 1), momentum 3 + 3 + 2 = 8
    log_w = w.rho * (2 * L(1) + 2 * L(3) + L(2) - 2 * L(3)) - w.mu * L(8)
    assert ham_norm(H, w) == pytest.approx(math.exp(-log_w), rel=1e-12)


@given(polynomials(mode_cap=3), st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False))
def test_ham_norm_homogeneous(f, s):
    H = Hamiltonian(f, TR)
    assert ham_norm(H.scale(s), W) == pytest.approx(abs(s) * ham_norm(H, W), rel=1e-12, abs=1e-300)


@given(polynomials(mode_cap=3), polynomials(mode_cap=3))
def test_ham_norm_subadditive(f, g):
    A, B = Hamiltonian(f, TR), Hamiltonian(g, TR)
    assert ham_norm(A + B, W) <= (ham_norm(A, W) + ham_norm(B, W)) * (1 + 1e-12)


def test_log_norm_survives_overflow():
    w = NormWeights(0.01, 50.0, 1.0, 4.0)
    H = Hamiltonian({MonomialKey.make(k={1: 1}, kp={1: 1}): 1.0}, TR)
    assert ham_norm(H, w) == math.inf
    assert math.isfinite(log_ham_norm(H, w))


# -- plus-norm ---------------------------------------------------------------


def test_plus_norm_zero_and_single_part():
    z0 = Hamiltonian({}, TR)
    z1, z2 = TaggedHamiltonian({}, TR, 1), TaggedHamiltonian({}, TR, 2)
    assert ham_norm_plus(z0, z1, z2, W) == 0.0
    R0 = Hamiltonian({MonomialKey.make(k={1: 1}, kp={0: 1}): 3.0}, TR)
    assert ham_norm_plus(R0, z1, z2, W) == part_norm(R0, W, 0)


def test_plus_norm_tag_weights():
    key = MonomialKey.make(k={1: 1}, kp={0: 1})
    L = W.L
    one = TaggedHamiltonian({((2,), key): 1.0}, TR, 1)
    base = part_norm(Hamiltonian({key: 1.0}, TR), W, 0)
    assert part_norm(one, W, 1) == pytest.approx(base * math.exp(-2 * W.rho * L(2)))
    same = TaggedHamiltonian({((2, 2), key): 1.0}, TR, 2)
    assert part_norm(same, W, 2) == pytest.approx(base * math.exp(-4 * W.rho * L(2)))


def test_plus_norm_contract_errors():
    R1 = TaggedHamiltonian({((1,), MonomialKey.make(k={0: 1})): 1.0}, TR, 1)
    with pytest.raises(ValueError):
        part_norm(R1, W, 2)
    with pytest.raises(ValueError):
        part_norm(Hamiltonian({}, TR), W, 1)
    with pytest.raises(ValueError):
        ham_norm_plus(Hamiltonian({}, TR), R1, R1, W)


@pytest.mark.parametrize("delta", [0.01, 0.05, 0.1])
@pytest.mark.parametrize("seed", range(4))
def test_plus_norm_conversion_sandwich(delta, seed):
    rng = np.random.default_rng(seed)
    tr = Truncation(3, 6, coeff_floor=0.0)
    R = Hamiltonian(random_polynomial(rng, list(tr.modes()), 6, 10), tr)
    w = NormWeights(rho=0.05, mu=0.5, r=1.0, sigma=3.0)
    sp = split_perturbation(R)
    shifted = w.with_(rho=w.rho + delta, mu=w.mu - delta)
    lhs = math.log(sp.plus_norm(shifted))
    assert lhs <= log_n2_plus_constant(delta, w.sigma) + log_ham_norm(R, w)
    lhs = log_ham_norm(R, shifted)
    assert lhs <= log_n2_plain_constant(delta) + math.log(sp.plus_norm(w))
