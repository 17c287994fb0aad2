import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from salem.divisors import (
    DivisorQuery, divisor_candidates, divisor_set_contains, divisor_window, divisors, tau, tau_sieve, wigert_ratio,
    wigert_sweep,
)
from salem.errors import DomainError
from salem.qsets import QSetSpec
from salem.verify import brute_divisor_set


def naive_tau(L):
    return sum(1 for d in range(1, L + 1) if L % d == 0)


@pytest.mark.parametrize("L,expected", [(1, 1), (12, 6), (720720, 240), (2**20, 21), (997, 2)])
def test_tau_examples(L, expected):
    assert tau(L) == expected


def test_tau_agrees_with_sieve_and_scan():
    table = tau_sieve(3000)
    assert table[0] == 0
    assert all(table[L] == tau(L) for L in range(1, 3001))
    assert all(tau(L) == naive_tau(L) for L in range(1, 400))
    assert divisors(12) == [1, 2, 3, 4, 6, 12]


def test_tau_sieve_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("SALEM_CACHE_DIR", str(tmp_path))
    first = tau_sieve(500)
    cached = tmp_path / "tau_sieve_500.u32le"
    assert cached.exists() and cached.stat().st_size == 4 * 501
    np.testing.assert_array_equal(tau_sieve(500), first)


def test_wigert_examples():
    assert wigert_ratio(17) == pytest.approx(math.log(2) * math.log(math.log(17)) / math.log(17))
    assert wigert_ratio(17) == pytest.approx(0.2548, abs=1e-4)
    L = 720720
    assert wigert_ratio(L) == pytest.approx(math.log(240) * math.log(math.log(L)) / math.log(L), rel=1e-14)
    assert wigert_ratio(L) == pytest.approx(1.0572, abs=1e-4)
    assert wigert_ratio(2**20) == pytest.approx(0.578, abs=1e-3)
    with pytest.raises(DomainError):
        wigert_ratio(15)


def test_wigert_sweep_small():
    sweep = wigert_sweep(10**4, (0.99,))
    ratios = [wigert_ratio(L) for L in range(16, 10**4 + 1)]
    assert sweep.max_ratio == pytest.approx(max(ratios), rel=1e-12)
    L = sweep.thresholds[0.99]
    assert all(r <= 0.99 for r in ratios[L - 16:])
    assert ratios[L - 17] > 0.99


def test_membership_examples():
    assert divisor_set_contains(3, DivisorQuery(1, 1, (6,))) == (True, (2,))
    assert divisor_set_contains((2, 3), DivisorQuery(2, 2, (4, 6, 6, 9))) == (True, (2, 3))
    assert divisor_set_contains((2, 3), DivisorQuery(1, 2, (3, 2))) == (False, None)
    with pytest.raises(DomainError):
        divisor_set_contains((0, 3), DivisorQuery(1, 2, (3, 2)))


def test_window_examples():
    Z = QSetSpec(1, "all_integers")
    assert divisor_window(DivisorQuery(1, 1, (6,)), Z, 4) == [(-3,), (3,)]
    assert divisor_window(DivisorQuery(1, 1, (5,)), Z, 4) == []
    assert divisor_window(DivisorQuery(1, 2, (4, 6)), QSetSpec(2, "all_integers"), 4) == []
    assert len(divisor_window(DivisorQuery(1, 1, (0,)), Z, 4)) == 4


@given(st.integers(1, 3), st.integers(1, 3), st.data())
def test_candidates_match_brute_force(m, n, data):
    ell = data.draw(st.lists(st.integers(-40, 40), min_size=m * n, max_size=m * n).filter(any))
    query = DivisorQuery(m, n, tuple(ell))
    got = [q for q, _ in divisor_candidates(query)]
    assert got == brute_divisor_set(query, query.norm)
    assert len(got) <= 2 * tau(query.norm)
    for q, k in divisor_candidates(query):
        assert np.array_equal(np.outer(k, q), query.matrix)


@given(st.integers(-300, 300).filter(bool))
def test_one_dimensional_count(L):
    assert len(divisor_candidates(DivisorQuery(1, 1, (L,)))) == 2 * tau(abs(L))
