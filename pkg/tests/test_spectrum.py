import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from salem.bump import BumpSpec, bump_eval, cutoff_bump, tensor_hat_on_grid
from salem.divisors import tau
from salem.errors import BoxTooLargeError, DomainError
from salem.qsets import HSpec, PsiSpec, QSetSpec, Scenario, preset_scenario
from salem.spectrum import (
    FourierGrid, SpectrumTable, divisor_count_bound, envelope_check, fm_eval, fm_hat, fm_hat_dense, fm_hat_table,
    lattice_tail_bound, scenario_bump, windowed_spectrum,
)


def scen(kind="all_integers", tau_=2.0, theta=0.0, m=1, n=1):
    return Scenario(QSetSpec(n, kind), PsiSpec("power", tau_), m=m, theta=(theta,) * m)


def quadrature_coeff(s, M, ell, N=2**15):
    """Riemann sum on [0, 1): exact up to aliasing for the band-limited-ish periodic density."""
    x = (np.arange(N) / N)[:, None]
    vals = fm_eval(s, M, x)
    return complex(np.mean(vals * np.exp(-2j * np.pi * ell * x[:, 0])))


def test_small_window_example():
    # Q(4) = {+-3, +-4}, eps = 1/4, l = 3 picks q = +-3 with witness k = +-1
    s = scen(tau_=1.0)
    phi = scenario_bump(s)
    expected = (2 / 4) * float(phi.factor_hat(0.25))
    assert fm_hat(s, 4, 3) == pytest.approx(expected, abs=1e-15)
    assert fm_hat(s, 4, 3) == pytest.approx(quadrature_coeff(s, 4, 3), abs=1e-10)
    assert fm_hat(s, 4, 0) == 1
    assert fm_hat(s, 4, 1) == 0 and fm_hat(s, 4, 2) == 0


def test_density_at_strip_center():
    s = scen(tau_=1.0)
    phi = scenario_bump(s)
    eps = 0.25
    assert fm_eval(s, 4, np.array([1 / 3])) >= (2 / 8) / eps * bump_eval(phi, 0.0) > 0


def test_density_vanishes_off_strips():
    s = scen(tau_=2.0)
    x = (np.arange(2**18) / 2**18)[:, None]
    vals = fm_eval(s, 16, x)
    window = s.window(16)[:, 0]
    eps = s.epsilon(16)
    dist = np.min([np.abs(x[:, 0] * q - np.round(x[:, 0] * q)) for q in window], axis=0)
    assert np.all(vals[dist >= eps] == 0)
    assert np.all(vals >= 0)
    assert np.mean(vals) == pytest.approx(1.0, abs=1e-9)


@pytest.mark.parametrize("kind,tau_,theta,M", [
    ("all_integers", 2.0, 0.0, 8), ("primes", 1.5, 1 / math.sqrt(2), 8), ("squares", 1.5, 0.3, 16),
])
def test_fm_hat_quadrature_oracle(kind, tau_, theta, M):
    s = scen(kind, tau_, theta)
    for ell in (-13, -6, 5, 7, 12, 30):
        assert fm_hat(s, M, ell) == pytest.approx(quadrature_coeff(s, M, ell), abs=1e-9)


def test_table_structure():
    s = scen()
    table = fm_hat_table(s, 16, 64)
    assert table.get(0) == 1
    assert all(table.get(v) == 0 for v in range(-8, 9) if v)
    assert len(table.coeffs) <= divisor_count_bound(64)
    for key, v in table.items():
        assert v == fm_hat(s, 16, key)
    with pytest.raises(DomainError):
        table.get(65)
    with pytest.raises(BoxTooLargeError):
        fm_hat_table(scen(m=2, n=2), 4, 30, cap=10**5)


@given(st.sampled_from(["all_integers", "primes", "squares", "sin_threshold"]), st.sampled_from([1.5, 2.0]),
       st.floats(-1, 1), st.sampled_from([8.0, 16.0, 32.0]))
def test_conjugate_symmetry_and_bound(kind, tau_, theta, M):
    assume(len(QSetSpec(1, kind).window(M)) > 0)
    table = fm_hat_table(scen(kind, tau_, theta), M, int(4 * M))
    for key, v in table.coeffs.items():
        assert table.get(tuple(-c for c in key)) == pytest.approx(np.conj(v), abs=1e-15)
        assert abs(v) <= 1 + 1e-12


def test_table_2d_matches_pointwise():
    s = scen(m=2, theta=0.25)
    table = fm_hat_table(s, 4, 12)
    rng = np.random.default_rng(3)
    for ell in rng.integers(-12, 13, size=(40, 2)):
        assert table.get(ell) == pytest.approx(fm_hat(s, 4, ell), abs=1e-15)


def test_dense_matches_sparse():
    s = preset_scenario("integers_tau2")
    table = fm_hat_table(s, 64, 700)
    dense = fm_hat_dense(s, 64, 700)
    np.testing.assert_allclose(dense.values, table.dense(), atol=1e-15)
    np.testing.assert_allclose(dense.kernel(100), table.kernel(100), atol=1e-15)


def test_envelope_trivial_and_monotone():
    s = preset_scenario("integers_tau2")
    table = fm_hat_table(s, 32, 512)
    trivial = envelope_check(table, 0.0, 1.0, 1.0, 1.0)
    assert trivial.C_fit <= 1
    ratios = [envelope_check(table, 1 / 3, 4.0, z, 5.0).C_fit for z in (0.7, 0.8, 0.9, 1.0)]
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))
    with pytest.raises(DomainError):
        envelope_check(table, 1 / 3, 4.0, 0.5, 5.0)


def chi0_grid(s, R, radius):
    chi0 = cutoff_bump(s.m, s.n, s.K)
    axis = np.arange(-radius * R, radius * R + 1) / R
    return chi0, FourierGrid(R, radius, s.dim, tensor_hat_on_grid(chi0, axis).astype(complex))


def test_windowed_identity():
    s = scen()
    chi0, chi = chi0_grid(s, 4, 40)
    unit = SpectrumTable(8.0, 1 / 64, 8, 10, 1, 1, {(0,): 1 + 0j})
    out = windowed_spectrum(chi, unit, 30, chi0.C1, s.K)
    np.testing.assert_array_equal(out.values, chi.restrict(30).values)
    with pytest.raises(DomainError, match="enlarge by"):
        windowed_spectrum(chi, unit, 35, chi0.C1, s.K)


def test_windowed_fft_oracle():
    s = scen(tau_=1.0)
    R, box, N = 8, 256, 2**14
    chi0, chi = chi0_grid(s, R, 2 * box)
    out = windowed_spectrum(chi, fm_hat_table(s, 4, box), box, chi0.C1, s.K)
    x = -R / 2 + R * np.arange(N) / N
    f = bump_eval(chi0, x) * fm_eval(s, 4, x[:, None])
    j = np.arange(-box * R, box * R + 1)
    # the sample offset -R/2 contributes exp(pi i R xi) = (-1)^j at xi = j / R
    fft = (R / N) * (-1.0) ** j * np.fft.fft(f)[j % N]
    assert np.all(np.abs(out.values - fft) <= 1e-6 + out.err)
    assert np.max(np.abs(out.values - fft)) < 1e-6


@given(st.floats(0, 100), st.integers(110, 2000), st.integers(1, 3), st.integers(0, 4))
def test_tail_doubling(xi, L, D, extra):
    K = D + 1 + extra
    ratio = lattice_tail_bound(xi, L, 1.0, K, D) / lattice_tail_bound(xi, 2 * L, 1.0, K, D)
    assert ratio >= 2.0 ** (K - D) * (1 - 1e-12)


@pytest.mark.parametrize("xi,L,K", [(0.0, 10, 3), (3.25, 10, 4), (7.5, 20, 2)])
def test_tail_majorizes_lattice_sum(xi, L, K):
    l = np.arange(-10**6, 10**6 + 1)
    far = np.abs(l) > L
    brute = np.sum((1 + np.abs(xi - l[far])) ** (-float(K)))
    assert brute <= lattice_tail_bound(xi, L, 1.0, K, 1)
    assert math.isinf(lattice_tail_bound(9.8, 10, 1.0, 3, 1))
