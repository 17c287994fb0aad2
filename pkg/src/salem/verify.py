"""Verification batteries shared by the CLI and the acceptance tests."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .bump import BumpSpec
from .divisors import DivisorQuery, divisor_candidates, tau, wigert_sweep
from .qsets import PsiSpec, QSetSpec, Scenario, certify_scenario, preset_scenario
from .spectrum import envelope_check, fm_eval, fm_hat_table

SUITES = ("structural", "oracle", "envelope")


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name, fn) -> CheckResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), detail, time.perf_counter() - start)


def _scenario(kind: str, tau_: float, theta: float, m: int = 1) -> Scenario:
    return Scenario(QSetSpec(1, kind), PsiSpec("power", tau_), m=m, theta=(theta,) * m)


def structural_identities() -> tuple[bool, str]:
    """F_hat(0) = 1, |F_hat| <= 1, exact zeros on 0 < |l| <= M/2, conjugate symmetry."""
    worst_zero, worst_bound, bad_zeros, bad_conj, cases = 0.0, 0.0, 0, 0, 0
    for kind, tau_, theta, M in itertools.product(
        ("all_integers", "primes", "squares"), (1.5, 2.0), (0.0, 1 / math.sqrt(2)), (16.0, 32.0, 64.0)
    ):
        table = fm_hat_table(_scenario(kind, tau_, theta), M, int(16 * M))
        cases += 1
        worst_zero = max(worst_zero, abs(table.get(0) - 1))
        worst_bound = max(worst_bound, max(abs(v) for v in table.coeffs.values()) - 1)
        bad_zeros += sum(1 for key, v in table.coeffs.items() if 0 < abs(key[0]) <= M / 2 and v != 0)
        for key, v in table.coeffs.items():
            mirror = table.coeffs.get(tuple(-c for c in key), 0j)
            if abs(mirror - np.conj(v)) > 1e-15:
                bad_conj += 1
    ok = worst_zero <= 1e-12 and worst_bound <= 1e-12 and bad_zeros == 0 and bad_conj == 0
    return ok, (f"{cases} tables; |F(0)-1|={worst_zero:.1e}, max|F|-1={worst_bound:.1e}, "
                f"nonzero in zero band={bad_zeros}, conjugate mismatches={bad_conj}")


def wigert_thresholds(upper: int = 10**6, zeta: float = 0.99) -> tuple[bool, str]:
    sweep = wigert_sweep(upper, (zeta,))
    L = sweep.thresholds[zeta]
    ok = L <= upper
    return ok, f"L_zeta({zeta})={L}, max ratio {sweep.max_ratio:.4f} at l={sweep.argmax}"


FFT_CASES_1D = (
    ("all_integers", 2.0, 0.0, 8.0),
    ("all_integers", 1.5, 1 / math.sqrt(2), 8.0),
    ("primes", 2.0, 0.0, 8.0),
    ("squares", 1.5, 1 / math.sqrt(2), 16.0),
)


def fft_oracle_1d(N: int = 2**14, cases=FFT_CASES_1D) -> tuple[bool, str]:
    """FFT of F_M sampled on N points of [0,1) against the divisor formula on |l| <= N/4."""
    worst = 0.0
    x = (np.arange(N) / N).reshape(-1, 1)
    ells = np.arange(-N // 4, N // 4 + 1)
    for kind, tau_, theta, M in cases:
        s = _scenario(kind, tau_, theta)
        fft = np.fft.fft(fm_eval(s, M, x)) / N
        table = fm_hat_table(s, M, N // 4)
        exact = np.array([table.get(l) for l in ells])
        worst = max(worst, float(np.abs(fft[ells % N] - exact).max() / np.abs(exact).max()))
    return worst <= 1e-6, f"{len(cases)} cases, relative sup error {worst:.2e}"


def fft_oracle_2d(N: int = 2**9, M: float = 4.0) -> tuple[bool, str]:
    s = Scenario(QSetSpec(1, "all_integers"), PsiSpec("power", 2.0), m=2, theta=(0.0, 1 / math.sqrt(2)))
    axis = np.arange(N) / N
    X = np.stack(np.meshgrid(axis, axis, indexing="ij"), -1).reshape(-1, 2)
    fft = np.fft.fftn(fm_eval(s, M, X).reshape(N, N)) / N**2
    L = N // 4
    idx = np.arange(-L, L + 1) % N
    exact = fm_hat_table(s, M, L).dense()
    err = float(np.abs(fft[np.ix_(idx, idx)] - exact).max() / np.abs(exact).max())
    return err <= 1e-5, f"m=2, n=1, M={M:g}, grid {N}^2, relative sup error {err:.2e}"


def brute_divisor_set(query: DivisorQuery, bound: int) -> list[tuple]:
    """All q in [-bound, bound]^n with nonzero entries that lie in D(l), by direct search."""
    mat = query.matrix
    axis = np.array([v for v in range(-bound, bound + 1) if v != 0], dtype=np.int64)
    Q = np.stack(np.meshgrid(*([axis] * query.n), indexing="ij"), -1).reshape(-1, query.n)
    ok = np.all(mat[None, :, 0] % Q[:, :1] == 0, axis=1)
    Q = Q[ok]
    k = mat[None, :, 0] // Q[:, :1]  # (N, m)
    match = np.all(k[:, :, None] * Q[:, None, :] == mat[None, :, :], axis=(1, 2))
    return sorted(tuple(int(v) for v in row) for row in Q[match])


def divisor_correctness(samples: int = 500, seed: int = 0) -> tuple[bool, str]:
    bad = 0
    for L in range(1, 201):
        for sign in (1, -1):
            q = DivisorQuery(1, 1, (sign * L,))
            got = [c[0] for c in divisor_candidates(q)]
            if got != brute_divisor_set(q, L) or len(got) != 2 * tau(L):
                bad += 1
    rng = np.random.default_rng(seed)
    bad_random = 0
    for _ in range(samples):
        m, n = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        ell = rng.integers(-40, 41, size=m * n)
        if not ell.any():
            ell[0] = int(rng.integers(1, 41))
        q = DivisorQuery(m, n, tuple(int(v) for v in ell))
        got = [c[0] for c in divisor_candidates(q)]
        if got != brute_divisor_set(q, q.norm) or len(got) > 2 * tau(q.norm):
            bad_random += 1
    ok = bad == 0 and bad_random == 0
    return ok, f"1D mismatches {bad}/400, random mismatches {bad_random}/{samples}"


ENVELOPE_PRESETS = ("integers_tau2", "squares_tau2")


def envelope_battery(zeta: float = 0.99, Ms=(32.0, 64.0, 128.0)) -> tuple[bool, str]:
    parts, ok = [], True
    for name in ENVELOPE_PRESETS:
        s = preset_scenario(name)
        C1 = BumpSpec(s.m, s.K).C1
        for M in (M for M in Ms if M in s.Mset):
            if not certify_scenario(s.qset, s.psi, s.with_(Mset=(M,))).passed:
                ok = False
                parts.append(f"{name}@{M:g} not certified")
                continue
            fit = envelope_check(fm_hat_table(s, M, int(16 * M)), s.a, float(s.h(M)), zeta, C1)
            ok &= fit.passed
            parts.append(f"{name}@{M:g} ratio {fit.C_fit:.3g}")
    return ok, f"C1={C1:.4f}; " + ", ".join(parts)


BATTERIES = {
    "structural": (("spectral identities", structural_identities), ("wigert thresholds", wigert_thresholds)),
    "oracle": (("fft oracle 1d", fft_oracle_1d), ("fft oracle 2d", fft_oracle_2d),
               ("divisor sets", divisor_correctness)),
    "envelope": (("envelope", envelope_battery),),
}


def run_suite(name: str) -> list[CheckResult]:
    names = SUITES if name == "all" else (name,)
    results = []
    for suite in names:
        for label, fn in BATTERIES[suite]:
            results.append(_timed(f"{suite}/{label}", fn))
    return results
