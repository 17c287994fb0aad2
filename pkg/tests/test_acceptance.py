"""Acceptance criteria 1-8, each at its stated tolerance and runtime budget."""

import json
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from salem.cli import run
from salem.dimension import cover_sum, eta_estimate, fit_fourier_exponent, predict_dims
from salem.errors import MsetExhaustedError
from salem.measure import build_measure, normalized_mass, support_check
from salem.qsets import HSpec, PsiSpec, QSetSpec, certify_scenario, preset_scenario
from salem.spectrum import fm_hat_table
from salem.verify import (
    divisor_correctness, envelope_battery, fft_oracle_1d, fft_oracle_2d, structural_identities, wigert_thresholds,
)


def record(log, number, title, passed, detail, seconds, budget):
    within = seconds < budget
    ok = bool(passed and within)
    line = (f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} | {detail} | "
            f"{seconds:.1f}s (budget {budget:.0f}s)")
    log.append(line)
    print(line)
    assert ok, line


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


def test_criterion_1_structural_identities(acceptance_log):
    (ok, detail), secs = timed(structural_identities)
    record(acceptance_log, 1, "structural spectral identities", ok, detail, secs, 60)


def test_criterion_2_fft_oracle(acceptance_log):
    def both():
        ok1, d1 = fft_oracle_1d(N=2**14)
        ok2, d2 = fft_oracle_2d(N=2**9)
        return ok1 and ok2, f"1D: {d1}; 2D: {d2}"

    (ok, detail), secs = timed(both)
    record(acceptance_log, 2, "FFT oracle equivalence", ok, detail, secs, 120)


def test_criterion_3_divisors(acceptance_log):
    (ok, detail), secs = timed(divisor_correctness)
    record(acceptance_log, 3, "divisor-set enumeration", ok, detail, secs, 60)


def test_criterion_4_wigert(acceptance_log):
    (ok, detail), secs = timed(lambda: wigert_thresholds(10**6, 0.99))
    record(acceptance_log, 4, "Wigert thresholds", ok, detail, secs, 60)


def test_criterion_5_envelope(acceptance_log):
    (ok, detail), secs = timed(envelope_battery)
    record(acceptance_log, 5, "decay envelope at certified scales", ok, detail, secs, 120)


# ------------------------------------------------------------ measure build

THETAS = (0.0, 0.5)
LEVELS, GRID_R, BOX = 3, 8, 512


@pytest.fixture(scope="module")
def builds():
    """The three-level builds for both shifts; a failing level leaves the partial build."""
    out = {}
    start = time.perf_counter()
    for theta in THETAS:
        s = preset_scenario("integers_tau2").with_(theta=(theta,))
        try:
            out[theta] = (build_measure(s, LEVELS, GRID_R, BOX), None)
        except MsetExhaustedError as exc:
            out[theta] = (exc.partial, exc)
    return out, time.perf_counter() - start


def measure_checks(build, error):
    problems, parts = [], []
    if error is not None:
        problems.append(f"level {error.level} not built (best M={error.best_M:g}, ratio {error.best_ratio:.3g})")
    spacing = 2.0 / round(len(build.x) ** (1 / build.x.shape[1]))
    for lv in build.levels:
        mass, norm = lv.mass, normalized_mass(build, lv.k)
        slack = spacing * build.levels[0].M_k
        support = support_check(build, lv.k, slack)
        parts.append(f"k={lv.k} M={lv.M_k:g} margin={lv.margin:.3g} mass={mass:.6g} "
                     f"normalized={norm:.6g} support violations={support.violations}")
        if lv.margin > 1:
            problems.append(f"deviation budget exceeded at k={lv.k}")
        if not 0.5 <= mass <= 1.5:
            problems.append(f"mass {mass:.4g} at k={lv.k}")
        if support.violations:
            problems.append(f"support violations at k={lv.k}")
        if abs(norm - 1) > 1e-6:
            problems.append(f"normalized mass {norm:.6g} at k={lv.k}")
    return problems, parts


def test_criterion_6_measure_build(acceptance_log, builds):
    results, secs = builds
    problems, parts = [], []
    for theta in THETAS:
        build, error = results[theta]
        p, d = measure_checks(build, error)
        problems += [f"theta={theta}: {x}" for x in p]
        parts.append(f"theta={theta}: " + "; ".join(d))
    detail = " || ".join(parts) + (" || problems: " + "; ".join(problems) if problems else "")
    record(acceptance_log, 6, "three-level measure build", not problems, detail, secs, 600)


def test_criterion_7_dimension_formulas(acceptance_log, builds):
    start = time.perf_counter()
    problems, parts = [], []
    for tau in (1.5, 2.0, 3.0):
        eta = eta_estimate(QSetSpec(1, "all_integers"), PsiSpec("power", tau))
        parts.append(f"eta(tau={tau:g})={eta:.4f} vs {2 / (1 + tau):.4f}")
        if abs(eta - 2 / (1 + tau)) > 0.05:
            problems.append(f"eta off at tau={tau}")
    report = predict_dims("mn_app", m=4, n=2, lam=2)
    parts.append(f"mn_app: {report.hausdorff_pred}, {report.fourier_lower_pred}")
    if report.hausdorff_pred != 6 or report.fourier_lower_pred != Fraction(4, 3):
        problems.append("mn_app prediction")
    for theta in THETAS:
        build, _ = builds[0][theta]
        if len(build.levels) < LEVELS:
            problems.append(f"theta={theta}: no level-{LEVELS} measure to fit")
        if build.levels:
            top = build.levels[-1]
            fit = fit_fourier_exponent(top.fourier_grid, build.scenario.h)
            parts.append(f"theta={theta}: fit on level {top.k} = {fit.exponent:.3f}")
            if len(build.levels) == LEVELS and fit.exponent < 0.23:
                problems.append(f"theta={theta}: fit {fit.exponent:.3f} < 0.23")
    secs = time.perf_counter() - start
    detail = "; ".join(parts) + (" || problems: " + "; ".join(problems) if problems else "")
    record(acceptance_log, 7, "dimension formulas and exponent fit", not problems, detail, secs, 300)


def test_criterion_8_property_suite(acceptance_log, tmp_path):
    start = time.perf_counter()
    problems = []
    Z, psi = QSetSpec(1, "all_integers"), PsiSpec("power", 2.0)
    above = [cover_sum(Z, psi, 0.0, 0.8, N).value for N in (10, 100, 1000, 10000)]
    below = [cover_sum(Z, psi, 0.0, 0.5, 1, Nm).value for Nm in (10**3, 10**4, 10**5, 10**6)]
    if not all(b < a for a, b in zip(above, above[1:])):
        problems.append("cover_sum not decreasing in N above eta")
    if not all(b > a for a, b in zip(below, below[1:])):
        problems.append("cover_sum not increasing in N_max below eta")

    flips = 0
    for name in ("integers_tau2", "squares_tau2", "shifted_primes_tau2", "sin_threshold_tau2"):
        s = preset_scenario(name)
        for a in (0.1, 1 / 6, 1 / 3, 0.5):
            prev = None
            for c in (0.5, 1, 2, 4, 8, 16):
                t = s.with_(a=a, h=HSpec("constant", c))
                flags = [e.passed for e in certify_scenario(t.qset, t.psi, t).entries]
                if prev is not None:
                    flips += sum(1 for p, f in zip(prev, flags) if p and not f)
                prev = flags
    if flips:
        problems.append(f"{flips} certify flips under larger h")

    conj_bad = 0
    for kind in ("all_integers", "primes", "squares", "sin_threshold"):
        for theta in (0.0, 0.3, 1 / math.sqrt(2)):
            s = preset_scenario("integers_tau2").with_(qset=QSetSpec(1, kind), theta=(theta,), K=4)
            t = fm_hat_table(s, 32, 512)
            conj_bad += sum(1 for k, v in t.coeffs.items() if abs(t.coeffs.get((-k[0],), 0) - np.conj(v)) > 1e-15)
    if conj_bad:
        problems.append(f"{conj_bad} conjugate-symmetry mismatches")

    scen_path = tmp_path / "presets"
    run(["presets", "--out", str(scen_path)])
    identical = True
    for sub, extra in (("spectrum", ["--M", "64", "--lmax", "1024"]), ("dims", []),
                       ("certify", []), ("cover", ["--eta", "0.8", "--from", "100", "--to", "10000"])):
        outs = []
        for rep in ("a", "b"):
            out = tmp_path / f"{sub}_{rep}"
            run([sub, str(scen_path / "integers_tau2.json"), *extra, "--out", str(out)])
            outs.append(out)
        names = json.loads((outs[0] / "manifest.json").read_text())["outputs"]
        for name in names:
            if name != "manifest.json" and (outs[0] / name).read_bytes() != (outs[1] / name).read_bytes():
                identical = False
    if not identical:
        problems.append("reruns not byte-identical")
    secs = time.perf_counter() - start
    detail = (f"cover above eta {[round(v, 3) for v in above]}, below eta {[round(v, 1) for v in below]}; "
              f"h-monotonicity flips {flips}; conjugate mismatches {conj_bad}; byte-identical reruns {identical}")
    record(acceptance_log, 8, "property suite", not problems, detail, secs, 120)
