"""Command-line entry point: ``salem <subcommand> ...``.

Exit codes: 0 success, 1 verification failure, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from fractions import Fraction
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from .bump import BumpSpec
from .dimension import (
    box_counting, cover_sum, eta_estimate, infer_descriptor, lambda_estimate, predict_dims,
)
from .errors import (
    BoxTooLargeError, DomainError, EmptyWindowError, InputError, InsufficientDataError, MsetExhaustedError,
    SalemError,
)
from .measure import build_measure, convergence_check, export_build
from .qsets import (
    H_FAMILIES, PRESET_SCENARIOS, PSI_FAMILIES, QSET_KINDS, certify_scenario, load_scenario, nu_estimate,
    preset_scenario,
)
from .spectrum import envelope_check, fm_hat_table
from .verify import SUITES, run_suite

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


@dataclass
class RunManifest:
    command: str
    parameters: dict
    scenario_hash: str | None = None
    version: str = __version__
    wall_time: float = 0.0
    outputs: list = field(default_factory=list)

    def write(self, directory: Path) -> Path:
        path = directory / "manifest.json"
        self.outputs = sorted(set(self.outputs + [path.name]))
        path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")
        return path


class VerificationFailure(Exception):
    pass


def _write_json(directory: Path, name: str, payload) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / name
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
    return path


def _print(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))


# ------------------------------------------------------------------ commands

def cmd_presets(args, manifest: RunManifest) -> int:
    payload = {
        "Q_kinds": list(QSET_KINDS),
        "Psi_families": list(PSI_FAMILIES),
        "h_families": list(H_FAMILIES),
        "scenarios": sorted(PRESET_SCENARIOS),
    }
    _print(payload)
    out = Path(args.out)
    for name in sorted(PRESET_SCENARIOS):
        path = _write_json(out, f"{name}.json", preset_scenario(name).to_json())
        manifest.outputs.append(path.name)
    return EXIT_OK


def cmd_certify(args, manifest: RunManifest) -> int:
    scenario = load_scenario(args.scenario)
    if args.M:
        scenario = scenario.with_(Mset=tuple(sorted(set(args.M))))
    manifest.scenario_hash = scenario.digest()
    if not scenario.Mset:
        raise InputError("scenario has no scale set; pass --M")
    report = certify_scenario(scenario.qset, scenario.psi, scenario)
    if report.empty_windows:
        Ms = ", ".join(f"{M:g}" for M in report.empty_windows)
        raise EmptyWindowError(report.empty_windows[0], f"empty window Q(M) at M = {Ms}")
    payload = report.to_json()
    _print(payload)
    manifest.outputs.append(_write_json(Path(args.out), "certify.json", payload).name)
    if not report.passed:
        raise VerificationFailure("density hypothesis fails at some M of the scale set")
    return EXIT_OK


def cmd_spectrum(args, manifest: RunManifest) -> int:
    scenario = load_scenario(args.scenario)
    manifest.scenario_hash = scenario.digest()
    if args.lmax < args.M:
        raise InputError("--lmax must be >= --M")
    table = fm_hat_table(scenario, args.M, args.lmax)
    out = Path(args.out)
    manifest.outputs += [p.name for p in table.export(out)]
    if args.zeta is not None:
        C1 = BumpSpec(scenario.m, scenario.K).C1
        fit = envelope_check(table, scenario.a, float(scenario.h(args.M)), args.zeta, C1)
        payload = {"zeta": fit.zeta, "L_zeta": fit.L_zeta, "C_fit": fit.C_fit, "C1": fit.C1,
                   "passed": fit.passed, "annuli": fit.annuli}
        manifest.outputs.append(_write_json(out, "envelope.json", payload).name)
    _print(table.metadata())
    return EXIT_OK


def cmd_measure(args, manifest: RunManifest) -> int:
    scenario = load_scenario(args.scenario)
    manifest.scenario_hash = scenario.digest()
    out = Path(args.out)
    try:
        build = build_measure(scenario, args.levels, args.grid, args.box)
    except MsetExhaustedError as exc:
        partial = getattr(exc, "partial", None)
        if partial is not None and partial.levels:
            manifest.outputs += [p.name for p in export_build(partial, out)]
        raise VerificationFailure(str(exc)) from exc
    manifest.outputs += [p.name for p in export_build(build, out)]
    payload = build.manifest()
    if args.check and len(build.levels) >= 1:
        report = convergence_check(scenario, build.Ms, 2 * args.grid, args.box)
        payload["convergence"] = [asdict(c) | {"passed": c.passed} for c in report.checks]
        manifest.outputs.append(_write_json(out, "convergence.json", payload["convergence"]).name)
        if not report.passed:
            _print(payload)
            raise VerificationFailure(f"re-verification failed at levels {report.violations}")
    _print(payload)
    return EXIT_OK


def _try(fn, notes: dict, key: str):
    try:
        return fn()
    except (InsufficientDataError, DomainError, InputError) as exc:
        notes[key] = f"not available: {exc}"
        return None


def cmd_dims(args, manifest: RunManifest) -> int:
    scenario = load_scenario(args.scenario)
    manifest.scenario_hash = scenario.digest()
    raw = json.loads(Path(args.scenario).read_text())
    descriptor = raw.get("descriptor")
    if descriptor:
        params = {k: Fraction(str(v)) for k, v in descriptor.items() if k != "name"}
        name = descriptor["name"]
    else:
        name, params = infer_descriptor(scenario)
    report = predict_dims(name, **params)
    notes = report.notes
    lo, hi = lambda_estimate(scenario.psi, scenario.n)
    report.lambda_est, report.lambda_sup_est = lo, hi
    notes["lambda_est"] = "min/max of -ln psi(M)/ln M over the top sampled decade"
    if scenario.n == 1:
        report.nu_est = _try(lambda: nu_estimate(scenario.qset), notes, "nu_est")
    report.eta_est = _try(lambda: eta_estimate(scenario.qset, scenario.psi, scenario.m), notes, "eta_est")
    if scenario.dim == 1:
        theta = scenario.theta[0]
        bc = _try(lambda: box_counting(scenario.qset, scenario.psi, theta, 3), notes, "box_count_est")
        report.box_count_est = None if bc is None else bc.slope
    if scenario.dim > 1 and report.fourier_lower_pred is not None:
        notes["fourier_lower_pred"] += "; lower-bound evidence only for mn > 1"
    payload = report.to_json()
    payload["predictor"] = {"name": name, **{k: str(v) for k, v in params.items()}}
    manifest.outputs.append(_write_json(Path(args.out), "dimension_report.json", payload).name)
    _print(payload)
    return EXIT_OK


def cmd_cover(args, manifest: RunManifest) -> int:
    scenario = load_scenario(args.scenario)
    manifest.scenario_hash = scenario.digest()
    if scenario.dim != 1:
        raise InputError("cover needs m = n = 1")
    res = cover_sum(scenario.qset, scenario.psi, scenario.theta[0], args.eta, args.from_, args.to)
    payload = asdict(res) | {"eta": args.eta}
    manifest.outputs.append(_write_json(Path(args.out), "cover.json", payload).name)
    _print(payload)
    return EXIT_OK


def cmd_verify(args, manifest: RunManifest) -> int:
    results = run_suite(args.suite)
    for r in results:
        print(r.line())
    payload = [{"name": r.name, "passed": r.passed, "detail": r.detail} for r in results]
    manifest.outputs.append(_write_json(Path(args.out), "verify.json", payload).name)
    if not all(r.passed for r in results):
        raise VerificationFailure("verification suite failed")
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="salem", description="Fourier-analytic limsup set toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--json-errors", action="store_true", help="emit errors as JSON on stderr")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="FFT worker count")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, scenario=True):
        p = sub.add_parser(name, help=help_)
        if scenario:
            p.add_argument("scenario", help="scenario JSON file")
        p.add_argument("--out", default="salem-out", help="output directory (default: salem-out)")
        p.set_defaults(func=fn)
        return p

    add("presets", cmd_presets, "list presets and write preset scenario files", scenario=False)
    p = add("certify", cmd_certify, "check the density hypothesis on the scale set")
    p.add_argument("--M", type=float, action="append", help="scale to check (repeatable)")
    p = add("spectrum", cmd_spectrum, "export the exact coefficient table at one scale")
    p.add_argument("--M", type=float, required=True)
    p.add_argument("--lmax", type=int, required=True)
    p.add_argument("--zeta", type=float, help="also run the decay-envelope check")
    p = add("measure", cmd_measure, "build the measure recursion")
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--grid", type=int, default=8, help="Fourier grid resolution R (power of two)")
    p.add_argument("--box", type=int, default=512, help="Fourier box radius")
    p.add_argument("--check", action="store_true", help="re-verify on a twice finer grid")
    add("dims", cmd_dims, "dimension predictions and estimates")
    p = add("cover", cmd_cover, "cover-sum upper bound")
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--from", dest="from_", type=int, required=True)
    p.add_argument("--to", type=int, default=10**6, help="truncation bound (default 1e6)")
    p = add("verify", cmd_verify, "run invariant batteries", scenario=False)
    p.add_argument("--suite", choices=SUITES + ("all",), default="all")
    return parser


def _report_error(args, exc: BaseException, code: int) -> None:
    if args is not None and args.json_errors:
        obj = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        for attr in ("M", "level", "best_M", "best_ratio"):
            if getattr(exc, attr, None) is not None:
                obj[attr] = getattr(exc, attr)
        print(json.dumps(obj, sort_keys=True), file=sys.stderr)
    else:
        print(f"salem: error: {exc}", file=sys.stderr)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    params = {k: v for k, v in vars(args).items() if k not in ("func", "threads", "json_errors")}
    manifest = RunManifest(command=args.command, parameters=params)
    start = time.perf_counter()
    code = EXIT_OK
    try:
        with scipy.fft.set_workers(max(1, args.threads)), np.errstate(all="ignore"):
            code = args.func(args, manifest)
    except VerificationFailure as exc:
        _report_error(args, exc, EXIT_FAIL)
        code = EXIT_FAIL
    except (InputError, EmptyWindowError, DomainError, BoxTooLargeError, InsufficientDataError) as exc:
        _report_error(args, exc, EXIT_INPUT)
        code = EXIT_INPUT
    except SalemError as exc:
        _report_error(args, exc, EXIT_FAIL)
        code = EXIT_FAIL
    manifest.wall_time = time.perf_counter() - start
    out = Path(args.out)
    if code != EXIT_INPUT or out.exists():
        out.mkdir(parents=True, exist_ok=True)
        manifest.write(out)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
