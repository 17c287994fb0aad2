"""Recursive construction of the measures mu_k = chi_0 F_{M_1} ... F_{M_k}.

Each level multiplies the previous density by a new F_M, so on the Fourier
side mu_k_hat = sum_l F_M_hat(l) mu_{k-1}_hat(. - l).  The scale M_k is the
smallest element of the scenario's scale set whose update moves the spectrum
by at most 2^(-k-1) g(xi) on the test grid, truncation tails included.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bump import bump_eval, cutoff_bump, tensor_hat_on_grid
from .errors import BoxTooLargeError, DomainError, MsetExhaustedError
from .qsets import HSpec, Scenario
from .spectrum import FourierGrid, fm_eval, fm_hat_dense, windowed_spectrum

GRID_CAP = 2**25
SPATIAL_POINTS = {1: 2**14, 2: 2**9}
SPATIAL_POINTS_HIGH = 2**6


@dataclass(frozen=True)
class Envelope:
    """g(xi) = 1 for |xi| <= e, else |xi|^-a exp(ln|xi| / ln ln|xi|) h(4|xi|)."""

    a: float
    h: HSpec

    def __call__(self, xi_norm):
        r = np.asarray(xi_norm, dtype=float)
        big = r > math.e
        safe = np.where(big, r, math.e + 1.0)
        ln = np.log(safe)
        with np.errstate(over="ignore"):
            tail = safe ** (-self.a) * np.exp(ln / np.log(ln)) * self.h(4.0 * safe)
        out = np.where(big, tail, 1.0)
        return float(out) if out.ndim == 0 else out


def g_envelope(env: Envelope, xi_norm):
    return env(xi_norm)


def scenario_envelope(scenario: Scenario) -> Envelope:
    return Envelope(scenario.a, scenario.h)


def truncation(M: float, radius: int) -> int:
    """Lattice truncation for an output box: every tested xi stays max(4M, 64) inside it."""
    return int(radius) + max(4 * math.ceil(M), 64)


def decay_estimate(grid: FourierGrid, K: int) -> float:
    """Heuristic C2 with |chi_hat(xi)| <= C2 (1+|xi|)^-K.

    The larger of the sup over the whole box and twice the sup over its outer
    half, so a still-growing profile is not underestimated.
    """
    norms = grid.norms()
    weighted = (1.0 + norms) ** K * np.abs(grid.values)
    outer = weighted[norms >= grid.radius / 2]
    return float(max(weighted.max(), 2.0 * outer.max(initial=0.0)))


def _check_grid(radius: int, R: int, D: int):
    if (2 * radius * R + 1) ** D > GRID_CAP:
        raise BoxTooLargeError(f"Fourier grid of radius {radius} at R={R} in {D} dims exceeds cap {GRID_CAP}")


class SpectralChain:
    """mu_j_hat on (1/R) Z^D for a fixed list of scales, computed on demand.

    A request for radius B at level j pulls level j-1 on radius B + L_j; the
    largest grid computed per level is cached and restricted for later use.
    """

    def __init__(self, scenario: Scenario, R: int, Ms=()):
        if R < 1 or R & (R - 1):
            raise DomainError("grid resolution R must be a positive power of two")
        self.scenario = scenario
        self.R = int(R)
        self.D = scenario.dim
        self.K = scenario.K
        self.Ms = [float(M) for M in Ms]
        self.chi0 = cutoff_bump(scenario.m, scenario.n, scenario.K)
        self._cache: dict[int, FourierGrid] = {}
        self.C2: dict[int, float] = {}

    def extended(self, M: float) -> "SpectralChain":
        other = SpectralChain(self.scenario, self.R, self.Ms + [M])
        other._cache = dict(self._cache)
        other.C2 = dict(self.C2)
        return other

    def _base(self, radius: int) -> FourierGrid:
        _check_grid(radius, self.R, self.D)
        axis = np.arange(-radius * self.R, radius * self.R + 1) / self.R
        spec = cutoff_bump(self.scenario.m, self.scenario.n, self.K)
        one_d = type(spec)(1, self.K)
        values = tensor_hat_on_grid(type(spec)(self.D, self.K), axis) if self.D > 1 else one_d.factor_hat(axis)
        return FourierGrid(self.R, radius, self.D, values.astype(complex), 0.0)

    def spectrum(self, j: int, radius: int) -> FourierGrid:
        radius = int(radius)
        cached = self._cache.get(j)
        if cached is not None and cached.half >= radius * self.R:
            return cached.restrict(radius)
        if j == 0:
            out = self._base(radius)
        else:
            M = self.Ms[j - 1]
            L = truncation(M, radius)
            _check_grid(radius + L, self.R, self.D)
            src = self.spectrum(j - 1, radius + L)
            C2 = self.chi0.C1 if j == 1 else decay_estimate(src, self.K)
            self.C2[j - 1] = C2
            table = fm_hat_dense(self.scenario, M, L)
            out = windowed_spectrum(src, table, radius, C2, self.K, L)
        self._cache[j] = out
        return out


@dataclass
class Selection:
    M: float
    margin: float
    tried: list  # (M, max ratio of deviation to delta g)


def deviation_ratio(new: FourierGrid, old: FourierGrid, delta: float, env: Envelope):
    """Pointwise (|new - old| + certified errors) / (delta g); returns (max, worst xi)."""
    dev = np.abs(new.values - old.values) + new.err + old.err
    ratio = dev / (delta * env(new.norms()))
    idx = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    worst = tuple(float(i) / new.R - new.radius for i in idx)
    return float(ratio[idx]), worst


def select_M_star(delta: float, M0: float, chain: SpectralChain, scenario: Scenario,
                  radius: int, level: int | None = None) -> tuple[Selection, SpectralChain]:
    """Smallest M in the scale set with M >= M0 whose update stays within delta g on the grid."""
    if not (0 < delta <= 1):
        raise DomainError("delta must lie in (0, 1]")
    env = scenario_envelope(scenario)
    k = len(chain.Ms) + 1
    level = k if level is None else level
    candidates = [M for M in scenario.Mset if M >= M0]
    if not candidates:
        raise MsetExhaustedError(f"level {level}: no scale >= {M0:g} in the scale set", level=level)
    base = chain.spectrum(k - 1, radius)
    tried = []
    for M in candidates:
        trial = chain.extended(M)
        try:
            new = trial.spectrum(k, radius)
        except BoxTooLargeError as exc:
            tried.append((M, math.inf))
            note = str(exc)
            break
        ratio, _ = deviation_ratio(new, base, delta, env)
        tried.append((M, ratio))
        if ratio <= 1.0:
            return Selection(M, ratio, tried), trial
    else:
        note = "all candidates tried"
    best_M, best = min(tried, key=lambda t: t[1])
    raise MsetExhaustedError(
        f"level {level}: scale set exhausted ({note}); best M={best_M:g} with ratio {best:.4g}",
        best_M=best_M, best_ratio=best, level=level,
    )


def spatial_grid(D: int, points: int | None = None) -> np.ndarray:
    """Uniform grid -1 + 2i/N on [-1, 1)^D, shape (N^D, D)."""
    N = points or SPATIAL_POINTS.get(D, SPATIAL_POINTS_HIGH)
    axis = -1.0 + 2.0 * np.arange(N) / N
    mesh = np.meshgrid(*([axis] * D), indexing="ij")
    return np.stack(mesh, -1).reshape(-1, D)


@dataclass
class MeasureLevel:
    k: int
    M_k: float
    delta_k: float
    margin: float
    tried: list
    fourier_grid: FourierGrid
    density_grid: np.ndarray
    tail_consts: float
    C2_heuristic: bool

    @property
    def mass(self) -> float:
        """mu_k_hat(0)."""
        return float(self.fourier_grid.at(np.zeros(self.fourier_grid.D)).real)


@dataclass
class MeasureBuild:
    scenario: Scenario
    R: int
    radius: int
    x: np.ndarray
    base_density: np.ndarray
    levels: list = field(default_factory=list)
    base_grid: FourierGrid | None = None

    @property
    def Ms(self) -> list[float]:
        return [lv.M_k for lv in self.levels]

    def manifest(self) -> dict:
        chi0 = cutoff_bump(self.scenario.m, self.scenario.n, self.scenario.K)
        return {
            "scenario": self.scenario.digest(),
            "R": self.R,
            "box": self.radius,
            "spatial_points": int(round(len(self.x) ** (1 / self.x.shape[1]))),
            "C1": chi0.C1,
            "levels": [
                {"k": lv.k, "M_k": lv.M_k, "delta_k": lv.delta_k, "margin": lv.margin,
                 "mass": lv.mass, "C2": lv.tail_consts, "C2_heuristic": lv.C2_heuristic,
                 "tried": [[M, r] for M, r in lv.tried]}
                for lv in self.levels
            ],
        }


def build_measure(scenario: Scenario, levels: int, R: int = 8, radius: int = 512,
                  spatial_points: int | None = None) -> MeasureBuild:
    """Run the level recursion; a failing level raises MsetExhaustedError with `.partial` set."""
    if levels < 1:
        raise DomainError("need at least one level")
    D = scenario.dim
    x = spatial_grid(D, spatial_points)
    chi0 = cutoff_bump(scenario.m, scenario.n, scenario.K)
    density = np.asarray(bump_eval(chi0, x))
    chain = SpectralChain(scenario, R)
    build = MeasureBuild(scenario, R, int(radius), x, density, base_grid=chain.spectrum(0, radius))
    M_prev = 0.5
    for k in range(1, levels + 1):
        delta = 2.0 ** (-k - 1)
        try:
            sel, chain = select_M_star(delta, 2 * M_prev, chain, scenario, radius, level=k)
        except MsetExhaustedError as exc:
            exc.partial = build
            raise
        density = density * fm_eval(scenario, sel.M, x)
        build.levels.append(MeasureLevel(
            k=k, M_k=sel.M, delta_k=delta, margin=sel.margin, tried=sel.tried,
            fourier_grid=chain.spectrum(k, radius), density_grid=density,
            tail_consts=chain.C2.get(k - 1, math.nan), C2_heuristic=k > 1,
        ))
        M_prev = sel.M
    return build


@dataclass
class LevelCheck:
    k: int
    ratio: float
    worst_xi: tuple
    telescoped_ratio: float

    @property
    def passed(self) -> bool:
        return self.ratio <= 1.0 and self.telescoped_ratio <= 1.0


@dataclass
class ConvergenceReport:
    R: int
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def violations(self) -> list[int]:
        return [c.k for c in self.checks if not c.passed]


def convergence_check(scenario: Scenario, Ms, R: int, radius: int) -> ConvergenceReport:
    """Re-verify |mu_k_hat - mu_{k-1}_hat| <= 2^(-k-1) g and |mu_k_hat - mu_0_hat| <= (1 - 2^-k) g / 2.

    The whole chain is recomputed for the given scales on a grid of
    resolution R (pass twice the build resolution for an independent check).
    """
    env = scenario_envelope(scenario)
    chain = SpectralChain(scenario, R, Ms)
    base = chain.spectrum(0, radius)
    prev = base
    checks = []
    for k in range(1, len(chain.Ms) + 1):
        cur = chain.spectrum(k, radius)
        ratio, worst = deviation_ratio(cur, prev, 2.0 ** (-k - 1), env)
        tele, _ = deviation_ratio(cur, base, 0.5 * (1 - 2.0**-k), env)
        checks.append(LevelCheck(k, ratio, worst, tele))
        prev = cur
    return ConvergenceReport(R, checks)


@dataclass
class SupportReport:
    checked: int
    violations: int
    examples: list

    @property
    def passed(self) -> bool:
        return self.violations == 0


def strip_distance(scenario: Scenario, M: float, x: np.ndarray) -> np.ndarray:
    """min over q in Q(M) of (max_i ||(xq)_i - theta_i|| - Psi(q)) at each point."""
    m, n = scenario.m, scenario.n
    window = scenario.window(M)
    psi = scenario.psi(window)
    X = np.asarray(x, dtype=float).reshape(-1, m, n)
    theta = np.asarray(scenario.theta)
    best = np.full(len(X), np.inf)
    for q, s in zip(window, psi):
        y = X @ q - theta
        dist = np.abs(y - np.round(y)).max(axis=-1) - s
        np.minimum(best, dist, out=best)
    return best


def support_check(build: MeasureBuild, k: int, slack: float) -> SupportReport:
    """Every grid point with positive level-k density lies in all strips of scales M_1..M_k (up to slack)."""
    level = build.levels[k - 1]
    pts = build.x[level.density_grid > 0]
    bad = np.zeros(len(pts), dtype=bool)
    bad |= np.abs(pts).max(axis=1) >= 1.0
    for lv in build.levels[:k]:
        bad |= strip_distance(build.scenario, lv.M_k, pts) > slack
    examples = [tuple(map(float, p)) for p in pts[bad][:10]]
    return SupportReport(len(pts), int(bad.sum()), examples)


def nesting_violations(build: MeasureBuild) -> int:
    """Grid points where level k is positive but level k-1 is not."""
    prev = build.base_density
    count = 0
    for lv in build.levels:
        count += int(np.count_nonzero((lv.density_grid > 0) & ~(prev > 0)))
        prev = lv.density_grid
    return count


def normalized_mass(build: MeasureBuild, k: int) -> float:
    """Riemann sum of density_k / mu_k_hat(0) over the spatial grid (exact for band-limited data)."""
    level = build.levels[k - 1]
    N = round(len(build.x) ** (1 / build.x.shape[1]))
    cell = (2.0 / N) ** build.x.shape[1]
    return float(level.density_grid.sum() * cell / level.mass)


def envelope_constant(build: MeasureBuild, k: int) -> float:
    """Empirical C with |mu_k_hat| <= C g on the grid."""
    grid = build.levels[k - 1].fourier_grid
    env = scenario_envelope(build.scenario)
    return float((np.abs(grid.values) / env(grid.norms())).max())


def export_build(build: MeasureBuild, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    env = scenario_envelope(build.scenario)
    paths = []
    for lv in build.levels:
        dpath = directory / f"density_level{lv.k}.csv"
        with dpath.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(build.x.shape[1])] + ["value"])
            for p, v in zip(build.x.tolist(), lv.density_grid.tolist()):
                w.writerow(p + [repr(v)])
        fpath = directory / f"fourier_level{lv.k}.csv"
        grid = lv.fourier_grid
        axis = grid.axis()
        mesh = np.stack(np.meshgrid(*([axis] * grid.D), indexing="ij"), -1).reshape(-1, grid.D)
        vals = grid.values.reshape(-1)
        gvals = env(grid.norms()).reshape(-1)
        with fpath.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"xi{i + 1}" for i in range(grid.D)] + ["re", "im", "g", "ratio"])
            for p, v, gv in zip(mesh.tolist(), vals.tolist(), gvals.tolist()):
                w.writerow(p + [repr(v.real), repr(v.imag), repr(gv), repr(abs(v) / gv)])
        paths += [dpath, fpath]
    mpath = directory / "measure_manifest.json"
    mpath.write_text(json.dumps(build.manifest(), indent=2, sort_keys=True) + "\n")
    paths.append(mpath)
    return paths
