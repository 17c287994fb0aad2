"""Dimension estimators and closed-form predictions for limsup sets.

Everything here is a finite-data proxy: convergence exponents are read off
partial sums, the Fourier exponent off a log-log fit of annulus maxima, and
box-counting uses finitely many approximation levels.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import DomainError, InputError, InsufficientDataError, SalemError
from .qsets import HSpec, PsiSpec, QSetSpec, Scenario, nu_estimate
from .spectrum import FourierGrid


class EmptyIntersectionError(SalemError):
    """The truncated limsup approximation became empty."""

    def __init__(self, level: int):
        self.level = level
        super().__init__(f"empty intersection at approximation level {level}")


# ---------------------------------------------------------------- exponents

def _psi_norms(spec: QSetSpec, psi: PsiSpec, N: int):
    q = spec.elements_upto(N)
    if len(q) == 0:
        raise InsufficientDataError(f"no elements of Q up to {N}")
    r = np.abs(q).max(axis=1).astype(float)
    return r, np.asarray(psi(q), dtype=float)


def _increment_slope(r, log_ratio, m: int, eta: float, cutoffs) -> float:
    """Log-log slope of S_{2N} - S_N against N for the series sum |q|^m (Psi/|q|)^eta."""
    terms = np.exp(m * np.log(r) + eta * log_ratio)
    # each increment is summed over its own block, not as a difference of
    # partial sums, so tiny increments keep full relative precision
    incs = np.array([terms[(r > N) & (r <= 2 * N)].sum() for N in cutoffs])
    if np.count_nonzero(incs > 0) < 3:
        raise InsufficientDataError("too few nonzero partial-sum increments")
    keep = incs > 0
    return float(np.polyfit(np.log(np.asarray(cutoffs, float)[keep]), np.log(incs[keep]), 1)[0])


def eta_estimate(spec: QSetSpec, psi: PsiSpec, m: int = 1, cutoffs=None, resolution: float = 0.01) -> float:
    """Convergence exponent of sum_{q in Q, q != 0} |q|^m (Psi(q)/|q|)^eta.

    A candidate eta counts as convergent when the dyadic increments
    S_{2N} - S_N decay along the cutoffs (negative log-log slope); the
    threshold is then located by bisection to `resolution`.
    """
    n = spec.n
    if cutoffs is None:
        top = 2**19 if n == 1 else 2 ** (int(19 / n))
        cutoffs = [2.0**j for j in range(10 if n == 1 else 4, int(math.log2(top)))]
    cutoffs = sorted(float(c) for c in cutoffs)
    if len(cutoffs) < 3:
        raise InsufficientDataError("eta_estimate needs at least three cutoffs")
    r, vals = _psi_norms(spec, psi, int(2 * cutoffs[-1]))
    order = np.argsort(r, kind="stable")
    r, vals = r[order], vals[order]
    if np.any(vals <= 0):
        raise DomainError("Psi must be positive on Q")
    log_ratio = np.log(vals) - np.log(r)
    lo, hi = 0.0, float(m + n + 1)
    if _increment_slope(r, log_ratio, m, hi, cutoffs) >= 0:
        raise InsufficientDataError("series does not converge for any tested eta")
    while hi - lo > resolution:
        mid = 0.5 * (lo + hi)
        if _increment_slope(r, log_ratio, m, mid, cutoffs) < 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def lambda_estimate(psi: PsiSpec, n: int = 1, M_max: float = 1e6, points: int = 200) -> tuple[float, float]:
    """(liminf, limsup) proxies of -ln psi(M) / ln M over the largest sampled decade."""
    Ms = np.unique(np.round(np.geomspace(M_max / 10, M_max, points)).astype(np.int64))
    q = np.repeat(Ms[:, None], n, axis=1)
    vals = -np.log(np.asarray(psi(q), dtype=float)) / np.log(Ms.astype(float))
    return float(vals.min()), float(vals.max())


@dataclass
class CoverSum:
    value: float
    N: int
    N_max: int
    C: float
    note: str


def cover_sum(spec: QSetSpec, psi: PsiSpec, theta: float, eta: float, N: int, N_max: int = 10**6) -> CoverSum:
    """sum over q in Q with N <= |q| <= N_max of (2 floor(C + |q|) + 1) (2 Psi(q)/|q|)^eta.

    Each q contributes the intervals [(theta + k -+ Psi(q)) / |q|] for
    |k| <= C + |q|, all of diameter 2 Psi(q)/|q|, with C = |theta| + sup Psi.
    """
    if spec.n != 1:
        raise DomainError("cover_sum is defined for m = n = 1")
    if not (0 < eta <= 1):
        raise DomainError("eta must lie in (0, 1]")
    if N < 1:
        raise DomainError("N must be >= 1")
    r, vals = _psi_norms(spec, psi, N_max)
    C = abs(float(theta)) + max(1.0, float(vals.max()))
    sel = r >= N
    counts = 2 * np.floor(C + r[sel]) + 1
    value = float(np.sum(counts * (2 * vals[sel] / r[sel]) ** eta))
    return CoverSum(value, int(N), int(N_max), C, f"series truncated at |q| <= {N_max}")


# ---------------------------------------------------------------- predictors

def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(str(x))


def _cap(x: Fraction, d: int) -> Fraction:
    return min(x, Fraction(d))


PREDICTORS = (
    "jarnik_besicovitch", "borosh_fraenkel", "dodson", "dickinson", "hinokuma_shiga",
    "rynne_1d", "levesley", "rynne_mn", "mn_app",
)


@dataclass
class DimensionReport:
    lambda_est: float | None = None
    lambda_sup_est: float | None = None
    nu_est: float | None = None
    eta_est: float | None = None
    hausdorff_pred: Fraction | None = None
    fourier_lower_pred: Fraction | None = None
    fourier_fit: float | None = None
    box_count_est: float | None = None
    dim: int = 1
    notes: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {}
        for key, value in asdict(self).items():
            if isinstance(value, Fraction):
                out[key] = float(value)
                out[key + "_exact"] = str(value)
            else:
                out[key] = value
        return out

    def export(self, directory) -> Path:
        path = Path(directory) / "dimension_report.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        return path


def predict_dims(descriptor: str, **params) -> DimensionReport:
    """Closed-form Hausdorff value and Fourier lower bound for a named classical result.

    Parameters are converted to exact rationals, so decimal inputs give
    exact outputs.  A Fourier bound of None means the result says nothing
    about the Fourier dimension for these parameters.
    """
    p = {k: _q(v) for k, v in params.items()}
    need = {
        "jarnik_besicovitch": ("tau",), "borosh_fraenkel": ("nu", "tau"), "dodson": ("lam",),
        "dickinson": ("nu", "lam"), "hinokuma_shiga": ("tau",), "rynne_1d": ("eta",),
        "levesley": ("lam",), "rynne_mn": ("m", "n", "eta"), "mn_app": ("m", "n", "lam"),
    }
    if descriptor not in need:
        raise InputError(f"unknown predictor {descriptor!r}; known: {', '.join(PREDICTORS)}")
    missing = [k for k in need[descriptor] if k not in p]
    if missing:
        raise InputError(f"predictor {descriptor} needs parameters {missing}")
    one = Fraction(1)
    fourier = None
    dim = 1
    if descriptor in ("jarnik_besicovitch", "hinokuma_shiga"):
        haus = _cap(2 / (1 + p["tau"]), 1)
        fourier = haus
    elif descriptor in ("dodson", "levesley"):
        haus = _cap(2 / (1 + p["lam"]), 1)
        fourier = haus
    elif descriptor == "borosh_fraenkel":
        haus = _cap((1 + p["nu"]) / (1 + p["tau"]), 1)
        fourier = haus if p["nu"] == one else None
    elif descriptor == "dickinson":
        haus = _cap((1 + p["nu"]) / (1 + p["lam"]), 1)
        fourier = haus if p["nu"] == one else None
    elif descriptor == "rynne_1d":
        haus = _cap(p["eta"], 1)
    elif descriptor == "rynne_mn":
        m, n = int(p["m"]), int(p["n"])
        dim = m * n
        haus = _cap(m * (n - 1) + p["eta"], dim)
    else:
        m, n, lam = int(p["m"]), int(p["n"]), p["lam"]
        dim = m * n
        haus = _cap(m * (n - 1) + Fraction(m + n) / (1 + lam), dim)
        fourier = _cap(Fraction(2 * n) / (1 + lam), dim)
    notes = {"hausdorff_pred": f"closed form ({descriptor})"}
    if fourier is not None:
        notes["fourier_lower_pred"] = f"closed form ({descriptor})"
    return DimensionReport(hausdorff_pred=haus, fourier_lower_pred=fourier, dim=dim, notes=notes)


def infer_descriptor(scenario: Scenario) -> tuple[str, dict]:
    """Pick the classical result matching a scenario's Q, Psi and shape."""
    kind, fam, tau = scenario.qset.kind, scenario.psi.family, scenario.psi.tau
    tau = Fraction(str(tau))
    if scenario.dim > 1:
        if kind == "all_integers" and fam == "power":
            return "mn_app", {"m": scenario.m, "n": scenario.n, "lam": tau}
        raise InputError("no closed-form predictor for this higher-dimensional scenario")
    homogeneous = all(t == 0 for t in scenario.theta)
    if fam == "hinokuma_shiga":
        return "hinokuma_shiga", {"tau": tau}
    if fam != "power":
        raise InputError("closed-form predictors need a power-law or Hinokuma-Shiga Psi")
    if kind == "all_integers":
        return ("jarnik_besicovitch", {"tau": tau}) if homogeneous else ("levesley", {"lam": tau})
    nu = Fraction(nu_estimate(scenario.qset)).limit_denominator(100)
    return "borosh_fraenkel", {"nu": nu, "tau": tau}


# ---------------------------------------------------------------- fitting

@dataclass
class ExponentFit:
    exponent: float
    annuli: list  # (lo, hi, sup)

    @property
    def dim_lower(self) -> float:
        return 2.0 * self.exponent

    def export_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lo", "hi", "sup"])
            for row in self.annuli:
                w.writerow([repr(float(v)) for v in row])
        return path


def fit_fourier_exponent(grid: FourierGrid, h: HSpec | None = None, first: float = 8.0) -> ExponentFit:
    """Minus the log-log slope of the per-annulus sup of |mu_hat| / h(4|xi|).

    Annuli are [2^j, 2^(j+1)) starting at `first`; the annulus just above e
    is skipped by default because the envelope's log-log factor is singular
    there.
    """
    norms = grid.norms()
    mags = np.abs(grid.values)
    if h is not None:
        mags = mags / h(4.0 * np.maximum(norms, 1e-300))
    annuli = []
    lo = first
    while lo < grid.radius:
        hi = 2 * lo
        sel = (norms >= lo) & (norms < hi) if hi < grid.radius else (norms >= lo) & (norms <= grid.radius)
        if np.any(sel):
            annuli.append((lo, hi, float(mags[sel].max())))
        lo = hi
    if len(annuli) < 4:
        raise InsufficientDataError(f"need at least 4 dyadic annuli beyond e, got {len(annuli)}")
    x = np.log([a[0] for a in annuli])
    y = np.log(np.maximum([a[2] for a in annuli], 1e-300))
    slope = float(np.polyfit(x, y, 1)[0])
    return ExponentFit(-slope, annuli)


# ---------------------------------------------------------------- box counting

def _merge(lo: np.ndarray, hi: np.ndarray):
    order = np.argsort(lo, kind="stable")
    lo, hi = lo[order], hi[order]
    run_hi = np.maximum.accumulate(hi)
    starts = np.r_[True, lo[1:] > run_hi[:-1]]
    idx = np.flatnonzero(starts)
    ends = np.r_[idx[1:] - 1, len(lo) - 1]
    return lo[idx], run_hi[ends]


def _intersect(a_lo, a_hi, b_lo, b_hi):
    """Intersection of two sorted disjoint interval lists."""
    out_lo, out_hi = [], []
    i = j = 0
    while i < len(a_lo) and j < len(b_lo):
        lo = max(a_lo[i], b_lo[j])
        hi = min(a_hi[i], b_hi[j])
        if lo <= hi:
            out_lo.append(lo)
            out_hi.append(hi)
        if a_hi[i] < b_hi[j]:
            i += 1
        else:
            j += 1
    return np.array(out_lo), np.array(out_hi)


def strip_union(spec: QSetSpec, psi: PsiSpec, theta: float, M: float):
    """{x in [0,1] : ||qx - theta|| <= Psi(q) for some q in Q(M)} as merged intervals."""
    window = spec.window(M)[:, 0]
    lo_all, hi_all = [], []
    for q, s in zip(window.tolist(), np.asarray(psi(window.reshape(-1, 1)), dtype=float).tolist()):
        aq = abs(q)
        t = theta if q > 0 else -theta
        k = np.arange(math.floor(-t - s) - 1, math.ceil(aq - t + s) + 2)
        lo = (t + k - s) / aq
        hi = (t + k + s) / aq
        keep = (hi >= 0) & (lo <= 1)
        lo_all.append(np.clip(lo[keep], 0, 1))
        hi_all.append(np.clip(hi[keep], 0, 1))
    if not lo_all:
        return np.zeros(0), np.zeros(0)
    return _merge(np.concatenate(lo_all), np.concatenate(hi_all))


def count_boxes(lo: np.ndarray, hi: np.ndarray, depth: int) -> int:
    """Number of dyadic boxes [i 2^-d, (i+1) 2^-d) of [0,1] meeting the intervals."""
    scale = 2.0**depth
    a = np.minimum(np.floor(lo * scale), scale - 1).astype(np.int64)
    b = np.minimum(np.floor(hi * scale), scale - 1).astype(np.int64)
    total = int(np.sum(b - a + 1))
    shared = int(np.count_nonzero(a[1:] == b[:-1]))
    return total - shared


@dataclass
class BoxCount:
    slope: float
    levels: list  # M_j
    depths: list  # depth matched to each level's strip width
    counts: list  # occupied boxes of each level's window union at that depth
    survivors: list  # components of the running intersection


def box_counting(spec: QSetSpec, psi: PsiSpec, theta: float = 0.0, J: int = 3, depths=None) -> BoxCount:
    """Box-counting slope for the limsup set from J lacunary approximation levels.

    Levels use M_j = 4 * 8^(j-1).  The running intersection of the window
    unions is formed to detect an empty approximation; the slope itself
    regresses ln N_j on ln(1/delta_j), where N_j counts dyadic boxes of
    side delta_j (matched to the median strip width at level j) meeting the
    level-j window union.  Pass `depths` to override the matched depths.
    """
    if spec.n != 1:
        raise DomainError("box_counting needs m = n = 1")
    if not (2 <= J <= 4):
        raise DomainError("box_counting supports 2 <= J <= 4 levels")
    Ms = [4.0 * 8.0 ** (j - 1) for j in range(1, J + 1)]
    if depths is not None and len(depths) != J:
        raise DomainError("need one depth per level")
    lo, hi = np.array([0.0]), np.array([1.0])
    counts, used, survivors = [], [], []
    for j, M in enumerate(Ms, start=1):
        u_lo, u_hi = strip_union(spec, psi, theta, M)
        lo, hi = _intersect(lo, hi, u_lo, u_hi)
        if len(lo) == 0:
            raise EmptyIntersectionError(j)
        survivors.append(len(lo))
        if depths is None:
            window = spec.window(M)
            width = float(np.median(2 * np.asarray(psi(window), dtype=float) / np.abs(window[:, 0])))
            d = max(0, int(round(-math.log2(min(width, 1.0)))))
        else:
            d = int(depths[j - 1])
        used.append(d)
        counts.append(count_boxes(u_lo, u_hi, d))
    x = np.asarray(used, dtype=float) * math.log(2)
    if np.ptp(x) == 0:
        raise InsufficientDataError("all levels map to the same depth")
    slope = float(np.polyfit(x, np.log(counts), 1)[0])
    return BoxCount(slope, Ms, used, counts, survivors)
