"""The window-averaged periodized density F_M and its lattice spectrum.

F_M(x) = |Q(M)|^-1 sum_{q in Q(M)} Phi^{eps(M)}(xq - theta) is Z^{mn}-periodic,
and its Fourier coefficients are supported on lattice points l = k (x) q
(l_ij = k_i q_j) with value exp(-2 pi i k.theta) phi_hat(eps k) / |Q(M)|.
Coefficients are always computed from that divisor formula; FFTs only serve
as oracles in the tests.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .bump import BumpSpec, periodized_eval
from .divisors import DivisorQuery, divisor_window, tau
from .errors import BoxTooLargeError, DomainError, EmptyWindowError
from .qsets import Scenario

BOX_CAP = 10**7
SPARSE_CONV_LIMIT = 64


def scenario_bump(scenario: Scenario) -> BumpSpec:
    return BumpSpec(scenario.m, scenario.K)


def _window_and_eps(scenario: Scenario, M: float):
    window = scenario.window(M)
    if len(window) == 0:
        raise EmptyWindowError(M)
    return window, float(scenario.psi(window).min())


def fm_eval(scenario: Scenario, M: float, x) -> np.ndarray | float:
    """F_M at x (shape (mn,) or (N, mn))."""
    window, eps = _window_and_eps(scenario, M)
    bump = scenario_bump(scenario)
    total = 0.0
    for q in window:
        total = total + periodized_eval(bump, eps, q, scenario.theta, x)
    return total / len(window)


def fm_hat(scenario: Scenario, M: float, ell) -> complex:
    """F_M_hat(ell) by summing over Q(M) intersected with D(ell)."""
    window, eps = _window_and_eps(scenario, M)
    m, n = scenario.m, scenario.n
    query = DivisorQuery(m, n, tuple(np.atleast_1d(ell)))
    if query.norm == 0:
        return 1.0 + 0j
    theta = np.asarray(scenario.theta, dtype=float)
    bump = scenario_bump(scenario)
    mat = query.matrix
    total = 0j
    for q in divisor_window(query, scenario.qset, M):
        # witness k = l_1 / q_1; the ratio is the same for every column
        k = mat[:, 0] // q[0]
        assert all(np.array_equal(mat[:, j], k * q[j]) for j in range(n))
        kf = k.astype(float)
        total += np.exp(-2j * np.pi * float(kf @ theta)) * float(np.prod(bump.factor_hat(eps * kf)))
    return complex(total) / len(window)


@dataclass
class SpectrumTable:
    M: float
    epsM: float
    window_size: int
    L_max: int
    m: int
    n: int
    coeffs: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.m * self.n

    @property
    def box(self) -> int:
        return self.L_max

    def get(self, ell) -> complex:
        key = tuple(int(v) for v in np.atleast_1d(ell))
        if max(abs(v) for v in key) > self.L_max:
            raise DomainError(f"ell={key} outside the table box {self.L_max}")
        return self.coeffs.get(key, 0j)

    def items(self):
        return sorted(self.coeffs.items())

    def dense(self) -> np.ndarray:
        """Coefficients on the full box, shape (2L+1,)*mn, index ell + L."""
        size = (2 * self.L_max + 1,) * self.dim
        out = np.zeros(size, dtype=complex)
        for key, v in self.coeffs.items():
            out[tuple(k + self.L_max for k in key)] = v
        return out

    def kernel(self, L: int) -> np.ndarray:
        """Dense coefficients restricted to |l| <= L."""
        out = np.zeros((2 * L + 1,) * self.dim, dtype=complex)
        for key, v in self.coeffs.items():
            if max(abs(c) for c in key) <= L:
                out[tuple(c + L for c in key)] = v
        return out

    def metadata(self) -> dict:
        return {
            "M": self.M, "eps": self.epsM, "window_size": self.window_size,
            "L_max": self.L_max, "m": self.m, "n": self.n, "nonzero": len(self.coeffs),
        }

    def export(self, directory) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        csv_path = directory / f"spectrum_M{self.M:g}.csv"
        meta_path = directory / f"spectrum_M{self.M:g}.json"
        with csv_path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"l{i + 1}{j + 1}" for i in range(self.m) for j in range(self.n)] + ["re", "im"])
            for key, v in self.items():
                writer.writerow(list(key) + [repr(float(v.real)), repr(float(v.imag))])
        meta_path.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return [csv_path, meta_path]


def fm_hat_table(scenario: Scenario, M: float, L_max: int, cap: int = BOX_CAP) -> SpectrumTable:
    """All nonzero F_M_hat(l) with |l| <= L_max, scattered from the (q, k) pairs.

    Only lattice points l = k (x) q can be nonzero, so each window element
    contributes along its own multiples; absent keys are structural zeros.
    """
    L_max = int(L_max)
    m, n = scenario.m, scenario.n
    if (2 * L_max + 1) ** (m * n) > cap:
        raise BoxTooLargeError(f"box too large: (2*{L_max}+1)^{m * n} exceeds cap {cap}")
    window, eps = _window_and_eps(scenario, M)
    bump = scenario_bump(scenario)
    theta = np.asarray(scenario.theta)
    acc: dict = {}
    for q in window:
        kmax = L_max // int(np.abs(q).max())
        ks = np.arange(-kmax, kmax + 1)
        grid = np.array(list(itertools.product(ks, repeat=m)), dtype=np.int64).reshape(-1, m)
        phase = np.exp(-2j * np.pi * (grid @ theta))
        vals = phase * np.prod(bump.factor_hat(eps * grid.astype(float)), axis=1)
        ells = (grid[:, :, None] * q[None, None, :]).reshape(len(grid), m * n)
        for key, v in zip(map(tuple, ells.tolist()), vals.tolist()):
            acc[key] = acc.get(key, 0j) + v
    size = len(window)
    coeffs = {k: v / size for k, v in acc.items() if v != 0}
    return SpectrumTable(M=M, epsM=eps, window_size=size, L_max=L_max, m=m, n=n, coeffs=coeffs)


@dataclass
class DenseSpectrum:
    """F_M_hat on the full box |l| <= L_max as a dense array indexed by l + L_max."""

    M: float
    epsM: float
    window_size: int
    L_max: int
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.ndim

    def get(self, ell) -> complex:
        return complex(self.values[tuple(int(c) + self.L_max for c in np.atleast_1d(ell))])

    def kernel(self, L: int) -> np.ndarray:
        cut = self.L_max - L
        return self.values[(slice(cut, cut + 2 * L + 1),) * self.dim]


def fm_hat_dense(scenario: Scenario, M: float, L_max: int, cap: int = 4 * BOX_CAP) -> DenseSpectrum:
    """Vectorized dense version of fm_hat_table for large boxes."""
    L_max = int(L_max)
    m, n = scenario.m, scenario.n
    D = m * n
    side = 2 * L_max + 1
    if side**D > cap:
        raise BoxTooLargeError(f"box too large: (2*{L_max}+1)^{D} exceeds cap {cap}")
    window, eps = _window_and_eps(scenario, M)
    bump = scenario_bump(scenario)
    theta = np.asarray(scenario.theta, dtype=float)
    strides = side ** np.arange(D - 1, -1, -1)
    re = np.zeros(side**D)
    im = np.zeros(side**D)
    pending: list = []

    def flush():
        flat = np.concatenate([f for f, _ in pending])
        vals = np.concatenate([v for _, v in pending])
        re[:] += np.bincount(flat, weights=vals.real, minlength=side**D)
        im[:] += np.bincount(flat, weights=vals.imag, minlength=side**D)
        pending.clear()

    # window elements with the same multiplier range share one k grid
    kmaxes = L_max // np.abs(window).max(axis=1)
    count = 0
    for kmax in np.unique(kmaxes):
        group = window[kmaxes == kmax]
        ks = np.arange(-kmax, kmax + 1)
        grid = np.stack(np.meshgrid(*([ks] * m), indexing="ij"), -1).reshape(-1, m)
        vals = np.exp(-2j * np.pi * (grid @ theta)) * np.prod(bump.factor_hat(eps * grid), axis=1)
        chunk = max(1, side**D // len(grid))
        for start in range(0, len(group), chunk):
            qs = group[start:start + chunk]
            ells = grid[None, :, :, None] * qs[:, None, None, :]
            pending.append(((ells.reshape(-1, D) + L_max) @ strides, np.tile(vals, len(qs))))
            count += len(qs) * len(vals)
            if count >= side**D:
                flush()
                count = 0
    if pending:
        flush()
    values = (re + 1j * im).reshape((side,) * D) / len(window)
    return DenseSpectrum(M, eps, len(window), L_max, values)


def divisor_count_bound(L_max: int) -> int:
    """sum over 0 < |l| <= L_max (l in Z) of 2 tau(|l|), plus one for l = 0."""
    return 1 + 2 * sum(2 * tau(v) for v in range(1, L_max + 1))


@dataclass
class EnvelopeFit:
    zeta: float
    L_zeta: int
    C_fit: float
    C1: float
    annuli: list  # (lo, hi, max ratio)

    @property
    def passed(self) -> bool:
        return self.C_fit <= self.C1


def coefficient_envelope(ell_norm, a: float, hM: float, zeta: float):
    ell_norm = np.asarray(ell_norm, dtype=float)
    ln = np.log(ell_norm)
    return ell_norm ** (-a) * np.exp(zeta * ln / np.log(ln)) * hM


def envelope_check(table: SpectrumTable, a: float, hM: float, zeta: float, C1: float) -> EnvelopeFit:
    """Ratio |F_M_hat(l)| / (|l|^-a exp(zeta ln|l| / ln ln|l|) h(M)) over |l| >= 16."""
    if not (math.log(2) < zeta <= 1):
        raise DomainError("zeta must lie in (ln 2, 1]")
    norms, mags = [], []
    for key, v in table.coeffs.items():
        r = max(abs(k) for k in key)
        if r >= 16:
            norms.append(r)
            mags.append(abs(v))
    norms = np.asarray(norms, dtype=float)
    ratios = np.asarray(mags) / coefficient_envelope(norms, a, hM, zeta) if norms.size else np.zeros(0)
    C_fit = float(ratios.max(initial=0.0))
    bad = norms[ratios > C1]
    L_zeta = 16 if bad.size == 0 else int(bad.max()) + 1
    annuli = []
    lo = 16
    while lo <= table.L_max:
        hi = 2 * lo
        sel = (norms >= lo) & (norms < hi)
        annuli.append((lo, hi, float(ratios[sel].max(initial=0.0))))
        lo = hi
    return EnvelopeFit(zeta, L_zeta, C_fit, C1, annuli)


@dataclass
class FourierGrid:
    """Samples on (1/R) Z^D intersected with the box |xi| <= radius (max-norm)."""

    R: int
    radius: float
    D: int
    values: np.ndarray
    err: np.ndarray | float = 0.0

    @property
    def half(self) -> int:
        return int(round(self.radius * self.R))

    def axis(self) -> np.ndarray:
        return np.arange(-self.half, self.half + 1) / self.R

    def norms(self) -> np.ndarray:
        ax = np.abs(self.axis())
        out = ax
        for _ in range(self.D - 1):
            out = np.maximum.outer(out, ax)
        return out

    def restrict(self, radius: float) -> "FourierGrid":
        cut = self.half - int(round(radius * self.R))
        if cut < 0:
            raise DomainError("cannot restrict to a larger box")
        sl = (slice(cut, cut + 2 * (self.half - cut) + 1),) * self.D
        err = self.err[sl] if np.ndim(self.err) else self.err
        return FourierGrid(self.R, radius, self.D, self.values[sl], err)

    def at(self, xi) -> complex:
        idx = tuple(int(round(v * self.R)) + self.half for v in np.atleast_1d(xi))
        return complex(self.values[idx])


def lattice_tail_bound(xi_norm, L_trunc: float, C2: float, K: int, D: int) -> np.ndarray:
    """C2 sum_{|l| > L} (1 + |xi - l|)^-K <= C2 D 2^D d^(D-K) / (K - D), d = L - |xi|.

    Comparison of the lattice sum with the integral over the region outside
    the max-norm ball of radius d - 1/2 around xi; infinite when d < 1/2.
    """
    if K <= D:
        raise DomainError("tail bound needs K > mn")
    d = L_trunc - np.asarray(xi_norm, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = C2 * D * 2.0**D * np.where(d >= 0.5, d, np.nan) ** (D - K) / (K - D)
    return np.where(np.isnan(out), np.inf, out)


def windowed_spectrum(chi: FourierGrid, table, radius: int, C2: float, K: int,
                      L_trunc: int | None = None) -> FourierGrid:
    """(chi F_M)_hat(xi) = sum_{|l| <= L} F_M_hat(l) chi_hat(xi - l) on the box of `radius`.

    `table` is a SpectrumTable or DenseSpectrum.  The returned error array is
    the certified truncation tail (|F_M_hat| <= 1, |chi_hat(xi)| <= C2 (1+|xi|)^-K)
    plus the input error propagated through sum |F_M_hat(l)|.  Grid points
    in different residue classes mod 1 never interact, so each class is an
    ordinary integer-lattice convolution.
    """
    L = table.L_max if L_trunc is None else int(L_trunc)
    if L > table.L_max:
        raise DomainError(f"table box {table.L_max} smaller than truncation {L}")
    radius = int(radius)
    R, D = chi.R, chi.D
    need = radius + L
    if chi.half < need * R:
        raise DomainError(
            f"chi table box {chi.radius:g} too small: need radius >= {need} "
            f"(enlarge by {need - chi.radius:g})"
        )
    src = chi.restrict(need)
    kernel = table.kernel(L)
    out = np.zeros((2 * radius * R + 1,) * D, dtype=complex)
    for res in itertools.product(range(R), repeat=D):
        sl = tuple(slice(r, None, R) for r in res)
        block = src.values[sl]
        if np.count_nonzero(kernel) <= SPARSE_CONV_LIMIT:
            acc = np.zeros(tuple(s - 2 * L for s in block.shape), dtype=complex)
            for idx in zip(*np.nonzero(kernel)):
                window = tuple(slice(2 * L - i, 2 * L - i + s) for i, s in zip(idx, acc.shape))
                acc += kernel[idx] * block[window]
        else:
            acc = fftconvolve(block, kernel, mode="valid")
        out[sl] = acc
    l1 = float(np.abs(kernel).sum())
    grid = FourierGrid(R, radius, D, out)
    grid.err = lattice_tail_bound(grid.norms(), L, C2, K, D) + l1 * float(np.max(src.err))
    return grid
