"""Divisor counting and the generalized divisor sets D(ell) in Z^n.

``ell`` in ``Z^{mn}`` is flattened row-major: ``(l_11..l_1n, ..., l_m1..l_mn)``,
so ``ell.reshape(m, n)[i, j] == l_ij`` and the column ``ell_j`` is
``ell.reshape(m, n)[:, j]``.  A vector ``q`` lies in ``D(ell)`` exactly when
some ``k`` in ``Z^m`` has ``l_ij = k_i q_j`` for all i, j.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DomainError

TRIAL_DIVISION_LIMIT = 10**12


@dataclass(frozen=True)
class DivisorQuery:
    m: int
    n: int
    ell: tuple

    def __post_init__(self):
        ell = tuple(int(v) for v in np.atleast_1d(self.ell))
        if len(ell) != self.m * self.n:
            raise DomainError(f"ell must have m*n={self.m * self.n} entries, got {len(ell)}")
        object.__setattr__(self, "ell", ell)

    @property
    def matrix(self) -> np.ndarray:
        return np.asarray(self.ell, dtype=np.int64).reshape(self.m, self.n)

    @property
    def norm(self) -> int:
        return max(abs(v) for v in self.ell)

    @property
    def pivot(self) -> tuple[int, int]:
        """First (i, j) in row-major order attaining |ell|."""
        target = self.norm
        for idx, v in enumerate(self.ell):
            if abs(v) == target:
                return divmod(idx, self.n)
        raise AssertionError


def tau(L: int) -> int:
    """Number of positive divisors, by trial division."""
    L = int(L)
    if L < 1:
        raise DomainError("tau is defined for L >= 1")
    if L > TRIAL_DIVISION_LIMIT:
        raise DomainError(f"tau: L={L} exceeds the trial-division limit")
    count = 1
    p = 2
    while p * p <= L:
        e = 0
        while L % p == 0:
            L //= p
            e += 1
        count *= e + 1
        p += 1 if p == 2 else 2
    if L > 1:
        count *= 2
    return count


def divisors(L: int) -> list[int]:
    """Sorted positive divisors of |L| (L != 0)."""
    L = abs(int(L))
    if L == 0:
        raise DomainError("divisors of 0 are not finite")
    small, large = [], []
    for d in range(1, math.isqrt(L) + 1):
        if L % d == 0:
            small.append(d)
            if d * d != L:
                large.append(L // d)
    return small + large[::-1]


def _cache_path(N: int) -> Path | None:
    root = os.environ.get("SALEM_CACHE_DIR")
    if not root:
        return None
    return Path(root) / f"tau_sieve_{N}.u32le"


def tau_sieve(N: int) -> np.ndarray:
    """tau(l) for 0 <= l <= N as uint32 (entry 0 is 0).

    When ``SALEM_CACHE_DIR`` is set the table is persisted there as a flat
    little-endian uint32 file and reused on later calls.
    """
    N = int(N)
    path = _cache_path(N)
    if path is not None and path.exists():
        table = np.fromfile(path, dtype="<u4")
        if table.size == N + 1:
            return table.astype(np.uint32)
    table = np.zeros(N + 1, dtype=np.uint32)
    for d in range(1, N + 1):
        table[d::d] += 1
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        table.astype("<u4").tofile(path)
    return table


def wigert_ratio(L: int, tau_L: int | None = None) -> float:
    """ln tau(L) * ln ln L / ln L, whose limsup is ln 2."""
    L = int(L)
    if L < 16:
        raise DomainError("wigert ratio is undefined/unstable below L = 16")
    t = tau(L) if tau_L is None else tau_L
    lnL = math.log(L)
    return math.log(t) * math.log(lnL) / lnL


@dataclass
class WigertSweep:
    upper: int
    max_ratio: float
    argmax: int
    thresholds: dict  # zeta -> minimal L_zeta (upper + 1 if none inside range)


def wigert_sweep(upper: int = 10**6, zetas=(0.99, 0.9, 0.8)) -> WigertSweep:
    """Ratio over [16, upper] from the sieve; L_zeta is minimal with ratio <= zeta on [L_zeta, upper]."""
    table = tau_sieve(upper)
    ell = np.arange(16, upper + 1, dtype=float)
    lnl = np.log(ell)
    ratio = np.log(table[16:].astype(float)) * np.log(lnl) / lnl
    k = int(np.argmax(ratio))
    thresholds = {}
    for z in zetas:
        above = np.flatnonzero(ratio > z)
        thresholds[z] = 16 if above.size == 0 else int(above[-1]) + 17
    return WigertSweep(upper, float(ratio[k]), k + 16, thresholds)


def divisor_set_contains(q, query: DivisorQuery) -> tuple[bool, tuple | None]:
    """Is q in D(ell)?  Returns (flag, witness k) using integer arithmetic only."""
    q = tuple(int(v) for v in np.atleast_1d(q))
    if len(q) != query.n:
        raise DomainError(f"q must have n={query.n} entries")
    if any(v == 0 for v in q):
        raise DomainError("D(ell) membership needs q_j != 0 for all j")
    mat = query.matrix
    k = []
    for i in range(query.m):
        lead = int(mat[i, 0])
        if lead % q[0]:
            return False, None
        k.append(lead // q[0])
    for i in range(query.m):
        for j in range(query.n):
            if int(mat[i, j]) != k[i] * q[j]:
                return False, None
    return True, tuple(k)


def divisor_candidates(query: DivisorQuery) -> list[tuple[tuple, tuple]]:
    """All (q, k) with q in D(ell), q_j != 0, enumerated through the pivot divisors.

    ell must be nonzero.  The pivot entry l_{i0 j0} fixes q_{j0} up to a
    divisor of |ell|; every other coordinate is then forced.
    """
    if query.norm == 0:
        raise DomainError("D(0) is all of Z^n; enumerate the window instead")
    i0, j0 = query.pivot
    mat = query.matrix
    piv = int(mat[i0, j0])
    out = []
    for d in divisors(piv):
        for qj0 in (-d, d):
            q = []
            for j in range(query.n):
                num = int(mat[i0, j]) * qj0
                if num % piv:
                    break
                q.append(num // piv)
            else:
                if any(v == 0 for v in q):
                    continue
                ok, k = divisor_set_contains(q, query)
                if ok:
                    out.append((tuple(q), k))
    out.sort()
    return out


def divisor_window(query: DivisorQuery, spec, M: float) -> list[tuple]:
    """Q(M) intersected with D(ell), sorted lexicographically."""
    from .qsets import q_window

    if query.norm == 0:
        return [tuple(int(v) for v in row) for row in q_window(spec, M)]
    out = []
    for q, _ in divisor_candidates(query):
        if all(2 * abs(v) > M and abs(v) <= M for v in q) and spec.contains(q):
            out.append(q)
    return out
