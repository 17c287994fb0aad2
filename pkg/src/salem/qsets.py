"""Frequency sets Q, approximation functions Psi, and scenario parameters.

A scenario bundles everything the construction needs: the exponent set
``Q`` inside ``Z^n``, the approximation function ``Psi``, the shift
``theta`` in ``R^m``, and the density hypothesis parameters ``a``, ``h``
and a finite ascending list of scales ``Mset``.

Windows use the max-norm convention ``M/2 < |q_j| <= M`` for every
coordinate, so no enumerated element ever has a zero coordinate.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import EmptyWindowError, InputError, InsufficientDataError

QSET_KINDS = (
    "all_integers",
    "primes",
    "shifted_primes",
    "squares",
    "powers_of_two",
    "sin_threshold",
    "explicit_list",
    "file",
)
PSI_FAMILIES = ("power", "hinokuma_shiga", "tabulated", "custom")
H_FAMILIES = ("constant", "log", "table")


def _prime_mask(limit: int) -> np.ndarray:
    mask = np.ones(limit + 1, dtype=bool)
    mask[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if mask[p]:
            mask[p * p :: p] = False
    return mask


def _is_prime(v: int) -> bool:
    if v < 2:
        return False
    if v % 2 == 0:
        return v == 2
    for d in range(3, math.isqrt(v) + 1, 2):
        if v % d == 0:
            return False
    return True


def _in_window(v: int, M: float) -> bool:
    # exact for integers below 2**52
    return 2 * abs(v) > M and abs(v) <= M


@dataclass(frozen=True)
class QSetSpec:
    n: int = 1
    kind: str = "all_integers"
    payload: tuple = ()

    def __post_init__(self):
        if self.n < 1:
            raise InputError("n must be a positive integer")
        if self.kind not in QSET_KINDS:
            raise InputError(f"unknown Q kind {self.kind!r}")
        if self.kind in ("explicit_list", "file"):
            rows = []
            for row in self.payload:
                row = (row,) if isinstance(row, (int, np.integer)) else tuple(row)
                if len(row) != self.n:
                    raise InputError(f"Q element {row} does not have n={self.n} entries")
                rows.append(tuple(int(v) for v in row))
            object.__setattr__(self, "payload", tuple(sorted(set(rows))))

    @classmethod
    def from_file(cls, path, n: int = 1) -> "QSetSpec":
        """One whitespace-separated integer n-vector per line."""
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InputError(f"cannot read Q file {path}: {exc}") from exc
        rows = []
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                rows.append(tuple(int(tok) for tok in line.split()))
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: not an integer vector") from exc
        return cls(n=n, kind="file", payload=tuple(rows))

    def contains(self, q) -> bool:
        """Membership test, independent of window enumeration."""
        q = tuple(int(v) for v in np.atleast_1d(q))
        if len(q) != self.n:
            return False
        if self.kind in ("explicit_list", "file"):
            return q in self.payload
        return all(self._contains_1d(v) for v in q)

    def _contains_1d(self, v: int) -> bool:
        kind = self.kind
        if kind == "all_integers":
            return True
        if v <= 0:
            return False
        if kind == "primes":
            return _is_prime(v)
        if kind == "shifted_primes":
            return _is_prime(v - 1)
        if kind == "squares":
            r = math.isqrt(v)
            return r * r == v
        if kind == "powers_of_two":
            return v & (v - 1) == 0
        if kind == "sin_threshold":
            return abs(math.sin(v)) >= 0.5
        raise AssertionError(kind)

    def _window_1d(self, M: float) -> list[int]:
        lo = int(math.floor(M / 2)) + 1
        hi = int(math.floor(M))
        if hi < lo:
            return []
        kind = self.kind
        if kind == "all_integers":
            vals = list(range(-hi, -lo + 1)) + list(range(lo, hi + 1))
        elif kind in ("primes", "shifted_primes"):
            shift = 1 if kind == "shifted_primes" else 0
            mask = _prime_mask(max(hi, 2))
            vals = [p + shift for p in np.flatnonzero(mask).tolist() if lo <= p + shift <= hi]
        elif kind == "squares":
            vals = [r * r for r in range(math.isqrt(lo - 1) + 1, math.isqrt(hi) + 1)]
        elif kind == "powers_of_two":
            vals = [1 << e for e in range(0, hi.bit_length() + 1) if lo <= (1 << e) <= hi]
        elif kind == "sin_threshold":
            vals = [v for v in range(lo, hi + 1) if abs(math.sin(v)) >= 0.5]
        else:
            raise AssertionError(kind)
        return [v for v in vals if _in_window(v, M)]

    def window(self, M: float) -> np.ndarray:
        if self.kind in ("explicit_list", "file"):
            rows = [q for q in self.payload if all(_in_window(v, M) for v in q)]
        else:
            axis = self._window_1d(M)
            rows = list(itertools.product(axis, repeat=self.n))
        out = np.array(sorted(rows), dtype=np.int64)
        return out.reshape(len(rows), self.n)

    def count_upto(self, X: float) -> int:
        """Number of positive-norm elements with 0 < |q| <= X (n = 1)."""
        if self.n != 1:
            raise InputError("count_upto requires n = 1")
        X = int(math.floor(X))
        kind = self.kind
        if kind == "all_integers":
            return 2 * X
        if kind == "squares":
            return math.isqrt(X)
        if kind == "powers_of_two":
            return X.bit_length() if X >= 1 else 0
        if kind in ("explicit_list", "file"):
            return sum(1 for (v,) in self.payload if 0 < abs(v) <= X)
        if X > 5 * 10**7:
            raise InputError(f"count_upto for {kind} is limited to X <= 5e7")
        if kind == "primes":
            return int(_prime_mask(max(X, 2)).sum()) if X >= 2 else 0
        if kind == "shifted_primes":
            return int(_prime_mask(max(X - 1, 2))[: X].sum()) if X >= 3 else 0
        if kind == "sin_threshold":
            v = np.arange(1, X + 1, dtype=float)
            return int(np.count_nonzero(np.abs(np.sin(v)) >= 0.5))
        raise AssertionError(kind)

    def elements_upto(self, N: int) -> np.ndarray:
        """All elements with 0 < |q| <= N, as an (count, n) array."""
        N = int(N)
        if self.kind in ("explicit_list", "file"):
            rows = [q for q in self.payload if 0 < max(abs(v) for v in q) <= N]
            return np.array(rows, dtype=np.int64).reshape(len(rows), self.n)
        if self.kind == "all_integers":
            axis = np.concatenate([np.arange(-N, 0), np.arange(1, N + 1)])
        elif self.kind == "primes":
            axis = np.flatnonzero(_prime_mask(max(N, 2)))
        elif self.kind == "shifted_primes":
            axis = np.flatnonzero(_prime_mask(max(N, 2))) + 1
            axis = axis[axis <= N]
        elif self.kind == "squares":
            axis = np.arange(1, math.isqrt(N) + 1) ** 2
        elif self.kind == "powers_of_two":
            axis = 2 ** np.arange(0, N.bit_length())
        elif self.kind == "sin_threshold":
            axis = np.arange(1, N + 1)
            axis = axis[np.abs(np.sin(axis.astype(float))) >= 0.5]
        else:
            raise AssertionError(self.kind)
        axis = axis.astype(np.int64)
        if self.n == 1:
            return axis.reshape(-1, 1)
        if axis.size**self.n > 5 * 10**7:
            raise InputError("elements_upto: enumeration too large")
        grids = np.meshgrid(*([axis] * self.n), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def to_json(self) -> dict:
        out = {"kind": self.kind}
        if self.kind in ("explicit_list", "file"):
            out["payload"] = [list(q) for q in self.payload]
        return out


def q_window(spec: QSetSpec, M: float) -> np.ndarray:
    """Q(M) as an (N, n) integer array sorted lexicographically."""
    if M < 1:
        raise InputError(f"window scale must satisfy M >= 1, got {M}")
    return spec.window(M)


@dataclass(frozen=True)
class PsiSpec:
    family: str = "power"
    tau: float = 2.0
    table: tuple = ()
    func: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in PSI_FAMILIES:
            raise InputError(f"unknown Psi family {self.family!r}")
        if self.family == "custom" and self.func is None:
            raise InputError("custom Psi needs a callable")
        if self.family == "tabulated":
            if not self.table:
                raise InputError("tabulated Psi needs a nonempty table")
            object.__setattr__(self, "table", tuple(float(v) for v in self.table))

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q)
        if q.ndim == 0:
            q = q.reshape(1, 1)
        elif q.ndim == 1:
            q = q.reshape(-1, 1)
        r = np.abs(q).max(axis=1).astype(float)
        safe = np.where(r == 0, 1.0, r)
        if self.family == "power":
            vals = safe ** (-self.tau)
        elif self.family == "hinokuma_shiga":
            vals = np.abs(np.sin(safe)) * safe ** (-self.tau)
        elif self.family == "tabulated":
            idx = np.abs(q).max(axis=1)
            if idx.max(initial=0) >= len(self.table):
                raise InputError(f"tabulated Psi has no entry for |q|={idx.max()}")
            vals = np.asarray(self.table)[idx]
        else:
            vals = np.asarray([float(self.func(tuple(row))) for row in q])
        return np.where(r == 0, 1.0, vals)

    def to_json(self) -> dict:
        if self.family in ("power", "hinokuma_shiga"):
            return {"family": self.family, "tau": self.tau}
        if self.family == "tabulated":
            return {"family": "tabulated", "table": list(self.table)}
        return {"family": "custom"}


@dataclass(frozen=True)
class HSpec:
    family: str = "constant"
    c: float = 1.0
    p: float = 1.0
    table: tuple = ()

    def __post_init__(self):
        if self.family not in H_FAMILIES:
            raise InputError(f"unknown h family {self.family!r}")
        if self.family == "table":
            xs = [float(x) for x, _ in self.table]
            ys = [float(y) for _, y in self.table]
            if len(xs) < 2 or any(b <= a for a, b in zip(xs, xs[1:])):
                raise InputError("h table needs >= 2 strictly ascending abscissae")
            object.__setattr__(self, "table", tuple(zip(xs, ys)))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.family == "constant":
            return np.full_like(x, self.c)
        if self.family == "log":
            return self.c * np.log(x + 1.0) ** self.p
        xs, ys = zip(*self.table)
        return np.interp(x, xs, ys)

    def is_increasing(self, samples=None) -> bool:
        """Non-decreasing and positive on sample points of (0, inf)."""
        if samples is None:
            samples = np.geomspace(1e-3, 1e9, 4001)
        vals = self(samples)
        return bool(np.all(vals > 0) and np.all(np.diff(vals) >= 0))

    def to_json(self) -> dict:
        if self.family == "table":
            return {"family": "table", "table": [list(r) for r in self.table]}
        out = {"family": self.family, "c": self.c}
        if self.family == "log":
            out["p"] = self.p
        return out


def epsilon(spec: QSetSpec, psi: PsiSpec, M: float) -> float:
    """Minimum of Psi over the window Q(M)."""
    window = q_window(spec, M)
    if len(window) == 0:
        raise EmptyWindowError(M)
    return float(psi(window).min())


@dataclass(frozen=True)
class Scenario:
    qset: QSetSpec
    psi: PsiSpec
    m: int = 1
    theta: tuple = (0.0,)
    a: float = 0.0
    h: HSpec = field(default_factory=HSpec)
    Mset: tuple = ()
    K: int | None = None
    name: str = ""

    def __post_init__(self):
        theta = tuple(float(t) for t in np.atleast_1d(self.theta))
        if len(theta) != self.m:
            raise InputError(f"theta must have m={self.m} entries")
        object.__setattr__(self, "theta", theta)
        Mset = tuple(float(M) for M in self.Mset)
        if any(M <= 0 for M in Mset) or any(b <= a for a, b in zip(Mset, Mset[1:])):
            raise InputError("Mset must be positive and strictly ascending")
        object.__setattr__(self, "Mset", Mset)
        if self.a < 0:
            raise InputError("a must be >= 0")
        if self.K is None:
            object.__setattr__(self, "K", int(math.floor(self.m * self.n + self.a)) + 3)
        elif self.K <= self.m * self.n + self.a:
            raise InputError(f"K={self.K} must exceed mn + a = {self.m * self.n + self.a:g}")

    @property
    def n(self) -> int:
        return self.qset.n

    @property
    def dim(self) -> int:
        return self.m * self.qset.n

    def window(self, M: float) -> np.ndarray:
        return q_window(self.qset, M)

    def epsilon(self, M: float) -> float:
        return epsilon(self.qset, self.psi, M)

    def with_(self, **changes) -> "Scenario":
        fields_ = dict(
            qset=self.qset, psi=self.psi, m=self.m, theta=self.theta, a=self.a,
            h=self.h, Mset=self.Mset, K=self.K, name=self.name,
        )
        fields_.update(changes)
        if "K" not in changes and ("a" in changes or "m" in changes or "qset" in changes):
            fields_["K"] = None
        return Scenario(**fields_)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "m": self.m,
            "n": self.n,
            "theta": list(self.theta),
            "Q": self.qset.to_json(),
            "Psi": self.psi.to_json(),
            "a": self.a,
            "h": self.h.to_json(),
            "Mset": list(self.Mset),
            "K": self.K,
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def scenario_from_dict(data: dict, base_dir: Path | None = None) -> Scenario:
    try:
        m = int(data.get("m", 1))
        n = int(data.get("n", 1))
        qd = data["Q"]
        kind = qd["kind"]
        if kind == "file":
            path = Path(qd["path"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            qset = QSetSpec.from_file(path, n=n)
        else:
            qset = QSetSpec(n=n, kind=kind, payload=tuple(tuple(np.atleast_1d(r)) for r in qd.get("payload", ())))
        pd = data["Psi"]
        psi = PsiSpec(family=pd["family"], tau=float(pd.get("tau", 0.0)), table=tuple(pd.get("table", ())))
        hd = data.get("h", {"family": "constant", "c": 1.0})
        h = HSpec(
            family=hd.get("family", "constant"),
            c=float(hd.get("c", 1.0)),
            p=float(hd.get("p", 1.0)),
            table=tuple(tuple(r) for r in hd.get("table", ())),
        )
        theta = data.get("theta", [0.0] * m)
        K = data.get("K")
        return Scenario(
            qset=qset, psi=psi, m=m, theta=tuple(theta), a=float(data.get("a", 0.0)),
            h=h, Mset=tuple(data.get("Mset", ())), K=None if K is None else int(K),
            name=str(data.get("name", "")),
        )
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed scenario: {exc!r}") from exc


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read scenario {path}: {exc}") from exc
    return scenario_from_dict(data, base_dir=path.parent)


@dataclass
class CertEntry:
    M: float
    window_size: int
    eps: float | None
    lhs: float | None
    rhs: float
    margin: float | None
    passed: bool
    reason: str = ""


@dataclass
class CertReport:
    entries: list[CertEntry]

    @property
    def passed(self) -> bool:
        return bool(self.entries) and all(e.passed for e in self.entries)

    @property
    def empty_windows(self) -> list[float]:
        return [e.M for e in self.entries if e.window_size == 0]

    def to_json(self) -> dict:
        return {
            "passed": self.passed,
            "entries": [e.__dict__ for e in self.entries],
        }


def certify_scenario(spec: QSetSpec, psi: PsiSpec, params: Scenario) -> CertReport:
    """Check |Q(M)| eps(M)^a h(M) >= M^a for every M of the truncated scale set."""
    entries = []
    a = params.a
    for M in params.Mset:
        window = q_window(spec, M)
        rhs = M**a
        if len(window) == 0:
            entries.append(CertEntry(M, 0, None, None, rhs, None, False, f"empty window at M={M:g}"))
            continue
        eps = float(psi(window).min())
        lhs = len(window) * eps**a * float(params.h(M))
        entries.append(CertEntry(M, len(window), eps, lhs, rhs, lhs - rhs, lhs >= rhs))
    return CertReport(entries)


def nu_estimate(spec: QSetSpec, cutoff: float = 10**6, points: int = 25) -> float:
    """Convergence abscissa of sum |q|^-nu from the growth of the counting function.

    Regresses ln #{q : |q| <= X} on ln X over X geometric in [sqrt(cutoff), cutoff].
    Sparse sets need an astronomically large cutoff for the slope to settle
    (powers of two: slope ~ 1/ln X).
    """
    if spec.n != 1:
        raise InputError("nu_estimate requires n = 1")
    if cutoff < 1e3:
        raise InputError("cutoff must be >= 1e3")
    xs = np.geomspace(math.sqrt(cutoff), cutoff, points)
    counts = np.array([spec.count_upto(x) for x in xs], dtype=float)
    if np.count_nonzero(counts) < 3 or counts[-1] < 4:
        raise InsufficientDataError("too few elements of Q below the cutoff")
    keep = counts > 0
    slope = np.polyfit(np.log(xs[keep]), np.log(counts[keep]), 1)[0]
    return float(max(slope, 0.0))


PRESET_SCENARIOS = {
    "integers_tau2": dict(
        name="integers_tau2", m=1, n=1, theta=[0.0], Q={"kind": "all_integers"},
        Psi={"family": "power", "tau": 2.0}, a=1 / 3, h={"family": "constant", "c": 4.0},
        Mset=[2.0**k for k in range(1, 17)],
    ),
    "squares_tau2": dict(
        name="squares_tau2", m=1, n=1, theta=[0.0], Q={"kind": "squares"},
        Psi={"family": "power", "tau": 2.0}, a=1 / 6, h={"family": "constant", "c": 10.0},
        Mset=[16.0, 32.0, 64.0, 128.0],
    ),
    "shifted_primes_tau2": dict(
        name="shifted_primes_tau2", m=1, n=1, theta=[0.0], Q={"kind": "shifted_primes"},
        Psi={"family": "power", "tau": 2.0}, a=1 / 3, h={"family": "log", "c": 4.0, "p": 1.0},
        Mset=[16.0, 32.0, 64.0, 128.0],
    ),
    "sin_threshold_tau2": dict(
        name="sin_threshold_tau2", m=1, n=1, theta=[0.0], Q={"kind": "sin_threshold"},
        Psi={"family": "hinokuma_shiga", "tau": 2.0}, a=1 / 3,
        h={"family": "constant", "c": 4 * math.pi}, Mset=[16.0, 32.0, 64.0, 128.0],
    ),
    "mn_app_m4_n2": dict(
        name="mn_app_m4_n2", m=4, n=2, theta=[0.0] * 4, Q={"kind": "all_integers"},
        Psi={"family": "power", "tau": 2.0}, a=2 / 3, h={"family": "constant", "c": 4.0},
        Mset=[4.0, 8.0, 16.0],
    ),
}


def preset_scenario(name: str) -> Scenario:
    try:
        return scenario_from_dict(PRESET_SCENARIOS[name])
    except KeyError:
        raise InputError(f"unknown preset {name!r}; known: {sorted(PRESET_SCENARIOS)}") from None
