"""Exponential-decay run model with an order-constrained prior.

Expected runs to come with ``u`` overs left and ``w`` wickets down::

    m(u, w) = a_w * (1 - exp(-b_w * u))

The prior nests uniforms so that ``a_w`` and ``c_w = a_w * b_w`` both
decrease strictly in ``w``. Those two orderings are enough for ``m`` to
increase in ``u`` and decrease in ``w`` everywhere on the grid.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import IO, Mapping

import mpmath
import numpy as np

from .corpus import OVERS, WICKETS, CellGrid
from .errors import DomainError, MalformedRow, MissingImputation

LOG_2PI = math.log(2.0 * math.pi)
_EPS = np.finfo(float).eps


class Parametrization(str, enum.Enum):
    AB = "ab"
    AC = "ac"


@dataclass(frozen=True, eq=False)
class Theta:
    """Model parameters: asymptotes ``a``, decay rates ``b`` and unit variance."""

    a: np.ndarray
    b: np.ndarray
    sigma2: float

    def __post_init__(self):
        a = np.array(self.a, dtype=np.float64)
        b = np.array(self.b, dtype=np.float64)
        if a.shape != (WICKETS,) or b.shape != (WICKETS,):
            raise ValueError("a and b must each hold 10 values")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @classmethod
    def from_ac(cls, a, c, sigma2: float) -> "Theta":
        a = np.asarray(a, dtype=np.float64)
        return cls(a, np.asarray(c, dtype=np.float64) / a, sigma2)

    @property
    def c(self) -> np.ndarray:
        return self.a * self.b

    def replace(self, *, a=None, b=None, sigma2=None) -> "Theta":
        return Theta(self.a if a is None else a, self.b if b is None else b,
                     self.sigma2 if sigma2 is None else sigma2)

    def is_valid(self, spec: "PriorSpec | None" = None) -> bool:
        """Strict ordering constraints, plus the prior's upper bounds if ``spec`` is given."""
        a, b = self.a, self.b
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            return False
        if np.any(a <= 0) or np.any(b <= 0):
            return False
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            return False
        if np.any(np.diff(a) >= 0) or np.any(np.diff(self.c) >= 0):
            return False
        if spec is not None:
            if a[0] >= spec.A0:
                return False
            if spec.parametrization is Parametrization.AB and b[0] >= spec.B0:
                return False
            if spec.parametrization is Parametrization.AC and self.c[0] >= spec.C0:
                return False
        return True

    def __eq__(self, other):
        if not isinstance(other, Theta):
            return NotImplemented
        return (np.array_equal(self.a, other.a) and np.array_equal(self.b, other.b)
                and self.sigma2 == other.sigma2)

    def __repr__(self):
        return f"Theta(a={self.a.tolist()}, b={self.b.tolist()}, sigma2={self.sigma2!r})"


@dataclass(frozen=True)
class PriorSpec:
    A0: float = 2000.0
    B0: float = 100.0
    C0: float = 2000.0
    gamma_a: float = 0.1
    gamma_b: float = 0.1
    parametrization: Parametrization = field(default=Parametrization.AB)

    def __post_init__(self):
        object.__setattr__(self, "parametrization", Parametrization(self.parametrization))
        for name in ("A0", "B0", "C0", "gamma_a", "gamma_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite number, got {value}")


def mean(u: int, w: int, theta: Theta) -> float:
    if not 0 <= u <= OVERS:
        raise DomainError(f"u must be in 0..{OVERS}, got {u}")
    if not 0 <= w < WICKETS:
        raise DomainError(f"w must be in 0..{WICKETS - 1}, got {w}")
    return float(theta.a[w] * -math.expm1(-theta.b[w] * u))


def mean_du(u: float, w: int, theta: Theta) -> float:
    """Partial derivative of the mean in ``u``."""
    return float(theta.a[w] * theta.b[w] * math.exp(-theta.b[w] * u))


def mean_surface(theta: Theta) -> np.ndarray:
    """Mean over the whole grid, shape (50, 10), indexed ``[u - 1, w]``."""
    u = np.arange(1, OVERS + 1, dtype=np.float64)[:, None]
    return theta.a * -np.expm1(-theta.b * u)


def _open_unit(rng: np.random.Generator) -> float:
    x = rng.random()
    while x == 0.0:
        x = rng.random()
    return x


def _draw_sigma2(shape: float, rate: float, rng: np.random.Generator) -> float:
    precision = rng.standard_gamma(shape) / rate
    return 1.0 / max(precision, 1e-300)


def sample_prior(spec: PriorSpec, rng: np.random.Generator) -> Theta:
    """One draw from the nested-uniform prior.

    Draw order is a_0, then b_0 (or c_0), then (a_w, b_w) for w = 1..9, then
    the precision; every uniform comes from ``rng.random()``.
    """
    a = np.empty(WICKETS)
    second = np.empty(WICKETS)
    a[0] = spec.A0 * _open_unit(rng)
    if spec.parametrization is Parametrization.AB:
        second[0] = spec.B0 * _open_unit(rng)
        for w in range(WICKETS - 1):
            a[w + 1] = a[w] * _open_unit(rng)
            second[w + 1] = a[w] * second[w] / a[w + 1] * _open_unit(rng)
        b = second
    else:
        second[0] = spec.C0 * _open_unit(rng)
        for w in range(WICKETS - 1):
            a[w + 1] = a[w] * _open_unit(rng)
            second[w + 1] = second[w] * _open_unit(rng)
        b = second / a
    return Theta(a, b, _draw_sigma2(spec.gamma_a, spec.gamma_b, rng))


def log_inv_gamma(sigma2: float, shape: float, rate: float) -> float:
    """Log density of sigma2 when 1/sigma2 ~ Gamma(shape, rate)."""
    if not sigma2 > 0:
        return -math.inf
    return (shape * math.log(rate) - math.lgamma(shape)
            - (shape + 1.0) * math.log(sigma2) - rate / sigma2)


def log_prior(theta: Theta, spec: PriorSpec) -> float:
    """Joint log prior density, -inf outside the support.

    Under the AC parametrization the density is over (a, c) coordinates.
    """
    if not theta.is_valid(spec):
        return -math.inf
    a = theta.a
    lp = -math.log(spec.A0)
    if spec.parametrization is Parametrization.AB:
        c = theta.c
        lp -= math.log(spec.B0)
        for w in range(WICKETS - 1):
            # a_{w+1} ~ U(0, a_w), b_{w+1} ~ U(0, c_w / a_{w+1})
            lp -= math.log(a[w]) + math.log(c[w] / a[w + 1])
    else:
        c = theta.c
        lp -= math.log(spec.C0)
        for w in range(WICKETS - 1):
            lp -= math.log(a[w]) + math.log(c[w])
    return lp + log_inv_gamma(theta.sigma2, spec.gamma_a, spec.gamma_b)


def _filled_values(grid: CellGrid, imputed) -> np.ndarray:
    values = np.array(grid.rbar)
    missing = grid.missing
    if not missing.any():
        return values
    if imputed is None:
        raise MissingImputation(f"{int(missing.sum())} MISSING cells but no imputed values supplied")
    if isinstance(imputed, Mapping):
        for u, w in grid.missing_cells():
            try:
                values[u - 1, w] = imputed[(u, w)]
            except KeyError:
                raise MissingImputation(f"no imputed value for MISSING cell ({u},{w})") from None
    else:
        arr = np.asarray(imputed, dtype=np.float64)
        values[missing] = arr[missing]
        if np.any(np.isnan(values[missing])):
            raise MissingImputation("imputed array has NaN at a MISSING cell")
    return values


def cell_log_likelihood(theta: Theta, values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Per-cell log N(value | m, sigma2 / weight); zero where weight is 0."""
    m = mean_surface(theta)
    weights = np.asarray(weights, dtype=np.float64)
    out = np.zeros(weights.shape)
    on = weights > 0
    var = theta.sigma2 / weights[on]
    resid = np.asarray(values)[on] - m[on]
    out[on] = -0.5 * (LOG_2PI + np.log(var)) - 0.5 * resid * resid / var
    return out


def log_likelihood(theta: Theta, grid: CellGrid, imputed=None, *,
                   include_missing: bool = True) -> float:
    """Weighted normal log likelihood over all 500 cells.

    Observed cells carry weight ``n_uw``. MISSING cells enter with weight 1
    at their imputed value (``imputed`` is a ``{(u, w): value}`` mapping or a
    (50, 10) array), or are left out entirely when ``include_missing`` is
    False.
    """
    if include_missing:
        values = _filled_values(grid, imputed)
        weights = grid.weights
    else:
        values = np.where(grid.missing, 0.0, grid.rbar)
        weights = grid.n
    return float(np.sum(cell_log_likelihood(theta, values, weights)))


@dataclass(frozen=True)
class MonoViolation:
    axis: str  # "u": m(u, w) >= m(u + 1, w); "w": m(u, w) <= m(u, w + 1)
    u: int
    w: int

    def describe(self) -> str:
        if self.axis == "u":
            return f"mean({self.u},{self.w}) >= mean({self.u + 1},{self.w})"
        return f"mean({self.u},{self.w}) <= mean({self.u},{self.w + 1})"


@dataclass(frozen=True)
class MonoReport:
    violations: tuple[MonoViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def first(self) -> MonoViolation | None:
        return self.violations[0] if self.violations else None

    def __bool__(self):
        return self.ok


def _exact_w_gap(a0, b0, a1, b1, u) -> mpmath.mpf:
    with mpmath.workdps(80):
        t0 = mpmath.mpf(a0) * -mpmath.expm1(-mpmath.mpf(b0) * u)
        t1 = mpmath.mpf(a1) * -mpmath.expm1(-mpmath.mpf(b1) * u)
        return t0 - t1


def check_mono_conditions(theta: Theta) -> MonoReport:
    """Verify strict monotonicity of the mean over u in 1..50, w in 0..9.

    Differences are judged on exact values rather than on rounded means:
    along u the gap ``a e^{-bu}(1 - e^{-b})`` is positive iff a, b > 0; along
    w, float gaps within rounding error are re-evaluated at 80 digits. This
    matters for steep prior draws, where every rounded mean in a column is
    the same float.
    """
    a, b = theta.a, theta.b
    violations = []
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        u_ok = (a > 0) & (b > 0) & np.isfinite(a) & np.isfinite(b)
    for w in np.flatnonzero(~u_ok):
        violations.extend(MonoViolation("u", u, int(w)) for u in range(1, OVERS))

    u = np.arange(1, OVERS + 1, dtype=np.float64)[:, None]
    terms = a * -np.expm1(-b * u)
    gap = terms[:, :-1] - terms[:, 1:]
    tol = 4 * _EPS * (np.abs(terms[:, :-1]) + np.abs(terms[:, 1:]))
    bad = ~(gap > tol)
    for ui, w in zip(*np.nonzero(bad)):
        uu = int(ui) + 1
        if not (gap[ui, w] < -tol[ui, w]):
            if _exact_w_gap(a[w], b[w], a[w + 1], b[w + 1], uu) > 0:
                continue
        violations.append(MonoViolation("w", uu, int(w)))
    violations.sort(key=lambda v: (v.axis != "u", -v.u, v.w))
    return MonoReport(tuple(violations))


def write_theta(theta: Theta, fp: IO[str]) -> None:
    fp.write("w,a,b\n")
    for w in range(WICKETS):
        fp.write(f"{w},{theta.a[w]:.17g},{theta.b[w]:.17g}\n")
    fp.write(f"sigma2,{theta.sigma2:.17g}\n")


def read_theta(fp: IO[str]) -> Theta:
    rows = [r for r in csv.reader(fp) if r]
    if not rows or [h.strip() for h in rows[0]] != ["w", "a", "b"]:
        raise MalformedRow(1, "expected header w,a,b")
    a, b = np.full(WICKETS, np.nan), np.full(WICKETS, np.nan)
    sigma2 = None
    for lineno, row in enumerate(rows[1:], start=2):
        try:
            if row[0] == "sigma2":
                sigma2 = float(row[1])
                continue
            w = int(row[0])
            a[w], b[w] = float(row[1]), float(row[2])
        except (ValueError, IndexError) as exc:
            raise MalformedRow(lineno, f"bad theta row: {exc}") from None
    if sigma2 is None or np.any(np.isnan(a)) or np.any(np.isnan(b)):
        raise MalformedRow(0, "theta file must list w = 0..9 and a sigma2 record")
    return Theta(a, b, sigma2)
