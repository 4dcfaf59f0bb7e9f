"""Resource-percentage tables: construction, monotonicity checks, CSV I/O.

Tables store ``p`` as a (50, 10) array whose row 0 is u = 50 and row 49 is
u = 1, matching the printed layout. MISSING entries are NaN.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field
from importlib import resources as _resources
from typing import IO, NamedTuple

import numpy as np

from .corpus import OVERS, WICKETS
from .errors import DomainError, MalformedRow
from .model import Theta, mean_surface
from .nonparam import EmpiricalTable

TABLE_HEADER = ("u",) + tuple(f"w{w}" for w in range(WICKETS))


class TableSource(str, enum.Enum):
    BAYES = "bayes"
    EMPIRICAL = "empirical"
    DL2013 = "dl2013"


class TableViolation(NamedTuple):
    """Adjacent pair whose second cell fails to be strictly below the first."""

    first: tuple[int, int]
    second: tuple[int, int]
    axis: str  # "u" (one fewer over) or "w" (one more wicket)
    kind: str  # "equal" or "increase"

    def describe(self) -> str:
        (u1, w1), (u2, w2) = self.first, self.second
        return f"{self.kind} along {self.axis}: ({u1},{w1}) -> ({u2},{w2})"


@dataclass(frozen=True, eq=False)
class ResourceTable:
    p: np.ndarray
    source: TableSource
    mono_report: tuple[TableViolation, ...] = field(default=())

    def __post_init__(self):
        p = np.array(self.p, dtype=np.float64)
        if p.shape != (OVERS, WICKETS):
            raise ValueError("table must have shape (50, 10)")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "source", TableSource(self.source))

    def at(self, u: int, w: int) -> float:
        """P(u, w) for u in 1..50; NaN if MISSING."""
        if not (1 <= u <= OVERS and 0 <= w < WICKETS):
            raise DomainError(f"cell ({u},{w}) outside the table")
        return float(self.p[OVERS - u, w])

    def by_u(self) -> np.ndarray:
        """Array indexed ``[u - 1, w]``."""
        return self.p[::-1]

    def rounded(self) -> np.ndarray:
        return np.round(self.p, 2)


def check_monotone(table: ResourceTable | np.ndarray, strict: bool = True) -> list[TableViolation]:
    """Scan adjacent pairs along both axes.

    Strict mode flags ties and increases; otherwise only increases count.
    Pairs touching a MISSING cell are skipped.
    """
    p = table.p if isinstance(table, ResourceTable) else np.asarray(table, dtype=float)
    out = []
    for r in range(OVERS):
        u = OVERS - r
        for w in range(WICKETS):
            here = p[r, w]
            if math.isnan(here):
                continue
            pairs = []
            if u > 1:
                pairs.append(((u - 1, w), p[r + 1, w], "u"))
            if w < WICKETS - 1:
                pairs.append(((u, w + 1), p[r, w + 1], "w"))
            for cell, there, axis in pairs:
                if math.isnan(there):
                    continue
                if there > here:
                    out.append(TableViolation((u, w), cell, axis, "increase"))
                elif strict and there == here:
                    out.append(TableViolation((u, w), cell, axis, "equal"))
    return out


def bayes_table(theta: Theta) -> ResourceTable:
    """100 * m(u, w) / m(50, 0) at full precision."""
    if not theta.is_valid():
        raise DomainError("theta violates the ordering constraints")
    m = mean_surface(theta)
    p = 100.0 * m / m[OVERS - 1, 0]
    p[OVERS - 1, 0] = 100.0
    p = p[::-1]
    return ResourceTable(p, TableSource.BAYES, tuple(check_monotone(p, strict=True)))


def empirical_resource_table(table: EmpiricalTable) -> ResourceTable:
    p = np.asarray(table.p)[::-1]
    return ResourceTable(p, TableSource.EMPIRICAL, tuple(check_monotone(p, strict=True)))


def dl_reference_text() -> str:
    return _resources.files("bayesdl").joinpath("data/dl2013.csv").read_text(encoding="utf-8")


def dl_reference() -> ResourceTable:
    """Embedded 2013 standard-edition D/L percentages."""
    return read_table(io.StringIO(dl_reference_text()), TableSource.DL2013)


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else f"{v:.2f}"


def write_table(table: ResourceTable, fp: IO[str]) -> None:
    """Header ``u,w0..w9`` then 50 rows, u descending, two decimals, blank if MISSING."""
    fp.write(",".join(TABLE_HEADER) + "\n")
    for r in range(OVERS):
        fp.write(f"{OVERS - r}," + ",".join(_fmt(v) for v in table.p[r]) + "\n")


def table_to_text(table: ResourceTable) -> str:
    buf = io.StringIO()
    write_table(table, buf)
    return buf.getvalue()


def read_table(fp: IO[str], source: TableSource | str) -> ResourceTable:
    lines = [ln for ln in fp.read().splitlines()]
    if not lines or tuple(h.strip() for h in lines[0].split(",")) != TABLE_HEADER:
        raise MalformedRow(1, f"expected header {','.join(TABLE_HEADER)}")
    p = np.full((OVERS, WICKETS), np.nan)
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != WICKETS + 1:
            raise MalformedRow(lineno, f"expected {WICKETS + 1} fields, got {len(parts)}")
        try:
            u = int(parts[0])
            vals = [float(x) if x.strip() else math.nan for x in parts[1:]]
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        if not 1 <= u <= OVERS or u in seen:
            raise MalformedRow(lineno, f"bad or duplicate row u={u}")
        seen.add(u)
        p[OVERS - u] = vals
    if len(seen) != OVERS:
        raise MalformedRow(len(lines), f"expected {OVERS} rows, got {len(seen)}")
    return ResourceTable(p, source, tuple(check_monotone(p, strict=True)))
