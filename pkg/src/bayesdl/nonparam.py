"""Empirical resource percentages: cell means divided by the full-innings mean."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import OVERS, WICKETS, CellGrid
from .errors import EmptyCorpus


@dataclass(frozen=True, eq=False)
class EmpiricalTable:
    """``p`` is indexed ``[u - 1, w]`` with NaN for MISSING cells."""

    p: np.ndarray
    denom: float

    def at(self, u: int, w: int) -> float | None:
        v = float(self.p[u - 1, w])
        return None if np.isnan(v) else v

    def as_mapping(self) -> dict[tuple[int, int], float | None]:
        return {(u, w): self.at(u, w) for u in range(OVERS, 0, -1) for w in range(WICKETS)}


def empirical_table(grid: CellGrid) -> EmpiricalTable:
    """p(u, w) = 100 * rbar(u, w) / rbar(50, 0); MISSING cells stay NaN."""
    if grid.n[OVERS - 1, 0] == 0:
        raise EmptyCorpus("cell (50, 0) unobserved: no full innings to normalise by")
    denom = float(grid.rbar[OVERS - 1, 0])
    if not denom > 0:
        raise EmptyCorpus("mean full-innings score is zero")
    p = 100.0 * np.asarray(grid.rbar) / denom
    p[OVERS - 1, 0] = 100.0
    p.setflags(write=False)
    return EmpiricalTable(p, denom)
