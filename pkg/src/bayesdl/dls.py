"""Resource lookups and revised targets for interrupted matches."""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .corpus import OVERS, WICKETS
from .errors import DomainError
from .tables import ResourceTable


@dataclass(frozen=True)
class MatchState:
    overs_remaining: int
    wickets_lost: int

    def __post_init__(self):
        if not 0 <= self.overs_remaining <= OVERS:
            raise DomainError(f"overs_remaining must be in 0..{OVERS}")
        if not 0 <= self.wickets_lost < WICKETS:
            raise DomainError(f"wickets_lost must be in 0..{WICKETS - 1}")

    @classmethod
    def parse(cls, text: str) -> "MatchState":
        """From ``"u,w"``."""
        try:
            u, w = (int(x) for x in text.split(","))
        except ValueError:
            raise DomainError(f"state must look like 'u,w', got {text!r}") from None
        return cls(u, w)


@dataclass(frozen=True)
class TargetInput:
    s: int
    p1: float
    p2: float
    g50: float

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 0:
            raise DomainError("score must be a non-negative integer")
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not 0 < v <= 100:
                raise DomainError(f"{name} must be in (0, 100], got {v}")
        if not self.g50 > 0 or not math.isfinite(self.g50):
            raise DomainError("g50 must be positive")


def resources(table: ResourceTable, state: MatchState) -> float:
    """Table lookup; zero overs left means zero resources."""
    if state.overs_remaining == 0:
        return 0.0
    p = table.at(state.overs_remaining, state.wickets_lost)
    if math.isnan(p):
        raise DomainError(f"table has no value at ({state.overs_remaining},{state.wickets_lost})")
    return p


def _exact(x) -> Fraction:
    return Fraction(x) if isinstance(x, (int, Fraction)) else Fraction(str(x))


def par_score(inp: TargetInput) -> Fraction:
    """Exact par: S*P2/P1, S, or S + G50*(P2 - P1)/100 by the sign of P1 - P2."""
    s, p1, p2, g50 = _exact(inp.s), _exact(inp.p1), _exact(inp.p2), _exact(inp.g50)
    if p1 > p2:
        return s * p2 / p1
    if p1 == p2:
        return s
    return s + g50 * (p2 - p1) / 100


def target(inp: TargetInput) -> int:
    """Team 2's winning target: floor(par) + 1."""
    return math.floor(par_score(inp)) + 1


def table_target(table: ResourceTable, s: int, state1: MatchState, state2: MatchState,
                 g50: float) -> int:
    """Target with P1, P2 read from ``table`` at the two teams' starting states."""
    return target(TargetInput(s, resources(table, state1), resources(table, state2), g50))
