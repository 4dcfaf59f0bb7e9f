"""Ball-by-ball ingestion and aggregation into the 50x10 cell grid.

The corpus CSV holds legal deliveries only::

    match_id,over,ball,runs,wicket_fell
    m1,1,1,4,false

Runs from wides and no-balls are folded into the next legal delivery, so
every complete innings has exactly 300 rows.
"""
from __future__ import annotations

import csv
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .errors import DataRejection, EmptyCorpus, MalformedRow, OrderViolation

logger = logging.getLogger(__name__)

OVERS = 50
BALLS_PER_OVER = 6
WICKETS = 10  # model wicket states 0..9
CORPUS_HEADER = ("match_id", "over", "ball", "runs", "wicket_fell")
GRID_HEADER = ("u", "w", "n", "rbar")


@dataclass(frozen=True, slots=True)
class BallEvent:
    match_id: str
    over: int
    ball: int
    runs: int
    wicket_fell: bool

    @property
    def key(self) -> tuple[int, int]:
        return (self.over, self.ball)


class Checkpoint(NamedTuple):
    u: int
    w_at_u: int
    runs_to_come: int


@dataclass(frozen=True)
class InningsSummary:
    """Per-innings sequence of end-of-over states.

    ``checkpoints[k]`` is the state after over ``k + 1``, i.e. with
    ``u = 49 - k`` overs remaining.
    """

    match_id: str
    total_runs: int
    checkpoints: tuple[Checkpoint, ...]

    def __post_init__(self):
        if len(self.checkpoints) != OVERS:
            raise ValueError(f"expected {OVERS} checkpoints, got {len(self.checkpoints)}")

    def at(self, u: int) -> Checkpoint:
        """Checkpoint with ``u`` overs remaining (0 <= u <= 49)."""
        if not 0 <= u < OVERS:
            raise ValueError(f"u must be in 0..{OVERS - 1}, got {u}")
        return self.checkpoints[OVERS - 1 - u]

    def runs_so_far(self, u: int) -> int:
        return self.total_runs - self.at(u).runs_to_come


@dataclass(frozen=True, eq=False)
class CellGrid:
    """Sample means of runs-to-come over the (u, w) grid.

    ``n`` and ``rbar`` are indexed ``[u - 1, w]``. A cell nobody reached has
    ``n == 0`` and ``rbar`` NaN.
    """

    n: np.ndarray
    rbar: np.ndarray
    g50: float
    n_matches: int = field(default=0)

    def __post_init__(self):
        n = np.array(self.n, dtype=np.int64)
        rbar = np.array(self.rbar, dtype=np.float64)
        if n.shape != (OVERS, WICKETS) or rbar.shape != (OVERS, WICKETS):
            raise ValueError("grid arrays must have shape (50, 10)")
        if np.any(n < 0):
            raise ValueError("negative cell count")
        if np.any(np.isnan(rbar) != (n == 0)):
            raise ValueError("rbar must be NaN exactly where n == 0")
        n.setflags(write=False)
        rbar.setflags(write=False)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "rbar", rbar)
        if not self.n_matches:
            object.__setattr__(self, "n_matches", int(n[OVERS - 1, 0]))

    @property
    def missing(self) -> np.ndarray:
        return self.n == 0

    @property
    def weights(self) -> np.ndarray:
        """Likelihood weights: observed count, or 1 for a missing cell."""
        return np.where(self.n == 0, 1, self.n)

    def missing_cells(self) -> list[tuple[int, int]]:
        """MISSING (u, w) cells in export order: u descending, then w ascending."""
        return [(u, w) for u in range(OVERS, 0, -1) for w in range(WICKETS)
                if self.n[u - 1, w] == 0]

    def cell(self, u: int, w: int) -> tuple[int, float | None]:
        n = int(self.n[u - 1, w])
        return n, (None if n == 0 else float(self.rbar[u - 1, w]))

    def scaled(self, c: float) -> "CellGrid":
        return CellGrid(self.n, self.rbar * c, self.g50 * c, self.n_matches)

    @classmethod
    def from_cells(cls, cells: dict[tuple[int, int], tuple[int, float]], n_matches: int = 0) -> "CellGrid":
        """Build a grid from a sparse ``{(u, w): (n, rbar)}`` mapping."""
        n = np.zeros((OVERS, WICKETS), dtype=np.int64)
        rbar = np.full((OVERS, WICKETS), np.nan)
        for (u, w), (count, value) in cells.items():
            if count > 0:
                n[u - 1, w] = count
                rbar[u - 1, w] = value
        g50 = float(rbar[OVERS - 1, 0]) if n[OVERS - 1, 0] else math.nan
        return cls(n, rbar, g50, n_matches)


def _open_text(source) -> IO[str]:
    if isinstance(source, (bytes, bytearray)):
        return io.StringIO(bytes(source).decode("utf-8"))
    if isinstance(source, str):
        return io.StringIO(source)
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8", newline="")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low == "true":
        return True
    if low == "false":
        return False
    raise ValueError(f"wicket_fell must be true/false, got {text!r}")


def parse_corpus(source) -> dict[str, list[BallEvent]]:
    """Parse corpus CSV into per-match event lists.

    ``source`` may be a binary or text stream, raw bytes, or CSV text.
    Rows of one match must appear in strictly increasing (over, ball) order;
    matches may interleave. Returns a dict keyed by match_id in ascending
    order.
    """
    reader = csv.reader(_open_text(source))
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow(1, "missing header row") from None
    if tuple(h.strip() for h in header) != CORPUS_HEADER:
        raise MalformedRow(1, f"expected header {','.join(CORPUS_HEADER)}, got {','.join(header)}")

    matches: dict[str, list[BallEvent]] = defaultdict(list)
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(CORPUS_HEADER):
            raise MalformedRow(lineno, f"expected {len(CORPUS_HEADER)} fields, got {len(row)}")
        match_id = row[0].strip()
        if not match_id:
            raise MalformedRow(lineno, "empty match_id")
        try:
            over, ball, runs = int(row[1]), int(row[2]), int(row[3])
            wicket = _parse_bool(row[4])
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        if not 1 <= over <= OVERS:
            raise MalformedRow(lineno, f"over {over} outside 1..{OVERS}")
        if not 1 <= ball <= BALLS_PER_OVER:
            raise MalformedRow(lineno, f"ball {ball} outside 1..{BALLS_PER_OVER}")
        if runs < 0:
            raise MalformedRow(lineno, f"negative runs {runs}")
        event = BallEvent(match_id, over, ball, runs, wicket)
        seq = matches[match_id]
        if seq and seq[-1].key >= event.key:
            raise OrderViolation(match_id, f"delivery {over}.{ball} does not follow "
                                 f"{seq[-1].over}.{seq[-1].ball}", line=lineno)
        seq.append(event)
    return {mid: matches[mid] for mid in sorted(matches)}


def summarize_innings(events: Sequence[BallEvent]) -> InningsSummary | None:
    """Reduce one innings to its 50 end-of-over checkpoints.

    Returns None (rejected) unless the innings lasted all 50 overs: fewer
    than 300 legal deliveries, or a tenth wicket before the final over is
    complete, rejects it.
    """
    if not events:
        return None
    match_id = events[0].match_id
    for prev, cur in zip(events, events[1:]):
        if cur.match_id != match_id:
            raise ValueError("events from more than one match")
        if cur.key <= prev.key:
            raise OrderViolation(match_id, f"delivery {cur.over}.{cur.ball} does not follow "
                                 f"{prev.over}.{prev.ball}")
    if len(events) < OVERS * BALLS_PER_OVER:
        logger.debug("rejecting %s: %d legal deliveries", match_id, len(events))
        return None

    over_runs = [0] * OVERS
    wickets_after = [0] * OVERS
    wickets = 0
    for i, ev in enumerate(events):
        over_runs[ev.over - 1] += ev.runs
        if ev.wicket_fell:
            wickets += 1
            if wickets >= WICKETS and i != len(events) - 1:
                logger.debug("rejecting %s: all out at over %d.%d", match_id, ev.over, ev.ball)
                return None
        wickets_after[ev.over - 1] = wickets

    total = sum(over_runs)
    checkpoints = []
    so_far = 0
    for k in range(OVERS):
        so_far += over_runs[k]
        checkpoints.append(Checkpoint(OVERS - 1 - k, wickets_after[k], total - so_far))
    return InningsSummary(match_id, total, tuple(checkpoints))


def aggregate(innings: Iterable[InningsSummary]) -> CellGrid:
    """Average runs-to-come per (u, w) cell across accepted innings.

    Cell (50, 0) holds every innings total, so its mean is the G(50)
    estimate. Sums use ``math.fsum`` over innings sorted by match_id, which
    makes the result independent of input order.
    """
    ordered = sorted(innings, key=lambda s: s.match_id)
    if not ordered:
        raise EmptyCorpus("no innings passed the 50-over filter; nothing to aggregate")
    ids = [s.match_id for s in ordered]
    if len(set(ids)) != len(ids):
        raise DataRejection("duplicate match_id in corpus")

    values: dict[tuple[int, int], list[int]] = defaultdict(list)
    for s in ordered:
        values[(OVERS, 0)].append(s.total_runs)
        for cp in s.checkpoints:
            if cp.u >= 1 and cp.w_at_u < WICKETS:
                values[(cp.u, cp.w_at_u)].append(cp.runs_to_come)

    cells = {key: (len(v), math.fsum(v) / len(v)) for key, v in values.items()}
    return CellGrid.from_cells(cells, n_matches=len(ordered))


@dataclass
class IngestResult:
    grid: CellGrid
    innings: list[InningsSummary]
    rejected: list[str]


def ingest(source) -> IngestResult:
    """parse_corpus -> summarize_innings -> aggregate in one call."""
    matches = parse_corpus(source)
    accepted, rejected = [], []
    for mid, events in matches.items():
        summary = summarize_innings(events)
        if summary is None:
            rejected.append(mid)
        else:
            accepted.append(summary)
    if rejected:
        logger.info("rejected %d of %d innings (not a full 50 overs)", len(rejected), len(matches))
    if not accepted:
        raise EmptyCorpus(
            f"no innings lasted the full 50 overs ({len(rejected)} rejected by the 50-over filter)")
    return IngestResult(aggregate(accepted), accepted, rejected)


def write_grid(grid: CellGrid, fp: IO[str]) -> None:
    """Write ``u,w,n,rbar`` rows, u descending then w ascending; rbar blank if missing."""
    fp.write(",".join(GRID_HEADER) + "\n")
    for u in range(OVERS, 0, -1):
        for w in range(WICKETS):
            n = int(grid.n[u - 1, w])
            value = "" if n == 0 else repr(float(grid.rbar[u - 1, w]))
            fp.write(f"{u},{w},{n},{value}\n")


def read_grid(fp: IO[str]) -> CellGrid:
    reader = csv.reader(fp)
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != GRID_HEADER:
        raise MalformedRow(1, f"expected header {','.join(GRID_HEADER)}")
    cells = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise MalformedRow(lineno, f"expected 4 fields, got {len(row)}")
        try:
            u, w, n = int(row[0]), int(row[1]), int(row[2])
            value = float(row[3]) if row[3].strip() else math.nan
        except ValueError as exc:
            raise MalformedRow(lineno, str(exc)) from None
        if not (1 <= u <= OVERS and 0 <= w < WICKETS):
            raise MalformedRow(lineno, f"cell ({u},{w}) outside the grid")
        if (n == 0) != math.isnan(value):
            raise MalformedRow(lineno, "rbar must be blank exactly when n is 0")
        if (u, w) in cells:
            raise MalformedRow(lineno, f"duplicate cell ({u},{w})")
        cells[(u, w)] = (n, value)
    if len(cells) != OVERS * WICKETS:
        raise MalformedRow(0, f"grid has {len(cells)} cells, expected {OVERS * WICKETS}")
    if cells[(OVERS, 0)][0] == 0:
        raise EmptyCorpus("grid cell (50,0) is empty")
    return CellGrid.from_cells(cells)
