"""Split-point score prediction and RSS comparisons between resource tables."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import IO, Iterable, NamedTuple, Sequence

import numpy as np

from .corpus import OVERS, WICKETS, InningsSummary
from .dls import MatchState, resources
from .errors import DomainError, EmptyCorpus, EmptySamples
from .sampler import PosteriorSamples
from .tables import ResourceTable

DEFAULT_SPLITS = (20, 25, 30, 35, 40, 45)


class DegeneratePrediction(UserWarning):
    """The table gives P >= 100 at a split with overs already bowled."""


@dataclass(frozen=True)
class PredictionRecord:
    match_id: str
    u: int
    w: int
    runs_so_far: int
    actual_final: int
    predicted_final: float
    degenerate: bool = False


class RssPoint(NamedTuple):
    u: int
    rss_bayes: float
    rss_dl: float
    ratio_sqrt: float  # NaN when rss_dl == 0


@dataclass(frozen=True)
class RssCurve:
    points: tuple[RssPoint, ...]

    @property
    def u(self) -> np.ndarray:
        return np.array([p.u for p in self.points])

    @property
    def ratio(self) -> np.ndarray:
        return np.array([p.ratio_sqrt for p in self.points])

    def fraction_below_one(self) -> float:
        r = self.ratio
        return float(np.mean(r[~np.isnan(r)] < 1.0)) if len(r) else math.nan


class RssResult(NamedTuple):
    rss: float
    count_by_w: tuple[int, ...]
    rss_by_w: tuple[float, ...]


def _predict(p: float, runs_so_far: int) -> tuple[float, bool]:
    if p >= 100.0:
        return float(runs_so_far), True
    return runs_so_far / (1.0 - p / 100.0), False


def predict_final(table: ResourceTable, runs_so_far: int, state: MatchState) -> float:
    """Project the final score: runs_so_far / (1 - P(u, w)/100).

    With P >= 100 the projection is undefined; ``runs_so_far`` is returned
    and a ``DegeneratePrediction`` warning raised.
    """
    value, degenerate = _predict(resources(table, state), runs_so_far)
    if degenerate:
        warnings.warn(f"P >= 100 at {state}; returning runs so far", DegeneratePrediction, stacklevel=2)
    return value


def _check_split(u: int) -> None:
    if not 1 <= u < OVERS:
        raise DomainError(f"split u must be in 1..{OVERS - 1}, got {u}")


def predictions_at_split(corpus: Iterable[InningsSummary], table: ResourceTable, u: int) -> list[PredictionRecord]:
    """Predictions for every innings not yet all out at ``u`` overs remaining, by match_id."""
    _check_split(u)
    out = []
    for inn in sorted(corpus, key=lambda s: s.match_id):
        cp = inn.at(u)
        if cp.w_at_u >= WICKETS:
            continue
        so_far = inn.total_runs - cp.runs_to_come
        pred, degenerate = _predict(resources(table, MatchState(u, cp.w_at_u)), so_far)
        out.append(PredictionRecord(inn.match_id, u, cp.w_at_u, so_far, inn.total_runs, pred, degenerate))
    if any(r.degenerate for r in out):
        warnings.warn(f"degenerate predictions at u={u}", DegeneratePrediction, stacklevel=2)
    return out


def rss_at_split(corpus: Sequence[InningsSummary], table: ResourceTable, u: int) -> RssResult:
    """Sum over w and innings of (actual - predicted)^2 at ``u`` overs remaining."""
    if not corpus:
        raise EmptyCorpus("no innings to evaluate")
    records = predictions_at_split(corpus, table, u)
    terms: list[list[float]] = [[] for _ in range(WICKETS)]
    for r in records:
        terms[r.w].append((r.actual_final - r.predicted_final) ** 2)
    by_w = tuple(math.fsum(t) for t in terms)
    return RssResult(math.fsum(by_w), tuple(len(t) for t in terms), by_w)


def _ratio(num: float, den: float) -> float:
    return math.sqrt(num) / math.sqrt(den) if den > 0 else math.nan


def ratio_curve(corpus: Sequence[InningsSummary], bayes: ResourceTable, dl: ResourceTable,
                u_range: Iterable[int] = range(1, 31)) -> RssCurve:
    """sqrt(RSS_bayes) / sqrt(RSS_dl) per split; NaN where RSS_dl is zero."""
    if not corpus:
        raise EmptyCorpus("no innings to evaluate")
    points = []
    for u in u_range:
        rb = rss_at_split(corpus, bayes, u).rss
        rd = rss_at_split(corpus, dl, u).rss
        points.append(RssPoint(u, rb, rd, _ratio(rb, rd)))
    return RssCurve(tuple(points))


def _split_arrays(corpus: Sequence[InningsSummary], u: int):
    ws, so_far, actual = [], [], []
    for inn in sorted(corpus, key=lambda s: s.match_id):
        cp = inn.at(u)
        if cp.w_at_u < WICKETS:
            ws.append(cp.w_at_u)
            so_far.append(inn.total_runs - cp.runs_to_come)
            actual.append(inn.total_runs)
    return np.array(ws, dtype=np.int64), np.array(so_far, float), np.array(actual, float)


def posterior_ratio_density(samples: PosteriorSamples, corpus: Sequence[InningsSummary],
                            dl: ResourceTable, splits: Iterable[int] = DEFAULT_SPLITS,
                            chunk: int = 2048) -> dict[int, np.ndarray]:
    """Per-draw sqrt-RSS ratio against ``dl`` at each split.

    Each draw's table is built from the closed form exactly as
    ``bayes_table`` does, evaluated only at the cells the split needs.
    """
    if len(samples) == 0:
        raise EmptySamples("no posterior draws")
    if not corpus:
        raise EmptyCorpus("no innings to evaluate")
    a, b = samples.a, samples.b
    m50 = a[:, 0] * -np.expm1(-b[:, 0] * float(OVERS))
    out = {}
    for u in splits:
        _check_split(u)
        ws, so_far, actual = _split_arrays(corpus, u)
        rss_dl = rss_at_split(corpus, dl, u).rss
        ratios = np.empty(len(samples))
        for start in range(0, len(samples), chunk):
            sl = slice(start, start + chunk)
            p = 100.0 * (a[sl] * -np.expm1(-b[sl] * float(u))) / m50[sl, None]  # (draws, w)
            pw = p[:, ws]
            spent = pw >= 100.0
            if spent.any():
                warnings.warn(f"degenerate predictions at u={u}", DegeneratePrediction, stacklevel=2)
            pred = np.where(spent, so_far, so_far / np.where(spent, 1.0, 1.0 - pw / 100.0))
            rss = np.sum((actual - pred) ** 2, axis=1)
            ratios[sl] = np.sqrt(rss) / math.sqrt(rss_dl) if rss_dl > 0 else np.nan
        out[u] = ratios
    return out


def write_predictions(records: Iterable[PredictionRecord], fp: IO[str]) -> None:
    fp.write("match_id,w,runs_so_far,actual,predicted\n")
    for r in records:
        fp.write(f"{r.match_id},{r.w},{r.runs_so_far},{r.actual_final},{r.predicted_final!r}\n")


def write_rss_curve(curve: RssCurve, fp: IO[str]) -> None:
    fp.write("u,rss_bayes,rss_dl,ratio\n")
    for p in curve.points:
        fp.write(f"{p.u},{p.rss_bayes!r},{p.rss_dl!r},{'nan' if math.isnan(p.ratio_sqrt) else repr(p.ratio_sqrt)}\n")


def write_ratio_samples(ratios: dict[int, np.ndarray], fp: IO[str]) -> None:
    fp.write("split_u,draw,ratio\n")
    for u in sorted(ratios):
        for i, v in enumerate(ratios[u]):
            fp.write(f"{u},{i},{'nan' if math.isnan(v) else repr(float(v))}\n")
