"""Synthetic ball-by-ball corpora drawn around a known parameter vector.

Each match first draws its wicket path (at most one wicket per over, with
a per-over probability rising linearly through the innings). Cumulative
runs then follow C_k = m(50, 0) - m(50 - k, w_k), so the expected runs to
come from any checkpoint equal m(u, w). Zero-mean Gaussian noise with
variance proportional to each over's expected runs is accumulated along
the innings; the cumulative score is rounded and never allowed to fall,
which truncates per-over runs at zero.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .corpus import BALLS_PER_OVER, CORPUS_HEADER, OVERS, Checkpoint, InningsSummary
from .model import Theta, check_mono_conditions

# Calibrated so 100 m(u, w)/m(50, 0) tracks the reference Bayesian table in tests/data
# (max abs deviation 0.006 percentage points); m(50, 0) is about 260 runs.
DEFAULT_THETA_STAR = Theta(
    a=[341.757, 306.021, 264.378, 238.464, 213.548, 190.618, 179.254, 159.211, 125.196, 95.775],
    b=[0.028607, 0.031752, 0.036356, 0.038511, 0.042564, 0.04596, 0.046447, 0.050463, 0.058206, 0.067716],
    sigma2=900.0,
)


@dataclass(frozen=True)
class SynthConfig:
    theta_star: Theta = field(default=DEFAULT_THETA_STAR)
    n_matches: int = 500
    seed: int = 0
    hazard_base: float = 0.06
    hazard_slope: float = 0.16
    noise_scale: float = 2.0
    max_wickets: int = 9  # below 10 so every innings lasts 50 overs

    def __post_init__(self):
        if self.n_matches < 0:
            raise ValueError("n_matches must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if not self.theta_star.is_valid() or not check_mono_conditions(self.theta_star).ok:
            raise ValueError("theta_star violates the ordering constraints")
        lo, hi = self.hazard_base, self.hazard_base + self.hazard_slope
        if not (0 <= lo <= 1 and 0 <= hi <= 1):
            raise ValueError("wicket hazard must stay within [0, 1]")
        if self.noise_scale < 0:
            raise ValueError("noise_scale must be non-negative")
        if not 0 <= self.max_wickets <= 10:
            raise ValueError("max_wickets must be in 0..10")

    def hazard(self) -> np.ndarray:
        """Per-over wicket probability for overs 1..50."""
        return self.hazard_base + self.hazard_slope * np.arange(OVERS) / (OVERS - 1)


@dataclass(frozen=True)
class SimulatedMatch:
    match_id: str
    over_runs: np.ndarray  # (50,) int
    wicket_over: np.ndarray  # (50,) bool, a wicket on the over's last ball

    def summary(self) -> InningsSummary:
        wickets = np.cumsum(self.wicket_over)
        total = int(self.over_runs.sum())
        so_far = np.cumsum(self.over_runs)
        cps = tuple(Checkpoint(OVERS - 1 - k, int(wickets[k]), total - int(so_far[k])) for k in range(OVERS))
        return InningsSummary(self.match_id, total, cps)


def _match_ids(n: int) -> list[str]:
    width = max(5, len(str(n)))
    return [f"syn{i:0{width}d}" for i in range(n)]


def _simulate_one(match_id: str, cfg: SynthConfig, rng: np.random.Generator) -> SimulatedMatch:
    a, b = cfg.theta_star.a, cfg.theta_star.b
    hazard = np.clip(cfg.hazard(), 0.0, 1.0)
    fell = np.zeros(OVERS, dtype=bool)
    w = 0
    for k in range(OVERS):
        if rng.random() < hazard[k] and w < cfg.max_wickets:
            fell[k] = True
            w += 1
    wk = np.minimum(np.cumsum(fell), 9)
    u_after = OVERS - 1 - np.arange(OVERS)
    m50 = a[0] * -np.expm1(-b[0] * OVERS)
    # expected cumulative runs after each over; m(0, w) = 0 closes the innings at m50
    cum_mean = m50 - a[wk] * -np.expm1(-b[wk] * u_after)
    incr = np.diff(cum_mean, prepend=0.0)
    noise = np.cumsum(cfg.noise_scale * np.sqrt(incr) * rng.standard_normal(OVERS))
    cum = np.maximum.accumulate(np.maximum(np.rint(cum_mean + noise), 0.0)).astype(np.int64)
    return SimulatedMatch(match_id, np.diff(cum, prepend=0), fell)


def simulate_matches(cfg: SynthConfig) -> list[SimulatedMatch]:
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.n_matches)
    return [_simulate_one(mid, cfg, np.random.Generator(np.random.Philox(ss)))
            for mid, ss in zip(_match_ids(cfg.n_matches), streams)]


def simulate(cfg: SynthConfig) -> list[InningsSummary]:
    """Innings summaries of the corpus ``generate`` would write."""
    return [m.summary() for m in simulate_matches(cfg)]


def write_corpus(cfg: SynthConfig, fp: IO[str]) -> None:
    fp.write(",".join(CORPUS_HEADER) + "\n")
    for m in simulate_matches(cfg):
        lines = []
        for k in range(OVERS):
            r = int(m.over_runs[k])
            per_ball = r // BALLS_PER_OVER
            for ball in range(1, BALLS_PER_OVER + 1):
                runs = per_ball if ball < BALLS_PER_OVER else r - per_ball * (BALLS_PER_OVER - 1)
                wicket = "true" if (ball == BALLS_PER_OVER and m.wicket_over[k]) else "false"
                lines.append(f"{m.match_id},{k + 1},{ball},{runs},{wicket}\n")
        fp.write("".join(lines))


def generate(cfg: SynthConfig) -> str:
    """Corpus CSV text; identical for identical configs."""
    buf = io.StringIO()
    write_corpus(cfg, buf)
    return buf.getvalue()
