"""Posterior sampling: slice updates for (a_w, b_w), Gibbs for sigma2, imputation.

Each sweep updates a_0..a_9, then b_0..b_9 (c_0..c_9 under the AC prior),
each by univariate doubling/shrink slice sampling on its constrained
support, then draws sigma2 from its inverse-gamma full conditional.
MISSING cells are imputed from N(m(u, w), sigma2) once per sweep.

Two treatments of MISSING cells are available (``McmcConfig.augment_missing``):

* collapsed (default): the missing cells are integrated out of the
  parameter updates and imputed at the end of each sweep, so every stored
  (theta, imputations) pair is a joint posterior draw;
* augmented: imputation comes first and the imputed values enter the
  likelihood with weight 1, exactly like observed cells.

Both target the same posterior for theta. The augmented chain mixes slowly
when most cells are missing, because imputed values pin theta near its
previous value.

Random streams: chain ``i`` draws from ``Philox(SeedSequence(seed,
spawn_key=(i,)))``, the i-th child of ``SeedSequence(seed).spawn``.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import IO, NamedTuple

import numpy as np

from . import _kernel_py
from .corpus import OVERS, WICKETS, CellGrid
from .errors import EmptySamples, MalformedRow, SliceCollapse
from .model import (
    Parametrization,
    PriorSpec,
    Theta,
    check_mono_conditions,
    _filled_values,
    log_likelihood,
    mean_surface,
    sample_prior,
)

try:
    from ._kernel import run_sweeps as _compiled_run_sweeps
except ImportError:  # pragma: no cover - depends on the build
    _compiled_run_sweeps = None

logger = logging.getLogger(__name__)

_backend = "compiled" if _compiled_run_sweeps is not None else "python"
PARAM_NAMES = tuple(f"a{w}" for w in range(WICKETS)) + tuple(f"b{w}" for w in range(WICKETS))


def available_backends() -> list[str]:
    return (["compiled"] if _compiled_run_sweeps is not None else []) + ["python"]


def get_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select the sweep kernel: ``"compiled"`` (Cython) or ``"python"``."""
    global _backend
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available; have {available_backends()}")
    _backend = name


def _sweep_fn(backend: str | None):
    name = backend or _backend
    if name == "compiled":
        if _compiled_run_sweeps is None:
            raise ValueError("compiled kernel not built")
        return _compiled_run_sweeps
    if name == "python":
        return _kernel_py.run_sweeps
    raise ValueError(f"unknown backend {name!r}")


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 20000
    keep: int = 30000
    thin: int = 1
    seed: int = 0
    n_chains: int = 1
    slice_width_a: float = 10.0
    slice_width_b: float = 0.05
    slice_width_c: float = 0.5
    slice_max_doublings: int = 30
    augment_missing: bool = False

    def __post_init__(self):
        if self.burn_in < 0 or self.keep < 0:
            raise ValueError("burn_in and keep must be non-negative")
        if self.thin < 1 or self.n_chains < 1 or self.slice_max_doublings < 1:
            raise ValueError("thin, n_chains and slice_max_doublings must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")
        if min(self.slice_width_a, self.slice_width_b, self.slice_width_c) <= 0:
            raise ValueError("slice widths must be positive")

    @property
    def total_sweeps(self) -> int:
        return self.burn_in + self.keep * self.thin

    def to_text(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in asdict(self).items())

    def with_overrides(self, overrides: dict[str, str]) -> "McmcConfig":
        """Copy with ``key=value`` string overrides parsed to the field types."""
        kinds = {f.name: f.type for f in fields(self)}
        parsed = {}
        for key, raw in overrides.items():
            if key not in kinds:
                raise KeyError(f"unknown MCMC setting {key!r}")
            kind = kinds[key]
            if kind in ("bool", bool):
                parsed[key] = raw.strip().lower() in ("1", "true", "yes")
            elif kind in ("int", int):
                parsed[key] = int(raw)
            else:
                parsed[key] = float(raw)
        return McmcConfig(**{**asdict(self), **parsed})


def chain_rng(seed: int, chain: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(chain,))))


@dataclass
class PosteriorSamples:
    """Retained draws, stacked across chains in chain order."""

    a: np.ndarray
    b: np.ndarray
    sigma2: np.ndarray
    imputed: np.ndarray
    missing_cells: tuple[tuple[int, int], ...]
    chain: np.ndarray
    config: McmcConfig
    parametrization: Parametrization = Parametrization.AB
    evaluations: dict[str, int] = field(default_factory=dict)
    backend: str = ""

    def __len__(self):
        return len(self.sigma2)

    @property
    def draws(self) -> list[Theta]:
        return [self.theta(i) for i in range(len(self))]

    def theta(self, i: int) -> Theta:
        return Theta(self.a[i], self.b[i], self.sigma2[i])

    def imputed_map(self, i: int) -> dict[tuple[int, int], float]:
        return {cell: float(v) for cell, v in zip(self.missing_cells, self.imputed[i])}

    def iterations(self) -> np.ndarray:
        """Index of each draw within its own chain."""
        out = np.empty(len(self), dtype=np.int64)
        for c in np.unique(self.chain):
            sel = self.chain == c
            out[sel] = np.arange(sel.sum())
        return out


# --- single-step operations ------------------------------------------------

def _second_coordinate(theta: Theta, spec: PriorSpec) -> np.ndarray:
    return theta.b if spec.parametrization is Parametrization.AB else theta.c


def _kernel_arrays(grid: CellGrid, imputed, include_missing: bool):
    """Values and weights as ``[w][u - 1]`` nested lists."""
    values = np.where(grid.missing, 0.0, grid.rbar)
    if imputed is not None:
        if isinstance(imputed, dict):
            for (u, w), v in imputed.items():
                values[u - 1, w] = v
        else:
            values = np.where(grid.missing, np.asarray(imputed, dtype=float), values)
    weights = np.where(grid.missing, 1.0 if include_missing else 0.0, grid.n.astype(float))
    return values.T.tolist(), weights.T.tolist()


def _require_imputations(grid: CellGrid, imputed, include_missing: bool):
    if include_missing:
        _filled_values(grid, imputed)  # raises MissingImputation when a cell is uncovered


def sigma2_posterior_params(theta: Theta, grid: CellGrid, imputed=None, gamma_a: float = 0.1,
                            gamma_b: float = 0.1, *, include_missing: bool = True) -> tuple[float, float]:
    """(shape, rate) of the precision's Gamma full conditional.

    The shape adds half the number of cells entering the likelihood (500
    when MISSING cells carry imputations); the rate adds half the
    n-weighted squared residual sum.
    """
    if include_missing:
        values = _filled_values(grid, imputed)
        weights = grid.weights.astype(float)
    else:
        values = np.where(grid.missing, 0.0, grid.rbar)
        weights = grid.n.astype(float)
    on = weights > 0
    resid = values[on] - mean_surface(theta)[on]
    return gamma_a + 0.5 * int(on.sum()), gamma_b + 0.5 * float(np.sum(weights[on] * resid * resid))


def gibbs_sigma2(theta: Theta, grid: CellGrid, imputed, rng: np.random.Generator,
                 gamma_a: float = 0.1, gamma_b: float = 0.1, *,
                 include_missing: bool = True) -> float:
    """Draw sigma2 from its inverse-gamma full conditional (floored at 1e-12)."""
    shape, rate = sigma2_posterior_params(theta, grid, imputed, gamma_a, gamma_b,
                                          include_missing=include_missing)
    tau = max(rng.standard_gamma(shape) / rate, 1e-300)
    return max(1.0 / tau, _kernel_py.SIGMA2_FLOOR)


def _parse_param(param, parametrization: Parametrization) -> int:
    if isinstance(param, tuple):
        kind, w = param
    else:
        kind, w = param[0], int(param[1:])
    if not 0 <= w < WICKETS:
        raise ValueError(f"wicket index {w} out of range")
    if kind == "a":
        return w
    expected = "b" if parametrization is Parametrization.AB else "c"
    if kind != expected:
        raise ValueError(f"{parametrization.value} prior updates {expected}_w, not {kind}_w")
    return WICKETS + w


def slice_update_param(param, theta: Theta, grid: CellGrid, imputed, spec: PriorSpec,
                       rng: np.random.Generator, *, width: float | None = None,
                       max_doublings: int = 30, include_missing: bool = True) -> Theta:
    """One slice-sampling update of a single coordinate.

    ``param`` names the coordinate: ``"a3"``, ``"b3"`` (AB prior) or ``"c3"``
    (AC prior), or a tuple like ``("a", 3)``. The update is confined to the
    interval that keeps every ordering constraint of theta strict.
    """
    k = _parse_param(param, spec.parametrization)
    ab = spec.parametrization is Parametrization.AB
    if width is None:
        width = 10.0 if k < WICKETS else (0.05 if ab else 0.5)
    _require_imputations(grid, imputed, include_missing)
    values, weights = _kernel_arrays(grid, imputed, include_missing)
    a = list(theta.a)
    s = list(_second_coordinate(theta, spec))
    try:
        _kernel_py.slice_coordinate(k, a, s, theta.sigma2, values, weights, ab, spec.A0,
                                    spec.B0 if ab else spec.C0, width, max_doublings, rng)
    except _kernel_py.SliceCollapseError as exc:
        raise SliceCollapse(str(exc)) from None
    return Theta(a, s, theta.sigma2) if ab else Theta.from_ac(a, s, theta.sigma2)


def coordinate_support(param, theta: Theta, spec: PriorSpec) -> tuple[float, float]:
    k = _parse_param(param, spec.parametrization)
    ab = spec.parametrization is Parametrization.AB
    return _kernel_py.coordinate_bounds(k, list(theta.a), list(_second_coordinate(theta, spec)),
                                        ab, spec.A0, spec.B0 if ab else spec.C0)


def impute_missing(theta: Theta, grid: CellGrid, rng: np.random.Generator) -> dict[tuple[int, int], float]:
    """Posterior-predictive draw N(m(u, w), sigma2) for every MISSING cell.

    Cells are visited u descending, then w ascending.
    """
    cells = grid.missing_cells()
    values = [[0.0] * OVERS for _ in range(WICKETS)]
    _kernel_py.impute(list(theta.a), list(theta.b), theta.sigma2, values,
                      [w for _, w in cells], [u for u, _ in cells], True, rng)
    return {(u, w): values[w][u - 1] for u, w in cells}


# --- chains ----------------------------------------------------------------

def initial_theta(grid: CellGrid, spec: PriorSpec, rng: np.random.Generator) -> Theta:
    """Prior draw, redrawn (up to 100 times) if the observed-cell likelihood is not finite."""
    for _ in range(100):
        theta = sample_prior(spec, rng)
        if math.isfinite(log_likelihood(theta, grid, include_missing=False)):
            return theta
    raise SliceCollapse("could not find an initial state with finite likelihood")


def _run_one_chain(chain: int, grid: CellGrid, spec: PriorSpec, config: McmcConfig,
                   backend: str | None, init: Theta | None):
    rng = chain_rng(config.seed, chain)
    theta = initial_theta(grid, spec, rng) if init is None else init
    ab = spec.parametrization is Parametrization.AB
    cells = grid.missing_cells()
    a = np.array(theta.a, dtype=np.float64)
    s = np.array(_second_coordinate(theta, spec), dtype=np.float64)
    sigma2 = np.array([theta.sigma2])
    values = np.ascontiguousarray(np.where(grid.missing, mean_surface(theta), grid.rbar).T)
    weights = np.ascontiguousarray(
        np.where(grid.missing, 1.0 if config.augment_missing else 0.0, grid.n.astype(float)).T)
    miss_w = np.array([w for _, w in cells], dtype=np.int_)
    miss_u = np.array([u for u, _ in cells], dtype=np.int_)
    out_a = np.zeros((config.keep, WICKETS))
    out_b = np.zeros((config.keep, WICKETS))
    out_s2 = np.zeros(config.keep)
    out_imp = np.zeros((config.keep, len(cells)))
    evals = np.zeros(2 * WICKETS, dtype=np.int_)
    run = _sweep_fn(backend)
    try:
        stored = run(a, s, sigma2, values, weights, miss_w, miss_u, ab, spec.A0,
                     spec.B0 if ab else spec.C0, spec.gamma_a, spec.gamma_b,
                     config.slice_width_a, config.slice_width_b if ab else config.slice_width_c,
                     config.slice_max_doublings, config.burn_in, config.keep, config.thin,
                     config.augment_missing, out_a, out_b, out_s2, out_imp, evals, rng)
    except _kernel_py.SliceCollapseError as exc:
        raise SliceCollapse(f"chain {chain}: {exc}") from None
    assert stored == config.keep
    return out_a, out_b, out_s2, out_imp, evals


def run_chain(grid: CellGrid, spec: PriorSpec | None = None, config: McmcConfig | None = None,
              *, backend: str | None = None, init: Theta | None = None) -> PosteriorSamples:
    """Run ``config.n_chains`` chains and stack their retained draws.

    Output depends only on (grid, spec, config); chains run in parallel
    threads when the compiled kernel is in use.
    """
    spec = spec or PriorSpec()
    config = config or McmcConfig()
    name = backend or _backend
    jobs = range(config.n_chains)
    if config.n_chains > 1 and name == "compiled":
        with ThreadPoolExecutor(max_workers=config.n_chains) as pool:
            results = list(pool.map(lambda c: _run_one_chain(c, grid, spec, config, name, init), jobs))
    else:
        results = [_run_one_chain(c, grid, spec, config, name, init) for c in jobs]

    second = "b" if spec.parametrization is Parametrization.AB else "c"
    evals = np.sum([r[4] for r in results], axis=0)
    evaluations = {f"a{w}": int(evals[w]) for w in range(WICKETS)}
    evaluations.update({f"{second}{w}": int(evals[WICKETS + w]) for w in range(WICKETS)})
    return PosteriorSamples(
        a=np.concatenate([r[0] for r in results]),
        b=np.concatenate([r[1] for r in results]),
        sigma2=np.concatenate([r[2] for r in results]),
        imputed=np.concatenate([r[3] for r in results]),
        missing_cells=tuple(grid.missing_cells()),
        chain=np.repeat(np.arange(config.n_chains), config.keep),
        config=config,
        parametrization=spec.parametrization,
        evaluations=evaluations,
        backend=name,
    )


class MedianTheta(NamedTuple):
    theta: Theta
    repaired: bool


def repair_monotone(a, b, shrink: float = 1e-9) -> tuple[np.ndarray, np.ndarray, bool]:
    """Clamp a_{w+1} and b_{w+1} just inside the ordering constraints, sweeping w upward."""
    a = np.array(a, dtype=float)
    b = np.array(b, dtype=float)
    changed = False
    for w in range(WICKETS - 1):
        cap_a = a[w] * (1 - shrink)
        if not a[w + 1] < a[w]:
            a[w + 1] = min(a[w + 1], cap_a)
            changed = True
        cap_b = (a[w] * b[w] / a[w + 1]) * (1 - shrink)
        if not a[w + 1] * b[w + 1] < a[w] * b[w]:
            b[w + 1] = min(b[w + 1], cap_b)
            changed = True
    return a, b, changed


def posterior_median_theta(samples: PosteriorSamples) -> MedianTheta:
    """Coordinate-wise posterior medians, repaired if they break the ordering."""
    if len(samples) == 0:
        raise EmptySamples("no retained draws")
    a = np.median(samples.a, axis=0)
    b = np.median(samples.b, axis=0)
    a, b, repaired = repair_monotone(a, b)
    theta = Theta(a, b, float(np.median(samples.sigma2)))
    if repaired:
        logger.warning("coordinate-wise medians broke the ordering constraints; repaired")
    if not check_mono_conditions(theta).ok:  # pragma: no cover - repair guarantees this
        raise SliceCollapse("median estimate is not monotone after repair")
    return MedianTheta(theta, repaired)


# --- export ----------------------------------------------------------------

def _param_rows(samples: PosteriorSamples):
    names = list(PARAM_NAMES) + ["sigma2"] + [f"imp_{u}_{w}" for u, w in samples.missing_cells]
    block = np.column_stack([samples.a, samples.b, samples.sigma2[:, None], samples.imputed])
    return names, block


def write_posterior(samples: PosteriorSamples, fp: IO[str]) -> None:
    """Long-format CSV ``chain,iter,param,value``."""
    names, block = _param_rows(samples)
    fp.write("chain,iter,param,value\n")
    iters = samples.iterations()
    for i in range(len(samples)):
        prefix = f"{samples.chain[i]},{iters[i]},"
        fp.write("".join(f"{prefix}{name},{float(v)!r}\n" for name, v in zip(names, block[i])))


def read_posterior(fp: IO[str], config: McmcConfig | None = None) -> PosteriorSamples:
    reader = csv.reader(fp)
    header = next(reader, None)
    if header != ["chain", "iter", "param", "value"]:
        raise MalformedRow(1, "expected header chain,iter,param,value")
    rows: dict[tuple[int, int], dict[str, float]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            key = (int(row[0]), int(row[1]))
            rows.setdefault(key, {})[row[2]] = float(row[3])
        except (ValueError, IndexError) as exc:
            raise MalformedRow(lineno, str(exc)) from None
    keys = sorted(rows)
    if not keys:
        raise EmptySamples("posterior file holds no draws")
    first = rows[keys[0]]
    missing = tuple(sorted(((int(k.split("_")[1]), int(k.split("_")[2])) for k in first if k.startswith("imp_")),
                           key=lambda c: (-c[0], c[1])))
    try:
        a = np.array([[rows[k][f"a{w}"] for w in range(WICKETS)] for k in keys])
        b = np.array([[rows[k][f"b{w}"] for w in range(WICKETS)] for k in keys])
        s2 = np.array([rows[k]["sigma2"] for k in keys])
        imp = np.array([[rows[k][f"imp_{u}_{w}"] for u, w in missing] for k in keys]).reshape(len(keys), len(missing))
    except KeyError as exc:
        raise MalformedRow(0, f"draw missing parameter {exc}") from None
    chain = np.array([k[0] for k in keys])
    cfg = config or McmcConfig(burn_in=0, keep=max(1, int(np.bincount(chain).max())),
                               n_chains=len(np.unique(chain)))
    return PosteriorSamples(a, b, s2, imp, missing, chain, cfg)
