"""Command-line front end: ingest, fit, table, target, evaluate, synth."""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import logging
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Sequence

from . import DL_TABLE_VERSION, __version__
from .corpus import ingest, read_grid, write_grid
from .dls import MatchState, TargetInput, par_score, resources, target
from .errors import BayesDLError, DataRejection, DomainError, NumericalFailure
from .evaluation import (
    DEFAULT_SPLITS,
    posterior_ratio_density,
    predictions_at_split,
    ratio_curve,
    write_predictions,
    write_ratio_samples,
    write_rss_curve,
)
from .model import Parametrization, PriorSpec, read_theta, write_theta
from .nonparam import empirical_table
from .sampler import McmcConfig, posterior_median_theta, read_posterior, run_chain, write_posterior
from .synth import SynthConfig, write_corpus
from .tables import (
    ResourceTable,
    TableSource,
    bayes_table,
    dl_reference,
    dl_reference_text,
    empirical_resource_table,
    read_table,
    table_to_text,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_G50 = 245.0

log = logging.getLogger("bayesdl")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fp:
            fp.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _render(writer: Callable, *args) -> str:
    buf = io.StringIO()
    writer(*args, buf)
    return buf.getvalue()


def parse_overrides(items: Sequence[str] | None) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--config expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def write_manifest(out_dir: Path, command: str, inputs: dict, overrides: dict, seed=None,
                   extra: dict | None = None) -> None:
    manifest = {
        "command": command,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "output_dir": str(out_dir),
        "config_overrides": overrides,
        "version": __version__,
        "dl_table_version": DL_TABLE_VERSION,
        "seed": seed,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    atomic_write(out_dir / f"manifest_{command}.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataRejection(f"cannot read {path}: {exc.strerror}") from None


# --- subcommands -----------------------------------------------------------

def cmd_ingest(args) -> int:
    result = ingest(_read_text(args.corpus))
    out = Path(args.out_dir)
    atomic_write(out / "grid.csv", _render(write_grid, result.grid))
    write_manifest(out, "ingest", {"corpus": args.corpus}, {},
                   extra={"accepted": len(result.innings), "rejected": len(result.rejected)})
    print(f"accepted {len(result.innings)} innings, rejected {len(result.rejected)}; "
          f"{int(result.grid.missing.sum())} missing cells")
    return EXIT_OK


_PRIOR_KEYS = {"A0", "B0", "C0", "gamma_a", "gamma_b"}


def _fit_configs(args, overrides: dict[str, str]) -> tuple[PriorSpec, McmcConfig]:
    mcmc = McmcConfig(burn_in=args.burn_in, keep=args.keep, thin=args.thin, seed=args.seed,
                      n_chains=args.chains)
    prior_over = {k: float(v) for k, v in overrides.items() if k in _PRIOR_KEYS}
    mcmc_over = {k: v for k, v in overrides.items() if k not in _PRIOR_KEYS}
    try:
        mcmc = mcmc.with_overrides(mcmc_over)
        spec = PriorSpec(parametrization=Parametrization(args.prior), **prior_over)
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc).strip("'\"")) from None
    return spec, mcmc


def cmd_fit(args) -> int:
    overrides = parse_overrides(args.config)
    spec, mcmc = _fit_configs(args, overrides)
    grid = read_grid(io.StringIO(_read_text(args.grid)))
    samples = run_chain(grid, spec, mcmc)
    median = posterior_median_theta(samples)
    table = bayes_table(median.theta)

    out = Path(args.out_dir)
    sidecar = mcmc.to_text() + "".join(
        f"{f.name}={getattr(spec, f.name).value if f.name == 'parametrization' else getattr(spec, f.name)}\n"
        for f in dataclasses.fields(spec))
    atomic_write(out / "posterior.csv", _render(write_posterior, samples))
    atomic_write(out / "posterior_config.txt", sidecar)
    atomic_write(out / "theta_hat.csv", _render(write_theta, median.theta))
    atomic_write(out / "table_bayes.csv", table_to_text(table))
    write_manifest(out, "fit", {"grid": args.grid}, overrides, seed=mcmc.seed,
                   extra={"burn_in": mcmc.burn_in, "keep": mcmc.keep, "thin": mcmc.thin,
                          "n_chains": mcmc.n_chains, "prior": spec.parametrization.value,
                          "median_repaired": median.repaired})
    verdict = "PASS" if not table.mono_report else f"FAIL ({len(table.mono_report)} violations)"
    print(f"fit: {len(samples)} draws kept; strict monotonicity {verdict}")
    return EXIT_OK


def _load_table(spec: str) -> ResourceTable:
    if spec.lower() == TableSource.DL2013.value:
        return dl_reference()
    return read_table(io.StringIO(_read_text(spec)), TableSource.BAYES)


def cmd_table(args) -> int:
    source = TableSource(args.source)
    if source is TableSource.DL2013:
        table, text = dl_reference(), dl_reference_text()
    elif source is TableSource.BAYES:
        if not args.theta:
            raise UsageError("--source bayes needs --theta")
        table = bayes_table(read_theta(io.StringIO(_read_text(args.theta))))
        text = table_to_text(table)
    else:
        if not args.grid:
            raise UsageError("--source empirical needs --grid")
        table = empirical_resource_table(empirical_table(read_grid(io.StringIO(_read_text(args.grid)))))
        text = table_to_text(table)

    out = Path(args.out_dir)
    atomic_write(out / f"table_{source.value}.csv", text)
    report = "".join(v.describe() + "\n" for v in table.mono_report)
    atomic_write(out / f"mono_{source.value}.txt", report)
    write_manifest(out, "table", {k: v for k, v in (("theta", args.theta), ("grid", args.grid)) if v},
                   {}, extra={"source": source.value})
    n_eq = sum(v.kind == "equal" for v in table.mono_report)
    print(f"table {source.value}: {len(table.mono_report)} strict-monotonicity violations "
          f"({n_eq} ties, {len(table.mono_report) - n_eq} increases)")
    return EXIT_OK


def cmd_target(args) -> int:
    try:
        if args.table:
            if args.p1 is not None or args.p2 is not None:
                raise UsageError("give either --p1/--p2 or --table with --state1/--state2")
            if not (args.state1 and args.state2):
                raise UsageError("--table needs --state1 and --state2")
            table = _load_table(args.table)
            p1 = resources(table, MatchState.parse(args.state1))
            p2 = resources(table, MatchState.parse(args.state2))
        else:
            if args.p1 is None or args.p2 is None:
                raise UsageError("--p1 and --p2 are required without --table")
            p1, p2 = args.p1, args.p2
        inp = TargetInput(args.score, p1, p2, args.g50)
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    if args.verbose:
        print(f"P1={p1:.2f} P2={p2:.2f} par={float(par_score(inp)):.4f}")
    print(f"Target: {target(inp)}")
    return EXIT_OK


def _parse_splits(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        lo, sep, hi = part.partition("-")
        if not sep:
            lo, sep, hi = part.partition("..")
        try:
            out.extend(range(int(lo), int(hi) + 1) if sep else [int(lo)])
        except ValueError:
            raise UsageError(f"bad --splits value {text!r}") from None
    if any(not 1 <= u <= 49 for u in out):
        raise UsageError("splits must lie in 1..49")
    return out


def cmd_evaluate(args) -> int:
    corpus = ingest(_read_text(args.corpus)).innings
    dl = _load_table(args.table_dl)
    out = Path(args.out_dir)
    inputs = {"corpus": args.corpus, "table_dl": args.table_dl}
    if args.posterior:
        splits = _parse_splits(args.splits) if args.splits else list(DEFAULT_SPLITS)
        samples = read_posterior(io.StringIO(_read_text(args.posterior)))
        ratios = posterior_ratio_density(samples, corpus, dl, splits)
        atomic_write(out / "ratio_samples.csv", _render(write_ratio_samples, ratios))
        inputs["posterior"] = args.posterior
        print(f"ratio samples: {len(samples)} draws at splits {splits}")
    else:
        if not args.table_bayes:
            raise UsageError("evaluate needs --table-bayes or --posterior")
        splits = _parse_splits(args.splits) if args.splits else list(range(1, 31))
        bayes = _load_table(args.table_bayes)
        curve = ratio_curve(corpus, bayes, dl, splits)
        for u in splits:
            atomic_write(out / f"predictions_u{u}.csv",
                         _render(write_predictions, predictions_at_split(corpus, bayes, u)))
        atomic_write(out / "rss_curve.csv", _render(write_rss_curve, curve))
        inputs["table_bayes"] = args.table_bayes
        below = sum(1 for p in curve.points if p.ratio_sqrt < 1.0)
        print(f"sqrt-RSS ratio < 1 at {below} of {len(curve.points)} splits")
    write_manifest(out, "evaluate", inputs, {}, extra={"splits": splits})
    return EXIT_OK


def cmd_synth(args) -> int:
    overrides = parse_overrides(args.config)
    kwargs = dict(n_matches=args.n_matches, seed=args.seed)
    if args.theta:
        kwargs["theta_star"] = read_theta(io.StringIO(_read_text(args.theta)))
    try:
        for key, raw in overrides.items():
            if key not in ("hazard_base", "hazard_slope", "noise_scale", "max_wickets"):
                raise UsageError(f"unknown synth setting {key!r}")
            kwargs[key] = int(raw) if key == "max_wickets" else float(raw)
        cfg = SynthConfig(**kwargs)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out_dir)
    atomic_write(out / "corpus.csv", _render(write_corpus, cfg))
    write_manifest(out, "synth", {"theta": args.theta} if args.theta else {}, overrides, seed=cfg.seed,
                   extra={"n_matches": cfg.n_matches})
    print(f"wrote {cfg.n_matches} synthetic innings")
    return EXIT_OK


# --- parser ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bayesdl", description="Bayesian bi-monotone resource tables for 50-over cricket.")
    p.add_argument("--version", action="version",
                   version=f"bayesdl {__version__} (embedded table: {DL_TABLE_VERSION})")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def out_dir(sp):
        sp.add_argument("-o", "--out-dir", default=".", help="directory for outputs (default: .)")

    sp = sub.add_parser("ingest", help="ball-by-ball corpus -> cell grid")
    sp.add_argument("corpus")
    out_dir(sp)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("fit", help="run the MCMC sampler on a grid")
    sp.add_argument("grid")
    sp.add_argument("--burn-in", type=int, default=20000)
    sp.add_argument("--keep", type=int, default=30000)
    sp.add_argument("--thin", type=int, default=1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--chains", type=int, default=1)
    sp.add_argument("--prior", choices=[m.value for m in Parametrization], default="ab")
    sp.add_argument("--config", action="append", metavar="KEY=VALUE",
                    help="override an MCMC or prior setting (repeatable)")
    out_dir(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("table", help="write a resource table and its monotonicity report")
    sp.add_argument("--source", choices=[s.value for s in TableSource], required=True)
    sp.add_argument("--theta", help="theta_hat.csv for --source bayes")
    sp.add_argument("--grid", help="grid.csv for --source empirical")
    out_dir(sp)
    sp.set_defaults(func=cmd_table)

    sp = sub.add_parser("target", help="revised target for team 2")
    sp.add_argument("--score", type=int, required=True, help="team 1 score S")
    sp.add_argument("--p1", type=float)
    sp.add_argument("--p2", type=float)
    sp.add_argument("--g50", type=float, default=DEFAULT_G50)
    sp.add_argument("--table", help="'dl2013' or a table CSV")
    sp.add_argument("--state1", help="team 1 starting state u,w")
    sp.add_argument("--state2", help="team 2 starting state u,w")
    sp.set_defaults(func=cmd_target)

    sp = sub.add_parser("evaluate", help="RSS comparison against the reference table")
    sp.add_argument("corpus")
    sp.add_argument("--table-bayes")
    sp.add_argument("--table-dl", default="dl2013")
    sp.add_argument("--posterior")
    sp.add_argument("--splits", help="e.g. 1-30 or 20,25,30")
    out_dir(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("synth", help="generate a synthetic corpus")
    sp.add_argument("--n-matches", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--theta", help="theta CSV to simulate from (default: built-in)")
    sp.add_argument("--config", action="append", metavar="KEY=VALUE",
                    help="hazard_base, hazard_slope, noise_scale or max_wickets")
    out_dir(sp)
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"bayesdl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataRejection as exc:
        print(f"bayesdl {args.command}: data rejected: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailure as exc:
        print(f"bayesdl {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BayesDLError as exc:
        print(f"bayesdl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
