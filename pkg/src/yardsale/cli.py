"""Command line entry point: ``yardsale {simulate,fit,sweep,zipf}``.

Exit status is 0 on success, 1 for usage or configuration errors and 2 for
runtime or numerical failures.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    ConfigError,
    SweepOptions,
    read_sections,
    resolved_sections,
    sim_config_from_sections,
    sweep_options,
)
from .engine import InsufficientSaturation, run_ensemble, sweep_tc
from .io import read_wealths, write_manifest, write_record, write_table
from .stats import FITTERS, FitError, log_binned_histogram, tail_window, zipf_ranks

log = logging.getLogger("yardsale")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(p, suppress):
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="INI config file or run manifest")
    p.add_argument("--seed", type=int, default=d, help="master seed (overrides config)")
    p.add_argument("--out-dir", default=argparse.SUPPRESS if suppress else ".", help="output directory")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS if suppress else 1,
                   help="replicas run concurrently")
    p.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def _sim_overrides(p):
    p.add_argument("--model", help="pure_ys, pure_tf, mixed_agents, split_wealth or probabilistic_choice")
    p.add_argument("--n-agents", type=int)
    p.add_argument("--max-steps", type=float)
    p.add_argument("--ensemble-size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="yardsale", description="Asset-exchange economy simulator and tail-fit tools.")
    parser.add_argument("--version", action="version", version=__version__)
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("simulate", help="run an ensemble, write richest series and pooled wealths")
    _global_flags(sp, suppress=True)
    _sim_overrides(sp)

    fp = sub.add_parser("fit", help="fit a tail law to a wealth sample file")
    _global_flags(fp, suppress=True)
    fp.add_argument("samples")
    fp.add_argument("--form", choices=sorted(FITTERS), default="power_law")
    fp.add_argument("--compare", action="store_true", help="power law and lognormal on the same window")
    fp.add_argument("--x-min", type=float, help="lower window edge (default: 0.9 quantile)")
    fp.add_argument("--x-max", type=float, help="upper window edge (default: largest occupied bin)")
    fp.add_argument("--bins-per-decade", type=int, default=10)
    fp.add_argument("--min-count", type=int, default=1, help="ignore bins with fewer counts")
    fp.add_argument("--output", help="record file (default: <out-dir>/fit_report.json)")

    wp = sub.add_parser("sweep", help="saturation time against N and the fit t_c = a N^b")
    _global_flags(wp, suppress=True)
    _sim_overrides(wp)
    wp.add_argument("--n-list", type=int, nargs="+")
    wp.add_argument("--steps", nargs="+", metavar="N:STEPS", help="per-N step budgets")

    zp = sub.add_parser("zipf", help="rank table of a wealth sample or state file")
    _global_flags(zp, suppress=True)
    zp.add_argument("samples")
    zp.add_argument("--output", help="rank table (default: <out-dir>/zipf_ranks.tsv)")
    return parser


def _sections(args):
    if not args.config:
        return {}
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    return read_sections(path)


def _overrides(args):
    return {"model": args.model, "n_agents": args.n_agents, "max_steps": args.max_steps,
            "ensemble_size": args.ensemble_size, "seed": args.seed}


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args) -> int:
    cfg = sim_config_from_sections(_sections(args), _overrides(args))
    out = _out_dir(args)
    ens = run_ensemble(cfg, threads=args.threads)
    s = ens.series
    series_path = write_table(out / "richest_series.tsv", ["step", "mean_max_wealth", "stderr"],
                              [s.times, s.values, s.stderr])
    n = cfg.n_agents
    pooled_path = write_table(out / "pooled_wealths.tsv", ["replica", "agent", "wealth"],
                              [np.repeat(ens.indices, n), np.tile(np.arange(n), ens.indices.size), ens.pooled])
    paths = [series_path, pooled_path]
    write_manifest(out / "manifest.json", "simulate", resolved_sections(cfg), paths)
    share = ens.finals.max(axis=1) / cfg.total_money
    print(f"{cfg.model.name}: N={n} steps={cfg.max_steps} replicas={cfg.ensemble_size} "
          f"final richest share mean={share.mean():.6g}")
    for p in paths + [out / "manifest.json"]:
        print(p)
    return EXIT_OK


def _samples(path):
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"cannot read samples file: {p}")
    x = read_wealths(p)
    if x.size == 0:
        raise UsageError(f"samples file is empty: {p}")
    return x


def cmd_fit(args) -> int:
    x = _samples(args.samples)
    hist = log_binned_histogram(x, args.bins_per_decade)
    x_min = args.x_min if args.x_min is not None else tail_window(x)
    forms = ["power_law", "lognormal"] if args.compare else [args.form]
    results = [FITTERS[f](hist, x_min, args.x_max, args.min_count) for f in forms]
    print(f"# samples={x.size} zero_or_below_floor={hist.n_below} window=[{results[0].fit_range[0]:.6g}, "
          f"{results[0].fit_range[1]:.6g}] bins={results[0].n_bins}")
    print("form\tparameters\tchi2_per_dof\tr_squared")
    for r in results:
        params = " ".join(f"{k}={v:.6g}" for k, v in r.params.items())
        print(f"{r.form}\t{params}\t{r.chi2_per_dof:.6g}\t{r.r_squared:.6g}")
    out = Path(args.output) if args.output else _out_dir(args) / "fit_report.json"
    write_record(out, {
        "samples_file": str(args.samples),
        "n_samples": int(x.size),
        "n_below": hist.n_below,
        "bins_per_decade": args.bins_per_decade,
        "min_count": args.min_count,
        "fits": [r.as_record() for r in results],
    })
    return EXIT_OK


def _sweep_opts(args, sections) -> SweepOptions:
    opts = sweep_options(sections)
    if args.n_list:
        opts.n_list = list(args.n_list)
    for item in args.steps or []:
        try:
            n, steps = item.split(":")
            opts.max_steps[int(n)] = int(float(steps))
        except ValueError:
            raise UsageError(f"--steps expects N:STEPS pairs, got {item!r}") from None
    if len(set(opts.n_list)) < 3:
        raise UsageError(f"sweep needs at least 3 distinct N values (n_list), got {opts.n_list}")
    return opts


def cmd_sweep(args) -> int:
    sections = _sections(args)
    opts = _sweep_opts(args, sections)
    ov = _overrides(args)
    sim = sections.setdefault("simulation", {})
    if "n_agents" not in sim and ov["n_agents"] is None:
        # the template size only sets the mean wealth; any N will do
        sim["n_agents"] = opts.n_list[0]
    cfg = sim_config_from_sections(sections, ov)
    out = _out_dir(args)
    failure = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RuntimeWarning)
        try:
            res = sweep_tc(cfg, opts.n_list, opts.max_steps, opts.window, opts.tolerance, opts.noise_z,
                           threads=args.threads)
        except InsufficientSaturation as exc:
            res, failure = exc.result, exc
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    steps = [opts.max_steps.get(n, cfg.max_steps) for n in res.n_values]
    table = write_table(out / "tc_table.tsv", ["n_agents", "max_steps", "t_c", "saturated_value"],
                        [res.n_values, steps, res.t_c, res.saturated_values])
    for n, s in res.series.items():
        write_table(out / f"richest_series_N{n}.tsv", ["step", "mean_max_wealth", "stderr"],
                    [s.times, s.values, s.stderr])
    record = {
        "rows": [{"n_agents": n, "max_steps": st, "t_c": t, "saturated_value": v, "saturated": t is not None}
                 for n, st, t, v in zip(res.n_values, steps, res.t_c, res.saturated_values)],
        "fit": None if res.fit is None else {"a": res.fit.a, "b": res.fit.b, "r_squared": res.fit.r_squared},
        "window": opts.window, "tolerance": opts.tolerance, "noise_z": opts.noise_z,
    }
    report = write_record(out / "sweep_report.json", record)
    paths = [table, report] + [out / f"richest_series_N{n}.tsv" for n in res.series]
    write_manifest(out / "manifest.json", "sweep", resolved_sections(cfg, opts), paths)
    print("n_agents\tt_c\tsaturated_value")
    for n, t, v in zip(res.n_values, res.t_c, res.saturated_values):
        print(f"{n}\t{t if t is not None else 'not-found'}\t{v if v is not None else 'nan'}")
    if failure is not None:
        print(f"error: {failure}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"t_c = a N^b: a={res.fit.a:.6g} b={res.fit.b:.6g} r_squared={res.fit.r_squared:.6g}")
    return EXIT_OK


def cmd_zipf(args) -> int:
    x = _samples(args.samples)
    rl = zipf_ranks(x)
    out = Path(args.output) if args.output else _out_dir(args) / "zipf_ranks.tsv"
    write_table(out, ["rank", "wealth"], [rl.ranks, rl.wealths])
    print(out)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "sweep": cmd_sweep, "zipf": cmd_zipf}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FitError as exc:
        print(f"error: insufficient bins: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, ArithmeticError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
