"""Command-line front end.

Subcommands: simulate, diagnose, lrv, ttest, dmtest, mc.  Exit codes are
0 on success, 2 for usage and lookup errors, 3 for data errors and 4 for
numeric failures.  Numeric output uses 17 significant digits.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DomainError, HarContamError
from .inference import DmDesign, dm_forecast_harness, dm_test, t_test_location
from .lrv import dk_gamma, estimate_lrv
from .models import SlsSpec, TimeSeries, builtin_spec, d_star_true, regime_mean_levels, simulate_path
from .montecarlo import (
    AcfExperiment,
    BUILTIN_EXPERIMENTS,
    builtin_experiment,
    compare_to_reference,
    load_reference,
    run_acf_experiment,
    run_experiment,
)
from .spectral import d_star_hat, local_periodogram, periodogram, sample_autocov

CLI_METHODS = ("dk", "dk-pw", "a91", "a91-pw", "nw87", "kvb", "ewc")

GNUPLOT = {
    "acf": """# sample ACF, DK ACF and corrected ACF by lag
set datafile separator ','
set key top right
plot '{path}' using 1:2 with linespoints title 'acf', \\
     '' using 1:3 with linespoints title 'dk', \\
     '' using 1:4 with linespoints title 'corrected'
""",
    "periodogram": """# periodogram against frequency
set datafile separator ','
set logscale y
plot '{path}' using 1:2 with lines title 'I(omega)'
""",
    "local_periodogram": """# local periodogram at u = {u}
set datafile separator ','
plot '{path}' using 1:2 with linespoints title 'I_L(u, omega)'
""",
}


def _f(x) -> str:
    return f"{float(x):.17g}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_f(v) if isinstance(v, (float, np.floating)) else v for v in row])


def _emit(obj, out: str | None) -> None:
    text = json.dumps(obj, indent=2, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _load_spec(arg: str):
    p = Path(arg)
    if p.suffix == ".json" or p.exists():
        try:
            text = p.read_text()
        except OSError as exc:
            raise DomainError(f"cannot read spec file {arg}: {exc.strerror}") from None
        return SlsSpec.from_json(text)
    return builtin_spec(arg)


def _load_series(path: str) -> np.ndarray:
    try:
        return np.asarray(TimeSeries.from_csv(path))
    except OSError as exc:
        raise DomainError(f"cannot read {path}: {exc.strerror}") from None


def _fractions(text: str | None):
    if not text:
        return []
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise DomainError(f"--breaks expects comma-separated fractions, got {text!r}") from None
    if any(not 0.0 < v < 1.0 for v in vals) or vals != sorted(vals):
        raise DomainError(f"--breaks must be increasing fractions in (0, 1), got {text!r}")
    return vals


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    spec = _load_spec(args.spec)
    if not isinstance(spec, SlsSpec):
        raise DomainError(f"{args.spec} is a forecast design; use 'dmtest --design'")
    ts = simulate_path(spec, args.T, args.seed, args.init)
    ts.to_csv(args.output)
    _emit({
        "T": ts.T, "seed": args.seed, "spec": spec.label,
        "regime_means": regime_mean_levels(spec), "d_star_true": d_star_true(spec),
        "output": str(args.output),
    }, None)
    return 0


def cmd_diagnose(args) -> int:
    y = _load_series(args.input)
    breaks = _fractions(args.breaks)
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)
    L = min(args.max_lag, y.size - 1)
    acf = sample_autocov(y, L)
    dk = dk_gamma(y, L)
    rep = d_star_hat(y, breaks, L) if breaks else None
    corrected = rep.corrected_acf.values if rep else acf.values
    _write_csv(out / "acf.csv", ["lag", "acf", "dk", "corrected"],
               zip(acf.lags.tolist(), acf.values, dk, corrected))
    pg = periodogram(y)
    _write_csv(out / "periodogram.csv", ["omega", "I"], zip(pg.frequencies, pg.ordinates))
    scripts = [GNUPLOT["acf"].format(path=out / "acf.csv"),
               GNUPLOT["periodogram"].format(path=out / "periodogram.csv")]
    n_T = args.n_T or int(math.floor(y.size**0.6))
    n_T -= n_T % 2
    for u in args.u or []:
        lp = local_periodogram(y, u, n_T, clamp=True)
        name = f"local_periodogram_u{u:g}.csv"
        _write_csv(out / name, ["omega", "I"], zip(lp.frequencies, lp.ordinates))
        scripts.append(GNUPLOT["local_periodogram"].format(path=out / name, u=u))
    (out / "plots.gp").write_text("\n".join(scripts))
    summary = {"T": int(y.size), "outdir": str(out)}
    if rep:
        summary.update(rep.to_dict())
    _emit(summary, None)
    return 0


def _lrv_dict(est) -> dict:
    d = est.to_dict()
    if est.method.startswith("dk"):
        d["diagnostics"].update(
            {"b1": est.b1, "b2_bar": est.b2, "n_T": est.n_T, "phi2": est.diagnostics.get("phi2")}
        )
        d["diagnostics"].pop("b2_local", None)
    return d


def cmd_lrv(args) -> int:
    y = _load_series(args.input)
    est = estimate_lrv(y - y.mean(), args.method)
    _emit(_lrv_dict(est), args.output)
    return 0


def _test_dict(res) -> dict:
    d = res.to_dict()
    d["lrv"] = _lrv_dict(res.lrv)
    return d


def cmd_ttest(args) -> int:
    y = _load_series(args.input)
    res = t_test_location(y, args.beta0, args.method, args.level, args.reference)
    _emit(_test_dict(res), args.output)
    return 0


def cmd_dmtest(args) -> int:
    if args.design:
        base = builtin_spec(args.design)
        if not isinstance(base, DmDesign):
            raise DomainError(f"{args.design} is not a forecast design (use DM1..DM4)")
        design = DmDesign(spec_id=base.spec_id, delta=args.delta, T=args.T, null=args.null)
        l1, l2 = dm_forecast_harness(design, args.seed)
    elif args.losses1 and args.losses2:
        l1, l2 = _load_series(args.losses1), _load_series(args.losses2)
    else:
        raise DomainError("give either --design or both --losses1 and --losses2")
    res = dm_test(l1, l2, args.method, args.level, args.reference)
    _emit(_test_dict(res), args.output)
    return 0


def cmd_mc(args) -> int:
    exp = builtin_experiment(args.table, reps=args.reps, base_seed=args.seed)
    out = Path(args.output) if args.output else None
    if isinstance(exp, AcfExperiment):
        tab = run_acf_experiment(exp, workers=args.workers)
        text = tab.to_csv(out)
        if out is None:
            sys.stdout.write(text)
        return 0
    tab = run_experiment(exp, workers=args.workers)
    text = tab.to_csv(out)
    if args.json:
        tab.to_json(args.json, indent=2)
    if out is None:
        sys.stdout.write(text)
    if args.compare:
        rep = compare_to_reference(tab, load_reference(args.table), args.size_tol, args.power_tol)
        Path(args.compare).write_text(rep.to_json(indent=2) + "\n")
        n_bad = len(rep.failed_cells())
        print(f"reference comparison: {len(rep.cells) - n_bad}/{len(rep.cells)} cells within tolerance",
              file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="harcontam",
        description="LRV estimation and HAR tests robust to low frequency contamination.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a path from a builtin or JSON spec")
    s.add_argument("--spec", required=True, help="M1..M4 or a JSON spec file")
    s.add_argument("--T", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--init", choices=("stationary", "zero"), default="stationary")
    s.add_argument("-o", "--output", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("diagnose", help="ACF, DK ACF, d_hat*, periodogram and local periodograms")
    s.add_argument("--input", required=True)
    s.add_argument("--breaks", help="comma-separated break fractions in (0, 1)")
    s.add_argument("--max-lag", type=int, default=20)
    s.add_argument("--u", type=float, action="append", help="local periodogram location (repeatable)")
    s.add_argument("--n-T", dest="n_T", type=int, default=None)
    s.add_argument("--outdir", default=".")
    s.set_defaults(func=cmd_diagnose)

    s = sub.add_parser("lrv", help="estimate the long-run variance of a series")
    s.add_argument("--input", required=True)
    s.add_argument("--method", choices=CLI_METHODS, default="dk")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_lrv)

    s = sub.add_parser("ttest", help="HAR t-test on the mean of a series")
    s.add_argument("--input", required=True)
    s.add_argument("--method", choices=CLI_METHODS, default="dk")
    s.add_argument("--beta0", type=float, default=0.0)
    s.add_argument("--level", type=float, default=0.05)
    s.add_argument("--reference", choices=("std-normal", "fixed-b-sim", "student-t"))
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_ttest)

    s = sub.add_parser("dmtest", help="Diebold-Mariano test on two loss series or a builtin design")
    s.add_argument("--losses1")
    s.add_argument("--losses2")
    s.add_argument("--design", help="DM1..DM4")
    s.add_argument("--delta", type=float, default=1.0)
    s.add_argument("--T", type=int, default=400)
    s.add_argument("--null", action="store_true")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--method", choices=CLI_METHODS, default="dk")
    s.add_argument("--level", type=float, default=0.05)
    s.add_argument("--reference", choices=("std-normal", "fixed-b-sim", "student-t"))
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_dmtest)

    s = sub.add_parser("mc", help="Monte Carlo reproduction of a builtin table")
    s.add_argument("--table", required=True, choices=BUILTIN_EXPERIMENTS)
    s.add_argument("--reps", type=int, default=2000)
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("-o", "--output")
    s.add_argument("--json")
    s.add_argument("--compare", help="write the reference comparison report to this path")
    s.add_argument("--size-tol", type=float, default=0.03)
    s.add_argument("--power-tol", type=float, default=0.10)
    s.set_defaults(func=cmd_mc)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HarContamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
