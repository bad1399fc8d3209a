"""Command-line front end.

    bregsel fit      --input data.txt
    bregsel select   --input data.txt --bootstrap 200 --seed 1
    bregsel gof      --input data.txt --family gamma --M 500
    bregsel simulate --table 1 --reps 1000 --out table1.csv --format csv
    bregsel plotdata --input data.txt --bins 8 --out plot.csv

Exit codes: ``select`` returns 0/1/2 for prefer-A/prefer-B/indecisive and
``gof`` returns 1 when the fit is rejected. Errors use the sysexits range:
64 usage, 65 bad data, 66 missing input, 70 numerical failure, 73 output
not writable.
"""

import argparse
import csv
import io
import json
import math
import os
import re
import sys
import tempfile
from importlib import resources

import numpy as np

from .density import Sample
from .divergence import BregmanGenerator, TruncationPolicy
from .errors import BregselError, DomainError, ParseError
from .montecarlo import STATISTICS, TABLES, ExperimentConfig, run_experiment
from .selection import (FAMILIES, Decision, SelectionSettings, critical_value, fit_pair,
                        get_family, gof_statistic, u_statistic)

EX_USAGE, EX_DATAERR, EX_NOINPUT, EX_SOFTWARE, EX_CANTCREAT = 64, 65, 66, 70, 73

SIMULATE_COLUMNS = (["n"] + [f"{s}_{k}" for s in ("alpha", "eta", "mu", "sigma", "d1", "d2", "u")
                             for k in ("mean", "sd")]
                    + ["pcs_a", "pcs_ind", "pcs_b", "skipped"])

_TOKEN = re.compile(r"[^\s,]+")


class UsageError(Exception):
    pass


class InputMissing(Exception):
    pass


def fmt(x):
    """17 significant digits: enough for every double to round-trip."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return format(float(x), ".17g")


# -- input -----------------------------------------------------------------

def parse_text(text, source="<input>"):
    """Numbers separated by whitespace, commas or newlines; '#' lines skipped."""
    values = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.lstrip().startswith("#"):
            continue
        for m in _TOKEN.finditer(line):
            tok = m.group()
            try:
                v = float(tok)
            except ValueError:
                v = None
            if v is None or not math.isfinite(v):
                k = len(values) + 1
                raise ParseError(
                    f"{source}: line {lineno}, column {m.start() + 1}: "
                    f"token {k} {tok!r} is not a finite decimal number",
                    line=lineno, column=m.start() + 1, token=k)
            values.append(v)
    return values


def parse_dataset(path, stdin=None, diagnostics=None):
    """Read a sample from ``path`` (``'-'`` for standard input)."""
    if path == "-":
        text = (stdin or sys.stdin).read()
        source = "<stdin>"
    else:
        if not os.path.isfile(path):
            raise InputMissing(f"cannot open input file: {path}")
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        source = path
    values = parse_text(text, source)
    if len(values) < 2:
        raise DomainError(f"{source}: need at least 2 observations, found {len(values)}")
    sample = Sample(values, label=source)
    if diagnostics is not None:
        print(f"read {sample.n} values from {source} "
              f"(min {float(sample.values.min())!r}, max {float(sample.values.max())!r})",
              file=diagnostics)
    return sample


def bundled_dataset():
    """Path-free access to the bundled ball-bearing endurance data."""
    text = resources.files("bregsel").joinpath("data/ball_bearings.txt").read_text()
    return Sample(parse_text(text, "ball_bearings.txt"), label="ball_bearings")


# -- output ----------------------------------------------------------------

def write_output(text, path):
    """Print, or write atomically via a temporary file and rename."""
    if path is None or path == "-":
        sys.stdout.write(text)
        return
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer))
                    and not isinstance(v, bool) else v for v in row])
    return buf.getvalue()


def _json(obj):
    def conv(v):
        if isinstance(v, dict):
            return {k: conv(x) for k, x in v.items()}
        if isinstance(v, (list, tuple)):
            return [conv(x) for x in v]
        if isinstance(v, (np.floating, float)):
            v = float(v)
            return v if math.isfinite(v) else None
        if isinstance(v, np.integer):
            return int(v)
        return v

    return json.dumps(conv(obj), indent=2) + "\n"


def _color(text, code, enabled):
    return f"\033[{code}m{text}\033[0m" if enabled else text


def _use_color(args):
    return (args.out in (None, "-") and "NO_COLOR" not in os.environ
            and sys.stdout.isatty())


def _text(pairs, color_keys=(), color=False):
    width = max(len(k) for k, _ in pairs)
    lines = []
    for k, v in pairs:
        s = repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
        if k in color_keys:
            s = _color(s, "1", color)
        lines.append(f"{k.ljust(width)}  {s}")
    return "\n".join(lines) + "\n"


def render(report, fmt_name, color=False, color_keys=()):
    if fmt_name == "json":
        return _json(report)
    if fmt_name == "csv":
        return _csv(list(report), [list(report.values())])
    return _text(list(report.items()), color_keys, color)


# -- configuration ---------------------------------------------------------

DEFAULTS = {
    "input": None, "format": "text", "seed": 0, "beta": 3.0, "c1": 1.0, "level": 0.05,
    "bootstrap": 200, "gamma_n": 0.01, "out": None,
    "grid_lo": 0.05, "grid_hi": 5.0, "grid_size": 60,
    "families": "gamma,lognormal", "family": "gamma", "M": 500,
    "table": None, "pi": None, "sizes": None, "reps": None, "workers": 1, "bins": 10,
}

CONVERTERS = {
    "seed": int, "beta": float, "c1": float, "level": float, "bootstrap": int,
    "gamma_n": float, "grid_lo": float, "grid_hi": float, "grid_size": int, "M": int,
    "table": int, "pi": float, "reps": int, "workers": int, "bins": int,
}


def read_config(path):
    """``key = value`` lines; '#' starts a comment. Keys use flag names."""
    if not os.path.isfile(path):
        raise InputMissing(f"cannot open config file: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (p.strip() for p in line.split("=", 1))
            key = key.lstrip("-").replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def resolve(args):
    """Merge flag > config file > default into ``args`` in place."""
    from_file = read_config(args.config) if args.config else {}
    for key, default in DEFAULTS.items():
        if getattr(args, key, None) is not None:
            continue
        value = from_file.get(key, default)
        if isinstance(value, str) and key in CONVERTERS:
            try:
                value = CONVERTERS[key](value)
            except ValueError:
                raise UsageError(f"config value for {key!r} is not valid: {value!r}") from None
        setattr(args, key, value)
    validate(args)
    return args


def validate(args):
    def need(cond, msg):
        if not cond:
            raise UsageError(msg)

    need(args.format in ("text", "json", "csv"), f"unknown format {args.format!r}")
    need(0 <= args.seed < 2 ** 64, "--seed must be an unsigned 64-bit integer")
    need(math.isfinite(args.beta), "--beta must be finite")
    need(math.isfinite(args.c1) and args.c1 > 0, "--c1 must be positive")
    need(0 < args.level < 1, "--level must lie in (0, 1)")
    need(args.bootstrap >= 50, "--bootstrap must be at least 50")
    need(math.isfinite(args.gamma_n) and args.gamma_n > 0, "--gamma-n must be positive")
    need(0 < args.grid_lo <= args.grid_hi and args.grid_size >= 1, "invalid bandwidth grid")
    for name in str(args.families).split(",") + [args.family]:
        need(name in FAMILIES, f"unknown family {name!r}")
    need(len(str(args.families).split(",")) == 2, "--families takes exactly two names")
    need(args.M >= 1, "--M must be at least 1")
    need(args.bins >= 2, "--bins must be at least 2")
    need(args.workers >= 1, "--workers must be at least 1")
    if args.reps is not None:
        need(args.reps >= 1, "--reps must be at least 1")
    if args.table is not None:
        need(args.table in TABLES, f"--table must be one of {sorted(TABLES)}")
    if args.pi is not None:
        need(0 <= args.pi <= 1, "--pi must lie in [0, 1]")


def _settings(args):
    return SelectionSettings(truncation=TruncationPolicy(args.gamma_n), grid_lo=args.grid_lo,
                             grid_hi=args.grid_hi, grid_size=args.grid_size)


def _generator(args):
    return BregmanGenerator(args.beta, args.c1)


def _sample(args):
    if args.input is None:
        raise UsageError("--input is required (use '-' for standard input)")
    return parse_dataset(args.input, diagnostics=sys.stderr)


# -- commands --------------------------------------------------------------

def _params(prefix, model):
    return {f"{prefix}_{k}": v for k, v in model.as_dict().items()}


def cmd_fit(args):
    sample = _sample(args)
    fams = args.families.split(",")
    pair = fit_pair(sample, fams, _generator(args), _settings(args))
    report = {"n": sample.n, "bandwidth": pair.bandwidth}
    report.update(_params(fams[0], pair.model_a))
    report.update(_params(fams[1], pair.model_b))
    write_output(render(report, args.format), args.out)
    return 0


def cmd_select(args):
    sample = _sample(args)
    fams = args.families.split(",")
    pair = fit_pair(sample, fams, _generator(args), _settings(args))
    res = u_statistic(sample, pair, args.bootstrap, np.random.default_rng(args.seed), args.level)
    report = {"n": sample.n, "family_a": fams[0], "family_b": fams[1],
              "bandwidth": pair.bandwidth}
    report.update(_params("a", pair.model_a))
    report.update(_params("b", pair.model_b))
    report.update({"d_a": res.d_a, "d_b": res.d_b, "kappa_hat": res.kappa_hat, "u": res.u,
                   "critical_value": critical_value(res.level), "level": res.level,
                   "decision": res.decision.value, "degenerate_kappa": res.degenerate})
    write_output(render(report, args.format, _use_color(args), ("decision",)), args.out)
    return {Decision.PREFER_A: 0, Decision.PREFER_B: 1, Decision.INDECISIVE: 2}[res.decision]


def cmd_gof(args):
    sample = _sample(args)
    res = gof_statistic(sample, args.family, _generator(args), _settings(args), args.M,
                        np.random.default_rng(args.seed))
    rejected = res.p_value < args.level
    report = {"n": sample.n, "family": args.family, "bandwidth": res.bandwidth}
    report.update(_params(args.family, res.model))
    report.update({"t_obs": res.t_obs, "p_value": res.p_value, "M": args.M,
                   "level": args.level, "rejected": rejected})
    write_output(render(report, args.format, _use_color(args), ("rejected",)), args.out)
    return 1 if rejected else 0


def _campaign_config(args):
    if (args.table is None) == (args.pi is None):
        raise UsageError("simulate needs exactly one of --table or --pi")
    base = dict(TABLES[args.table]) if args.table is not None else {"pi": args.pi}
    if args.sizes:
        try:
            base["sample_sizes"] = tuple(int(s) for s in str(args.sizes).split(","))
        except ValueError:
            raise UsageError(f"--sizes must be comma-separated integers: {args.sizes!r}") from None
    # campaigns default to B = 100 unless the flag or config file sets it
    bootstrap = args.bootstrap if args.bootstrap_given else 100
    try:
        return ExperimentConfig(replications=args.reps or 1000, master_seed=args.seed,
                                level=args.level, bootstrap_B=bootstrap, beta=args.beta,
                                c1=args.c1, c_gamma=args.gamma_n, **base)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def simulate_table(rows, fmt_name):
    records = [r.as_dict() for r in rows]
    if fmt_name == "csv":
        return _csv(SIMULATE_COLUMNS, [[rec[c] for c in SIMULATE_COLUMNS] for rec in records])
    if fmt_name == "json":
        return _json(records)
    lines = []
    head = f"{'n':>5}" + "".join(f"{s:>24}" for s in STATISTICS)
    lines.append(head)
    for rec in records:
        lines.append(f"{rec['n']:>5}" + "".join(
            f"{rec[s + '_mean']:>12.6g} ({rec[s + '_sd']:.3g})".rjust(24) for s in STATISTICS))
    lines.append("")
    lines.append(f"{'n':>5}{'pcs_a':>10}{'indecisive':>12}{'pcs_b':>10}{'skipped':>9}")
    for rec in records:
        lines.append(f"{rec['n']:>5}{rec['pcs_a']:>9.1f}%{rec['pcs_ind']:>11.1f}%"
                     f"{rec['pcs_b']:>9.1f}%{rec['skipped']:>9}")
    return "\n".join(lines) + "\n"


def cmd_simulate(args):
    config = _campaign_config(args)
    rows = run_experiment(config, workers=args.workers)
    for row in rows:
        if row.warning:
            print(f"warning: {row.warning}", file=sys.stderr)
    write_output(simulate_table(rows, args.format), args.out)
    return 0


def plot_data(sample, bins, points=512):
    """Histogram heights plus both fitted densities on a common grid."""
    heights, edges = np.histogram(sample.values, bins=bins, density=True)
    xs = np.linspace(edges[0], edges[-1], points)
    gamma = get_family("gamma").fit(sample.values)
    lognormal = get_family("lognormal").fit(sample.values)
    return edges, heights, xs, gamma.pdf(xs), lognormal.pdf(xs)


def cmd_plotdata(args):
    sample = _sample(args)
    edges, heights, xs, g, ln = plot_data(sample, args.bins)
    parts = [
        "# histogram\n" + _csv(["bin_left", "bin_right", "height"],
                               zip(edges[:-1], edges[1:], heights)),
        "# gamma_curve\n" + _csv(["x", "pdf"], zip(xs, g)),
        "# lognormal_curve\n" + _csv(["x", "pdf"], zip(xs, ln)),
    ]
    write_output("\n".join(parts), args.out)
    return 0


# -- parser ----------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser():
    common = _Parser(add_help=False)
    g = common.add_argument_group("common options")
    g.add_argument("--input", metavar="PATH|-", help="dataset file, '-' for stdin")
    g.add_argument("--format", choices=("text", "json", "csv"))
    g.add_argument("--seed", type=int, metavar="U64")
    g.add_argument("--beta", type=float, help="generator exponent (default 3)")
    g.add_argument("--c1", type=float, help="generator scale (default 1)")
    g.add_argument("--level", type=float, help="test level (default 0.05)")
    g.add_argument("--bootstrap", type=int, metavar="B",
                   help="bootstrap resamples for kappa (default 200; 100 in simulate)")
    g.add_argument("--gamma-n", dest="gamma_n", type=float, metavar="C",
                   help="truncation constant c in gamma_n = c/n (default 0.01)")
    g.add_argument("--grid-lo", dest="grid_lo", type=float)
    g.add_argument("--grid-hi", dest="grid_hi", type=float)
    g.add_argument("--grid-size", dest="grid_size", type=int)
    g.add_argument("--out", metavar="PATH")
    g.add_argument("--config", metavar="PATH", help="key = value file; flags override it")

    parser = _Parser(prog="bregsel", description="Bregman-divergence model selection")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("fit", parents=[common], help="fit both candidate families")
    p.add_argument("--families", help="two comma-separated family names")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", parents=[common], help="pairwise selection test")
    p.add_argument("--families", help="two comma-separated family names")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("gof", parents=[common], help="goodness of fit of one family")
    p.add_argument("--family")
    p.add_argument("--M", dest="M", type=int, help="null replicates (default 500)")
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo campaign")
    p.add_argument("--table", type=int)
    p.add_argument("--pi", type=float)
    p.add_argument("--sizes", help="comma-separated sample sizes")
    p.add_argument("--reps", type=int)
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plotdata", parents=[common], help="histogram and fitted curves as CSV")
    p.add_argument("--bins", type=int)
    p.set_defaults(func=cmd_plotdata)
    return parser


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        args.bootstrap_given = args.bootstrap is not None
        if args.config and not args.bootstrap_given:
            args.bootstrap_given = "bootstrap" in read_config(args.config)
        resolve(args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EX_USAGE
    except InputMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_NOINPUT
    except (ParseError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_DATAERR
    except BregselError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EX_SOFTWARE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EX_CANTCREAT


if __name__ == "__main__":
    sys.exit(main())
