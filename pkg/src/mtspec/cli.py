"""Command-line interface: ``mtspec {spectrum,adaptive,boundary-kernel,bench,generate}``.

Exit codes: 0 success, 2 usage or input error, 3 numerical or pipeline failure.
"""

import argparse
import csv
import io
import json
import sys

import numpy as np

from .boundary import BoundaryGeometry, continuum_boundary_kernel, solve_boundary_coeffs
from .errors import InvalidArgumentError, MtspecError
from .kernels import gamma_q
from .pipeline import PipelineConfig, adaptive_estimate
from .synth import FixedBandwidth, PipelineEstimator, ProcessSpec, generate, monte_carlo_ease
from .tapers import TimeSeries, log_multitaper, multitaper_spectrum

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


def _fmt(x):
    return repr(float(x))


def read_series(path):
    """One sample per line with an optional non-numeric header line."""
    if path == "-":
        text = sys.stdin.read()
    else:
        with open(path, newline="", encoding="utf-8") as fh:
            text = fh.read()
    values = []
    for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not row or not row[0].strip():
            continue
        try:
            values.append(float(row[0]))
        except ValueError:
            if values or lineno > 1:
                raise InvalidArgumentError(f"{path}:{lineno}: not a number: {row[0]!r}") from None
    return TimeSeries(np.array(values))


def write_csv(path, header, columns):
    """Write equal-length columns; values printed with round-trip precision."""
    rows = zip(*columns)
    out = io.StringIO()
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(_fmt(v) for v in row) + "\n")
    if path in (None, "-"):
        sys.stdout.write(out.getvalue())
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(out.getvalue())


def write_json(path, payload):
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _load_input(args):
    if args.synth is not None:
        if args.input is not None:
            raise InvalidArgumentError("give either an input file or --synth, not both")
        return generate(ProcessSpec.parse(args.synth), args.n, args.seed)
    if args.input is None:
        raise InvalidArgumentError("need an input file or --synth")
    return read_series(args.input)


def _add_input(p):
    p.add_argument("input", nargs="?", help="CSV file with one sample per line ('-' for stdin)")
    p.add_argument("--synth", help="synthetic process, e.g. ar:0.9,-0.81 or band:0.2,1,100")
    p.add_argument("--n", type=int, default=4096, help="synthetic series length (default: 4096)")
    p.add_argument("--seed", type=int, default=0, help="random seed (default: 0)")


def cmd_spectrum(args):
    ts = _load_input(args)
    if args.tapers < 1:
        raise InvalidArgumentError("--tapers must be positive")
    est = multitaper_spectrum(ts, args.tapers)
    cols = [est.frequencies, est.values]
    header = ["f", "S_hat"]
    if args.log:
        cols.append(log_multitaper(est, args.correction).values)
        header.append("theta_hat")
    write_csv(args.output, header, cols)
    return EXIT_OK


def cmd_adaptive(args):
    ts = _load_input(args)
    cfg = PipelineConfig(
        tapers=args.tapers,
        c_reg=args.c_reg,
        discontinuities=tuple(args.disc or ()),
        boundary_at_zero=args.boundary_zero,
        boundary_at_half=args.boundary_half,
    )
    res = adaptive_estimate(ts, cfg)
    write_csv(args.output, ["f", "theta_hat", "h_of_f"], [res.frequencies, res.theta, res.profile.h])
    json_path = args.json
    if json_path is None and args.output not in (None, "-"):
        json_path = args.output.rsplit(".", 1)[0] + ".json"
    if json_path is not None:
        diag = res.diagnostics()
        diag.pop("timings")
        write_json(json_path, diag)
    return EXIT_OK


def cmd_boundary_kernel(args):
    if args.q not in (0, 2):
        raise InvalidArgumentError("-q must be 0 or 2")
    if args.beta <= 0:
        raise InvalidArgumentError("--beta must be positive")
    kern = continuum_boundary_kernel(args.q, args.ftilde, args.beta)
    if not args.compare:
        z = np.linspace(-1.0, 1.0, args.points)
        write_csv(args.output, ["z", "G"], [z, kern(z)])
        return EXIT_OK
    if args.grid < 2:
        raise InvalidArgumentError("--grid must be at least 2")
    # N h = grid on the canonical spacing 1/(2N+2), with h = 1/4
    h = 0.25
    n = args.grid / h
    geom = BoundaryGeometry(0.0, h, 1, 1.0 / (2 * n + 2))
    bk = solve_boundary_coeffs(args.q, geom, args.ftilde, beta=args.beta)
    cont = kern(bk.z)
    disc = bk.normalized
    write_csv(
        args.output,
        ["z", "continuum", "discrete", "weight"],
        [bk.z, cont, disc, bk.weights() * h ** (args.q + 1) / gamma_q(args.q)],
    )
    print(f"max |discrete-continuum| = {np.max(np.abs(disc - cont)):.6g}", file=sys.stderr)
    return EXIT_OK


def cmd_bench(args):
    if args.reps < 2:
        raise InvalidArgumentError("--reps must be at least 2")
    spec = ProcessSpec.parse(args.synth)
    if args.pipeline:
        est = PipelineEstimator(PipelineConfig(tapers=args.tapers))
    else:
        if args.fixed_h is None:
            raise InvalidArgumentError("choose --pipeline or --fixed-h H")
        k = 1 if args.tapers is None else args.tapers
        est = FixedBandwidth(k, args.fixed_h)
    report = monte_carlo_ease(spec, est, args.n, args.reps, args.seed, workers=args.threads)
    write_json(args.output, report.to_dict(per_frequency=args.per_frequency))
    if args.csv:
        write_csv(args.csv, ["f", "mse", "mse_se"], [report.frequencies, report.mse, report.mse_se])
    return EXIT_OK


def cmd_generate(args):
    ts = generate(ProcessSpec.parse(args.synth), args.n, args.seed)
    write_csv(args.output, ["x"], [ts.samples])
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="mtspec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="multitaper spectrum on the canonical grid")
    _add_input(p)
    p.add_argument("--tapers", type=int, default=8, help="number of sine tapers K (default: 8)")
    p.add_argument("--log", action="store_true", help="add the bias-corrected log column theta_hat")
    p.add_argument("--correction", choices=["digamma", "scaled"], default="digamma")
    p.add_argument("-o", "--output", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("adaptive", help="data-adaptive smoothed log-spectrum")
    _add_input(p)
    p.add_argument("--tapers", type=int, default=None, help="taper count (default: round(N^(8/15)))")
    p.add_argument("--disc", type=_float_list, default=None, help="declared discontinuities f1,f2,...")
    p.add_argument("--c-reg", type=float, default=2.0, dest="c_reg", help="halfwidth cap factor")
    p.add_argument("--boundary-zero", action="store_true", help="treat f = 0 as a discontinuity")
    p.add_argument("--boundary-half", action="store_true", help="treat f = 1/2 as a discontinuity")
    p.add_argument("-o", "--output", help="output CSV (default: stdout)")
    p.add_argument("--json", help="diagnostics JSON (default: next to --output)")
    p.set_defaults(func=cmd_adaptive)

    p = sub.add_parser("boundary-kernel", help="optimal boundary kernel samples")
    p.add_argument("-q", type=int, default=0, help="derivative order, 0 or 2")
    p.add_argument("--ftilde", type=float, default=-1.0, help="standardised position in [-1, 0]")
    p.add_argument("--beta", type=float, default=1.0, help="halfwidth ratio h / h0(f)")
    p.add_argument("--points", type=int, default=201, help="samples of z in [-1, 1]")
    p.add_argument("--compare", action="store_true", help="also solve the discrete problem")
    p.add_argument("--grid", type=int, default=200, help="N h of the discrete grid (default: 200)")
    p.add_argument("-o", "--output", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_boundary_kernel)

    p = sub.add_parser("bench", help="Monte Carlo squared error against the exact log-spectrum")
    p.add_argument("--synth", required=True, help="process, e.g. ar:0.9,-0.81")
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--pipeline", action="store_true", help="benchmark the adaptive estimator")
    p.add_argument("--fixed-h", type=float, default=None, dest="fixed_h", help="fixed (0,2) halfwidth")
    p.add_argument("--tapers", type=int, default=None)
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: MTSPEC_THREADS)")
    p.add_argument("--per-frequency", action="store_true", dest="per_frequency",
                   help="include per-frequency MSE in the JSON")
    p.add_argument("--csv", help="per-frequency MSE CSV")
    p.add_argument("-o", "--output", help="output JSON (default: stdout)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("generate", help="write a synthetic series as CSV")
    p.add_argument("--synth", required=True)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", help="output CSV (default: stdout)")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidArgumentError, OSError) as exc:
        print(f"mtspec: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MtspecError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"mtspec: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
