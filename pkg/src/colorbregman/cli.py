"""Command-line front end.

Exit codes: 0 success, 1 usage or input error, 2 numerical failure (an inner
solver that did not converge, or a diagnostics check that did not hold).
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .admm import AdmmConfig, InnerSolverError
from .bench import (
    DEFAULT_ALPHAS,
    METHODS,
    SKIMAGE_NATURAL,
    ExperimentSpec,
    atomic_write,
    gen_demo1d,
    gen_nested_squares,
    jump_positions,
    read_image,
    run_experiment,
    write_png,
)
from .bregman import StopRule, WeightMatrix, WeightMatrixError, run, write_diagnostics_csv
from .grid import TVFlavor
from .infconv import infconv_run

log = logging.getLogger("colorbregman")

JOBS_ENV = "COLORBREGMAN_JOBS"
EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2


class InputError(Exception):
    """Bad flags or unreadable input; maps to exit code 1."""


def parse_weights(text: str, m: int) -> WeightMatrix:
    """``identity``, ``uniform:<omega>`` or a row-major list of ``m*m`` numbers."""
    text = text.strip()
    if text == "identity":
        return WeightMatrix.identity(m)
    if text.startswith("uniform:"):
        raw = text.split(":", 1)[1]
        try:
            omega = float(eval_fraction(raw))
        except ValueError:
            raise InputError(f"cannot parse off-diagonal weight {raw!r}") from None
        return WeightMatrix.uniform(m, omega)
    try:
        vals = [float(eval_fraction(v)) for v in text.replace(";", ",").replace(" ", ",").split(",") if v]
    except ValueError:
        raise InputError(f"cannot parse weight matrix {text!r}") from None
    if len(vals) != m * m:
        raise InputError(f"weight matrix needs {m * m} entries for {m} channels, got {len(vals)}")
    return WeightMatrix(np.array(vals).reshape(m, m))


def eval_fraction(text: str) -> float:
    """Parse ``0.25`` or ``1/3``."""
    num, sep, den = text.partition("/")
    return float(num) / float(den) if sep else float(num)


def default_jobs() -> int:
    raw = os.environ.get(JOBS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise InputError(f"{JOBS_ENV} must be an integer, got {raw!r}") from None


def _positive(kind):
    def conv(text):
        val = kind(text)
        if val <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return val
    return conv


def _admm_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--flavor", choices=[f.value for f in TVFlavor], default="isotropic")
    p.add_argument("--tol", type=_positive(float), default=1e-4, help="relative inner tolerance")
    p.add_argument("--max-inner", type=_positive(int), default=5000)


def _cfg(args) -> AdmmConfig:
    return AdmmConfig(tol_primal=args.tol, tol_dual=args.tol, max_inner=args.max_inner,
                      flavor=TVFlavor(args.flavor))


def _engine(method: str):
    return infconv_run if method == "infconv" else run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="colorbregman", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("denoise", help="denoise one image")
    p.add_argument("input")
    p.add_argument("--method", choices=METHODS, default="color_bregman")
    p.add_argument("--alpha", type=_positive(float), required=True)
    p.add_argument("--weights", default=None, help="identity | uniform:<omega> | row-major list")
    p.add_argument("--sigma", type=_positive(float), default=None,
                   help="noise level; enables the discrepancy stopping rule")
    p.add_argument("--max-iters", type=_positive(int), default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--diag-csv", default=None)
    _admm_args(p)

    p = sub.add_parser("demo1d", help="three-channel 1-D edge recovery demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=_positive(int), default=6)
    p.add_argument("--alpha", type=_positive(float), default=24.0)
    p.add_argument("--weights", default="uniform:1/3")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--flavor", choices=[f.value for f in TVFlavor], default="anisotropic")
    p.add_argument("--tol", type=_positive(float), default=1e-5)
    p.add_argument("--max-inner", type=_positive(int), default=20000)

    p = sub.add_parser("squares", help="nested squares with chosen jump signs")
    p.add_argument("--signs", default="++,+-,-+",
                   help="one outer/inner sign pair per channel, e.g. '++,+-,-+'")
    p.add_argument("--method", choices=("color_bregman", "infconv"), default="infconv")
    p.add_argument("--alpha", type=_positive(float), default=0.2)
    p.add_argument("--weights", default="uniform:1/3")
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--iters", type=_positive(int), default=20)
    p.add_argument("--out-dir", required=True)
    _admm_args(p)

    p = sub.add_parser("bench", help="best-of-sweep PSNR comparison over several images")
    p.add_argument("images", nargs="*", help="image paths or skimage:<name> (default: six bundled samples)")
    p.add_argument("--methods", default=",".join(METHODS))
    p.add_argument("--flavor", choices=[f.value for f in TVFlavor], default="isotropic")
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--alphas", default=",".join(str(a) for a in DEFAULT_ALPHAS))
    p.add_argument("--omega", type=float, default=None, help="off-diagonal weight of the coupled methods")
    p.add_argument("--max-iters", type=_positive(int), default=10)
    p.add_argument("--size", default=None, help="HxW to crop and resample every image to")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=_positive(int), default=None,
                   help=f"worker processes (default: ${JOBS_ENV} or 1)")
    p.add_argument("--tol", type=_positive(float), default=1e-4)
    p.add_argument("--max-inner", type=_positive(int), default=2000)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("diagnose", help="check monotonicity and the 1/sqrt(k) rate in a diagnostics CSV")
    p.add_argument("csv")
    p.add_argument("--slack", type=float, default=1e-6, help="relative slack for the monotonicity checks")
    p.add_argument("--rate-factor", type=float, default=2.0,
                   help="pass the rate check when max_k k*r_k^2 <= factor * r_1^2")
    return parser


# commands ------------------------------------------------------------------


def cmd_denoise(args) -> int:
    try:
        f = read_image(args.input)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read {args.input}: {exc}") from None
    m = f.shape[0]
    if args.method in ("tv", "bregman"):
        W = WeightMatrix.identity(m)
        if args.weights is not None and not np.array_equal(parse_weights(args.weights, m).entries, W.entries):
            raise InputError(f"method {args.method} is channelwise; use color_bregman for coupled weights")
    else:
        W = parse_weights(args.weights, m) if args.weights else WeightMatrix.default(m)
    cfg = _cfg(args)
    if args.method == "tv":
        stop = StopRule.fixed_iterations(1)
    elif args.sigma is not None:
        stop = StopRule.discrepancy(args.sigma, max_iters=args.max_iters)
    else:
        stop = StopRule.fixed_iterations(args.max_iters)
    u, diags = _engine(args.method)(f, W, args.alpha, stop, cfg)
    write_png(args.out, u)
    if args.diag_csv:
        write_diagnostics_csv(args.diag_csv, diags, extra_columns=args.method == "infconv")
    log.info("wrote %s after %d iterations", args.out, len(diags))
    return EXIT_OK


def _series_csv(columns: dict) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    names = list(columns)
    wr.writerow(names)
    for row in zip(*columns.values()):
        wr.writerow([str(int(v)) if n == "index" else f"{float(v):.17g}" for n, v in zip(names, row)])
    return buf.getvalue()


def cmd_demo1d(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clean, noisy = gen_demo1d(seed=args.seed)
    W = parse_weights(args.weights, clean.shape[0])
    cfg = AdmmConfig(tol_primal=args.tol, tol_dual=args.tol, max_inner=args.max_inner, flavor=TVFlavor(args.flavor))
    wanted = sorted({1, 2, args.iters} & set(range(1, args.iters + 1)))
    states = []
    run(noisy, W, args.alpha, StopRule.fixed_iterations(args.iters), cfg, on_step=states.append)
    idx = np.arange(clean.shape[-1])
    for s in states:
        if s.k not in wanted:
            continue
        for c in range(clean.shape[0]):
            atomic_write(out / f"recon_iter{s.k:02d}_ch{c}.csv", _series_csv(
                {"index": idx, "clean": clean[c, 0], "noisy": noisy[c, 0], "u": s.u[c, 0]}))
            atomic_write(out / f"q_iter{s.k:02d}_ch{c}.csv", _series_csv({"index": idx, "q": s.q[c, 0, 0]}))
        up, down = jump_positions(s.u[-1])
        print(f"iteration {s.k}: last-channel jumps at {up} and {down}")
    return EXIT_OK


def parse_signs(text: str):
    pairs = []
    for tok in text.split(","):
        tok = tok.strip()
        if len(tok) != 2 or any(ch not in "+-" for ch in tok):
            raise InputError(f"sign pair must be two of '+'/'-', got {tok!r}")
        pairs.append(tuple(1 if ch == "+" else -1 for ch in tok))
    return tuple(pairs)


def cmd_squares(args) -> int:
    signs = parse_signs(args.signs)
    if args.sigma < 0:
        raise InputError("sigma must be nonnegative")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    clean, noisy = gen_nested_squares(signs, seed=args.seed, sigma=args.sigma)
    W = parse_weights(args.weights, clean.shape[0])
    u, diags = _engine(args.method)(noisy, W, args.alpha, StopRule.fixed_iterations(args.iters), _cfg(args),
                                    reference=clean)
    # channels carry signed data around zero; shift to mid-gray for viewing
    for name, img in (("clean", clean), ("noisy", noisy), (args.method, u)):
        write_png(out / f"{name}.png", img + 0.5)
    write_diagnostics_csv(out / f"{args.method}_diagnostics.csv", diags, extra_columns=args.method == "infconv")
    best = max(diags, key=lambda r: r.psnr)
    print(f"{args.method}: best PSNR {best.psnr:.2f} dB at iteration {best.k}")
    return EXIT_OK


def _parse_size(text):
    if text is None:
        return None
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise InputError(f"--size must look like 128x192, got {text!r}") from None
    if h < 2 or w < 2:
        raise InputError("--size must be at least 2x2")
    return h, w


def cmd_bench(args) -> int:
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad:
        raise InputError(f"unknown method(s): {', '.join(bad)}")
    try:
        alphas = tuple(float(a) for a in args.alphas.split(","))
    except ValueError:
        raise InputError(f"cannot parse --alphas {args.alphas!r}") from None
    if any(a <= 0 for a in alphas):
        raise InputError("alphas must be positive")
    images = tuple(args.images) or tuple(f"skimage:{n}" for n in SKIMAGE_NATURAL)
    try:
        spec = ExperimentSpec(
            images=images, sigma=args.sigma, methods=tuple((m, args.flavor) for m in methods),
            alphas=alphas, seed=args.seed, max_iters=args.max_iters, omega=args.omega,
            shape=_parse_size(args.size), tol=args.tol, max_inner=args.max_inner,
        )
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jobs = args.jobs if args.jobs is not None else default_jobs()
    rows = run_experiment(spec, out / "results.csv", out / "summary.txt", jobs=jobs)
    if not rows:
        raise InputError("no readable images")
    print((out / "summary.txt").read_text(), end="")
    return EXIT_NUMERIC if any(r.status != "ok" for r in rows) else EXIT_OK


def read_diagnostics(path) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path} has no data rows")
    missing = {"k", "residual", "dq"} - set(rows[0])
    if missing:
        raise InputError(f"{path} lacks column(s) {', '.join(sorted(missing))}")
    parsed = []
    for n, row in enumerate(rows, start=2):
        try:
            parsed.append({"k": int(row["k"]), "residual": float(row["residual"]), "dq": float(row["dq"])})
        except (TypeError, ValueError):
            raise InputError(f"{path}: malformed values on line {n}") from None
    ks = [r["k"] for r in parsed]
    if ks != list(range(ks[0], ks[0] + len(ks))) or ks[0] < 1:
        raise InputError(f"{path}: iteration column must count up from 1 without gaps")
    return parsed


def check_monotone(values, ks, slack: float):
    """First ``k`` at which ``values`` rises by more than ``slack`` relative to its first entry, else None."""
    tol = slack * max(abs(values[0]), np.finfo(float).tiny)
    for a, b, k in zip(values, values[1:], ks[1:]):
        if b > a + tol:
            return k
    return None


def cmd_diagnose(args) -> int:
    rows = read_diagnostics(args.csv)
    ks = [r["k"] for r in rows]
    ok = True
    for col, label in (("residual", "||r^k||"), ("dq", "||q^k - q^(k-1)||")):
        vals = [r[col] for r in rows]
        bad = check_monotone(vals, ks, args.slack)
        if bad is None:
            print(f"PASS  {label} non-increasing over k={ks[0]}..{ks[-1]}")
        else:
            ok = False
            print(f"FAIL  {label} increases at k={bad}")
    if len(rows) < 2:
        print("SKIP  rate check needs at least two iterations")
    else:
        k = np.array(ks, dtype=float)
        r = np.array([row["residual"] for row in rows])
        x = 1.0 / np.sqrt(k)
        c_fit = float(np.dot(x, r) / np.dot(x, x))
        ratio = float(np.max(k * r ** 2) / max(r[0] ** 2 * ks[0], np.finfo(float).tiny))
        passed = ratio <= args.rate_factor
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  ||r^k|| ~ C/sqrt(k): fitted C = {c_fit:.6g}, "
              f"max_k k*r_k^2 / r_1^2 = {ratio:.4f} (limit {args.rate_factor:g})")
    return EXIT_OK if ok else EXIT_NUMERIC


COMMANDS = {
    "denoise": cmd_denoise,
    "demo1d": cmd_demo1d,
    "squares": cmd_squares,
    "bench": cmd_bench,
    "diagnose": cmd_diagnose,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors; remap to the input-error code
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, WeightMatrixError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InnerSolverError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
