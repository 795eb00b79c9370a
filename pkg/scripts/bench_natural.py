"""Best-of-sweep PSNR comparison on the bundled scikit-image color samples.

    python scripts/bench_natural.py --size 96x144 --out-dir results/bench
    python scripts/bench_natural.py --size 512x768 --jobs 4 --out-dir results/full

Prints the per-method mean table and the wall-clock time.
"""
import argparse
import time
from pathlib import Path

from colorbregman.bench import SKIMAGE_NATURAL, ExperimentSpec, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", default="96x144")
    ap.add_argument("--max-iters", type=int, default=6)
    ap.add_argument("--tol", type=float, default=1e-3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out-dir", default="results/bench")
    args = ap.parse_args()
    h, w = (int(v) for v in args.size.split("x"))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = ExperimentSpec(images=tuple(f"skimage:{n}" for n in SKIMAGE_NATURAL), shape=(h, w),
                          max_iters=args.max_iters, tol=args.tol)
    t0 = time.perf_counter()
    run_experiment(spec, out / "results.csv", out / "summary.txt", jobs=args.jobs)
    print((out / "summary.txt").read_text(), end="")
    print(f"wall time {time.perf_counter() - t0:.1f} s at {h}x{w}")


if __name__ == "__main__":
    main()
