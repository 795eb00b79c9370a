"""Synthetic test data, noise, PSNR and a batch runner for method comparisons."""
from __future__ import annotations

import csv
import io
import logging
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .admm import AdmmConfig, InnerSolverError
from .bregman import StopRule, WeightMatrix, psnr, run
from .grid import TVFlavor
from .infconv import infconv_run

log = logging.getLogger(__name__)

METHODS = ("tv", "bregman", "color_bregman", "infconv")
DEFAULT_ALPHAS = (0.02, 0.05, 0.1, 0.2, 0.4)


def add_gaussian_noise(u, sigma, seed: int) -> np.ndarray:
    """``u + N(0, sigma^2)`` per pixel and channel, no clipping.

    ``sigma`` may be a scalar or one value per channel.
    """
    u = np.asarray(u, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("sigma must be nonnegative")
    noise = np.random.default_rng(seed).standard_normal(u.shape)
    if sigma.ndim:
        sigma = sigma.reshape((-1,) + (1,) * (u.ndim - 1))
    return u + sigma * noise


def gen_demo1d(
    seed: int = 0,
    amplitudes=(1.0, 0.8, 0.1),
    sigma=0.1,
    length: int = 150,
    jumps=(50, 100),
):
    """Three 1-D channels with a step up at ``jumps[0]`` and back down at ``jumps[1]``.

    Returns ``(clean, noisy)`` of shape ``(3, 1, length)``; the blue channel's
    step is smaller than the noise level.
    """
    clean = np.zeros((len(amplitudes), 1, length))
    for c, a in enumerate(amplitudes):
        clean[c, 0, jumps[0]:jumps[1]] = a
    return clean, add_gaussian_noise(clean, sigma, seed)


def jump_positions(signal) -> tuple[int, int]:
    """Index of the largest increase and of the largest decrease (first sample after the jump)."""
    d = np.diff(np.ravel(signal))
    return int(np.argmax(d)) + 1, int(np.argmin(d)) + 1


def gen_nested_squares(
    signs=((1, 1), (1, 1), (1, 1)),
    seed: int = 0,
    sigma: float = 0.05,
    size: int = 64,
    amplitudes=(0.3, 0.25, 0.2),
):
    """Two concentric squares on a zero background.

    ``signs[c] = (s_outer, s_inner)`` sets the direction of the jump of
    channel ``c`` across the outer and the inner square boundary. Returns
    ``(clean, noisy)`` of shape ``(M, size, size)``.
    """
    signs = np.asarray(signs, dtype=float)
    if signs.ndim != 2 or signs.shape[1] != 2 or not np.all(np.abs(signs) == 1):
        raise ValueError("signs must be an (M, 2) array of +1/-1")
    amps = np.resize(np.asarray(amplitudes, dtype=float), signs.shape[0])  # cycled if M differs
    outer = np.zeros((size, size))
    inner = np.zeros((size, size))
    outer[size // 4: 3 * size // 4, size // 4: 3 * size // 4] = 1.0
    inner[3 * size // 8: 5 * size // 8, 3 * size // 8: 5 * size // 8] = 1.0
    clean = amps[:, None, None] * (signs[:, 0, None, None] * outer + signs[:, 1, None, None] * inner)
    return clean, add_gaussian_noise(clean, sigma, seed)


# image I/O -----------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """Read PNG/PGM/PPM (8 or 16 bit) into a ``(M, H, W)`` array on ``[0, 1]``."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            arr = np.asarray(im, dtype=float)
            peak = 65535.0 if arr.max() > 255 or im.mode.startswith("I;16") else 255.0
            return (arr / peak)[np.newaxis]
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=float) / 255.0
    if arr.ndim == 2:
        return arr[np.newaxis]
    return np.moveaxis(arr, -1, 0)


def encode_png(u) -> bytes:
    from PIL import Image

    u = np.asarray(u, dtype=float)
    if u.ndim == 3 and u.shape[0] == 1:
        u = u[0]
    img = np.round(np.clip(u, 0.0, 1.0) * 255.0).astype(np.uint8)
    if img.ndim == 3:
        img = np.moveaxis(img, 0, -1)
    buf = io.BytesIO()
    Image.fromarray(img).save(buf, format="PNG")
    return buf.getvalue()


def write_png(path, u) -> None:
    """Write ``u`` (clamped to ``[0, 1]`` for display) as 8-bit PNG, atomically."""
    atomic_write(path, encode_png(u))


def atomic_write(path, data) -> None:
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    mode = "wb" if isinstance(data, bytes) else "w"
    with open(tmp, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
        fh.write(data)
    os.replace(tmp, path)


SKIMAGE_NATURAL = ("astronaut", "chelsea", "coffee", "rocket", "immunohistochemistry", "hubble_deep_field")


def load_dataset_image(name: str) -> np.ndarray:
    """``skimage:<name>`` for a bundled scikit-image sample, otherwise a file path."""
    if name.startswith("skimage:"):
        import skimage.data

        arr = np.asarray(getattr(skimage.data, name.split(":", 1)[1])(), dtype=float)
        if arr.ndim == 3 and arr.shape[-1] == 4:
            arr = arr[..., :3]
        arr = arr / (65535.0 if arr.max() > 255 else 255.0)
        return np.moveaxis(arr, -1, 0) if arr.ndim == 3 else arr[np.newaxis]
    return read_image(name)


def fit_image(u: np.ndarray, shape: tuple[int, int] | None) -> np.ndarray:
    """Center-crop to the target aspect ratio, then resize to ``shape`` with anti-aliased bilinear interpolation."""
    if shape is None:
        return u
    from skimage.transform import resize

    h, w = u.shape[-2:]
    th, tw = shape
    if h * tw > w * th:
        ch = max(1, round(w * th / tw))
        top = (h - ch) // 2
        u = u[:, top: top + ch, :]
    else:
        cw = max(1, round(h * tw / th))
        left = (w - cw) // 2
        u = u[:, :, left: left + cw]
    if u.shape[-2:] == (th, tw):
        return u
    return np.stack([resize(c, (th, tw), order=1, anti_aliasing=True, mode="reflect") for c in u])


# experiments ---------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    images: tuple
    sigma: float = 0.05
    methods: tuple = (
        ("tv", "isotropic"),
        ("bregman", "isotropic"),
        ("color_bregman", "isotropic"),
        ("infconv", "isotropic"),
    )
    alphas: tuple = DEFAULT_ALPHAS
    seed: int = 0
    max_iters: int = 10
    omega: float | None = None
    shape: tuple | None = None
    tol: float = 1e-4
    max_inner: int = 2000

    def __post_init__(self):
        if not self.methods:
            raise ValueError("at least one method is required")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        for method, flavor in self.methods:
            if method not in METHODS:
                raise ValueError(f"unknown method {method!r}")
            TVFlavor(flavor)

    def alphas_for(self, method: str) -> tuple:
        if isinstance(self.alphas, dict):
            return tuple(self.alphas[method])
        return tuple(self.alphas)


@dataclass
class ResultRow:
    image: str
    method: str
    flavor: str
    alpha: float
    iteration: int
    psnr: float
    runtime: float
    status: str = "ok"


def weights_for(method: str, m: int, omega: float | None) -> WeightMatrix:
    if method in ("tv", "bregman") or m == 1:
        return WeightMatrix.identity(m)
    return WeightMatrix.default(m) if omega is None else WeightMatrix.uniform(m, omega)


def denoise_best(method, flavor, noisy, clean, alpha, max_iters, cfg, omega=None):
    """Run one method at one ``alpha``; returns ``(best_psnr, best_iteration, best_u)``."""
    m = noisy.shape[0]
    W = weights_for(method, m, omega)
    best = [-math.inf, 0, None]

    def track(state):
        val = psnr(state.u, clean)
        if val > best[0]:
            best[:] = [val, state.k, state.u]

    n = 1 if method == "tv" else max_iters
    runner = infconv_run if method == "infconv" else run
    runner(noisy, W, alpha, StopRule.fixed_iterations(n), cfg, on_step=track)
    return best[0], best[1], best[2]


def _prepare(spec: ExperimentSpec, idx: int, name: str):
    clean = fit_image(load_dataset_image(name), spec.shape)
    return clean, add_gaussian_noise(clean, spec.sigma, spec.seed + idx)


def run_job(spec: ExperimentSpec, idx: int, name: str, method: str, flavor: str) -> ResultRow | None:
    """Best-of-sweep result of one method on one image (``None`` if the image is unreadable)."""
    try:
        clean, noisy = _prepare(spec, idx, name)
    except Exception as exc:  # unreadable input is skipped, not fatal
        log.warning("skipping %s: %s", name, exc)
        return None
    cfg = AdmmConfig(tol_primal=spec.tol, tol_dual=spec.tol, max_inner=spec.max_inner,
                     flavor=TVFlavor(flavor), strict=False)
    best = ResultRow(name, method, flavor, math.nan, 0, -math.inf, 0.0)
    t0 = time.perf_counter()
    try:
        for alpha in spec.alphas_for(method):
            val, k, _ = denoise_best(method, flavor, noisy, clean, alpha, spec.max_iters, cfg, spec.omega)
            if val > best.psnr:
                best.alpha, best.iteration, best.psnr = alpha, k, val
    except (InnerSolverError, FloatingPointError) as exc:
        log.warning("%s/%s failed on %s: %s", method, flavor, name, exc)
        best.status = "failed"
        best.psnr = math.nan
    best.runtime = time.perf_counter() - t0
    return best


def run_experiment(spec: ExperimentSpec, csv_path=None, summary_path=None, jobs: int = 1) -> list[ResultRow]:
    """Best-of-sweep PSNR of every method on every image.

    Noise for image ``i`` is seeded with ``spec.seed + i``. Image x method jobs
    run on up to ``jobs`` worker processes; rows are sorted by (image, method,
    flavor) before anything is written, so the output does not depend on
    scheduling.
    """
    tasks = [(idx, name, method, flavor)
             for idx, name in enumerate(spec.images) for method, flavor in spec.methods]
    if jobs > 1 and len(tasks) > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_job, spec, *t) for t in tasks]
            results = [fut.result() for fut in futures]
    else:
        results = [run_job(spec, *t) for t in tasks]
    rows = sorted((r for r in results if r is not None), key=lambda r: (r.image, r.method, r.flavor))
    if csv_path is not None:
        atomic_write(csv_path, results_csv(rows))
    if summary_path is not None:
        atomic_write(summary_path, summary_table(rows))
    return rows


def results_csv(rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["image", "method", "flavor", "alpha", "iteration", "psnr", "status"])
    for r in rows:
        wr.writerow([r.image, r.method, r.flavor, repr(float(r.alpha)), r.iteration, f"{r.psnr:.17g}", r.status])
    for (method, flavor), val in method_means(rows).items():
        wr.writerow(["MEAN", method, flavor, "", "", f"{val:.17g}", ""])
    return buf.getvalue()


def method_means(rows) -> dict:
    groups: dict = {}
    for r in rows:
        groups.setdefault((r.method, r.flavor), []).append(r.psnr)
    return {key: float(np.mean(v)) for key, v in sorted(groups.items())}


def summary_table(rows) -> str:
    lines = [f"{'method':<16}{'flavor':<13}{'mean PSNR':>10}"]
    for (method, flavor), val in method_means(rows).items():
        lines.append(f"{method:<16}{flavor:<13}{val:>10.2f}")
    return "\n".join(lines) + "\n"
