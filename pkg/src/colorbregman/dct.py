"""Direct Neumann solvers for ``(a - b*Laplacian) u = rhs`` via the orthonormal DCT-II."""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.fft


def dct2(u: np.ndarray) -> np.ndarray:
    return scipy.fft.dctn(np.asarray(u, dtype=float), type=2, norm="ortho", axes=(-2, -1))


def idct2(c: np.ndarray) -> np.ndarray:
    return scipy.fft.idctn(np.asarray(c, dtype=float), type=2, norm="ortho", axes=(-2, -1))


@lru_cache(maxsize=32)
def _neg_laplacian_symbol(height: int, width: int) -> np.ndarray:
    # eigenvalues of -Laplacian (replicate boundary) in the DCT-II basis
    ky = 2.0 - 2.0 * np.cos(np.pi * np.arange(height) / height)
    kx = 2.0 - 2.0 * np.cos(np.pi * np.arange(width) / width)
    sym = ky[:, None] + kx[None, :]
    sym.setflags(write=False)
    return sym


def neg_laplacian_symbol(height: int, width: int) -> np.ndarray:
    return _neg_laplacian_symbol(int(height), int(width))


def solve_screened_poisson(rhs: np.ndarray, a, b) -> np.ndarray:
    """Solve ``(a I - b Laplacian) u = rhs`` with Neumann boundary.

    ``a`` and ``b`` may be scalars or arrays broadcastable against the leading
    (channel) dimensions of ``rhs``, e.g. shape ``(M, 1, 1)``.
    """
    rhs = np.asarray(rhs, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0):
        raise ValueError(f"screened Poisson operator needs a > 0, got {a}")
    if np.any(b < 0):
        raise ValueError(f"screened Poisson operator needs b >= 0, got {b}")
    if not np.any(b):
        return rhs / a
    sym = neg_laplacian_symbol(*rhs.shape[-2:])
    return idct2(dct2(rhs) / (a + b * sym))


def solve_pure_poisson(rhs: np.ndarray, project_mean: bool = False) -> np.ndarray:
    """Zero-mean solution of ``-Laplacian u = rhs`` with Neumann boundary.

    The right-hand side must sum to zero over each grid. With
    ``project_mean=True`` its mean is removed first instead of rejecting it.
    """
    rhs = np.asarray(rhs, dtype=float)
    total = rhs.sum(axis=(-2, -1), keepdims=True)
    if project_mean:
        rhs = rhs - total / (rhs.shape[-2] * rhs.shape[-1])
    else:
        l1 = np.abs(rhs).sum(axis=(-2, -1), keepdims=True)
        if np.any(np.abs(total) > 1e-6 * l1 + 1e-300):
            raise ValueError(
                "incompatible Neumann Poisson right-hand side: "
                f"sum={float(np.max(np.abs(total))):.3e}"
            )
    sym = np.array(neg_laplacian_symbol(*rhs.shape[-2:]))
    sym[0, 0] = 1.0
    c = dct2(rhs) / sym
    c[..., 0, 0] = 0.0
    return idct2(c)
