"""Finite differences on a pixel grid and the shrinkage operators built on them.

Array conventions used throughout the package:

* a scalar field is an array of shape ``(..., H, W)``; a 1-D signal of length
  ``N`` is stored as ``(1, N)`` so that its differences live in the x component;
* a vector field is an array of shape ``(..., 2, H, W)`` with index 0 the x
  component (differences along columns) and index 1 the y component
  (differences along rows);
* a multichannel image is a scalar field with leading shape ``(M,)``.

Forward differences use replicate (Neumann) boundaries, and ``divergence`` is
the exact negative adjoint of ``gradient``.
"""
from __future__ import annotations

from enum import Enum

import numpy as np


class TVFlavor(str, Enum):
    ANISOTROPIC = "anisotropic"
    ISOTROPIC = "isotropic"


def as_field(u) -> np.ndarray:
    """Return ``u`` as a float array with at least two (grid) dimensions."""
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        return u.reshape(1, 1)
    if u.ndim == 1:
        return u[np.newaxis, :]
    return u


def gradient(u: np.ndarray) -> np.ndarray:
    u = as_field(u)
    g = np.empty(u.shape[:-2] + (2,) + u.shape[-2:])
    np.subtract(u[..., :, 1:], u[..., :, :-1], out=g[..., 0, :, :-1])
    g[..., 0, :, -1] = 0.0
    np.subtract(u[..., 1:, :], u[..., :-1, :], out=g[..., 1, :-1, :])
    g[..., 1, -1, :] = 0.0
    return g


def divergence(g: np.ndarray) -> np.ndarray:
    """Backward-difference divergence, ``<gradient(u), g> = -<u, divergence(g)>``."""
    g = np.asarray(g, dtype=float)
    gx = g[..., 0, :, :]
    gy = g[..., 1, :, :]
    out = np.zeros(gx.shape)
    if gx.shape[-1] > 1:
        out[..., :, :-1] += gx[..., :, :-1]
        out[..., :, 1:] -= gx[..., :, :-1]
    if gy.shape[-2] > 1:
        out[..., :-1, :] += gy[..., :-1, :]
        out[..., 1:, :] -= gy[..., :-1, :]
    return out


def laplacian(u: np.ndarray) -> np.ndarray:
    """Five-point Laplacian with Neumann boundary, ``divergence(gradient(u))``."""
    return divergence(gradient(u))


def shrink_scalar(x: float, t: float) -> float:
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    return float(np.sign(x) * max(abs(x) - t, 0.0))


def shrink_vector(v, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError(f"threshold must be nonnegative, got {t}")
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return np.zeros_like(v)
    return v * (max(norm - t, 0.0) / norm)


def dual_norm(g: np.ndarray, flavor: TVFlavor) -> np.ndarray:
    """Pointwise dual norm of a vector field (shape ``(..., H, W)``)."""
    g = np.asarray(g, dtype=float)
    if TVFlavor(flavor) is TVFlavor.ANISOTROPIC:
        return np.max(np.abs(g), axis=-3)
    return np.sqrt(g[..., 0, :, :] ** 2 + g[..., 1, :, :] ** 2)


def shrink(v: np.ndarray, t, flavor: TVFlavor) -> np.ndarray:
    """Proximal map of ``t * ||.||_1`` (anisotropic) or ``t * sum |.|_2`` (isotropic).

    ``v`` is a vector field ``(..., 2, H, W)``; ``t`` is a scalar or an array
    broadcastable against the leading dimensions, e.g. shape ``(M, 1, 1, 1)``.
    """
    t = np.asarray(t, dtype=float)
    if TVFlavor(flavor) is TVFlavor.ANISOTROPIC:
        return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)
    norm = np.square(v[..., 0:1, :, :])
    norm += np.square(v[..., 1:2, :, :])
    np.sqrt(norm, out=norm)
    scale = np.maximum(norm - t, 0.0)
    np.divide(scale, norm, out=scale, where=norm > 0)
    return v * scale


def project_dual_ball(v: np.ndarray, radius, flavor: TVFlavor) -> np.ndarray:
    """Projection onto the dual-norm ball, i.e. ``v - shrink(v, radius)``."""
    return v - shrink(v, radius, flavor)
