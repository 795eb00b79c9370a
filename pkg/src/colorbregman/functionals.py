"""Total variation, Bregman distances and subgradient checks.

A TV subgradient is carried by its dual vector field ``g`` (pointwise in the
dual-norm unit ball); the subgradient itself is ``p = -divergence(g)``, which
is the transpose of the forward-difference matrix applied to ``g``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import TVFlavor, as_field, divergence, dual_norm, gradient


def tv_value(u, flavor: TVFlavor = TVFlavor.ISOTROPIC) -> float:
    g = gradient(u)
    if TVFlavor(flavor) is TVFlavor.ANISOTROPIC:
        return float(np.abs(g).sum())
    return float(np.sqrt(g[..., 0, :, :] ** 2 + g[..., 1, :, :] ** 2).sum())


def channel_tv(u, flavor: TVFlavor = TVFlavor.ISOTROPIC) -> np.ndarray:
    """TV of each channel of a ``(M, H, W)`` stack."""
    u = as_field(u)
    return np.array([tv_value(c, flavor) for c in u.reshape(-1, *u.shape[-2:])])


def subgradient_from_dual(g: np.ndarray) -> np.ndarray:
    return -divergence(g)


def bregman_distance(v, j_of_v: float, p) -> float:
    """``J(v) - <p, v>`` for a one-homogeneous ``J`` and ``p`` in its subdifferential."""
    return float(j_of_v - np.vdot(np.asarray(p, dtype=float), as_field(v)))


def tv_bregman_distance(v, g, flavor: TVFlavor = TVFlavor.ISOTROPIC) -> float:
    """TV Bregman distance of ``v`` for the subgradient carried by the dual field ``g``."""
    return float(tv_value(v, flavor) - np.vdot(g, gradient(v)))


def _check_l1_dual(p: np.ndarray) -> None:
    if p.size and np.max(np.abs(p)) > 1.0 + 1e-12:
        raise ValueError(
            f"invalid l1 subgradient: max |p| = {np.max(np.abs(p)):.6g} exceeds 1"
        )


def l1_bregman_distance(v, p) -> float:
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_l1_dual(p)
    return float(np.sum((np.sign(v) - p) * v))


def l1_infconv_bregman(v, p) -> float:
    """Closed form of ``min_{phi+psi=v} D^p(phi) + D^{-p}(psi)`` for the l1 norm."""
    v = np.asarray(v, dtype=float)
    p = np.asarray(p, dtype=float)
    _check_l1_dual(p)
    return float(np.sum(np.abs(v) * (1.0 - np.abs(p))))


@dataclass(frozen=True)
class SubgradientReport:
    ok: bool
    dual_norm_excess: float
    duality_gap: float
    tv: float


def is_subgradient(
    u, g, flavor: TVFlavor = TVFlavor.ISOTROPIC, tol: float = 1e-6
) -> SubgradientReport:
    """Check that ``-divergence(g)`` is a TV subgradient of ``u``.

    Two conditions are tested: ``g`` lies in the dual-norm unit ball up to
    ``tol`` (absolute), and ``<g, gradient(u)>`` reproduces ``TV(u)`` up to
    ``tol * (1 + TV(u))``.
    """
    u = as_field(u)
    g = np.asarray(g, dtype=float)
    excess = float(max(np.max(dual_norm(g, flavor)) - 1.0, 0.0)) if g.size else 0.0
    tv = tv_value(u, flavor)
    gap = float(abs(np.vdot(g, gradient(u)) - tv))
    ok = excess <= tol and gap <= tol * (1.0 + tv)
    return SubgradientReport(ok=ok, dual_norm_excess=excess, duality_gap=gap, tv=tv)
