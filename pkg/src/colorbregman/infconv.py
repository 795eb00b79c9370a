"""Infimal-convolution Bregman iteration.

Channel ``i`` is regularized by its own Bregman distance (weight ``w_ii``)
plus, for every other channel ``j``, the infimal convolution of the Bregman
distances to ``u_j`` and to ``-u_j`` (weight ``w_ij``). The latter only cares
whether an edge is present in channel ``j``, not which way it points.

Each outer step solves, per channel, by ADMM

    lam/2 ||u - f||^2 + w_ii (||d||_1 - <q_i, d>)
      + sum_j w_ij (||d_j+||_1 - <q_j, d_j+> + ||d_j-||_1 + <q_j, d_j->)

subject to ``grad u = d``, ``grad(u - phi_j) = d_j+``, ``grad phi_j = d_j-``,
and then sets ``q_i <- q_i + (mu/w_ii) b``. Here ``q`` are dual vector fields
(``p = -div q``) and ``lam = 1/alpha``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import AdmmConfig, InnerSolverError, balance_penalty
from .bregman import DiagnosticsRecord, StopRule, WeightMatrix, iterate, psnr
from .dct import solve_pure_poisson, solve_screened_poisson
from .functionals import channel_tv, tv_value
from .grid import TVFlavor, as_field, divergence, dual_norm, gradient, laplacian, shrink

log = logging.getLogger(__name__)


@dataclass
class ChannelBlock:
    """ADMM variables of one channel; the ``*_p``/``*_m`` arrays have one slice per other channel."""

    u: np.ndarray
    phi: np.ndarray
    d: np.ndarray
    d_p: np.ndarray
    d_m: np.ndarray
    b: np.ndarray
    b_p: np.ndarray
    b_m: np.ndarray
    mu: float
    inner_iters: int = 0
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    converged: bool = False

    @classmethod
    def fresh(cls, u0: np.ndarray, c: int, mu: float) -> "ChannelBlock":
        h, w = u0.shape
        z = np.zeros((2, h, w))
        zc = np.zeros((c, 2, h, w))
        return cls(
            u=u0.copy(),
            phi=np.repeat(0.5 * u0[np.newaxis], c, axis=0),
            d=z, d_p=zc, d_m=zc.copy(), b=z.copy(), b_p=zc.copy(), b_m=zc.copy(),
            mu=mu,
        )


def _others(i: int, m: int) -> np.ndarray:
    return np.array([j for j in range(m) if j != i], dtype=int)


def _w(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float)[:, None, None, None]


def block_energy(
    block: ChannelBlock, i: int, f: np.ndarray, q: np.ndarray, W: WeightMatrix, lam: float,
    flavor: TVFlavor,
) -> float:
    """Augmented energy of the split problem at fixed multipliers."""
    o = _others(i, W.m)
    wii, wij = W.entries[i, i], W.entries[i, o]
    l1 = _l1 if TVFlavor(flavor) is TVFlavor.ANISOTROPIC else _l21
    gu, gphi = gradient(block.u), gradient(block.phi)
    e = 0.5 * lam * np.sum((block.u - f[i]) ** 2)
    e += wii * (l1(block.d) - np.vdot(q[i], block.d))
    e += 0.5 * block.mu * np.sum((gu - block.d + block.b) ** 2)
    for n, j in enumerate(o):
        e += wij[n] * (l1(block.d_p[n]) - np.vdot(q[j], block.d_p[n]))
        e += wij[n] * (l1(block.d_m[n]) + np.vdot(q[j], block.d_m[n]))
        e += 0.5 * block.mu * np.sum((gu - gphi[n] - block.d_p[n] + block.b_p[n]) ** 2)
        e += 0.5 * block.mu * np.sum((gphi[n] - block.d_m[n] + block.b_m[n]) ** 2)
    return float(e)


def _l1(d):
    return float(np.abs(d).sum())


def _l21(d):
    return float(np.sqrt(d[0] ** 2 + d[1] ** 2).sum())


def solve_u_phi(block: ChannelBlock, f: np.ndarray, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Joint minimizer of the quadratic part over ``(u, phi_j)``.

    Eliminating ``phi_j`` leaves ``(lam - mu(c+2)/2 Lap) u = lam f + mu div(b - d + 1/2 sum_j s_j)``
    with ``s_j = b_j+ - d_j+ + b_j- - d_j-``; each ``phi_j`` then solves a Neumann Poisson problem.
    """
    c, mu = block.phi.shape[0], block.mu
    s = (block.b_p - block.d_p + block.b_m - block.d_m).sum(axis=0) if c else 0.0
    rhs = lam * f + mu * divergence(block.b - block.d + 0.5 * s)
    u = solve_screened_poisson(rhs, lam, mu * (c + 2) / 2.0)
    if not c:
        return u, block.phi
    phi_rhs = -0.5 * (laplacian(u)[np.newaxis] - divergence(block.d_p - block.b_p + block.b_m - block.d_m))
    phi = solve_pure_poisson(phi_rhs, project_mean=True)
    return u, phi


def infconv_inner_solve(
    i: int,
    f: np.ndarray,
    q: np.ndarray,
    W: WeightMatrix,
    lam: float,
    cfg: AdmmConfig = AdmmConfig(),
    warm: ChannelBlock | None = None,
    energy_log: list | None = None,
) -> ChannelBlock:
    """Solve the split problem of channel ``i`` given all channels' dual fields ``q``.

    ``f`` is the ``(M, H, W)`` data. With ``energy_log`` a list, the augmented
    energy is appended before and after each half sweep (small grids only).
    """
    m = W.m
    wii = W.entries[i, i]
    if wii <= 0:
        raise ValueError(f"diagonal weight w[{i},{i}] must be positive")
    o = _others(i, m)
    wij = W.entries[i, o]
    fi = f[i]
    c = o.size
    blk = ChannelBlock.fresh(fi, c, cfg.mu0 * lam) if warm is None else replace(warm)

    scale = float(np.linalg.norm(fi)) or 1.0
    eps_p = cfg.tol_primal * scale
    eps_d = cfg.tol_dual * scale * lam

    def energy():
        energy_log.append(block_energy(blk, i, f, q, W, lam, cfg.flavor))

    for it in range(1, cfg.max_inner + 1):
        mu = blk.mu
        if energy_log is not None:
            energy()
        u, phi = solve_u_phi(blk, fi, lam)
        blk.u, blk.phi = u, phi
        if energy_log is not None:
            energy()
        gu, gphi = gradient(u), gradient(phi)
        d = shrink(gu + blk.b + (wii / mu) * q[i], wii / mu, cfg.flavor)
        if c:
            t = _w(wij / mu)
            d_p = shrink(gu[np.newaxis] - gphi + blk.b_p + t * q[o], t, cfg.flavor)
            d_m = shrink(gphi + blk.b_m - t * q[o], t, cfg.flavor)
        else:
            d_p, d_m = blk.d_p, blk.d_m
        dd, dd_p, dd_m = d - blk.d, d_p - blk.d_p, d_m - blk.d_m
        blk.d, blk.d_p, blk.d_m = d, d_p, d_m
        if energy_log is not None:
            energy()
        res = gu - d
        res_p = gu[np.newaxis] - gphi - d_p
        res_m = gphi - d_m
        blk.b = blk.b + res
        blk.b_p = blk.b_p + res_p
        blk.b_m = blk.b_m + res_m
        primal = math.sqrt(np.sum(res ** 2) + np.sum(res_p ** 2) + np.sum(res_m ** 2))
        # Only d_j+ + d_j- enters the u-equation once phi is eliminated; the split
        # itself may slide along a flat set of minimizers when |q_j| = 1.
        dual_u = divergence(dd + 0.5 * (dd_p + dd_m).sum(axis=0)) if c else divergence(dd)
        dual = mu * float(np.linalg.norm(dual_u))
        blk.inner_iters, blk.primal_residual, blk.dual_residual = it, primal, dual
        if primal <= eps_p and dual <= eps_d:
            blk.converged = True
            break
        if cfg.adapt:
            new = balance_penalty(mu, primal / eps_p, dual / eps_d)
            if new != mu:
                r = mu / new
                blk.b, blk.b_p, blk.b_m = blk.b * r, blk.b_p * r, blk.b_m * r
                blk.mu = new
    else:
        blk.converged = False
    if not blk.converged:
        msg = (
            f"infconv ADMM for channel {i} did not converge in {cfg.max_inner} iterations "
            f"(worst constraint residual {blk.primal_residual:.3e} vs {eps_p:.3e}, dual {blk.dual_residual:.3e} vs {eps_d:.3e})"
        )
        if cfg.strict:
            raise InnerSolverError(msg, i, blk.primal_residual, blk.dual_residual, cfg.max_inner)
        log.warning(msg)
    return blk


def infconv_q_update(block: ChannelBlock, q_i: np.ndarray, w_ii: float, cfg: AdmmConfig = AdmmConfig()) -> np.ndarray:
    q_new = q_i + (block.mu / w_ii) * block.b
    excess = float(np.max(dual_norm(q_new, cfg.flavor))) - 1.0
    if excess > 10.0 * max(cfg.tol_primal, cfg.tol_dual):
        raise InnerSolverError(f"updated dual field violates the dual-norm bound by {excess:.3e}")
    return q_new


@dataclass
class InfconvState:
    k: int
    f: np.ndarray
    u: np.ndarray
    q: np.ndarray
    blocks: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @classmethod
    def initial(cls, f) -> "InfconvState":
        f = np.array(as_field(f), dtype=float)
        if f.ndim == 2:
            f = f[np.newaxis]
        return cls(k=0, f=f, u=np.zeros_like(f), q=np.zeros(f.shape[:1] + (2,) + f.shape[1:]))


def _shift_warm_start(blk: ChannelBlock, i: int, o: np.ndarray, W: WeightMatrix, dq: np.ndarray) -> ChannelBlock:
    # keep the shrinkage inputs b + (w/mu) q of the previous solve unchanged under the new q
    t = _w(W.entries[i, o] / blk.mu)
    return replace(
        blk,
        b=np.zeros_like(blk.b),
        b_p=blk.b_p - t * dq[o],
        b_m=blk.b_m + t * dq[o],
        converged=False,
    )


def stationarity_distances(state: InfconvState, flavor: TVFlavor) -> tuple[float, float]:
    """Max over channel pairs of ``D^{p_j}(u_i - z_ij, u_j)`` and ``D^{-p_j}(z_ij, -u_j)``."""
    m = state.f.shape[0]
    plus = minus = 0.0
    for i, blk in enumerate(state.blocks):
        for n, j in enumerate(_others(i, m)):
            z = blk.phi[n]
            v = state.u[i] - z
            plus = max(plus, tv_value(v, flavor) - float(np.vdot(state.q[j], gradient(v))))
            minus = max(minus, tv_value(z, flavor) + float(np.vdot(state.q[j], gradient(z))))
    return plus, minus


def infconv_step(
    state: InfconvState,
    W: WeightMatrix,
    alpha: float,
    cfg: AdmmConfig = AdmmConfig(),
    reference=None,
) -> InfconvState:
    f = state.f
    m = f.shape[0]
    if W.m != m:
        raise ValueError(f"weight matrix is {W.m}x{W.m} but image has {m} channels")
    lam = 1.0 / alpha
    blocks, q_new = [], state.q.copy()
    for i in range(m):
        warm = state.blocks[i] if state.blocks else None
        blk = infconv_inner_solve(i, f, state.q, W, lam, cfg, warm)
        q_new[i] = infconv_q_update(blk, state.q[i], W.entries[i, i], cfg)
        blocks.append(blk)
    dq = q_new - state.q
    blocks = [_shift_warm_start(b, i, _others(i, m), W, dq) for i, b in enumerate(blocks)]
    u = np.stack([b.u for b in blocks])
    new = InfconvState(k=state.k + 1, f=f, u=u, q=q_new, blocks=blocks)
    plus, minus = stationarity_distances(new, cfg.flavor)
    rec = DiagnosticsRecord(
        k=new.k,
        residual=float(np.linalg.norm(f - u)),
        dq=float(alpha * np.linalg.norm(divergence(dq))),
        tv=channel_tv(u, cfg.flavor).tolist(),
        psnr=psnr(u, reference) if reference is not None else math.nan,
        sym_bregman=float(-np.vdot(divergence(dq), u - state.u)),
        inner_iters=max(b.inner_iters for b in blocks),
        stationarity_plus=plus,
        stationarity_minus=minus,
    )
    new.diagnostics = state.diagnostics + [rec]
    return new


def infconv_run(
    f,
    W: WeightMatrix,
    alpha: float,
    stop: StopRule,
    cfg: AdmmConfig = AdmmConfig(),
    reference=None,
    on_step=None,
):
    """Run the infimal-convolution Bregman iteration; returns ``(u, diagnostics)``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    state = InfconvState.initial(f)
    ref = None if reference is None else np.asarray(reference, dtype=float).reshape(state.f.shape)

    def step(s):
        return infconv_step(s, W, alpha, cfg, ref)

    final, chosen = iterate(step, state, stop, on_step)
    return chosen.u.reshape(as_field(f).shape), final.diagnostics[: chosen.k]
