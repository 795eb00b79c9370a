"""Split Bregman / ADMM solver for the ROF problem ``1/2||u - f||^2 + alpha*TV(u)``.

Leading dimensions of the data are solved as independent problems (one per
channel), each with its own penalty and stopping state, so a stacked call is
equivalent to separate calls channel by channel.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .dct import solve_screened_poisson
from .functionals import tv_value
from .grid import TVFlavor, as_field, divergence, gradient, shrink

log = logging.getLogger(__name__)

MU_MIN, MU_MAX = 1e-4, 1e4


@dataclass(frozen=True)
class AdmmConfig:
    """Inner solver settings.

    Tolerances are relative: the primal residual ``||grad u - d||`` and the
    dual residual ``mu*||div(d - d_prev)||`` are compared against
    ``tol * ||f||`` of the problem being solved.
    """

    mu0: float = 1.0
    adapt: bool = True
    tol_primal: float = 1e-5
    tol_dual: float = 1e-5
    max_inner: int = 5000
    flavor: TVFlavor = TVFlavor.ISOTROPIC
    strict: bool = True

    def __post_init__(self):
        if self.mu0 <= 0:
            raise ValueError("mu0 must be positive")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_inner < 1:
            raise ValueError("max_inner must be at least 1")
        object.__setattr__(self, "flavor", TVFlavor(self.flavor))


class InnerSolverError(RuntimeError):
    def __init__(self, message, channel=None, primal=None, dual=None, iterations=None):
        super().__init__(message)
        self.channel = channel
        self.primal = primal
        self.dual = dual
        self.iterations = iterations


@dataclass
class InnerSolution:
    u: np.ndarray
    d: np.ndarray
    b: np.ndarray
    q_out: np.ndarray
    mu: np.ndarray
    inner_iters: np.ndarray
    primal_residual: np.ndarray
    dual_residual: np.ndarray
    converged: np.ndarray

    def warm_start(self):
        return self.d, self.b, self.mu


def balance_penalty(mu: float, primal: float, dual: float) -> float:
    """Residual balancing: double/halve ``mu`` when one residual dominates by 10x."""
    if primal > 10.0 * dual:
        return min(mu * 2.0, MU_MAX)
    if dual > 10.0 * primal:
        return max(mu / 2.0, MU_MIN)
    return mu


def _norms(x: np.ndarray, ndim: int) -> np.ndarray:
    return np.sqrt(np.sum(x * x, axis=tuple(range(1, 1 + ndim))))


def solve_rof_with_prior(
    f_eff,
    alpha: float,
    cfg: AdmmConfig = AdmmConfig(),
    warm=None,
) -> InnerSolution:
    """Minimize ``1/2||u - f_eff||^2 + alpha*TV(u)`` by split Bregman.

    ``f_eff`` already contains any Bregman prior folded in (adding-back form).
    ``warm`` is an optional ``(d, b, mu)`` triple from a previous solve on the
    same grid. The returned ``q_out = (mu/alpha)*b`` is the dual field of the
    minimizer, so ``u - f_eff = alpha*divergence(q_out)`` at convergence.
    """
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    f = as_field(f_eff)
    if not np.all(np.isfinite(f)):
        raise ValueError("f_eff contains non-finite values")
    lead, (h, w) = f.shape[:-2], f.shape[-2:]
    f = f.reshape(-1, h, w)
    n = f.shape[0]

    if warm is None:
        d = np.zeros((n, 2, h, w))
        b = np.zeros((n, 2, h, w))
        mu = np.full(n, float(cfg.mu0))
    else:
        d0, b0, mu0 = warm
        d = np.array(d0, dtype=float).reshape(n, 2, h, w)
        b = np.array(b0, dtype=float).reshape(n, 2, h, w)
        mu = np.array(np.broadcast_to(mu0, lead), dtype=float).reshape(n)

    scale = _norms(f, 2)
    scale[scale == 0] = 1.0
    eps_p = cfg.tol_primal * scale
    eps_d = cfg.tol_dual * scale

    u = f.copy()
    active = np.ones(n, dtype=bool)
    iters = np.zeros(n, dtype=int)
    rp = np.full(n, np.inf)
    rd = np.full(n, np.inf)
    for it in range(1, cfg.max_inner + 1):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sel = slice(None) if idx.size == n else idx
        m = mu[sel][:, None, None]
        ua = solve_screened_poisson(f[sel] + m * divergence(b[sel] - d[sel]), 1.0, m)
        gu = gradient(ua)
        dn = shrink(gu + b[sel], (alpha / m)[:, None], cfg.flavor)
        diff = gu - dn
        rp_a = _norms(diff, 3)
        rd_a = mu[sel] * _norms(divergence(dn - d[sel]), 2)
        u[sel] = ua
        d[sel] = dn
        b[sel] = b[sel] + diff
        iters[sel] = it
        rp[sel] = rp_a
        rd[sel] = rd_a
        done = (rp_a <= eps_p[sel]) & (rd_a <= eps_d[sel])
        active[idx[done]] = False
        if cfg.adapt:
            for k in idx[~done]:
                new = balance_penalty(mu[k], rp[k] / eps_p[k], rd[k] / eps_d[k])
                if new != mu[k]:
                    b[k] *= mu[k] / new
                    mu[k] = new

    converged = ~active
    if not converged.all():
        k = int(np.flatnonzero(~converged)[0])
        msg = (
            f"ADMM did not converge in {cfg.max_inner} iterations "
            f"(problem {k}: primal {rp[k]:.3e} > {eps_p[k]:.3e} or dual {rd[k]:.3e} > {eps_d[k]:.3e})"
        )
        if cfg.strict:
            raise InnerSolverError(msg, channel=k, primal=rp[k], dual=rd[k], iterations=cfg.max_inner)
        log.warning(msg)

    q_out = (mu / alpha)[:, None, None, None] * b
    return InnerSolution(
        u=u.reshape(lead + (h, w)),
        d=d.reshape(lead + (2, h, w)),
        b=b.reshape(lead + (2, h, w)),
        q_out=q_out.reshape(lead + (2, h, w)),
        mu=mu.reshape(lead),
        inner_iters=iters.reshape(lead),
        primal_residual=rp.reshape(lead),
        dual_residual=rd.reshape(lead),
        converged=converged.reshape(lead),
    )


def objective_value(u, f_eff, alpha: float, flavor: TVFlavor = TVFlavor.ISOTROPIC) -> float:
    u = as_field(u)
    f = as_field(f_eff)
    return float(0.5 * np.sum((u - f) ** 2) + alpha * tv_value(u, flavor))
