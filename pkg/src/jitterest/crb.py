"""Cramer-Rao bounds for coefficient estimation from jittered samples.

The incomplete-data Fisher information ``I_y`` is the expected outer
product of the per-sample score, with the score from quadrature and the
expectation over ``y_n`` by Monte Carlo draws from the quadrature mixture.
The jitter-augmented information ``I_yz`` has the closed form
``sum_n E[h_n(z) h_n(z)^T] / sigma_w^2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.special import logsumexp

from .likelihood import LikelihoodContext, score
from .linear import MAX_CONDITION, IllConditionedError
from .model import ModelConfig, _check_x, basis_rows
from .quadrature import QuadratureRule, jitter_nodes

CRB_J = 1000
DEFAULT_S = 1000


class SingularFisherError(IllConditionedError):
    pass


@dataclass(frozen=True, eq=False)
class FisherEstimate:
    I_y: np.ndarray
    I_yz: np.ndarray
    crb_y: float
    crb_yz: float
    S: int
    J: int
    cond_y: float
    cond_yz: float
    crb_y_se: float  # batch-means Monte Carlo standard error of crb_y


def fisher_term(ctx: LikelihoodContext, n: int, y_n: float, x) -> np.ndarray:
    """Rank-one information contribution ``g g^T`` of a single observation."""
    g = score(ctx, n, y_n, x)
    return np.outer(g, g)


def _symmetrize(A):
    return 0.5 * (A + A.T)


def _batch_information(ctx: LikelihoodContext, x, S: int, seed, batches: int) -> np.ndarray:
    """Per-batch sums of score outer products, shape ``(batches, K, K)``.

    For each ``n`` in order, ``S`` observations are drawn from the
    quadrature mixture (node ``j`` with probability ``w_j / sum w``, then
    Gaussian noise) and split into ``batches`` contiguous groups.
    """
    cfg = ctx.cfg
    rng = np.random.default_rng(seed)
    p = ctx.weights / ctx.weights.sum()
    edges = np.linspace(0, S, batches + 1).round().astype(int)
    out = np.zeros((batches, cfg.K, cfg.K))
    s2 = cfg.sigma_w**2
    for n in range(cfg.N):
        rows = ctx.rows(n)
        means = rows @ x
        idx = rng.choice(len(p), size=S, p=p)
        ys = means[idx] + cfg.sigma_w * rng.standard_normal(S)
        resid = ys[:, None] - means[None, :]
        logc = ctx.log_weights - 0.5 * resid**2 / s2
        gamma = np.exp(logc - logsumexp(logc, axis=1, keepdims=True))
        g = (gamma * resid) @ rows / s2
        for b in range(batches):
            gb = g[edges[b]:edges[b + 1]]
            out[b] += gb.T @ gb
    return out


def fisher_incomplete(cfg: ModelConfig, x, S: int = DEFAULT_S, seed=0, J: int = CRB_J,
                      family=None, ctx: LikelihoodContext | None = None) -> np.ndarray:
    """Monte Carlo estimate ``(1/S) sum_n sum_s F_n(y_{n,s}; x)`` of ``I_y``."""
    if S < 1:
        raise ValueError("S must be >= 1")
    x = _check_x(cfg, x)
    ctx = ctx or LikelihoodContext(cfg, J, family)
    return _symmetrize(_batch_information(ctx, x, S, seed, 1)[0] / S)


def fisher_complete(cfg: ModelConfig, rule: QuadratureRule) -> np.ndarray:
    """Jitter-augmented information ``(1/sigma_w^2) sum_n sum_j w_j h_n(z_j) h_n(z_j)^T``."""
    z, w = jitter_nodes(rule, cfg.sigma_z)
    rows = basis_rows(cfg, np.arange(cfg.N)[:, None], z[None, :])
    G = (np.sqrt(w)[None, :, None] * rows).reshape(-1, cfg.K)
    return _symmetrize(G.T @ G) / cfg.sigma_w**2


def _inverse_trace(I, what):
    cond = np.linalg.cond(I)
    if not cond < MAX_CONDITION:
        raise SingularFisherError(f"{what} Fisher information is singular", cond)
    try:
        c = scipy.linalg.cho_factor(I)
    except np.linalg.LinAlgError as exc:
        raise SingularFisherError(f"{what} Fisher information is not positive definite", cond) from exc
    return float(np.trace(scipy.linalg.cho_solve(c, np.eye(len(I))))), float(cond)


def crb_values(cfg: ModelConfig, x, S: int = DEFAULT_S, seed=0, J: int = CRB_J, family=None,
               batches: int = 10) -> FisherEstimate:
    """Both bounds, ``trace(I_y^-1)`` and ``trace(I_yz^-1)``, with condition numbers.

    The standard error of ``crb_y`` comes from recomputing the bound on
    ``batches`` disjoint subsets of the Monte Carlo draws.
    """
    if S < 1:
        raise ValueError("S must be >= 1")
    x = _check_x(cfg, x)
    ctx = LikelihoodContext(cfg, J, family)
    parts = _batch_information(ctx, x, S, seed, max(1, min(batches, S)))
    I_y = _symmetrize(parts.sum(axis=0) / S)
    I_yz = fisher_complete(cfg, ctx.rule)
    crb_y, cond_y = _inverse_trace(I_y, "incomplete-data")
    crb_yz, cond_yz = _inverse_trace(I_yz, "complete-data")

    se = np.nan
    if len(parts) > 1:
        sizes = np.diff(np.linspace(0, S, len(parts) + 1).round())
        try:
            b = [_inverse_trace(_symmetrize(P / m), "batch")[0] for P, m in zip(parts, sizes)]
            se = float(np.std(b, ddof=1) / np.sqrt(len(b)))
        except SingularFisherError:
            pass
    return FisherEstimate(I_y, I_yz, crb_y, crb_yz, S, ctx.rule.J, cond_y, cond_yz, se)
