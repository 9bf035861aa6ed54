"""Marginal likelihood of jittered samples, with the jitter integrated out by quadrature.

Each sample's density is a J-component Gaussian mixture::

    p(y_n; x) ~= sum_j w_j N(y_n; h_n(z_j)^T x, sigma_w^2)

Everything is evaluated in the log domain with the largest component
factored out, so tiny ``sigma_w`` neither underflows nor overflows.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .model import ModelConfig, SampleSet, basis_rows
from .quadrature import Family, QuadratureRule, jitter_nodes, select_rule

DEFAULT_J = 100
LOG_FLOOR = math.log(1e-300)


class LikelihoodContext:
    """Model configuration plus the jitter quadrature nodes shared by all samples.

    Parameters
    ----------
    cfg : ModelConfig
    J : int
        Number of quadrature nodes requested (nodes with underflowing
        weight are dropped by the rule constructors).
    family : Family or str, optional
        Overrides the sigma_z based rule-selection policy.
    precompute : bool
        Keep the ``(N, J, K)`` tensor of basis rows at every node in memory.
        When False rows are rebuilt on demand.
    """

    def __init__(self, cfg: ModelConfig, J: int = DEFAULT_J, family: Family | str | None = None,
                 precompute: bool = True):
        self.cfg = cfg
        self.rule: QuadratureRule = select_rule(cfg.sigma_z, J, family)
        self.J = J
        self.nodes, self.weights = jitter_nodes(self.rule, cfg.sigma_z)
        self.log_weights = np.log(self.weights)
        self.precompute = precompute

    def __repr__(self):
        return f"LikelihoodContext({self.cfg}, rule={self.rule!r})"

    @property
    def family(self) -> Family:
        return self.rule.family

    @cached_property
    def _tensor(self) -> np.ndarray:
        return basis_rows(self.cfg, np.arange(self.cfg.N)[:, None], self.nodes[None, :])

    def rows(self, n=None) -> np.ndarray:
        """Basis rows ``h_n(z_j)``: ``(J, K)`` for one ``n``, ``(N, J, K)`` for all."""
        if n is None:
            if self.precompute:
                return self._tensor
            return basis_rows(self.cfg, np.arange(self.cfg.N)[:, None], self.nodes[None, :])
        if not 0 <= n < self.cfg.N:
            raise IndexError(f"sample index {n} out of range [0, {self.cfg.N})")
        if self.precompute:
            return self._tensor[n]
        return basis_rows(self.cfg, n, self.nodes)


def observations(y) -> np.ndarray:
    return np.asarray(y.y if isinstance(y, SampleSet) else y, dtype=float)


def log_components(rows, y, x, log_weights, sigma_w):
    """``log(w_j N(y; h_j^T x, sigma_w^2))`` and the residuals ``y - h_j^T x``.

    ``rows`` has shape ``(..., J, K)`` and ``y`` shape ``(...)``.
    """
    resid = np.asarray(y, dtype=float)[..., None] - rows @ x
    logc = log_weights - 0.5 * (resid / sigma_w) ** 2 - math.log(math.sqrt(2 * math.pi) * sigma_w)
    return logc, resid


def posterior(ctx: LikelihoodContext, y, x):
    """Posterior node probabilities for every sample.

    Returns
    -------
    gamma : ndarray, shape (N, J)
        ``w_j p(y_n | z_j; x) / p(y_n; x)``; rows sum to one.
    log_p : ndarray, shape (N,)
        ``log p(y_n; x)``.
    resid : ndarray, shape (N, J)
    """
    logc, resid = log_components(ctx.rows(), observations(y), x, ctx.log_weights, ctx.cfg.sigma_w)
    log_p = logsumexp(logc, axis=-1)
    with np.errstate(invalid="ignore"):
        gamma = np.exp(logc - log_p[:, None])
    return gamma, log_p, resid


def _one(ctx, n, y_n, x):
    x = np.asarray(x, dtype=float)
    logc, resid = log_components(ctx.rows(n), y_n, x, ctx.log_weights, ctx.cfg.sigma_w)
    return logc, resid


def marginal_pdf(ctx: LikelihoodContext, n: int, y_n: float, x) -> float:
    """Quadrature approximation of ``p(y_n; x)``."""
    logc, _ = _one(ctx, n, y_n, x)
    return float(np.exp(logsumexp(logc)))


def log_marginal_pdf(ctx: LikelihoodContext, n: int, y_n: float, x) -> float:
    logc, _ = _one(ctx, n, y_n, x)
    return float(logsumexp(logc))


def score(ctx: LikelihoodContext, n: int, y_n: float, x) -> np.ndarray:
    """Gradient of ``log p(y_n; x)`` in ``x``."""
    logc, resid = _one(ctx, n, y_n, x)
    gamma = np.exp(logc - logsumexp(logc))
    return (gamma * resid) @ ctx.rows(n) / ctx.cfg.sigma_w**2


def marginal_pdf_grad(ctx: LikelihoodContext, n: int, y_n: float, x) -> np.ndarray:
    """Gradient of the quadrature ``p(y_n; x)`` in ``x``.

    ``sum_j w_j (y_n - h_j^T x) h_j N(y_n; h_j^T x, sigma_w^2) / sigma_w^2``
    """
    logc, resid = _one(ctx, n, y_n, x)
    return (np.exp(logc) * resid) @ ctx.rows(n) / ctx.cfg.sigma_w**2


def log_marginal_pdfs(ctx: LikelihoodContext, y, x) -> np.ndarray:
    """``log p(y_n; x)`` for every sample, shape ``(N,)``."""
    logc, _ = log_components(ctx.rows(), observations(y), np.asarray(x, dtype=float),
                             ctx.log_weights, ctx.cfg.sigma_w)
    return logsumexp(logc, axis=-1)


def log_likelihood(ctx: LikelihoodContext, y, x) -> float:
    """Total log-likelihood ``sum_n log p(y_n; x)``, each term floored at ``log(1e-300)``."""
    y = observations(y)
    if y.shape != (ctx.cfg.N,):
        raise ValueError(f"expected {ctx.cfg.N} observations, got shape {y.shape}")
    return float(np.sum(np.maximum(log_marginal_pdfs(ctx, y, x), LOG_FLOOR)))
