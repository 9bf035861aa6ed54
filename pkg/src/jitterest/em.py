"""EM approximation of the maximum-likelihood coefficient estimate.

The jitter is the latent variable. Given the previous estimate, the E-step
computes per-sample posterior moments of the basis row over the quadrature
nodes; the M-step solves the resulting ``K x K`` normal equations::

    (sum_n E[h_n h_n^T | y_n]) x = sum_n E[h_n | y_n] y_n
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .likelihood import (DEFAULT_J, LOG_FLOOR, LikelihoodContext, log_components, observations,
                         posterior)
from .linear import MAX_CONDITION, IllConditionedError, linear_nojitter
from .model import ModelConfig
from .quadrature import Family


class DegenerateSampleError(ArithmeticError):
    """The marginal density of some sample vanished even in the log domain."""


class Init(str, enum.Enum):
    NOJITTER = "nojitter"
    ZERO = "zero"
    TRUE = "true"
    RANDOM = "random"


class Termination(str, enum.Enum):
    MAX_ITER = "max_iter"
    DELTA_X = "delta_x"
    DELTA_LOGLIK = "delta_loglik"
    ILL_CONDITIONED = "ill_conditioned"
    DEGENERATE = "degenerate"


@dataclass(frozen=True)
class EmSettings:
    """Iteration controls. A threshold of zero disables that stopping test."""

    I_max: int = 100
    J: int = DEFAULT_J
    delta: float = 1e-8
    epsilon: float = 1e-8
    init: Init = Init.NOJITTER
    seed: int = 0
    family: Family | None = None

    def __post_init__(self):
        if self.I_max < 1 or self.J < 1:
            raise ValueError("I_max and J must be positive")
        if self.delta < 0 or self.epsilon < 0:
            raise ValueError("stopping thresholds must be nonnegative")
        object.__setattr__(self, "init", Init(self.init))


@dataclass
class EmTrace:
    iterates: list = field(default_factory=list)
    loglik: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    termination: Termination = Termination.MAX_ITER

    @property
    def final(self) -> np.ndarray:
        return self.iterates[-1]

    @property
    def iterations(self) -> int:
        return len(self.iterates) - 1

    def distance_to_final(self) -> np.ndarray:
        X = np.asarray(self.iterates)
        return np.linalg.norm(X - X[-1], axis=1)

    def loglik_gap(self) -> np.ndarray:
        ll = np.asarray(self.loglik)
        return ll[-1] - ll


def e_step_moments(ctx: LikelihoodContext, n: int, y_n: float, x_prev):
    """Posterior moments ``E[h_n(z) | y_n]`` and ``E[h_n(z) h_n(z)^T | y_n]`` for one sample."""
    rows = ctx.rows(n)
    logc, _ = log_components(rows, y_n, np.asarray(x_prev, dtype=float), ctx.log_weights,
                             ctx.cfg.sigma_w)
    top = logc.max()
    if not np.isfinite(top):
        raise DegenerateSampleError(f"sample {n} has zero marginal density")
    gamma = np.exp(logc - top)
    gamma /= gamma.sum()
    S1 = gamma @ rows
    S2 = (rows * gamma[:, None]).T @ rows
    return S1, 0.5 * (S2 + S2.T)


def e_step(ctx: LikelihoodContext, y, x_prev):
    """All-sample E-step.

    Returns
    -------
    S1 : ndarray, shape (N, K)
        Rows of ``E[H(z) | y; x_prev]``.
    S2 : ndarray, shape (K, K)
        ``E[H(z)^T H(z) | y; x_prev]``.
    loglik : float
        Log-likelihood at ``x_prev`` from the same quadrature.
    """
    gamma, log_p, _ = posterior(ctx, y, np.asarray(x_prev, dtype=float))
    if not np.all(np.isfinite(log_p)):
        raise DegenerateSampleError("some sample has zero marginal density")
    rows = ctx.rows()
    S1 = np.einsum("nj,njk->nk", gamma, rows)
    G = (np.sqrt(gamma)[:, :, None] * rows).reshape(-1, rows.shape[-1])
    S2 = G.T @ G
    loglik = float(np.sum(np.maximum(log_p, LOG_FLOOR)))
    return S1, 0.5 * (S2 + S2.T), loglik


def m_step(cfg: ModelConfig, S1, S2, y) -> np.ndarray:
    """Solve ``S2 x = S1^T y`` by Cholesky.

    ``S1`` may also be a single row for ``N = 1``; ``S2`` is the summed
    second-moment matrix.
    """
    S1 = np.atleast_2d(S1)
    S2 = np.atleast_2d(S2)
    y = np.atleast_1d(observations(y))
    cond = np.linalg.cond(S2)
    if not cond < MAX_CONDITION:
        raise IllConditionedError("M-step system is singular or ill-conditioned", cond)
    try:
        c = scipy.linalg.cho_factor(S2)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("M-step system is not positive definite", cond) from exc
    return scipy.linalg.cho_solve(c, S1.T @ y)


def initial_estimate(cfg: ModelConfig, y, settings: EmSettings, x_true=None) -> np.ndarray:
    y = observations(y)
    if settings.init is Init.NOJITTER:
        return linear_nojitter(cfg, y)
    if settings.init is Init.ZERO:
        return np.zeros(cfg.K)
    if settings.init is Init.TRUE:
        if x_true is None:
            raise ValueError("Init.TRUE needs x_true")
        return np.array(x_true, dtype=float)
    # scaled by the spread of the data so random starts are on a plausible scale
    rng = np.random.default_rng(settings.seed)
    return rng.standard_normal(cfg.K) * np.std(y)


def run_em(cfg: ModelConfig, y, settings: EmSettings = EmSettings(), ctx: LikelihoodContext | None = None,
           x0=None, x_true=None) -> EmTrace:
    """Iterate EM until a stopping rule fires.

    Stops when the iteration cap is reached, the estimate moves less than
    ``delta`` (2-norm), or the log-likelihood changes by less than
    ``epsilon``. An ill-conditioned M-step or a degenerate E-step ends the
    run at the last good iterate with the matching termination reason.

    Parameters
    ----------
    ctx : LikelihoodContext, optional
        Reused across calls to avoid rebuilding the node tensor; must
        match ``cfg``.
    x0 : array_like, optional
        Explicit starting point, overriding ``settings.init``.
    x_true : array_like, optional
        Needed only for ``Init.TRUE``.
    """
    if ctx is None:
        ctx = LikelihoodContext(cfg, settings.J, settings.family)
    elif ctx.cfg != cfg:
        raise ValueError("likelihood context was built for a different configuration")
    y = observations(y)
    x = initial_estimate(cfg, y, settings, x_true) if x0 is None else np.array(x0, dtype=float)

    trace = EmTrace()
    try:
        S1, S2, ll = e_step(ctx, y, x)
    except DegenerateSampleError:
        trace.iterates.append(x)
        trace.loglik.append(-np.inf)
        trace.termination = Termination.DEGENERATE
        return trace
    trace.iterates.append(x)
    trace.loglik.append(ll)

    for _ in range(settings.I_max):
        try:
            x_new = m_step(cfg, S1, S2, y)
            S1, S2, ll_new = e_step(ctx, y, x_new)
        except IllConditionedError:
            trace.termination = Termination.ILL_CONDITIONED
            return trace
        except DegenerateSampleError:
            trace.termination = Termination.DEGENERATE
            return trace
        step = float(np.linalg.norm(x_new - x))
        trace.iterates.append(x_new)
        trace.loglik.append(ll_new)
        trace.steps.append(step)
        if step < settings.delta:
            trace.termination = Termination.DELTA_X
            return trace
        if abs(ll_new - ll) < settings.epsilon:
            trace.termination = Termination.DELTA_LOGLIK
            return trace
        x, ll = x_new, ll_new
    trace.termination = Termination.MAX_ITER
    return trace
