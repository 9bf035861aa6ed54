"""Linear estimators for the jittered sampling model.

``linear_unbiased`` applies the left pseudoinverse of ``E[H(z)]``, the
no-jitter estimator uses ``H(0)`` instead. ``blue_diagnostic`` evaluates
the BLUE formula, which needs the unknown coefficients to build the data
covariance; it is a diagnostic, not an estimator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import ModelConfig, basis_rows, build_H
from .likelihood import observations
from .quadrature import QuadratureRule, jitter_nodes

MAX_CONDITION = 1e12


class IllConditionedError(np.linalg.LinAlgError):
    """A linear system is too ill-conditioned to solve meaningfully."""

    def __init__(self, message, condition=np.inf):
        super().__init__(f"{message} (condition number {condition:.3g})")
        self.condition = condition


@dataclass(frozen=True, eq=False)
class ExpectedBasis:
    EH: np.ndarray
    rule_J: int


def expected_H(cfg: ModelConfig, rule: QuadratureRule) -> ExpectedBasis:
    """``E[H(z)]`` by quadrature: ``EH[n, k] = sum_j w_j sinc(n/M + z_j - k)``."""
    z, w = jitter_nodes(rule, cfg.sigma_z)
    rows = basis_rows(cfg, np.arange(cfg.N)[:, None], z[None, :])
    return ExpectedBasis(np.einsum("j,njk->nk", w, rows), rule.J)


def _qr(A):
    if not np.all(np.isfinite(A)):
        raise IllConditionedError("non-finite system matrix")
    Q, R = scipy.linalg.qr(A, mode="economic")
    cond = np.linalg.cond(R)
    if not cond < MAX_CONDITION:
        raise IllConditionedError("basis matrix is rank deficient or ill-conditioned", cond)
    return Q, R


def least_squares(A, y) -> np.ndarray:
    """``(A^T A)^{-1} A^T y`` through a thin QR factorization."""
    Q, R = _qr(np.asarray(A, dtype=float))
    return scipy.linalg.solve_triangular(R, Q.T @ y)


def pseudoinverse(A) -> np.ndarray:
    """Left pseudoinverse ``(A^T A)^{-1} A^T`` of a tall full-rank matrix."""
    Q, R = _qr(np.asarray(A, dtype=float))
    return scipy.linalg.solve_triangular(R, Q.T)


def _basis(EH):
    return EH.EH if isinstance(EH, ExpectedBasis) else np.asarray(EH, dtype=float)


def linear_unbiased(cfg: ModelConfig, EH, y) -> np.ndarray:
    """Unbiased linear estimate ``E[H(z)]^+ y``."""
    return least_squares(_basis(EH), observations(y))


def linear_nojitter(cfg: ModelConfig, y) -> np.ndarray:
    """Least squares with the jitter-free basis ``H(0)``."""
    return least_squares(build_H(cfg, np.zeros(cfg.N)), observations(y))


def data_variances(cfg: ModelConfig, x, rule: QuadratureRule) -> np.ndarray:
    """Diagonal of the data covariance, ``Var[h_n(z)^T x] + sigma_w^2``.

    Both moments of ``h_n(z)^T x`` come from the same quadrature rule.
    """
    z, w = jitter_nodes(rule, cfg.sigma_z)
    means = basis_rows(cfg, np.arange(cfg.N)[:, None], z[None, :]) @ np.asarray(x, dtype=float)
    var = means**2 @ w - (means @ w) ** 2
    return np.maximum(var, 0.0) + cfg.sigma_w**2


def blue_diagnostic(cfg: ModelConfig, x_assumed, y, rule: QuadratureRule,
                    EH: ExpectedBasis | None = None) -> np.ndarray:
    """BLUE ``(EH^T L^-1 EH)^-1 EH^T L^-1 y`` with ``L`` built from ``x_assumed``.

    Solved as row-weighted least squares. Weights are normalized by the
    smallest variance, so a scalar covariance gives unit weights and the
    result coincides bit for bit with :func:`linear_unbiased`.
    """
    if EH is None:
        EH = expected_H(cfg, rule)
    lam = data_variances(cfg, x_assumed, rule)
    s = np.sqrt(lam.min() / lam)
    return least_squares(s[:, None] * _basis(EH), s * observations(y))
