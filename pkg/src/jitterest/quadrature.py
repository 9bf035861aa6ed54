"""Gauss quadrature rules from the Jacobi matrix (Golub-Welsch).

Nodes are the eigenvalues of the symmetric tridiagonal recurrence matrix of
the orthonormal polynomials; weights are ``mu0 * v_0**2`` where ``v_0`` is
the first component of each unit eigenvector and ``mu0`` the total mass of
the weight function.

Gauss-Hermite rules are normalized against the standard normal density, so
their weights sum to one and ``sum_j w_j f(sigma x_j + mu)`` approximates
``E[f(X)]`` for ``X ~ N(mu, sigma^2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

# above this jitter std the tan-remapped Gauss-Legendre rule is preferred
POLICY_THRESHOLD = 0.1

_EPS = np.finfo(float).eps


class Family(str, enum.Enum):
    GAUSS_HERMITE = "gh"
    GAUSS_LEGENDRE = "gl"
    GAUSS_LEGENDRE_TAN = "gl-tan"


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Fixed abscissas and positive weights for one rule family."""

    family: Family
    abscissas: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float] | None = None

    def __post_init__(self):
        x = np.array(self.abscissas, dtype=float)
        w = np.array(self.weights, dtype=float)
        if x.ndim != 1 or x.shape != w.shape or len(x) == 0:
            raise ValueError("abscissas and weights must be non-empty 1-D arrays of equal length")
        x.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "abscissas", x)
        object.__setattr__(self, "weights", w)

    @property
    def J(self) -> int:
        return len(self.abscissas)

    def __repr__(self):
        return f"QuadratureRule(family={self.family.value!r}, J={self.J})"


def tridiagonal_eigen(diag, offdiag, max_iter: int = 60):
    """Eigenvalues and first eigenvector components of a symmetric tridiagonal matrix.

    Uses implicit-shift QL iteration (Wilkinson shift), accumulating only
    the first row of the orthogonal transform.

    Parameters
    ----------
    diag : array_like, shape (J,)
        Main diagonal.
    offdiag : array_like, shape (J-1,)
        Sub/super diagonal.

    Returns
    -------
    eigenvalues : ndarray, shape (J,)
        In ascending order.
    first : ndarray, shape (J,)
        First component of each unit-norm eigenvector, sign fixed to be
        nonnegative.
    """
    d = [float(v) for v in np.asarray(diag, dtype=float).ravel()]
    e = [float(v) for v in np.asarray(offdiag, dtype=float).ravel()]
    n = len(d)
    if n == 0:
        raise ValueError("empty matrix")
    if len(e) != n - 1:
        raise ValueError(f"offdiag must have length {n - 1}, got {len(e)}")
    if not all(map(math.isfinite, d + e)):
        raise ValueError("non-finite entries in tridiagonal matrix")
    e.append(0.0)
    q = [0.0] * n
    q[0] = 1.0

    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= _EPS * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise RuntimeError(f"QL iteration did not converge for eigenvalue {l}")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            i = m - 1
            deflated = False
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    deflated = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                f = q[i + 1]
                q[i + 1] = s * q[i] + c * f
                q[i] = c * q[i] - s * f
                i -= 1
            if deflated:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0

    order = sorted(range(n), key=d.__getitem__)
    return np.array([d[k] for k in order]), np.abs(np.array([q[k] for k in order]))


def _golub_welsch(offdiag, mu0: float):
    x, v = tridiagonal_eigen(np.zeros(len(offdiag) + 1), offdiag)
    w = mu0 * v**2
    # zero-diagonal Jacobi matrices have symmetric spectra; enforce it exactly
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    return x, w


@lru_cache(maxsize=None)
def gauss_hermite_rule(J: int) -> QuadratureRule:
    """J-point Gauss-Hermite rule for the standard normal weight."""
    if int(J) != J or J < 1:
        raise ValueError(f"J must be a positive integer, got {J!r}")
    x, w = _golub_welsch(np.sqrt(np.arange(1, J, dtype=float)), 1.0)
    keep = w > 0  # far tail weights underflow for very large J
    return QuadratureRule(Family.GAUSS_HERMITE, x[keep], w[keep])


@lru_cache(maxsize=None)
def gauss_legendre_rule(J: int, a: float = -1.0, b: float = 1.0) -> QuadratureRule:
    """J-point Gauss-Legendre rule on ``[a, b]`` with unit weight."""
    if int(J) != J or J < 1:
        raise ValueError(f"J must be a positive integer, got {J!r}")
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    k = np.arange(1, J, dtype=float)
    x, w = _golub_welsch(k / np.sqrt(4.0 * k * k - 1.0), 2.0)
    half = 0.5 * (b - a)
    return QuadratureRule(Family.GAUSS_LEGENDRE, half * x + 0.5 * (a + b), half * w, (a, b))


def tan_remap(rule: QuadratureRule, weight_fn) -> QuadratureRule:
    """Map a rule on ``(-pi/2, pi/2)`` to the real line via ``x = tan(u)``.

    The returned rule approximates ``int f(x) weight_fn(x) dx`` by
    ``sum_j w'_j f(x'_j)`` with ``x'_j = tan(u_j)`` and
    ``w'_j = weight_fn(x'_j) (1 + x'_j**2) w_j``. Nodes whose weight
    underflows to zero are dropped.
    """
    u = rule.abscissas
    if np.any(np.abs(u) >= np.pi / 2):
        raise ValueError("abscissas must lie strictly inside (-pi/2, pi/2)")
    x = np.tan(u)
    w = np.asarray(weight_fn(x), dtype=float) * (1.0 + x * x) * rule.weights
    keep = w > 0
    return QuadratureRule(Family.GAUSS_LEGENDRE_TAN, x[keep], w[keep], (-np.inf, np.inf))


def normal_pdf(x, sigma: float = 1.0, mu: float = 0.0):
    return np.exp(-0.5 * ((x - mu) / sigma) ** 2) / (math.sqrt(2.0 * math.pi) * sigma)


@lru_cache(maxsize=None)
def normal_tan_rule(J: int, sigma: float) -> QuadratureRule:
    """Tan-remapped Gauss-Legendre rule for the ``N(0, sigma^2)`` weight."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0 for the remapped rule, got {sigma!r}")
    base = gauss_legendre_rule(J, -np.pi / 2, np.pi / 2)
    return tan_remap(base, lambda x: normal_pdf(x, sigma))


def integrate(rule: QuadratureRule, f, mu: float = 0.0, sigma: float = 1.0) -> float:
    """Apply ``rule`` to ``f``.

    For Gauss-Hermite rules this is ``sum_j w_j f(sigma x_j + mu)``. Other
    families already carry their weight function, so ``mu`` and ``sigma``
    are ignored and ``sum_j w_j f(x_j)`` is returned.
    """
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma!r}")
    x = rule.abscissas
    if rule.family is Family.GAUSS_HERMITE:
        x = sigma * x + mu
    try:
        fx = np.asarray(f(x), dtype=float)
        if fx.shape != x.shape:
            raise TypeError
    except TypeError:
        fx = np.array([f(v) for v in x], dtype=float)
    return float(np.dot(rule.weights, fx))


def select_rule(sigma_z: float, J: int, family: Family | str | None = None) -> QuadratureRule:
    """Jitter-integration rule: Gauss-Hermite up to ``POLICY_THRESHOLD``, remapped Legendre above.

    ``family`` overrides the policy.
    """
    if family is None:
        family = Family.GAUSS_HERMITE if sigma_z <= POLICY_THRESHOLD else Family.GAUSS_LEGENDRE_TAN
    family = Family(family)
    if family is Family.GAUSS_HERMITE:
        return gauss_hermite_rule(J)
    if family is Family.GAUSS_LEGENDRE_TAN:
        return normal_tan_rule(J, float(sigma_z))
    raise ValueError("plain Gauss-Legendre cannot integrate over the jitter distribution")


def jitter_nodes(rule: QuadratureRule, sigma_z: float):
    """Physical jitter nodes ``z_j`` and weights ``w_j`` for a selected rule."""
    if rule.family is Family.GAUSS_HERMITE:
        return sigma_z * rule.abscissas, rule.weights
    return rule.abscissas, rule.weights
