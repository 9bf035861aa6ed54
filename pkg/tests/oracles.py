"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical kernels.
"""

import math

import numpy as np


def sturm_count(diag, offdiag, lam):
    """Number of eigenvalues of a symmetric tridiagonal matrix below ``lam``.

    Counts negative pivots of the LDL^T factorization of ``T - lam I``.
    """
    count = 0
    q = 1.0
    for i, d in enumerate(diag):
        e2 = offdiag[i - 1] ** 2 if i else 0.0
        q = d - lam - (e2 / q if i else 0.0)
        if q == 0.0:
            q = -1e-300
        count += q < 0
    return count


def bisection_eigenvalues(diag, offdiag, tol=1e-14):
    """All eigenvalues by Sturm-sequence bisection, ascending."""
    diag = [float(v) for v in diag]
    offdiag = [float(v) for v in offdiag]
    n = len(diag)
    # Gershgorin bounds
    r = [abs(offdiag[i - 1]) if i else 0.0 for i in range(n)]
    r = [r[i] + (abs(offdiag[i]) if i < n - 1 else 0.0) for i in range(n)]
    lo = min(d - ri for d, ri in zip(diag, r)) - 1.0
    hi = max(d + ri for d, ri in zip(diag, r)) + 1.0
    out = []
    for k in range(n):
        a, b = lo, hi
        while b - a > tol * max(1.0, abs(a), abs(b)):
            mid = 0.5 * (a + b)
            if sturm_count(diag, offdiag, mid) > k:
                b = mid
            else:
                a = mid
        out.append(0.5 * (a + b))
    return np.array(out)


def hermite_jacobi(J):
    """Jacobi matrix (diag, offdiag) of the probabilists' Hermite polynomials."""
    return np.zeros(J), np.sqrt(np.arange(1, J, dtype=float))


def legendre_jacobi(J):
    k = np.arange(1, J, dtype=float)
    return np.zeros(J), k / np.sqrt(4 * k * k - 1)


def normal_moment(k, sigma=1.0):
    """E[X^k] for X ~ N(0, sigma^2): (k-1)!! sigma^k for even k."""
    if k % 2:
        return 0.0
    return float(math.prod(range(k - 1, 0, -2))) * sigma**k


def legendre_moment(k, a=-1.0, b=1.0):
    return (b ** (k + 1) - a ** (k + 1)) / (k + 1)


def moment_error(abscissas, weights, k, exact):
    """Quadrature error of the k-th moment, relative to the absolute moment.

    Odd moments of symmetric weights are zero, so their error is scaled by
    ``sum w |x|^k`` instead of the exact value.
    """
    approx = float(np.dot(weights, abscissas**k))
    scale = max(abs(exact), float(np.dot(weights, np.abs(abscissas) ** k)))
    return abs(approx - exact) / scale if scale > 0 else abs(approx - exact)


def sinc(t):
    t = np.asarray(t, dtype=float)
    out = np.ones_like(t)
    nz = t != 0
    out[nz] = np.sin(np.pi * t[nz]) / (np.pi * t[nz])
    return out


def mixture_terms(nodes, weights, n, M, K, y, x, sigma_w):
    """Per-node basis rows, means and weighted Gaussian densities by explicit loops."""
    rows = np.array([[float(sinc(n / M + z - k)) for k in range(K)] for z in nodes])
    means = np.array([sum(r[k] * x[k] for k in range(K)) for r in rows])
    dens = np.array([w * math.exp(-0.5 * ((y - m) / sigma_w) ** 2) / (math.sqrt(2 * math.pi) * sigma_w)
                     for w, m in zip(weights, means)])
    return rows, means, dens
