"""Finite sinc-basis signal model and synthetic jittered sampling.

The signal is ``x(t) = sum_k x_k sinc(t - k)`` with unit critical period.
Sample ``n`` is taken at the nominal time ``n / M`` perturbed by Gaussian
jitter ``z_n`` and corrupted by additive Gaussian noise ``w_n``::

    y_n = sum_k sinc(n/M + z_n - k) x_k + w_n,    i.e.  y = H(z) x + w
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# |pi t| below this uses the Taylor expansion of sin(u)/u
_SINC_TAYLOR = 1e-4


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions and noise levels of the sampling model.

    Parameters
    ----------
    K : int
        Number of basis coefficients.
    M : int
        Oversampling factor; ``N = K * M`` samples are taken.
    sigma_z : float
        Jitter standard deviation, in units of the critical period.
    sigma_w : float
        Additive noise standard deviation. Must be strictly positive.
    """

    K: int
    M: int
    sigma_z: float
    sigma_w: float
    T: float = field(default=1.0, init=False)

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        if not np.isfinite(self.sigma_z) or self.sigma_z < 0:
            raise ValueError(f"sigma_z must be finite and >= 0, got {self.sigma_z!r}")
        if not np.isfinite(self.sigma_w) or self.sigma_w <= 0:
            raise ValueError(f"sigma_w must be finite and > 0, got {self.sigma_w!r}")
        object.__setattr__(self, "K", int(self.K))
        object.__setattr__(self, "M", int(self.M))
        object.__setattr__(self, "sigma_z", float(self.sigma_z))
        object.__setattr__(self, "sigma_w", float(self.sigma_w))

    @property
    def N(self) -> int:
        return self.K * self.M

    @property
    def nominal_times(self) -> np.ndarray:
        return np.arange(self.N) / self.M

    def replace(self, **changes) -> "ModelConfig":
        kw = dict(K=self.K, M=self.M, sigma_z=self.sigma_z, sigma_w=self.sigma_w)
        kw.update(changes)
        return ModelConfig(**kw)


@dataclass(frozen=True)
class SampleSet:
    """Observations ``y`` plus, for synthetic data, the realized jitter and noise."""

    y: np.ndarray
    z: np.ndarray | None = None
    w: np.ndarray | None = None
    seed: int | None = None

    def __len__(self):
        return len(self.y)


def sinc(t):
    """Normalized sinc, ``sin(pi t) / (pi t)``, elementwise.

    Exactly 1 at ``t = 0``; near zero a Taylor expansion is used so no
    0/0 or cancellation occurs.
    """
    t = np.asarray(t, dtype=float)
    u = np.atleast_1d(np.pi * t)
    small = np.abs(u) < _SINC_TAYLOR
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.sin(u) / u
    u2 = u[small] ** 2
    out[small] = 1.0 - u2 / 6.0 + u2 * u2 / 120.0
    return out.reshape(t.shape) if t.ndim else float(out[0])


def _check_x(cfg: ModelConfig, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (cfg.K,):
        raise ValueError(f"coefficient vector must have shape ({cfg.K},), got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("coefficient vector has non-finite entries")
    return x


def basis_row(cfg: ModelConfig, n: int, z: float) -> np.ndarray:
    """Row ``h_n(z)`` of the basis matrix: ``sinc(n/M + z - k)`` for ``k < K``."""
    if not 0 <= n < cfg.N:
        raise IndexError(f"sample index {n} out of range [0, {cfg.N})")
    return np.atleast_1d(sinc(n / cfg.M + z - np.arange(cfg.K)))


def basis_rows(cfg: ModelConfig, n, z) -> np.ndarray:
    """Broadcast version of :func:`basis_row`; returns ``shape(n, z) + (K,)``."""
    t = np.asarray(n, dtype=float) / cfg.M + np.asarray(z, dtype=float)
    return np.atleast_1d(sinc(t[..., None] - np.arange(cfg.K)))


def build_H(cfg: ModelConfig, z) -> np.ndarray:
    """Jittered basis matrix ``H(z)`` of shape ``(N, K)``."""
    z = np.asarray(z, dtype=float)
    if z.shape != (cfg.N,):
        raise ValueError(f"jitter vector must have length {cfg.N}, got shape {z.shape}")
    return basis_rows(cfg, np.arange(cfg.N), z)


def evaluate(x, t) -> np.ndarray:
    """Evaluate the signal ``x(t)`` with coefficients ``x`` at times ``t``."""
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    return sinc(t[..., None] - np.arange(len(x))) @ x


def generate_samples(cfg: ModelConfig, x, seed: int, add_noise: bool = True) -> SampleSet:
    """Draw jittered noisy samples ``y = H(z) x + w`` for coefficients ``x``.

    ``z`` and ``w`` come from ``numpy.random.default_rng(seed)``, jitter
    first, so the output is a pure function of ``(cfg, x, seed)``. With
    ``add_noise=False`` the additive term is zero (the stream is still
    consumed, so ``z`` is unchanged).
    """
    x = _check_x(cfg, x)
    rng = np.random.default_rng(seed)
    z = cfg.sigma_z * rng.standard_normal(cfg.N)
    w = cfg.sigma_w * rng.standard_normal(cfg.N)
    if not add_noise:
        w = np.zeros(cfg.N)
    y = build_H(cfg, z) @ x + w
    return SampleSet(y=y, z=z, w=w, seed=seed)
