"""Neural tangent kernel of fully connected ReLU networks.

The kernel of an ``L``-layer network (``L - 1`` hidden layers) with biases
initialized at zero and scaled by ``beta`` is ``Theta^(L-1)`` of the recursion

    Sigma^(0)(x, z) = x.z,            Theta^(0) = Sigma^(0) + beta^2
    lam^(h-1)       = Sigma^(h-1)(x, z) / sqrt(Sigma^(h-1)(x, x) Sigma^(h-1)(z, z))
    Sigma^(h)       = (lam (pi - arccos lam) + sqrt(1 - lam^2)) / pi * sqrt(Sxx Szz)
    Sigma_dot^(h)   = (pi - arccos lam) / pi
    Theta^(h)       = Theta^(h-1) Sigma_dot^(h) + Sigma^(h) + beta^2

with the ReLU normalization ``c_sigma = 2`` already folded in.  For ReLU the
self-covariance is preserved, ``Sigma^(h)(x, x) = ||x||^2`` at every level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ConfigError, DegenerateInputError, DomainError, NumericalError
from .kernels import _as_points, _scalar_or_array, clamp_cosine, unit_chords

MAX_LAYERS = 64
#: self-products below this are treated as a zero input
TINY_SELF = 1e-300
#: tolerated roundoff in the layer correlation before clipping
LAMBDA_TOL = 1e-9


@dataclass(frozen=True)
class NtkConfig:
    """Fully connected ReLU network: ``layers`` in total, bias scale ``beta``."""

    layers: int = 2
    beta: float = 0.0
    normalize: bool = False

    def __post_init__(self):
        if int(self.layers) != self.layers or self.layers < 2:
            raise ConfigError(f"layers must be an integer >= 2, got {self.layers!r}")
        if self.layers > MAX_LAYERS:
            raise ConfigError(f"depth capped at {MAX_LAYERS} layers")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError(f"beta must be a nonnegative real, got {self.beta!r}")
        if self.normalize and self.beta != 0:
            raise ConfigError("the normalized NTK is defined for bias-free networks only")

    def __call__(self, x, z):
        return ntk_eval(self, x, z)

    def zonal(self, t):
        return ntk_zonal(self, t)

    def matrix(self, X, Z=None):
        X = _as_points(X)
        Z = X if Z is None else _as_points(Z)
        if X.shape[1] != Z.shape[1]:
            raise ConfigError("points differ in dimension")
        nx = (X * X).sum(1)
        nz = (Z * Z).sum(1)
        if self.beta == 0 and (np.any(nx < TINY_SELF) or np.any(nz < TINY_SELF)):
            raise DegenerateInputError("bias-free NTK undefined at the zero vector")
        theta, _ = _recursion(X @ Z.T, np.outer(nx, nz), self.layers, self.beta, _angles(X, Z, nx, nz))
        return theta / self.layers if self.normalize else theta

    def eval_mp(self, t):
        return _zonal_mp(self, t)

    def to_dict(self) -> dict[str, Any]:
        return {"family": "NtkFc", "layers": self.layers, "beta": self.beta, "normalize": self.normalize}

    @classmethod
    def from_dict(cls, d) -> NtkConfig:
        return cls(layers=int(d.get("layers", 2)), beta=float(d.get("beta", 0.0)),
                   normalize=bool(d.get("normalize", False)))


def _recursion(sigma, self_prod, layers, beta, angle=None):
    """Run the layer recursion.

    ``sigma`` holds ``Sigma^(0)(x, z)``; ``self_prod`` holds
    ``Sigma^(0)(x, x) * Sigma^(0)(z, z)``, which ReLU layers preserve.
    ``angle`` optionally gives ``arccos lam^(0)`` computed more accurately
    than from the cosine.  Returns ``(Theta^(L-1), Bias^(L))``.

    The correlation is carried as an angle: ``1 - kappa(cos s)`` is formed
    without cancellation, so nearly parallel inputs keep full accuracy
    instead of the ``sqrt(eps)`` error of ``arccos`` near 1.
    """
    sigma = np.asarray(sigma, dtype=float)
    self_prod = np.broadcast_to(np.asarray(self_prod, dtype=float), sigma.shape)
    scale = np.sqrt(self_prod)
    degenerate = self_prod < TINY_SELF
    if angle is None:
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = np.where(degenerate, 0.0, sigma / np.where(degenerate, 1.0, scale))
        if np.any(np.abs(lam) > 1.0 + LAMBDA_TOL):
            raise NumericalError(f"layer correlation {np.max(np.abs(lam))!r} exceeds 1")
        angle = np.arccos(np.clip(lam, -1.0, 1.0))
    half_pi = 0.5 * np.pi
    angle = np.where(degenerate, half_pi, angle)
    b2 = beta * beta
    theta = sigma + b2
    bias = np.full(sigma.shape, b2)
    for _ in range(layers - 1):
        sin_s, cos_s = np.sin(angle), np.cos(angle)
        sigma_dot = (np.pi - angle) / np.pi
        kappa = (sin_s + (np.pi - angle) * cos_s) / np.pi
        theta = theta * sigma_dot + kappa * scale + b2
        bias = bias * sigma_dot + b2
        gap = (2.0 * np.pi * np.sin(0.5 * angle) ** 2 - (sin_s - angle * cos_s)) / np.pi
        angle = 2.0 * np.arcsin(np.sqrt(np.clip(0.5 * gap, 0.0, 1.0)))
        angle = np.where(degenerate, half_pi, angle)
    return theta, bias


def _angles(X, Z, nx, nz):
    """Accurate ``arccos`` of the cosines between rows (zero rows give 0)."""
    rx = np.sqrt(nx)
    rz = np.sqrt(nz)
    Xn = X / np.where(rx > 0, rx, 1.0)[:, None]
    Zn = Z / np.where(rz > 0, rz, 1.0)[:, None]
    _, minus, plus = unit_chords(Xn, Zn)
    return 2.0 * np.arctan2(minus, plus)


def _pair(x, z):
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape:
        raise ConfigError("x and z differ in dimension")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise DomainError("inputs must be finite")
    return x, z


def _raw_eval(cfg: NtkConfig, x, z):
    x, z = _pair(x, z)
    sxx, szz = float(x @ x), float(z @ z)
    if cfg.beta == 0 and (sxx < TINY_SELF or szz < TINY_SELF):
        raise DegenerateInputError("bias-free NTK undefined at the zero vector")
    angle = _angles(x[None], z[None], np.array([sxx]), np.array([szz]))[0, 0]
    theta, bias = _recursion(float(x @ z), sxx * szz, cfg.layers, cfg.beta, angle)
    return float(theta), float(bias)


def ntk_eval(cfg: NtkConfig, x, z) -> float:
    """NTK value for a pair of vectors in R^d (divided by ``L`` if normalized)."""
    theta, _ = _raw_eval(cfg, x, z)
    return theta / cfg.layers if cfg.normalize else theta


def ntk_zonal(cfg: NtkConfig, t):
    """NTK on the unit sphere as a function of the cosine (vectorized)."""
    tc = clamp_cosine(t)
    theta, _ = _recursion(tc, 1.0, cfg.layers, cfg.beta)
    if cfg.normalize:
        theta = theta / cfg.layers
    return _scalar_or_array(theta, t)


def ntk_two_layer_closed_form(beta, u):
    """Two-layer NTK with bias on the sphere in closed form."""
    if not (math.isfinite(beta) and beta >= 0):
        raise ConfigError("beta must be a nonnegative real")
    uc = clamp_cosine(u)
    b2 = beta * beta
    vals = ((2 * uc + b2) * (np.pi - np.arccos(uc)) + np.sqrt(1 - uc * uc)) / np.pi + b2
    return _scalar_or_array(vals, u)


def bias_kernel(cfg: NtkConfig, x, z) -> float:
    """Bias component ``k_beta - k_0``; homogeneous of order 0."""
    if cfg.beta <= 0:
        raise ConfigError("bias kernel requires beta > 0")
    _, bias = _raw_eval(cfg, x, z)
    return bias


def bias_kernel_zonal(cfg: NtkConfig, t):
    if cfg.beta <= 0:
        raise ConfigError("bias kernel requires beta > 0")
    tc = clamp_cosine(t)
    _, bias = _recursion(tc, 1.0, cfg.layers, cfg.beta)
    return _scalar_or_array(bias, t)


def ntk_normalized(cfg: NtkConfig, x, z) -> float:
    """Bias-free NTK divided by the number of layers."""
    if cfg.beta != 0:
        raise ConfigError("the normalized NTK is defined for bias-free networks only")
    theta, _ = _raw_eval(cfg, x, z)
    return theta / cfg.layers


def _zonal_mp(cfg: NtkConfig, t):
    import mpmath

    pi = mpmath.pi
    b2 = mpmath.mpf(cfg.beta) ** 2
    sigma = max(min(mpmath.mpf(t), 1), -1)
    theta = sigma + b2
    for _ in range(cfg.layers - 1):
        lam = max(min(sigma, 1), -1)
        angle = mpmath.acos(lam)
        sigma_dot = (pi - angle) / pi
        sigma = (lam * (pi - angle) + mpmath.sqrt(1 - lam * lam)) / pi
        theta = theta * sigma_dot + sigma + b2
    return theta / cfg.layers if cfg.normalize else theta
