"""Laplace-kernel eigenvalues on the sphere through the Fourier transform.

The Laplace kernel ``exp(-c ||x - z||)`` on R^d is the Fourier transform of

    Phi(t) = C (1 + t^2 / c^2)^(-(d+1)/2),   C = c_d / c^d,
    c_d = Gamma((d+1)/2) / pi^((d+1)/2),

(with the transform taken as ``int Phi(w) exp(2 pi i w.x) dw``).  Restricted to
S^{d-1}, its harmonic eigenvalues under the uniform probability measure are

    lambda_k = (2 pi)^d / |S^{d-1}| int_0^inf t Phi(t) J_nu(t)^2 dt,
    nu = k + (d - 2) / 2,

which gives an oracle independent of the Funk-Hecke quadrature.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, DomainError, NumericalError
from .bessel import bessel_j, gauss_legendre

#: Gauss-Legendre nodes per panel; a panel spans one half-period of J^2
_PANEL_NODES = 16
_CHECK_NODES = 10
DEFAULT_RTOL = 1e-4


def _check(d, c):
    if int(d) != d or d < 1:
        raise DomainError(f"dimension must be a positive integer, got {d!r}")
    if not (math.isfinite(c) and c > 0):
        raise DomainError(f"width c must be positive, got {c!r}")


def fourier_constant(d: int, c: float) -> float:
    """``Phi(0) = Gamma((d+1)/2) / (pi^((d+1)/2) c^d)``."""
    _check(d, c)
    return math.exp(math.lgamma((d + 1) / 2.0) - (d + 1) / 2.0 * math.log(math.pi) - d * math.log(c))


def laplace_fourier_transform(d: int, c: float, t):
    """Radial Fourier transform of ``exp(-c ||x||)`` in R^d at frequency ``t``."""
    _check(d, c)
    ta = np.asarray(t, dtype=float)
    if np.any(ta < 0) or not np.all(np.isfinite(ta)):
        raise DomainError("frequency must be finite and nonnegative")
    vals = fourier_constant(d, c) * (1.0 + (ta / c) ** 2) ** (-(d + 1) / 2.0)
    return float(vals) if np.ndim(t) == 0 else vals


def sphere_area(d: int) -> float:
    """Surface area of S^{d-1}."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


def _panel_rule(lo, hi, width, nodes):
    n_panels = max(1, math.ceil((hi - lo) / width))
    edges = np.linspace(lo, hi, n_panels + 1)
    g, gw = gauss_legendre(nodes)
    half = 0.5 * np.diff(edges)
    x = (edges[:-1, None] + half[:, None] * (g[None, :] + 1.0)).ravel()
    w = (half[:, None] * gw[None, :]).ravel()
    return x, w


def _bessel_quadrature(f, nu, cap):
    """``int_0^cap f(t) J_nu(t)^2 dt`` plus a lower-order check value."""
    x, w = _panel_rule(0.0, cap, 0.5 * math.pi, _PANEL_NODES)
    main = float(w @ (f(x) * bessel_j(nu, x) ** 2))
    x, w = _panel_rule(0.0, cap, 0.5 * math.pi, _CHECK_NODES)
    check = float(w @ (f(x) * bessel_j(nu, x) ** 2))
    return main, check


def laplace_sphere_eig(d: int, c: float, k: int, integration_cap: float | None = None,
                       measure: str = "probability", rtol: float = DEFAULT_RTOL) -> float:
    """Harmonic eigenvalue ``lambda_k`` of ``exp(-c ||x - z||)`` on S^{d-1}.

    Parameters
    ----------
    d, c, k : dimension, width, frequency
    integration_cap : float, optional
        Upper limit of the Bessel integral, default ``max(1000, 50 (k + d))``.
        Beyond it ``J_nu^2`` is replaced by its mean ``1 / (pi t)``.
    measure : {"probability", "lebesgue"}
        ``"lebesgue"`` returns the eigenvalue for the unnormalized surface
        measure (the probability value times ``|S^{d-1}|``).
    rtol : float
        Relative tolerance for the quadrature and tail diagnostics.

    Raises
    ------
    NumericalError
        If the two quadrature orders disagree, or the worst-case tail bound
        exceeds ``rtol``.
    """
    _check(d, c)
    if d < 2:
        raise DomainError("the sphere needs d >= 2")
    if int(k) != k or k < 0:
        raise DomainError(f"frequency must be a nonnegative integer, got {k!r}")
    if measure not in ("probability", "lebesgue"):
        raise ConfigError(f"unknown measure {measure!r}")
    cap = max(1000.0, 50.0 * (k + d)) if integration_cap is None else float(integration_cap)
    if cap <= 0:
        raise ConfigError("integration_cap must be positive")
    nu = k + (d - 2) / 2.0
    C = fourier_constant(d, c)
    expo = (d + 1) / 2.0

    def integrand(t):
        return t * C * (1.0 + (t / c) ** 2) ** (-expo)

    body, check = _bessel_quadrature(integrand, nu, cap)
    # tail with J^2 ~ 1/(pi t); Phi(t) <= C (c/t)^(d+1) bounds it by C c^(d+1) cap^-d / d
    tail_mean = C * c ** (d + 1) * cap ** (-d) / (d * math.pi)
    total = body + tail_mean
    if not total > 0:
        raise NumericalError(f"nonpositive Bessel integral at k={k}")
    if abs(body - check) > rtol * total:
        raise NumericalError(f"Bessel quadrature unresolved at k={k}: {body!r} vs {check!r}")
    # |J_nu(t)|^2 <= 2/(pi t) on the tail, so the mean-value error is at most tail_mean
    if tail_mean > rtol * total:
        raise NumericalError(f"integration_cap={cap} leaves a tail of {tail_mean / total:.2e} relative")
    scale = (2.0 * math.pi) ** d
    if measure == "probability":
        scale /= sphere_area(d)
    return scale * total


def watson_integral(k: int, d: int, c: float) -> float:
    """Closed form of ``int_0^inf x^-d J_{k+(d-2)/2}(c x)^2 dx`` for ``k >= 1``.

    ``(c/2)^(d-1) Gamma(d) Gamma(k - 1/2) / (2 Gamma((d+1)/2)^2 Gamma(k + d - 1/2))``
    """
    _check(d, c)
    if int(k) != k or k < 1:
        raise DomainError("the integral diverges at the origin for k < 1")
    log_val = ((d - 1) * math.log(c / 2.0) + math.lgamma(d) + math.lgamma(k - 0.5)
               - math.log(2.0) - 2.0 * math.lgamma((d + 1) / 2.0) - math.lgamma(k + d - 0.5))
    return math.exp(log_val)


def watson_integral_numeric(k: int, d: int, c: float, cap: float = 4000.0) -> float:
    """Direct quadrature of the integral in :func:`watson_integral`.

    Substituting ``t = c x`` gives ``c^(d-1) int t^-d J_nu(t)^2 dt``; the tail
    beyond ``cap`` uses the mean ``J^2 ~ 1/(pi t)``.
    """
    _check(d, c)
    if int(k) != k or k < 1:
        raise DomainError("the integral diverges at the origin for k < 1")
    nu = k + (d - 2) / 2.0
    body, _ = _bessel_quadrature(lambda t: t ** (-float(d)), nu, cap)
    tail = cap ** (-d) / (d * math.pi)
    return c ** (d - 1) * (body + tail)
