"""Spherical-harmonic spectra of zonal kernels.

A zonal kernel on S^{d-1} expands as

    k(x.z) = sum_k lambda_k sum_j Y_kj(x) Y_kj(z) = sum_k lambda_k N(d, k) G_k(x.z),

where ``G_k`` is the Gegenbauer polynomial of index ``(d-2)/2`` scaled to
``G_k(1) = 1`` and the harmonics are orthonormal under the uniform
probability measure.  The Funk-Hecke formula then gives

    lambda_k = w_d int_0^pi k(cos s) G_k(cos s) sin(s)^(d-2) ds,
    w_d = Gamma(d/2) / (sqrt(pi) Gamma((d-1)/2)),

which is integrated in the angle ``s`` rather than the cosine: kernels with a
kink at ``t = 1`` (Laplace, NTK) are smooth functions of the angle, so
Gauss-Legendre converges spectrally.

On S^1 the same convention reads ``k(cos s) = lambda_0 + 2 sum_k lambda_k cos(k s)``.
Another common normalization writes ``k = sum_k lambda'_k cos(k s) / c_k`` with
``c_0 = 4 pi^2`` and ``c_k = pi^2``; then ``lambda'_0 = 4 pi^2 lambda_0`` and
``lambda'_k = 2 pi^2 lambda_k``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..errors import ConfigError, DomainError, InsufficientDataError
from ..kernels import zonal_function
from .bessel import gauss_legendre

#: harmonic coefficients below this fraction of the largest one are reported as zero
ZERO_FLOOR = 1e-14
MEASURE = "UniformProbability"


def multiplicity(d: int, k: int) -> int:
    """Number of linearly independent degree-``k`` harmonics on S^{d-1}."""
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    if int(k) != k or k < 0:
        raise DomainError(f"frequency must be a nonnegative integer, got {k!r}")
    d, k = int(d), int(k)
    if k == 0:
        return 1
    if d == 2:
        return 2
    return (2 * k + d - 2) * math.comb(k + d - 3, k - 1) // k


def multiplicities(d: int, k_max: int) -> np.ndarray:
    return np.array([multiplicity(d, k) for k in range(k_max + 1)], dtype=float)


def gegenbauer_table(d: int, k_max: int, t) -> np.ndarray:
    """Rows ``G_0..G_kmax`` at cosines ``t``, normalized so ``G_k(1) = 1``.

    Uses ``(k + 2a) G_{k+1} = 2 (k + a) t G_k - k G_{k-1}`` with ``a = (d-2)/2``,
    which for d = 2 is the Chebyshev recurrence.
    """
    t = np.asarray(t, dtype=float)
    alpha = (d - 2) / 2.0
    G = np.empty((k_max + 1,) + t.shape)
    G[0] = 1.0
    if k_max >= 1:
        G[1] = t
    for k in range(1, k_max):
        G[k + 1] = (2.0 * (k + alpha) * t * G[k] - k * G[k - 1]) / (k + 2.0 * alpha)
    return G


def funk_hecke_weight(d: int) -> float:
    return math.exp(math.lgamma(d / 2.0) - 0.5 * math.log(math.pi) - math.lgamma((d - 1) / 2.0))


@dataclass
class Spectrum:
    """Harmonic eigenvalues ``lambda_0..lambda_K`` of a zonal kernel on S^{d-1}."""

    d: int
    eigenvalues: np.ndarray
    kernel: Any = None
    measure: str = MEASURE
    meta: dict = field(default_factory=dict)

    @property
    def k_max(self) -> int:
        return len(self.eigenvalues) - 1

    @property
    def multiplicities(self) -> np.ndarray:
        return multiplicities(self.d, self.k_max)

    def partial_traces(self) -> np.ndarray:
        """Cumulative ``sum_{k<=K} lambda_k N(d, k)``; tends to ``k(1)``."""
        return np.cumsum(self.eigenvalues * self.multiplicities)

    def reconstruct(self, t, k_max: int | None = None):
        """Truncated Mercer sum ``sum_k lambda_k N(d,k) G_k(t)``."""
        K = self.k_max if k_max is None else k_max
        G = gegenbauer_table(self.d, K, t)
        coef = self.eigenvalues[:K + 1] * self.multiplicities[:K + 1]
        return np.tensordot(coef, G, axes=1)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "lambda", "multiplicity"])
        for k, (lam, n) in enumerate(zip(self.eigenvalues, self.multiplicities)):
            w.writerow([k, repr(float(lam)), int(n)])

    def to_paper_s1(self) -> np.ndarray:
        """Coefficients in the ``c_0 = 4 pi^2, c_k = pi^2`` convention (d = 2)."""
        if self.d != 2:
            raise ConfigError("the c_k convention applies to S^1 only")
        scale = np.full(self.k_max + 1, 2 * math.pi ** 2)
        scale[0] = 4 * math.pi ** 2
        return self.eigenvalues * scale


def _apply_floor(lam):
    lam = np.asarray(lam, dtype=float).copy()
    top = np.abs(lam).max() if lam.size else 0.0
    lam[np.abs(lam) < ZERO_FLOOR * top] = 0.0
    return lam


def _check_quad(k_max, quad_points):
    if int(k_max) != k_max or k_max < 0:
        raise ConfigError("k_max must be a nonnegative integer")
    if quad_points is None:
        quad_points = max(512, 8 * int(k_max))
    if quad_points < 4 * k_max or quad_points < 2:
        raise ConfigError(f"quad_points={quad_points} cannot resolve frequency {k_max}; need >= 4*k_max")
    return int(quad_points)


def harmonic_coefficients(kernel, d: int, k_max: int, quad_points: int | None = None,
                          precision: int | None = None) -> Spectrum:
    """Funk-Hecke eigenvalues of a zonal kernel on S^{d-1}.

    Parameters
    ----------
    kernel : zonal kernel handle or callable ``t -> k(t)``
    d : int
        Ambient dimension (the sphere is S^{d-1}); d = 2 is the circle.
    k_max : int
        Highest frequency returned.
    quad_points : int, optional
        Gauss-Legendre nodes in the angle; default ``max(512, 8 * k_max)``.
    precision : int, optional
        Decimal digits for an extended-precision evaluation (mpmath).  Needed
        when eigenvalues fall below double-precision roundoff, e.g. Gaussian
        kernels at moderate frequency.
    """
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    d = int(d)
    quad_points = _check_quad(k_max, quad_points)
    k_max = int(k_max)
    f = zonal_function(kernel)
    if precision is not None:
        lam = _coefficients_mp(f, kernel, d, k_max, quad_points, precision)
        meta = {"quad_points": quad_points, "precision": precision}
        return Spectrum(d, lam, kernel=kernel, meta=meta)
    x, w = gauss_legendre(quad_points)
    s = 0.5 * math.pi * (x + 1.0)
    w = 0.5 * math.pi * w
    t = np.cos(s)
    weights = w * np.asarray(f(t), dtype=float)
    if d == 2:
        # Chebyshev polynomials in the angle are exactly cos(k s)
        basis = np.cos(np.outer(np.arange(k_max + 1), s))
    else:
        weights = weights * np.sin(s) ** (d - 2)
        basis = gegenbauer_table(d, k_max, t)
    lam = funk_hecke_weight(d) * (basis @ weights)
    return Spectrum(d, _apply_floor(lam), kernel=kernel, meta={"quad_points": quad_points})


def fourier_coefficients_s1(kernel, k_max: int, quad_points: int | None = None,
                            precision: int | None = None) -> Spectrum:
    """Eigenvalues on the circle: ``lambda_k = 1/pi int_0^pi k(cos s) cos(k s) ds``."""
    return harmonic_coefficients(kernel, 2, k_max, quad_points, precision)


def _mp_nodes(n_min, prec_bits):
    import mpmath
    from mpmath.calculus.quadrature import GaussLegendre

    degree = max(1, math.ceil(math.log2(n_min / 3.0)) + 1)
    return GaussLegendre(mpmath.mp).get_nodes(-1, 1, degree, prec_bits)


def _coefficients_mp(f, kernel, d, k_max, quad_points, digits):
    import mpmath

    evaluate = getattr(kernel, "eval_mp", None)
    if evaluate is None and hasattr(kernel, "base"):
        evaluate = getattr(kernel.base, "eval_mp", None)
    if evaluate is None:
        evaluate = f
    with mpmath.workdps(digits):
        nodes = _mp_nodes(max(96, quad_points // 4), mpmath.mp.prec)
        pi = mpmath.pi
        half = pi / 2
        alpha = mpmath.mpf(d - 2) / 2
        acc = [mpmath.mpf(0)] * (k_max + 1)
        for xi, wi in nodes:
            s = half * (xi + 1)
            t = mpmath.cos(s)
            wv = half * wi * evaluate(t)
            if d == 2:
                for k in range(k_max + 1):
                    acc[k] += wv * mpmath.cos(k * s)
                continue
            wv *= mpmath.sin(s) ** (d - 2)
            g_prev, g = mpmath.mpf(1), t
            acc[0] += wv
            if k_max >= 1:
                acc[1] += wv * t
            for k in range(1, k_max):
                g_prev, g = g, (2 * (k + alpha) * t * g - k * g_prev) / (k + 2 * alpha)
                acc[k + 1] += wv * g
        if d == 2:
            scale = 1 / pi
        else:
            scale = mpmath.gamma(mpmath.mpf(d) / 2) / (mpmath.sqrt(pi) * mpmath.gamma(mpmath.mpf(d - 1) / 2))
        lam = [scale * a for a in acc]
        # below this the sums are cancellation noise of the working precision
        top = max(abs(v) for v in lam)
        noise = top * mpmath.mpf(10) ** (10 - digits)
        lam = [v if abs(v) >= noise else mpmath.mpf(0) for v in lam]
    # keep full dynamic range: float64 covers magnitudes down to ~1e-308
    return np.array([float(v) for v in lam])


def _values(spectrum):
    if isinstance(spectrum, Spectrum):
        return np.asarray(spectrum.eigenvalues, dtype=float)
    return np.asarray(spectrum, dtype=float)


def decay_slope(spectrum, k_lo: int, k_hi: int):
    """Least-squares slope of ``log lambda_k`` against ``log k`` on [k_lo, k_hi].

    Nonpositive eigenvalues are skipped.  Returns ``(slope, r_squared)``.
    """
    lam = _values(spectrum)
    if k_lo < 1 or k_hi < k_lo:
        raise ConfigError("need 1 <= k_lo <= k_hi")
    k = np.arange(lam.size)
    use = (k >= k_lo) & (k <= k_hi) & (lam > 0)
    if use.sum() < 5:
        raise InsufficientDataError(f"only {int(use.sum())} positive eigenvalues in [{k_lo}, {k_hi}]")
    lx = np.log(k[use])
    ly = np.log(lam[use])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


def local_slope(spectrum, k: int) -> float:
    """Centered log-log derivative ``d log lambda / d log k`` at frequency ``k``."""
    lam = _values(spectrum)
    if k < 2 or k + 1 >= lam.size:
        raise ConfigError("local slope needs k-1 >= 1 and k+1 <= k_max")
    lo, hi = lam[k - 1], lam[k + 1]
    if lo <= 0 or hi <= 0:
        raise InsufficientDataError(f"nonpositive eigenvalue next to k={k}")
    return float((math.log(hi) - math.log(lo)) / (math.log(k + 1) - math.log(k - 1)))
