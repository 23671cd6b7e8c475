"""Exponential kernel family on the sphere and in ambient space.

The gamma-exponential kernel ``exp(-c * ||x - z||**gamma)`` restricted to the
unit sphere depends only on the cosine ``t = x.z``.  Two width conventions
are in use for the same kernel:

* chord:   ``k(t) = exp(-c * (2 - 2t)**(gamma/2))``   (``||x - z||`` on the sphere)
* angular: ``k(t) = exp(-c * (1 - t)**(gamma/2))``

For the Laplace kernel (gamma = 1) the two are related by
``c_angular = sqrt(2) * c_chord``; in general ``c_angular = 2**(gamma/2) * c_chord``.

Every zonal kernel may carry an affine modulation ``a + b * k(t)``; the
default ``a = 0, b = 1`` is the plain kernel.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, DegenerateInputError, DomainError, NtkLapError

FAMILIES = ("Laplace", "Gaussian", "GammaExp")
FAMILY_EXPONENT = {"Laplace": 1.0, "Gaussian": 2.0}

#: cosines beyond [-1, 1] by at most this much are treated as roundoff
CLAMP_TOL = 1e-9

#: environment variable holding the worker count for Gram assembly
THREADS_ENV = "NTKLAP_NUM_THREADS"


def clamp_cosine(t, tol=CLAMP_TOL):
    """Validate cosines and clip roundoff overshoot into [-1, 1]."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("cosine must be finite")
    if np.any(np.abs(t) > 1.0 + tol):
        worst = float(np.max(np.abs(t)))
        raise DomainError(f"cosine {worst!r} outside [-1, 1] beyond tolerance {tol:g}")
    return np.clip(t, -1.0, 1.0)


def _scalar_or_array(values, like):
    return float(values) if np.ndim(like) == 0 else values


@dataclass(frozen=True)
class ZonalKernelSpec:
    """An exponential-family kernel as a function of the cosine.

    Parameters
    ----------
    family : {"Laplace", "Gaussian", "GammaExp"}
    c : float
        Inverse width, ``c > 0``.
    gamma : float, optional
        Exponent in ``(0, 2]``.  Implied by the family for Laplace (1) and
        Gaussian (2); required for GammaExp.
    chord_param : bool
        Use the chord-length convention (default) rather than the angular one.
    a, b : float
        Affine modulation ``a + b * k(t)``.
    """

    family: str = "Laplace"
    c: float = 1.0
    gamma: float | None = None
    chord_param: bool = True
    a: float = 0.0
    b: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown kernel family {self.family!r}; expected one of {FAMILIES}")
        if not (math.isfinite(self.c) and self.c > 0):
            raise ConfigError(f"width parameter c must be positive, got {self.c!r}")
        if self.family == "GammaExp":
            if self.gamma is None:
                raise ConfigError("GammaExp requires gamma")
        elif self.gamma is not None and self.gamma != FAMILY_EXPONENT[self.family]:
            raise ConfigError(f"{self.family} has fixed gamma={FAMILY_EXPONENT[self.family]}")
        g = self.exponent
        if not (0.0 < g <= 2.0):
            raise ConfigError(f"gamma must lie in (0, 2], got {g!r}")
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ConfigError("modulation constants must be finite")

    @property
    def exponent(self) -> float:
        if self.gamma is None:
            return FAMILY_EXPONENT[self.family]
        return float(self.gamma)

    def __call__(self, t):
        return eval_zonal(self, t)

    def matrix(self, X, Z=None):
        return AmbientKernelSpec(self).matrix(X, Z)

    def eval_mp(self, t):
        """Evaluate at an mpmath scalar (used by the extended-precision spectra)."""
        import mpmath

        base = (1 - t) * (2 if self.chord_param else 1)
        if base < 0:
            base = mpmath.mpf(0)
        val = mpmath.exp(-mpmath.mpf(self.c) * base ** (mpmath.mpf(self.exponent) / 2))
        return mpmath.mpf(self.a) + mpmath.mpf(self.b) * val

    def with_params(self, **kw) -> ZonalKernelSpec:
        d = self.to_dict()
        d.pop("homogeneous", None)
        d.update(kw)
        return ZonalKernelSpec.from_dict(d)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family, "c": self.c, "chord_param": self.chord_param}
        if self.family == "GammaExp":
            out["gamma"] = self.gamma
        if self.a != 0.0 or self.b != 1.0:
            out["a"] = self.a
            out["b"] = self.b
        return out

    @classmethod
    def from_dict(cls, d) -> ZonalKernelSpec:
        known = {"family", "c", "gamma", "chord_param", "a", "b"}
        kw = {k: v for k, v in d.items() if k in known}
        if "c" in kw:
            kw["c"] = float(kw["c"])
        if kw.get("gamma") is not None:
            kw["gamma"] = float(kw["gamma"])
        return cls(**kw)


def eval_zonal(spec: ZonalKernelSpec, t):
    """Evaluate a zonal exponential kernel at cosine(s) ``t``."""
    tc = clamp_cosine(t)
    base = (2.0 - 2.0 * tc) if spec.chord_param else (1.0 - tc)
    base = np.maximum(base, 0.0)
    vals = np.exp(-spec.c * base ** (spec.exponent / 2.0))
    vals = spec.a + spec.b * vals
    return _scalar_or_array(vals, t)


@dataclass(frozen=True)
class AmbientKernelSpec:
    """A zonal kernel lifted to R^d.

    Non-homogeneous: the shift-invariant kernel ``exp(-c ||x - z||**gamma)``
    (angular convention rescales the distance by ``1/sqrt(2)``).
    Homogeneous: ``||x|| ||z|| k(x.z / (||x|| ||z||))``.
    """

    base: ZonalKernelSpec = field(default_factory=ZonalKernelSpec)
    homogeneous: bool = False

    def __call__(self, x, z):
        return eval_ambient(self, x, z)

    def zonal(self, t):
        return eval_zonal(self.base, t)

    def matrix(self, X, Z=None):
        X = _as_points(X)
        Z = X if Z is None else _as_points(Z)
        if X.shape[1] != Z.shape[1]:
            raise ConfigError("points differ in dimension")
        spec = self.base
        if self.homogeneous:
            rx = np.linalg.norm(X, axis=1)
            rz = np.linalg.norm(Z, axis=1)
            if np.any(rx == 0) or np.any(rz == 0):
                raise DegenerateInputError("homogeneous kernel undefined at the zero vector")
            _, minus, _ = unit_chords(X / rx[:, None], Z / rz[:, None])
            return np.outer(rx, rz) * _from_sq_chord(spec, minus ** 2)
        return _from_sq_chord(spec, _sq_dists(X, Z))

    def to_dict(self) -> dict[str, Any]:
        out = self.base.to_dict()
        out["homogeneous"] = self.homogeneous
        return out


def _from_sq_chord(spec, sq):
    # chord convention uses ||x - z||^2 = 2 - 2t on the sphere, angular uses 1 - t
    base = sq if spec.chord_param else sq / 2.0
    return spec.a + spec.b * np.exp(-spec.c * base ** (spec.exponent / 2.0))


#: pairs closer than this (relative) get their distance recomputed directly
_NEAR = 1e-2
_PAIR_CHUNK = 1 << 16


def _direct(X, Z, i, j, op):
    out = np.empty(i.size)
    for s in range(0, i.size, _PAIR_CHUNK):
        a, b = i[s:s + _PAIR_CHUNK], j[s:s + _PAIR_CHUNK]
        out[s:s + _PAIR_CHUNK] = np.linalg.norm(op(X[a], Z[b]), axis=1)
    return out


def _sq_dists(X, Z):
    """Squared distances; near pairs avoid the cancellation of the Gram expansion."""
    nx, nz = (X * X).sum(1), (Z * Z).sum(1)
    sq = np.maximum(nx[:, None] + nz[None, :] - 2.0 * X @ Z.T, 0.0)
    i, j = np.nonzero(sq <= _NEAR * (nx[:, None] + nz[None, :]))
    if i.size:
        sq[i, j] = _direct(X, Z, i, j, np.subtract) ** 2
    return sq


def unit_chords(Xn, Zn):
    """Cosines and the lengths ``||x - z||``, ``||x + z||`` for unit rows.

    Nearly parallel or antipodal pairs are recomputed from the vectors, which
    keeps the angle ``2 atan2(||x - z||, ||x + z||)`` accurate to roundoff.
    """
    cos = np.clip(Xn @ Zn.T, -1.0, 1.0)
    minus = np.sqrt(2.0 - 2.0 * cos)
    plus = np.sqrt(2.0 + 2.0 * cos)
    i, j = np.nonzero(np.abs(cos) >= 1.0 - _NEAR)
    if i.size:
        minus[i, j] = _direct(Xn, Zn, i, j, np.subtract)
        plus[i, j] = _direct(Xn, Zn, i, j, np.add)
    return cos, minus, plus


def _as_points(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2:
        raise ConfigError("points must be a 2-d array (n, d)")
    if not np.all(np.isfinite(X)):
        raise DomainError("points must be finite")
    return X


def eval_ambient(spec: AmbientKernelSpec, x, z) -> float:
    """Evaluate an ambient kernel on a single pair of vectors."""
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape:
        raise ConfigError("x and z differ in dimension")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise DomainError("inputs must be finite")
    if spec.homogeneous:
        rx, rz = np.linalg.norm(x), np.linalg.norm(z)
        if rx == 0 or rz == 0:
            raise DegenerateInputError("homogeneous kernel undefined at the zero vector")
        chord = float(np.linalg.norm(x / rx - z / rz))
        return rx * rz * float(_from_sq_chord(spec.base, chord * chord))
    dist = float(np.linalg.norm(x - z))
    if not spec.base.chord_param:
        dist /= math.sqrt(2.0)
    b = spec.base
    return b.a + b.b * math.exp(-b.c * dist ** b.exponent)


# ---------------------------------------------------------------------------
# generic kernel handles


def kernel_matrix(kernel, X, Z=None) -> np.ndarray:
    """Cross-kernel matrix for any supported kernel handle.

    ``kernel`` is a spec object with a ``matrix`` method, or a callable
    ``f(X, Z)`` vectorized over point rows.
    """
    if hasattr(kernel, "matrix"):
        return kernel.matrix(X, Z)
    if callable(kernel):
        X = _as_points(X)
        Z = X if Z is None else _as_points(Z)
        return np.asarray(kernel(X, Z), dtype=float)
    raise ConfigError(f"not a kernel: {kernel!r}")


def zonal_function(kernel) -> Callable:
    """The cosine profile ``t -> k(t)`` of a zonal kernel handle."""
    from .ntk import NtkConfig, ntk_zonal

    if isinstance(kernel, ZonalKernelSpec):
        return kernel
    if isinstance(kernel, AmbientKernelSpec):
        return kernel.base
    if isinstance(kernel, NtkConfig):
        return lambda t: ntk_zonal(kernel, t)
    if callable(kernel):
        return kernel
    raise ConfigError(f"not a zonal kernel: {kernel!r}")


def num_threads() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass
class GramMatrix:
    """Symmetric kernel matrix with PSD diagnostics."""

    values: np.ndarray
    _eigs: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def eigenvalues(self) -> np.ndarray:
        """Ascending eigenvalues (cached)."""
        if self._eigs is None:
            self._eigs = np.linalg.eigvalsh(self.values)
        return self._eigs

    def min_eig(self) -> float:
        return float(self.eigenvalues()[0])

    def max_eig(self) -> float:
        return float(self.eigenvalues()[-1])

    def is_symmetric(self, rtol=1e-14) -> bool:
        K = self.values
        return bool(np.all(np.abs(K - K.T) <= rtol * (1 + np.abs(K))))

    def is_psd(self, rel_tol=1e-8) -> bool:
        return self.min_eig() >= -rel_tol * max(self.max_eig(), 0.0)

    def normalized(self) -> GramMatrix:
        """Rescale so that every diagonal entry is one."""
        dg = np.diag(self.values)
        if np.any(dg <= 0):
            raise DomainError("diagonal normalization needs a positive diagonal")
        s = 1.0 / np.sqrt(dg)
        K = self.values * np.outer(s, s)
        np.fill_diagonal(K, 1.0)
        return GramMatrix(K)


def gram(kernel, points, block_rows=256) -> GramMatrix:
    """Assemble ``K[i, j] = k(x_i, x_j)``.

    Large problems are split into row blocks evaluated on a thread pool; each
    block owns its rows, so the result does not depend on scheduling.
    """
    X = _as_points(points)
    n = X.shape[0]
    if n < 1:
        raise ConfigError("gram needs at least one point")
    try:
        workers = num_threads()
        K = np.empty((n, n))
        starts = range(0, n, block_rows)

        def fill(s):
            K[s:s + block_rows] = kernel_matrix(kernel, X[s:s + block_rows], X)

        # the block layout is fixed, so the worker count cannot change the result
        if workers == 1 or n <= block_rows:
            for s in starts:
                fill(s)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(fill, starts))
    except NtkLapError as exc:
        i, j = _locate_failure(kernel, X)
        exc.pair = (i, j)
        raise type(exc)(f"{exc} (at points {i}, {j})") from exc
    K = 0.5 * (K + K.T)
    return GramMatrix(K)


def _locate_failure(kernel, X):
    n = X.shape[0]
    for i in range(n):
        try:
            kernel_matrix(kernel, X[i:i + 1], X)
        except NtkLapError:
            for j in range(n):
                try:
                    kernel_matrix(kernel, X[i:i + 1], X[j:j + 1])
                except NtkLapError:
                    return i, j
            return i, i
    return -1, -1


# ---------------------------------------------------------------------------
# serialization


def kernel_from_dict(d: dict):
    """Build a kernel handle from its JSON object form."""
    from .ntk import NtkConfig

    if not isinstance(d, dict) or "family" not in d:
        raise ConfigError("kernel spec must be a JSON object with a 'family' key")
    if d["family"] == "NtkFc":
        return NtkConfig.from_dict(d)
    base = ZonalKernelSpec.from_dict(d)
    return AmbientKernelSpec(base, homogeneous=bool(d.get("homogeneous", False)))


def kernel_from_json(text: str):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"kernel spec is not valid JSON: {exc}") from None
    return kernel_from_dict(obj)


def kernel_to_dict(kernel) -> dict:
    if hasattr(kernel, "to_dict"):
        return kernel.to_dict()
    raise ConfigError(f"kernel {kernel!r} is not serializable")
