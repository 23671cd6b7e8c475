"""Kernel ridge regression and kernel gradient descent on training values."""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg

from .data import equispaced_circle, sample_sphere
from .errors import ConfigError, DivergenceError, SingularSystemError
from .kernels import _as_points, gram, kernel_from_dict, kernel_matrix, kernel_to_dict
from .spectral.sphere import gegenbauer_table

RESIDUAL_TOL = 1e-8
DIVERGENCE_FACTOR = 1e3
_REFINE_STEPS = 4


@dataclass
class KrrModel:
    """Dual solution ``alpha = (K + ridge I)^-1 y`` over ``train_points``."""

    alpha: np.ndarray
    ridge: float
    kernel: Any
    train_points: np.ndarray
    meta: dict = field(default_factory=dict)

    def predict(self, x):
        return krr_predict(self, x)

    def to_dict(self) -> dict:
        return {
            "kernel": kernel_to_dict(self.kernel),
            "ridge": self.ridge,
            "alpha": self.alpha.tolist(),
            "points": self.train_points.tolist(),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d) -> KrrModel:
        return cls(alpha=np.asarray(d["alpha"], dtype=float), ridge=float(d["ridge"]),
                   kernel=kernel_from_dict(d["kernel"]),
                   train_points=np.asarray(d["points"], dtype=float), meta=dict(d.get("meta", {})))

    @classmethod
    def from_json(cls, text) -> KrrModel:
        return cls.from_dict(json.loads(text))


def _spectral_solver(A, jitter):
    w, V = scipy.linalg.eigh(A)
    w = w + jitter
    cutoff = A.shape[0] * np.finfo(float).eps * max(abs(w).max(), 1e-300)
    inv = np.where(w > cutoff, 1.0 / np.where(w > cutoff, w, 1.0), 0.0)
    return lambda b: V @ (inv * (V.T @ b))


def krr_fit(kernel, X, y, ridge: float = 0.0) -> KrrModel:
    """Solve ``(K + ridge I) alpha = y``.

    A Cholesky factorization is tried first.  If it fails the system is solved
    in the eigenbasis of ``K + ridge I`` (pseudo-inverse below roundoff); a
    zero ridge then receives a jitter of ``1e-12 trace(K) / n``.  Iterative
    refinement follows, and the residual ``||(K + ridge I) alpha - y||`` must
    end below ``1e-8 ||y||``.

    Raises
    ------
    ConfigError
        Mismatched shapes or an invalid ridge.
    SingularSystemError
        The residual cannot be brought below tolerance, e.g. duplicated
        inputs with conflicting targets and no ridge.
    """
    X = _as_points(X)
    y = np.asarray(y, dtype=float).ravel()
    n = X.shape[0]
    if n < 1:
        raise ConfigError("krr_fit needs at least one point")
    if y.size != n:
        raise ConfigError(f"{n} points but {y.size} targets")
    if not np.all(np.isfinite(y)):
        raise ConfigError("targets must be finite")
    if not (math.isfinite(ridge) and ridge >= 0):
        raise ConfigError(f"ridge must be a nonnegative real, got {ridge!r}")
    K = gram(kernel, X).values
    A = K + ridge * np.eye(n)
    meta = {"solver": "cholesky", "jitter": 0.0}
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=False)
        solve = lambda b: scipy.linalg.cho_solve(factor, b, check_finite=False)  # noqa: E731
    except (np.linalg.LinAlgError, ValueError):
        jitter = 1e-12 * np.trace(K) / n if ridge == 0 else 0.0
        meta = {"solver": "eigh", "jitter": float(jitter)}
        solve = _spectral_solver(A, jitter)
    alpha = solve(y)
    y_norm = np.linalg.norm(y)
    resid = y - A @ alpha
    for _ in range(_REFINE_STEPS):
        if np.linalg.norm(resid) <= 0.1 * RESIDUAL_TOL * y_norm:
            break
        step = solve(resid)
        trial = alpha + step
        trial_resid = y - A @ trial
        if np.linalg.norm(trial_resid) >= np.linalg.norm(resid):
            break
        alpha, resid = trial, trial_resid
    rel = np.linalg.norm(resid) / y_norm if y_norm > 0 else np.linalg.norm(resid)
    meta["residual"] = float(rel)
    if not np.all(np.isfinite(alpha)) or rel > RESIDUAL_TOL:
        raise SingularSystemError(
            f"kernel system is singular (relative residual {rel:.2e}); use a positive ridge")
    return KrrModel(alpha=alpha, ridge=float(ridge), kernel=kernel, train_points=X, meta=meta)


def krr_predict(model: KrrModel, x):
    """``f(x) = sum_i alpha_i k(x, x_i)``; a single point gives a float."""
    xa = np.asarray(x, dtype=float)
    single = xa.ndim == 1
    P = np.atleast_2d(xa)
    if P.shape[1] != model.train_points.shape[1]:
        raise ConfigError("prediction point differs in dimension from the training data")
    vals = kernel_matrix(model.kernel, P, model.train_points) @ model.alpha
    return float(vals[0]) if single else vals


def training_error(model: KrrModel, y) -> float:
    """Mean squared error of the fitted model on its training points."""
    pred = krr_predict(model, model.train_points)
    return float(np.mean((pred - np.asarray(y, dtype=float)) ** 2))


@dataclass
class GdTrace:
    """Training MSE of kernel gradient descent per iteration."""

    step: float
    iterations: np.ndarray
    errors: np.ndarray
    converged_at: int | None
    final_values: np.ndarray | None = None

    @property
    def relative_errors(self) -> np.ndarray:
        e0 = self.errors[0]
        return self.errors / e0 if e0 > 0 else np.zeros_like(self.errors)

    def write_csv(self, fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "error"])
        for it, err in zip(self.iterations, self.errors):
            w.writerow([int(it), repr(float(err))])


def stable_step(K) -> float:
    """``n / lambda_max(K)``, i.e. ``1 / lambda_max(K / n)``."""
    lam_max = float(scipy.linalg.eigvalsh(K, subset_by_index=[K.shape[0] - 1, K.shape[0] - 1])[0])
    if lam_max <= 0:
        raise ConfigError("kernel matrix has no positive eigenvalue")
    return K.shape[0] / lam_max


def _gd_run(K, y, step, tol, max_iter, lam_max=None):
    n = K.shape[0]
    if not (math.isfinite(step) and step > 0):
        raise ConfigError(f"step must be positive, got {step!r}")
    if lam_max is None:
        lam_max = float(scipy.linalg.eigvalsh(K, subset_by_index=[n - 1, n - 1])[0])
    if step * lam_max >= 2.0 * n:
        warnings.warn(f"step {step:g} exceeds the stability limit {2 * n / lam_max:g}",
                      RuntimeWarning, stacklevel=3)
    f = np.zeros(n)
    r = f - y
    err0 = float(np.mean(r * r))
    errors = [err0]
    if err0 == 0.0:
        return GdTrace(step, np.arange(1), np.array(errors), 0, f)
    scale = step / n
    converged = None
    for it in range(1, max_iter + 1):
        f = f - scale * (K @ r)
        r = f - y
        err = float(np.mean(r * r))
        errors.append(err)
        if err > DIVERGENCE_FACTOR * err0 or not math.isfinite(err):
            raise DivergenceError(f"gradient descent diverged at iteration {it} (error {err:.3g})")
        if err <= tol * err0:
            converged = it
            break
    return GdTrace(step, np.arange(len(errors)), np.array(errors), converged, f)


def gd_simulate(kernel, X, y, step: float | None = None, tol: float = 1e-4,
                max_iter: int = 100_000) -> GdTrace:
    """Kernel gradient descent ``f <- f - (step / n) K (f - y)`` from ``f = 0``.

    Converges at the first iteration whose MSE is at most ``tol`` times the
    initial MSE.  The default step is ``n / lambda_max(K)``.

    Raises
    ------
    DivergenceError
        When the MSE exceeds ``1e3`` times its initial value.
    """
    X = _as_points(X)
    y = np.asarray(y, dtype=float).ravel()
    if y.size != X.shape[0]:
        raise ConfigError(f"{X.shape[0]} points but {y.size} targets")
    if not (tol > 0):
        raise ConfigError("tol must be positive")
    K = gram(kernel, X).values
    if step is None:
        step = stable_step(K)
    return _gd_run(K, y, float(step), tol, int(max_iter))


@dataclass
class LearnTimeTable:
    """Iterations needed to learn each frequency; ``None`` marks censoring."""

    frequencies: list[int]
    iterations: list[int | None]
    max_iter: int
    step: float

    def censored(self, k) -> bool:
        return self.iterations[self.frequencies.index(k)] is None

    def __getitem__(self, k):
        return self.iterations[self.frequencies.index(k)]

    def ratio(self, k_hi, k_lo) -> float:
        """``t(k_hi) / t(k_lo)``; ``inf`` when only ``k_hi`` is censored."""
        hi, lo = self[k_hi], self[k_lo]
        if lo is None:
            return math.nan
        if hi is None:
            return math.inf
        return hi / lo if lo > 0 else math.inf

    def write_csv(self, fh):
        """``k,iterations`` rows; a censored entry leaves the count empty."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "iterations"])
        for k, t in zip(self.frequencies, self.iterations):
            w.writerow([k, "" if t is None else t])


def learn_time_table(kernel, d: int, frequencies, n: int = 256, step: float | None = None,
                     tol: float = 1e-4, max_iter: int = 100_000, seed=0) -> LearnTimeTable:
    """Gradient-descent iterations to learn the zonal harmonic ``G_k(x . e_1)``.

    The training set is ``n`` equispaced points on S^1 for ``d = 2`` (targets
    ``cos(k theta)``) and ``n`` seeded uniform points on S^{d-1} otherwise.
    One step size, by default ``n / lambda_max(K)``, is shared by every
    frequency.
    """
    freqs = [int(k) for k in frequencies]
    if not freqs or any(k < 0 for k in freqs):
        raise ConfigError("frequencies must be nonnegative integers")
    if max(freqs) > n / 4:
        raise ConfigError(f"frequency {max(freqs)} is not resolvable by {n} points (need k <= n/4)")
    X = equispaced_circle(n) if d == 2 else sample_sphere(d, n, seed)
    K = gram(kernel, X).values
    lam_max = float(scipy.linalg.eigvalsh(K, subset_by_index=[n - 1, n - 1])[0])
    if step is None:
        step = n / lam_max
    G = gegenbauer_table(d, max(freqs), X[:, 0])
    times = []
    for k in freqs:
        trace = _gd_run(K, G[k], float(step), tol, int(max_iter), lam_max)
        times.append(trace.converged_at)
    return LearnTimeTable(freqs, times, int(max_iter), float(step))
