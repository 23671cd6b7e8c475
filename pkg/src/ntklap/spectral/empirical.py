"""Gram-matrix spectra and eigenvector structure on sampled data."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import ConfigError, DomainError, InsufficientDataError, NumericalError
from ..kernels import _as_points, gram

GRAM_CAP = 4000
MIN_DISK_SAMPLES = 200


def _eigh(K):
    try:
        w, V = scipy.linalg.eigh(K)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    return w[::-1], V[:, ::-1]


def empirical_gram_spectrum(kernel, points, cap: int = GRAM_CAP) -> np.ndarray:
    """Eigenvalues of the Gram matrix over ``points``, sorted descending."""
    X = _as_points(points)
    n = X.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least 2 points")
    if n > cap:
        raise ConfigError(f"{n} points exceed the Gram cap of {cap}")
    K = gram(kernel, X).values
    try:
        w = scipy.linalg.eigvalsh(K)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    return w[::-1].copy()


def index_decay_slope(eigenvalues, i_lo: int, i_hi: int):
    """Fit ``log lambda_i`` against ``log i`` (1-based rank) over [i_lo, i_hi].

    Returns ``(slope, r_squared)``; nonpositive eigenvalues are skipped.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if i_lo < 1 or i_hi < i_lo:
        raise ConfigError("need 1 <= i_lo <= i_hi")
    idx = np.arange(1, lam.size + 1)
    use = (idx >= i_lo) & (idx <= i_hi) & (lam > 0)
    if use.sum() < 5:
        raise InsufficientDataError(f"only {int(use.sum())} positive eigenvalues in [{i_lo}, {i_hi}]")
    lx, ly = np.log(idx[use]), np.log(lam[use])
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid ** 2)) / ss_tot if ss_tot > 0 else 1.0
    return float(slope), r2


@dataclass
class EigenfunctionReport:
    """Angular and radial structure of the leading Gram eigenvectors on the disk.

    Attributes
    ----------
    eigenvalues : (m,) array, descending
    eigenvectors : (n, m) array, unit columns
    angular_projection : (m, M+1) array
        Energy fraction of each eigenvector at angular frequencies 0..M.
    dominant_frequency : (m,) int array
    radial_fit : (m, 2) array
        ``(a, b)`` of the affine profile ``a r + b`` of the dominant component.
    radial_residual : (m,) array
        Relative misfit of that affine profile against a cubic radial profile.
    unexplained : (m,) array
        Relative norm of the eigenvector left outside the harmonic basis.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    angular_projection: np.ndarray
    dominant_frequency: np.ndarray
    radial_fit: np.ndarray
    radial_residual: np.ndarray
    unexplained: np.ndarray

    @property
    def concentration(self) -> np.ndarray:
        """Energy fraction in the dominant frequency."""
        return self.angular_projection.max(axis=1)

    def summary(self) -> dict:
        return {
            "eigenvalues": self.eigenvalues.tolist(),
            "dominant_frequency": self.dominant_frequency.tolist(),
            "concentration": self.concentration.tolist(),
            "radial_fit": [{"a": float(a), "b": float(b)} for a, b in self.radial_fit],
            "radial_residual": self.radial_residual.tolist(),
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)

    def write_csv(self, fh):
        """Two blocks: per-eigenvector fits, then the angular energy table."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "eigenvalue", "frequency", "concentration", "a", "b", "radial_residual"])
        for i, lam in enumerate(self.eigenvalues):
            a, b = self.radial_fit[i]
            w.writerow([i, repr(float(lam)), int(self.dominant_frequency[i]),
                        repr(float(self.concentration[i])), repr(float(a)), repr(float(b)),
                        repr(float(self.radial_residual[i]))])
        w.writerow([])
        w.writerow(["index"] + [f"m{m}" for m in range(self.angular_projection.shape[1])])
        for i, row in enumerate(self.angular_projection):
            w.writerow([i] + [repr(float(v)) for v in row])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            self.write_csv(fh)


def _harmonic_basis(r, phi, max_freq, radial_degree):
    cols, freq, trig, power = [], [], [], []
    for m in range(max_freq + 1):
        for j in range(radial_degree + 1):
            for s, fn in ((0, np.cos), (1, np.sin)):
                if m == 0 and s == 1:
                    continue
                cols.append(r ** j * fn(m * phi))
                freq.append(m)
                trig.append(s)
                power.append(j)
    return np.column_stack(cols), np.array(freq), np.array(trig), np.array(power)


def _analyze(v, r, phi, basis, freq, trig, power, max_freq, radial_degree):
    coef, *_ = np.linalg.lstsq(basis, v, rcond=None)
    energy = np.array([np.sum((basis[:, freq == m] @ coef[freq == m]) ** 2) for m in range(max_freq + 1)])
    total = energy.sum()
    share = energy / total if total > 0 else np.full(energy.shape, 1.0 / energy.size)
    m = int(np.argmax(share))
    sel = freq == m
    fitted = basis @ coef
    unexplained = np.linalg.norm(v - fitted) / np.linalg.norm(v)
    # rank-1 split of the dominant component into radial polynomial x angular phase
    table = np.zeros((radial_degree + 1, 2))
    table[power[sel], trig[sel]] = coef[sel]
    U, S, Vt = np.linalg.svd(table)
    profile = np.polynomial.polynomial.polyval(r, U[:, 0] * S[0])
    angular = Vt[0, 0] * np.cos(m * phi) + Vt[0, 1] * np.sin(m * phi)
    weight = np.abs(angular)
    A = np.column_stack([r, np.ones_like(r)])
    ab, *_ = np.linalg.lstsq(A * weight[:, None], profile * weight, rcond=None)
    denom = np.linalg.norm(profile * weight)
    resid = np.linalg.norm((A @ ab - profile) * weight) / denom if denom > 0 else 0.0
    return share, m, ab, resid, unexplained


def empirical_eigenfunctions(kernel, samples, n_top: int = 10, max_freq: int = 16,
                             radial_degree: int = 3) -> EigenfunctionReport:
    """Decompose the top Gram eigenvectors over disk samples.

    Each eigenvector is least-squares fitted by ``r^j cos(m phi)``,
    ``r^j sin(m phi)`` for ``j <= radial_degree`` and ``m <= max_freq``.  The
    energy of each frequency block gives the angular distribution.  The
    dominant block is factored into a radial polynomial times a single angular
    harmonic, and the polynomial is compared with its best affine
    approximation ``a r + b``.
    """
    X = _as_points(samples)
    n = X.shape[0]
    if X.shape[1] != 2:
        raise ConfigError("disk samples must be two-dimensional")
    if n < MIN_DISK_SAMPLES:
        raise InsufficientDataError(f"need at least {MIN_DISK_SAMPLES} samples, got {n}")
    if n > GRAM_CAP:
        raise ConfigError(f"{n} samples exceed the Gram cap of {GRAM_CAP}")
    r = np.hypot(X[:, 0], X[:, 1])
    if np.any(r > 1.0 + 1e-12):
        raise DomainError("samples must lie in the closed unit disk")
    if not 1 <= n_top <= n:
        raise ConfigError("n_top must be between 1 and the sample count")
    n_coef = (max_freq * 2 + 1) * (radial_degree + 1)
    if n_coef >= n:
        raise ConfigError("harmonic basis larger than the sample")
    phi = np.arctan2(X[:, 1], X[:, 0])
    w, V = _eigh(gram(kernel, X).values)
    w, V = w[:n_top], V[:, :n_top]
    basis, freq, trig, power = _harmonic_basis(r, phi, max_freq, radial_degree)
    shares, dom, fits, resid, unexp = [], [], [], [], []
    for i in range(n_top):
        share, m, ab, res, un = _analyze(V[:, i], r, phi, basis, freq, trig, power, max_freq, radial_degree)
        shares.append(share)
        dom.append(m)
        fits.append(ab)
        resid.append(res)
        unexp.append(un)
    return EigenfunctionReport(
        eigenvalues=w.copy(),
        eigenvectors=V.copy(),
        angular_projection=np.array(shares),
        dominant_frequency=np.array(dom, dtype=int),
        radial_fit=np.array(fits),
        radial_residual=np.array(resid),
        unexplained=np.array(unexp),
    )
