"""Hierarchical convolutional exponential kernel and kernel-to-NTK fitting.

C-Exp applies a normalized zonal kernel recursively over image windows:

    Theta0_ij = x_i . z_j                     (summed over channels)
    s_ij      = sum_{m in P} Theta_{i+m, j+m} + beta^2
    Theta'_ij = sqrt(s_ii s_jj) k(s_ij / sqrt(s_ii s_jj))
    K(x, z)   = sum_i Theta^(L)_ii

Only site-aligned pairs ``(i, i)`` enter the final trace, and a window sum at
``(i, i)`` only reads aligned pairs, so each layer is a single H x W map.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np
from scipy.special import expit

from .errors import ConfigError, DomainError, FitError, ParseError
from .kernels import FAMILIES, GramMatrix, ZonalKernelSpec, clamp_cosine, zonal_function
from .ntk import NtkConfig

GRAM_CAP = 500
PADDINGS = ("Zero",)


@dataclass(frozen=True)
class CExpConfig:
    """C-Exp layer stack.

    Parameters
    ----------
    base : ZonalKernelSpec or callable
        Modulated zonal kernel ``a + b k(t)``; a callable ``t -> k(t)`` is used
        as is.
    layers : int
        Number of kernel layers ``L >= 1``.
    beta : float
        Bias added to every window sum.
    window : int
        Odd side length of the square window.
    """

    base: Any = field(default_factory=ZonalKernelSpec)
    layers: int = 1
    beta: float = 0.0
    window: int = 3
    padding: str = "Zero"

    def __post_init__(self):
        if int(self.layers) != self.layers or self.layers < 1:
            raise ConfigError(f"layers must be an integer >= 1, got {self.layers!r}")
        if not (math.isfinite(self.beta) and self.beta >= 0):
            raise ConfigError(f"beta must be a nonnegative real, got {self.beta!r}")
        if int(self.window) != self.window or self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be an odd positive integer, got {self.window!r}")
        if self.padding not in PADDINGS:
            raise ConfigError(f"padding must be one of {PADDINGS}")
        if not callable(self.base):
            raise ConfigError("base must be a zonal kernel")
        if not float(self.base(1.0)) > 0:
            raise ConfigError("the modulated kernel must be positive at t = 1")

    def to_dict(self) -> dict:
        if not hasattr(self.base, "to_dict"):
            raise ConfigError("only ZonalKernelSpec bases serialize")
        return {"base": self.base.to_dict(), "layers": self.layers, "beta": self.beta,
                "window": self.window, "padding": self.padding}

    @classmethod
    def from_dict(cls, d) -> CExpConfig:
        if "base" not in d:
            raise ConfigError("C-Exp config needs a 'base' kernel")
        return cls(base=ZonalKernelSpec.from_dict(d["base"]), layers=int(d.get("layers", 1)),
                   beta=float(d.get("beta", 0.0)), window=int(d.get("window", 3)),
                   padding=d.get("padding", "Zero"))


def _as_image(img):
    a = np.asarray(img, dtype=float)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ConfigError("images must be H x W or H x W x C arrays")
    if not np.all(np.isfinite(a)):
        raise DomainError("pixel values must be finite")
    return a


def _window_sum(theta, window):
    """Zero-padded sum over a ``window x window`` neighbourhood (last two axes)."""
    if window == 1:
        return theta.copy()
    r = window // 2
    H, W = theta.shape[-2:]
    pad = [(0, 0)] * (theta.ndim - 2) + [(r, r), (r, r)]
    P = np.pad(theta, pad)
    out = np.zeros_like(theta)
    for di in range(window):
        for dj in range(window):
            out += P[..., di:di + H, dj:dj + W]
    return out


def _layer(k_mod, s_xz, s_xx, s_zz):
    norm = np.sqrt(s_xx * s_zz)
    live = norm > 0
    cos = np.zeros_like(s_xz)
    np.divide(s_xz, norm, out=cos, where=live)
    vals = np.asarray(k_mod(clamp_cosine(cos)), dtype=float)
    return np.where(live, norm * vals, 0.0)


def _self_maps(cfg, img):
    """Window sums ``s_ii`` of an image against itself at every layer."""
    k1 = float(cfg.base(1.0))
    theta = (img * img).sum(-1)
    out = []
    b2 = cfg.beta ** 2
    for _ in range(cfg.layers):
        s = _window_sum(theta, cfg.window) + b2
        out.append(s)
        theta = k1 * s
    return out, theta


def _cross(cfg, x, zs, self_x, self_zs):
    """Kernel between image ``x`` and a stack ``zs`` (n, H, W, C)."""
    b2 = cfg.beta ** 2
    theta = np.einsum("hwc,nhwc->nhw", x, zs)
    for h in range(cfg.layers):
        s = _window_sum(theta, cfg.window) + b2
        theta = _layer(cfg.base, s, self_x[h][None], self_zs[:, h])
    return theta.sum(axis=(1, 2))


def cexp_eval(cfg: CExpConfig, img_x, img_z) -> float:
    """C-Exp kernel value between two images of equal shape."""
    x, z = _as_image(img_x), _as_image(img_z)
    if x.shape != z.shape:
        raise ConfigError(f"image shapes differ: {x.shape} vs {z.shape}")
    if min(x.shape[:2]) < cfg.window:
        raise ConfigError("image smaller than the window")
    sx, _ = _self_maps(cfg, x)
    sz, _ = _self_maps(cfg, z)
    return float(_cross(cfg, x, z[None], sx, np.array(sz)[None])[0])


def cexp_gram(cfg: CExpConfig, images, normalize: bool = False, cap: int = GRAM_CAP) -> GramMatrix:
    """Gram matrix of C-Exp over a list of images, optionally with unit diagonal."""
    imgs = [_as_image(im) for im in images]
    n = len(imgs)
    if n < 1:
        raise ConfigError("need at least one image")
    if n > cap:
        raise ConfigError(f"{n} images exceed the Gram cap of {cap}")
    shape = imgs[0].shape
    if any(im.shape != shape for im in imgs):
        raise ConfigError("images must share one shape")
    if min(shape[:2]) < cfg.window:
        raise ConfigError("image smaller than the window")
    stack = np.stack(imgs)
    selfs = np.array([_self_maps(cfg, im)[0] for im in imgs])
    K = np.empty((n, n))
    for i in range(n):
        row = _cross(cfg, stack[i], stack[i:], selfs[i], selfs[i:])
        K[i, i:] = row
        K[i:, i] = row
    G = GramMatrix(K)
    return G.normalized() if normalize else G


# ---------------------------------------------------------------------------
# images


def load_images(path, sidecar=None) -> np.ndarray:
    """Read an image tensor (n, H, W, C) from CSV or raw binary.

    The JSON sidecar (default ``<path>.json``) holds ``height``, ``width``,
    ``channels`` and, for binary files, an optional numpy ``dtype`` (default
    little-endian float64).  CSV files carry one flattened H x W x C image per
    row.
    """
    path = Path(path)
    sidecar = Path(sidecar) if sidecar else path.with_name(path.name + ".json")
    try:
        meta = json.loads(sidecar.read_text())
        H, W, C = int(meta["height"]), int(meta["width"]), int(meta["channels"])
    except FileNotFoundError:
        raise ConfigError(f"missing sidecar {sidecar}") from None
    except (KeyError, ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad sidecar {sidecar}: {exc}") from None
    if min(H, W, C) < 1:
        raise ParseError("sidecar dimensions must be positive")
    size = H * W * C
    if path.suffix.lower() == ".csv":
        rows = []
        with open(path, newline="") as fh:
            for ln, row in enumerate(csv.reader(fh), start=1):
                if not row:
                    continue
                try:
                    vals = [float(v) for v in row]
                except ValueError:
                    raise ParseError(f"non-numeric pixel on line {ln}", lines=[ln]) from None
                if len(vals) != size:
                    raise ParseError(f"line {ln} holds {len(vals)} values, expected {size}", lines=[ln])
                rows.append(vals)
        flat = np.array(rows, dtype=float)
    else:
        flat = np.fromfile(path, dtype=np.dtype(meta.get("dtype", "<f8"))).astype(float)
        if flat.size % size:
            raise ParseError(f"{flat.size} values do not split into images of {size}")
    if flat.size == 0:
        raise ParseError(f"{path} holds no images")
    return flat.reshape(-1, H, W, C)


def patch_cosines(images, n_pairs: int = 200, window: int = 3, seed=0) -> np.ndarray:
    """Cosines between random pairs of normalized ``window x window x C`` patches."""
    imgs = np.stack([_as_image(im) for im in images])
    n, H, W, _ = imgs.shape
    if H < window or W < window:
        raise ConfigError("image smaller than the window")
    rng = np.random.default_rng(seed)
    out = []
    attempts = 0
    while len(out) < n_pairs:
        attempts += 1
        if attempts > 100 * n_pairs:
            raise DomainError("too many all-zero patches to sample cosines")
        pa, pb = [imgs[rng.integers(n), i:i + window, j:j + window].ravel()
                  for i, j in rng.integers(0, [H - window + 1, W - window + 1], size=(2, 2))]
        na, nb = np.linalg.norm(pa), np.linalg.norm(pb)
        if na == 0 or nb == 0:
            continue
        out.append(float(np.clip(pa @ pb / (na * nb), -1.0, 1.0)))
    return np.array(out)


# ---------------------------------------------------------------------------
# least-squares kernel fits


@dataclass
class KernelFit:
    """Fitted exponential kernel ``a + b exp(-c (2 - 2u)^(gamma/2))``."""

    family: str
    params: dict
    objective: float
    samples: np.ndarray
    initial_objective: float
    gradient_norm: float
    chord_param: bool = True

    @property
    def kernel(self) -> ZonalKernelSpec:
        p = self.params
        gamma = p.get("gamma") if self.family == "GammaExp" else None
        return ZonalKernelSpec(self.family, c=p["c"], gamma=gamma, chord_param=self.chord_param,
                               a=p["a"], b=p["b"])

    def to_dict(self) -> dict:
        out = {"family": self.family, "a": self.params["a"], "b": self.params["b"], "c": self.params["c"]}
        if self.family == "GammaExp":
            out["gamma"] = self.params["gamma"]
        out["objective"] = self.objective
        return out


class _Model:
    """Residual and Jacobian for the exponential family in unconstrained coordinates.

    Coordinates: ``log c``, then ``g`` with ``gamma = 2 sigmoid(g)`` for
    GammaExp, then ``a, b`` when affine.
    """

    def __init__(self, family, u, y, affine, chord):
        self.family = family
        self.affine = affine
        self.y = y
        D = (2.0 - 2.0 * u) if chord else (1.0 - u)
        self.D = np.maximum(D, 0.0)
        with np.errstate(divide="ignore"):
            self.logD = np.where(self.D > 0, np.log(np.where(self.D > 0, self.D, 1.0)), 0.0)
        self.free_gamma = family == "GammaExp"
        self.n_shape = 2 if self.free_gamma else 1

    def unpack(self, p):
        c = math.exp(p[0])
        i = 1
        if self.free_gamma:
            sig = float(expit(p[1]))
            gamma, i = 2.0 * sig, 2
        else:
            gamma, sig = (1.0 if self.family == "Laplace" else 2.0), None
        a, b = (p[i], p[i + 1]) if self.affine else (0.0, 1.0)
        return c, gamma, sig, a, b

    def residual_jac(self, p):
        c, gamma, sig, a, b = self.unpack(p)
        Dg = np.where(self.D > 0, self.D ** (gamma / 2.0), 0.0)
        e = np.exp(-c * Dg)
        r = a + b * e - self.y
        cols = [b * e * (-c * Dg)]
        if self.free_gamma:
            dgamma = 2.0 * sig * (1.0 - sig)
            cols.append(b * e * (-c * Dg * 0.5 * self.logD) * dgamma)
        if self.affine:
            cols += [np.ones_like(e), e]
        return r, np.column_stack(cols)

    def linear_init(self, logc, g):
        """Best ``a, b`` for fixed shape parameters."""
        p = [logc] + ([g] if self.free_gamma else [])
        if not self.affine:
            return np.array(p)
        c, gamma, *_ = self.unpack(np.array(p + [0.0, 1.0]))
        e = np.exp(-c * np.where(self.D > 0, self.D ** (gamma / 2.0), 0.0))
        A = np.column_stack([np.ones_like(e), e])
        ab, *_ = np.linalg.lstsq(A, self.y, rcond=None)
        return np.array(p + list(ab))


def _levenberg(model, p, max_iter=500, gtol=1e-8):
    r, J = model.residual_jac(p)
    f = float(r @ r)
    f_init = f
    mu = 1e-3
    scale = max(np.linalg.norm(model.y), 1e-300)
    for _ in range(max_iter):
        g = J.T @ r
        gnorm = np.linalg.norm(g) / (np.linalg.norm(J) * scale + 1e-300)
        if gnorm <= gtol or f <= 1e-30 * scale ** 2:
            return p, f, f_init, gnorm, True
        JTJ = J.T @ J
        diag = np.maximum(np.diag(JTJ), 1e-12)
        improved = False
        for _ in range(40):
            try:
                step = -np.linalg.solve(JTJ + mu * np.diag(diag), g)
            except np.linalg.LinAlgError:
                mu *= 10
                continue
            trial = p + step
            if not np.all(np.isfinite(trial)) or np.abs(trial[:model.n_shape]).max() > 50:
                mu *= 10
                continue
            r_t, J_t = model.residual_jac(trial)
            f_t = float(r_t @ r_t)
            if np.isfinite(f_t) and f_t < f:
                stalled = f - f_t <= 1e-15 * f
                p, r, J, f = trial, r_t, J_t, f_t
                mu = max(mu / 3, 1e-12)
                improved = True
                break
            mu *= 10
        if not improved or stalled:
            g = J.T @ r
            gnorm = np.linalg.norm(g) / (np.linalg.norm(J) * scale + 1e-300)
            return p, f, f_init, gnorm, gnorm <= gtol * 1e3
    g = J.T @ r
    gnorm = np.linalg.norm(g) / (np.linalg.norm(J) * scale + 1e-300)
    return p, f, f_init, gnorm, gnorm <= gtol


def fit_kernel(family: str, u, target, affine: bool = False, chord_param: bool = True,
               n_starts: int = 8, seed=0) -> KernelFit:
    """Least-squares fit of an exponential-family kernel to target values.

    Minimizes ``sum_u (k(u) - target(u))^2`` by Levenberg-Marquardt from
    ``n_starts`` seeded starting points; ``c`` is optimized in log space and
    the GammaExp exponent through ``gamma = 2 sigmoid(g)``.

    Parameters
    ----------
    family : {"Laplace", "Gaussian", "GammaExp"}
    u : array of cosines in [-1, 1]
    target : array of values at ``u``, or a callable / kernel handle
    affine : bool
        Also fit the modulation ``a + b k``.

    Raises
    ------
    FitError
        No start reached a stationary point; ``best`` holds the best fit.
    """
    if family not in FAMILIES:
        raise ConfigError(f"unknown kernel family {family!r}")
    u = clamp_cosine(np.asarray(u, dtype=float).ravel())
    y = np.asarray(target(u) if callable(target) else target, dtype=float).ravel()
    if y.shape != u.shape:
        raise ConfigError("target values must match the cosine grid")
    if not np.all(np.isfinite(y)):
        raise DomainError("target values must be finite")
    n_params = 1 + (family == "GammaExp") + 2 * bool(affine)
    if u.size < n_params + 1:
        raise ConfigError(f"need at least {n_params + 1} cosines for {n_params} parameters")
    model = _Model(family, u, y, affine, chord_param)
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_starts):
        logc = rng.uniform(math.log(0.05), math.log(5.0))
        g = rng.uniform(-2.0, 2.0)
        p0 = model.linear_init(logc, g)
        p, f, f0, gnorm, ok = _levenberg(model, p0)
        if best is None or f < best[1]:
            best = (p, f, f0, gnorm, ok)
    p, f, f0, gnorm, ok = best
    c, gamma, _, a, b = model.unpack(p)
    params = {"a": float(a), "b": float(b), "c": float(c)}
    if family == "GammaExp":
        params["gamma"] = float(gamma)
    fit = KernelFit(family, params, f, u, f0, float(gnorm), chord_param)
    if not ok:
        raise FitError(f"{family} fit did not reach a stationary point (gradient {gnorm:.2e})", best=fit)
    return fit


def default_cosines(n: int = 200) -> np.ndarray:
    return np.linspace(-1.0, 1.0, n)


def fit_kernel_to_ntk(family: str, target, u=None, affine: bool = False, **kw) -> KernelFit:
    """Fit an exponential kernel to an NTK (or any zonal kernel) on cosines ``u``.

    ``u`` defaults to 200 equispaced cosines in [-1, 1].
    """
    u = default_cosines() if u is None else u
    f: Callable = zonal_function(target)
    return fit_kernel(family, u, f, affine=affine, **kw)


def laplace_width_vs_depth(depths, u=None, affine: bool = True, beta: float = 0.0, **kw):
    """Fitted Laplace width ``c`` per network depth.

    The target at depth ``L`` is the NTK of an ``L``-layer network with bias
    scale ``beta`` (normalized by ``L`` when ``beta = 0``).  Returns a list of
    ``(L, KernelFit)``.
    """
    out = []
    for L in depths:
        cfg = NtkConfig(layers=int(L), beta=float(beta), normalize=beta == 0)
        out.append((int(L), fit_kernel_to_ntk("Laplace", cfg, u, affine=affine, **kw)))
    return out
