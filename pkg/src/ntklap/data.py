"""Tabular ingestion, normalization and synthetic sampling."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, EmptyDataError, ParseError

ENCODINGS = ("onehot", "ordinal")


@dataclass
class Dataset:
    """Feature matrix with optional targets and a record of its processing."""

    X: np.ndarray
    y: np.ndarray | None = None
    feature_names: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ConfigError("features must form a 2-D matrix")
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float).ravel()
            if self.y.size != self.X.shape[0]:
                raise ConfigError("targets and features differ in length")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.X.shape[1])]

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


def _to_float(cell: str):
    try:
        return float(cell)
    except ValueError:
        return None


def _resolve_column(spec, names, width):
    if spec is None:
        return None
    if isinstance(spec, str) and not spec.lstrip("-").isdigit():
        if spec not in names:
            raise ConfigError(f"no column named {spec!r}")
        return names.index(spec)
    idx = int(spec)
    if not -width <= idx < width:
        raise ConfigError(f"column {idx} out of range for {width} columns")
    return idx % width


def load_csv(path, target_column=None, header: bool | None = None, categorical=None,
             encoding: str = "onehot", delimiter: str = ",") -> Dataset:
    """Read a numeric table, encoding categorical columns.

    Parameters
    ----------
    path : str or Path
    target_column : int or str, optional
        Index (negative allowed) or header name of the target column.
    header : bool, optional
        Whether the first row holds column names.  By default it does when
        none of its cells parse as numbers.
    categorical : list of int or str, optional
        Columns to encode.  Columns in which no cell is numeric are detected
        as categorical automatically.
    encoding : {"onehot", "ordinal"}
        One indicator column per level, or a single column of level codes
        (levels sorted).

    Rows with missing, NaN or infinite values are rejected; their line numbers
    and count are recorded in ``meta``.  A non-numeric cell in a numeric column
    raises :class:`ParseError`.
    """
    if encoding not in ENCODINGS:
        raise ConfigError(f"encoding must be one of {ENCODINGS}")
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    rows = [(i + 1, r) for i, r in enumerate(csv.reader(io.StringIO(text), delimiter=delimiter))
            if any(cell.strip() for cell in r)]
    if not rows:
        raise EmptyDataError(f"{path} holds no rows")
    if header is None:
        header = all(_to_float(c) is None for c in rows[0][1])
    names = [c.strip() for c in rows[0][1]] if header else []
    body = rows[1:] if header else rows
    if not body:
        raise EmptyDataError(f"{path} holds a header but no data")
    width = len(body[0][1])
    bad = [ln for ln, r in body if len(r) != width]
    if header and len(names) != width:
        bad.insert(0, rows[0][0])
    if bad:
        raise ParseError(f"inconsistent column count on lines {bad[:10]}", lines=bad)
    if not names:
        names = [f"c{i}" for i in range(width)]
    cells = [[c.strip() for c in r] for _, r in body]
    lines = [ln for ln, _ in body]
    target = _resolve_column(target_column, names, width)
    cat = {_resolve_column(c, names, width) for c in (categorical or [])}

    def missing(cell):
        return cell == "" or cell.lower() in ("na", "nan", "?")

    for j in range(width):
        if j in cat or j == target:
            continue
        if all(_to_float(r[j]) is None for r in cells if not missing(r[j])):
            cat.add(j)
    # reject rows with missing or non-finite values
    rejected = []
    keep = []
    for ln, r in zip(lines, cells):
        ok = True
        for j, cell in enumerate(r):
            if missing(cell):
                ok = False
            elif j not in cat:
                v = _to_float(cell)
                if v is not None and not math.isfinite(v):
                    ok = False
        (keep if ok else rejected).append((ln, r))
    if rejected:
        warnings.warn(f"rejected {len(rejected)} rows with missing or non-finite values", stacklevel=2)
    if not keep:
        raise EmptyDataError(f"{path}: every row was rejected")
    numeric_bad = [ln for ln, r in keep for j, cell in enumerate(r) if j not in cat and _to_float(cell) is None]
    if numeric_bad:
        raise ParseError(f"non-numeric value on lines {sorted(set(numeric_bad))[:10]}", lines=sorted(set(numeric_bad)))
    if target in cat:
        raise ParseError("target column is not numeric")
    cols, feat_names, levels_meta = [], [], {}
    for j in range(width):
        if j == target:
            continue
        raw = [r[j] for _, r in keep]
        if j in cat:
            levels = sorted(set(raw))
            levels_meta[names[j]] = levels
            if encoding == "onehot":
                for lv in levels:
                    cols.append([1.0 if v == lv else 0.0 for v in raw])
                    feat_names.append(f"{names[j]}={lv}")
            else:
                code = {lv: float(i) for i, lv in enumerate(levels)}
                cols.append([code[v] for v in raw])
                feat_names.append(names[j])
        else:
            cols.append([float(v) for v in raw])
            feat_names.append(names[j])
    X = np.array(cols, dtype=float).T if cols else np.empty((len(keep), 0))
    y = np.array([float(r[target]) for _, r in keep]) if target is not None else None
    meta = {
        "source": str(path),
        "rejected_rows": len(rejected),
        "rejected_lines": [ln for ln, _ in rejected],
        "categorical": levels_meta,
        "encoding": encoding,
        "normalization": [],
    }
    return Dataset(X, y, feat_names, meta)


def standardize(ds: Dataset) -> Dataset:
    """Zero-mean, unit-variance features; constant features are dropped."""
    if ds.n < 2:
        raise DomainError("standardization needs at least two rows")
    mean = ds.X.mean(axis=0)
    std = ds.X.std(axis=0)
    scale = np.maximum(np.abs(mean), 1.0)
    keep = std > 1e-12 * scale
    dropped = [ds.feature_names[j] for j in np.nonzero(~keep)[0]]
    if dropped:
        warnings.warn(f"dropping zero-variance features {dropped}", stacklevel=2)
    Z = (ds.X[:, keep] - mean[keep]) / std[keep]
    # a second centering pass removes the residual mean left by roundoff
    Z -= Z.mean(axis=0)
    step = {"op": "standardize", "mean": mean[keep].tolist(), "std": std[keep].tolist(), "dropped": dropped}
    meta = dict(ds.meta, normalization=list(ds.meta.get("normalization", [])) + [step])
    names = [nm for nm, k in zip(ds.feature_names, keep) if k]
    return replace(ds, X=Z, feature_names=names, meta=meta)


def project_to_sphere(ds: Dataset) -> Dataset:
    """Scale every row to unit norm; zero rows are removed and reported."""
    norms = np.linalg.norm(ds.X, axis=1)
    zero = norms == 0
    bad = np.nonzero(zero)[0].tolist()
    if bad:
        warnings.warn(f"rejected zero rows at indices {bad[:10]}", stacklevel=2)
    if zero.all():
        raise EmptyDataError("every row is zero")
    X = ds.X[~zero] / norms[~zero, None]
    y = None if ds.y is None else ds.y[~zero]
    step = {"op": "project_to_sphere", "rejected_indices": bad}
    meta = dict(ds.meta, normalization=list(ds.meta.get("normalization", [])) + [step])
    return replace(ds, X=X, y=y, meta=meta)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_sphere(d: int, n: int, seed=0) -> np.ndarray:
    """``n`` points uniform on S^{d-1} (normalized Gaussian vectors)."""
    if int(d) != d or d < 2:
        raise DomainError(f"dimension must be an integer >= 2, got {d!r}")
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    rng = _rng(seed)
    G = rng.standard_normal((int(n), int(d)))
    norms = np.linalg.norm(G, axis=1)
    # a zero draw has probability zero; redraw defensively
    while np.any(norms == 0):
        idx = norms == 0
        G[idx] = rng.standard_normal((int(idx.sum()), int(d)))
        norms = np.linalg.norm(G, axis=1)
    return G / norms[:, None]


def sample_disk(n: int, seed=0) -> np.ndarray:
    """``n`` points uniform on the unit disk (radius ``sqrt(U)``, uniform angle)."""
    if int(n) != n or n < 1:
        raise DomainError(f"sample size must be a positive integer, got {n!r}")
    rng = _rng(seed)
    r = np.sqrt(rng.uniform(0.0, 1.0, int(n)))
    phi = rng.uniform(0.0, 2.0 * math.pi, int(n))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def equispaced_circle(n: int) -> np.ndarray:
    """``n`` points at angles ``2 pi j / n`` on S^1."""
    theta = 2.0 * math.pi * np.arange(int(n)) / int(n)
    return np.column_stack([np.cos(theta), np.sin(theta)])


def points_to_csv(points, fh, names=None):
    P = np.atleast_2d(np.asarray(points, dtype=float))
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(names or [f"x{i}" for i in range(P.shape[1])])
    for row in P:
        w.writerow([repr(float(v)) for v in row])


def dataset_to_csv(ds: Dataset, fh):
    names = list(ds.feature_names) + (["y"] if ds.y is not None else [])
    data = ds.X if ds.y is None else np.column_stack([ds.X, ds.y])
    points_to_csv(data, fh, names)


def normalization_manifest(ds: Dataset) -> str:
    keys = ("source", "rejected_rows", "rejected_lines", "categorical", "encoding", "normalization")
    return json.dumps({k: ds.meta.get(k) for k in keys}, indent=2)
