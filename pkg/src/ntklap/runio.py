"""Atomic output files and run manifests."""

from __future__ import annotations

import json
import os
import platform
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path


def atomic_write(path, data: str | bytes):
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode, **({} if mode == "wb" else {"newline": ""})) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def versions() -> dict:
    import mpmath
    import numpy
    import scipy

    from . import __version__

    return {"ntklap": __version__, "python": platform.python_version(), "numpy": numpy.__version__,
            "scipy": scipy.__version__, "mpmath": mpmath.__version__}


@dataclass
class RunManifest:
    command: str
    arguments: dict
    seed: int | None
    outputs: list[str] = field(default_factory=list)
    versions: dict = field(default_factory=versions)
    started_at: float = field(default_factory=time.time)
    duration_s: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


class OutputSet:
    """Outputs buffered in memory and committed together.

    ``commit`` writes every file atomically plus the manifest; ``fail``
    removes anything already committed and leaves a ``.failed`` marker.
    """

    def __init__(self, prefix):
        self.prefix = Path(prefix)
        self._files: dict[Path, str | bytes] = {}

    def path(self, suffix) -> Path:
        return self.prefix.with_name(self.prefix.name + suffix)

    def add(self, suffix, data):
        self._files[self.path(suffix)] = data

    @property
    def marker(self) -> Path:
        return self.path(".failed")

    def commit(self, manifest: RunManifest):
        manifest.outputs = sorted(str(p) for p in self._files)
        manifest.duration_s = time.time() - manifest.started_at
        written = []
        try:
            for p, data in self._files.items():
                atomic_write(p, data)
                written.append(p)
            atomic_write(self.path(".manifest.json"), manifest.to_json())
        except BaseException as exc:
            for p in written:
                p.unlink(missing_ok=True)
            self.fail(exc)
            raise
        self.marker.unlink(missing_ok=True)

    def fail(self, exc: BaseException):
        for p in list(self._files) + [self.path(".manifest.json")]:
            p.unlink(missing_ok=True)
        try:
            atomic_write(self.marker, f"{type(exc).__name__}: {exc}\n")
        except OSError:
            pass
