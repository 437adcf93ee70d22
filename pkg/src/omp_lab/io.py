"""JSON loaders for ensembles and channels, run manifests, number formatting."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .channels import KrausChannel, channel_from_json
from .quantum import DensityMatrix, Ensemble, bloch_to_density


def resolve(path: str | Path) -> Path:
    """A filesystem path, or the name of a bundled data file."""
    p = Path(path)
    if p.exists():
        return p
    bundled = resources.files("omp_lab") / "data" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise FileNotFoundError(f"no such file: {path}")


def _read_json(path) -> dict:
    with open(resolve(path), encoding="utf-8") as fh:
        return json.load(fh)


def _matrix(rows) -> np.ndarray:
    return np.array([[complex(re, im) for re, im in row] for row in rows])


def ensemble_from_json(doc: dict) -> Ensemble:
    """``{"priors": [...], "states": [{"bloch": [x,y,z]} | {"matrix": [[[re,im],...],...]}]}``"""
    states = []
    for entry in doc["states"]:
        if "bloch" in entry:
            states.append(bloch_to_density(entry["bloch"]))
        elif "matrix" in entry:
            states.append(DensityMatrix(_matrix(entry["matrix"])))
        else:
            raise ValueError("each state needs a 'bloch' or 'matrix' entry")
    return Ensemble(tuple(doc["priors"]), tuple(states))


def load_ensemble(path) -> Ensemble:
    return ensemble_from_json(_read_json(path))


def load_channel(path) -> KrausChannel:
    return channel_from_json(_read_json(path))


def load_json(path) -> dict:
    return _read_json(path)


def fmt(x: float, digits: int = 6) -> str:
    """Positional decimal with ``digits`` significant digits, never scientific.

    Magnitudes below 1e-12 print as zero.
    """
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    if abs(x) < 1e-12:
        return f"{0.0:.{digits}f}"
    decimals = max(0, digits - 1 - math.floor(math.log10(abs(x))))
    return f"{x:.{decimals}f}"


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def git_blob_hash(text: str) -> str:
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    started: str
    finished: str = ""
    outputs: list[str] = field(default_factory=list)
    config_hash: str = ""

    def __post_init__(self):
        self.config_hash = git_blob_hash(canonical_json(self.config))

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)
            fh.write("\n")
