"""Result files: improvement curves, summaries and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import platform
from pathlib import Path

import numpy as np

from .. import __version__

MANIFEST_NAME = "manifest.json"
CURVE_HEADER = ("dyad_index", "mean_improvement", "sd", "n_runs")


class ManifestError(OSError):
    """An output directory already holds a run, or cannot be written."""


def config_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def prepare_output(out: str | Path, force: bool = False) -> Path:
    """Create ``out`` if needed; refuse to reuse a directory with a manifest unless forced."""
    out = Path(out)
    if (out / MANIFEST_NAME).exists() and not force:
        raise ManifestError(f"{out / MANIFEST_NAME} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    return out


def curve_csv(mean: np.ndarray, sd: np.ndarray, n_runs: int) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_HEADER)
    for k, (m, s) in enumerate(zip(mean, sd), start=1):
        w.writerow((k, repr(float(m)), repr(float(s)), n_runs))
    return buf.getvalue()


def write_curve(path: str | Path, mean, sd, n_runs: int) -> Path:
    path = Path(path)
    _atomic_write(path, curve_csv(np.asarray(mean), np.asarray(sd), n_runs))
    return path


def read_curve(path: str | Path) -> dict:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != CURVE_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    cols = list(zip(*rows[1:])) if len(rows) > 1 else [()] * 4
    return {"dyad_index": np.array(cols[0], dtype=int), "mean_improvement": np.array(cols[1], dtype=float),
            "sd": np.array(cols[2], dtype=float), "n_runs": np.array(cols[3], dtype=int)}


def write_rows(path: str | Path, rows: list[dict]) -> Path:
    """Plain CSV with the keys of the first row as header."""
    path = Path(path)
    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    _atomic_write(path, buf.getvalue())
    return path


def write_manifest(out: Path, command: str, config_text: str, seed: int, artifacts: list[str],
                   extra: dict | None = None) -> Path:
    """Written last, so a directory with a manifest holds a complete run."""
    doc = {
        "format": "dyadrl-manifest",
        "version": 1,
        "command": command,
        "config_sha256": config_hash(config_text),
        "config": config_text,
        "master_seed": seed,
        "artifacts": sorted(artifacts),
        "versions": {"dyadrl": __version__, "numpy": np.__version__, "python": platform.python_version()},
    }
    doc.update(extra or {})
    path = out / MANIFEST_NAME
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path
