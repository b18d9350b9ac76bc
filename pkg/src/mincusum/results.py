"""Result CSV and run-manifest writers."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

COLUMNS = (
    "scenario_id", "true_hyp", "nu", "b", "metric", "value", "se",
    "n_effective", "n_nominal", "n_truncated", "bound_value", "seed",
)


def fmt(value) -> str:
    """Shortest round-trip text for floats; empty string for missing values."""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        return repr(value)
    return str(value)


@dataclass(frozen=True)
class ResultRow:
    scenario_id: str
    true_hyp: str
    nu: int | None
    b: float
    metric: str
    value: float
    se: float
    n_effective: int
    n_nominal: int
    n_truncated: int
    bound_value: float | None
    seed: int

    @classmethod
    def from_estimate(cls, scenario_id, true_hyp, nu, b, metric, est, bound, seed):
        return cls(
            scenario_id, "none" if true_hyp is None else str(true_hyp), nu, float(b), metric,
            float(est.value), float(est.se), est.n_effective, est.n_nominal, est.n_truncated,
            None if bound is None else float(bound), seed,
        )

    def cells(self) -> list[str]:
        return [fmt(getattr(self, c)) for c in COLUMNS]


def render_csv(rows, columns=COLUMNS) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow(row.cells() if isinstance(row, ResultRow) else [fmt(v) for v in row])
    return buf.getvalue().encode("utf-8")


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(path, *, config, seed, version, duration, outputs) -> dict:
    """Manifest with a checksum per output file; written after the outputs exist."""
    manifest = {
        "config": config,
        "seed": seed,
        "version": version,
        "wall_clock_seconds": duration,
        "outputs": [{"path": str(p), "sha256": sha256_file(p)} for p in outputs],
    }
    atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))
    return manifest
