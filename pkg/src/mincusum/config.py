"""JSON experiment configuration.

A config file has four sections::

    {
      "scenario":   {"kind": "single_fault", "channels": [{"pre": {...}, "post": {...}}, ...]},
      "experiment": {"true_hyp": "1", "nu": [0, 20], "thresholds": {"start": 2, "stop": 9, "step": 0.25},
                     "n_paths": 10000, "seed": 7, "horizon": 100000,
                     "outputs": ["misid", "partial", "arl", "delay", "L", "condition34"]},
      "bounds":     {"alpha": [0.01]},
      "output":     {"dir": "results", "scenario_id": "study"}
    }

Only ``scenario`` and ``experiment`` are required.  Errors are raised as
``ConfigError`` naming the offending field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .montecarlo import DEFAULT_HORIZON
from .scenarios import HypothesisSet
from .scenarios import from_record as scenario_from_record

OUTPUTS = ("misid", "partial", "arl", "delay", "L", "condition34")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class RunConfig:
    raw: dict
    hs: HypothesisSet
    scenario_id: str
    true_hyp: str | None
    nus: list[int]
    thresholds: list[float]
    n_paths: int
    seed: int
    horizon: int
    outputs: list[str]
    partial_k: list[str] = field(default_factory=list)
    L_spec: dict = field(default_factory=dict)
    tail_spec: dict = field(default_factory=dict)
    out_dir: str | None = None


def threshold_grid(spec) -> list[float]:
    """Grid from a list or from ``{start, stop, step}`` (stop included)."""
    if isinstance(spec, dict):
        try:
            start, stop, step = float(spec["start"]), float(spec["stop"]), float(spec["step"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("experiment.thresholds", "needs numeric start, stop and step") from exc
        if step <= 0:
            raise ConfigError("experiment.thresholds.step", "must be positive")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + k * step, 12) for k in range(max(n, 0))]
    if isinstance(spec, list):
        try:
            return [float(b) for b in spec]
        except (TypeError, ValueError) as exc:
            raise ConfigError("experiment.thresholds", "entries must be numbers") from exc
    raise ConfigError("experiment.thresholds", "must be a list or {start, stop, step}")


def _int(section, name, default=None, minimum=None):
    value = section.get(name, default)
    if value is None:
        raise ConfigError(f"experiment.{name}", "is required")
    if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
        raise ConfigError(f"experiment.{name}", f"must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"experiment.{name}", f"must be at least {minimum}, got {value}")
    return int(value)


def parse_config(raw: dict, overrides: dict | None = None) -> RunConfig:
    overrides = overrides or {}
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    if "scenario" not in raw:
        raise ConfigError("scenario", "section is missing")
    try:
        hs = scenario_from_record(raw["scenario"])
    except ValueError as exc:
        raise ConfigError("scenario", str(exc)) from exc

    exp = raw.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("experiment", "section is missing")
    exp = {**exp, **{k: v for k, v in overrides.items() if v is not None}}

    outputs = exp.get("outputs", ["misid"])
    if not isinstance(outputs, list) or not outputs:
        raise ConfigError("experiment.outputs", "must be a non-empty list")
    for o in outputs:
        if o not in OUTPUTS:
            raise ConfigError("experiment.outputs", f"unknown output {o!r}; choose from {OUTPUTS}")

    true_hyp = exp.get("true_hyp")
    if true_hyp is not None:
        true_hyp = str(true_hyp)
        if true_hyp not in hs.labels:
            raise ConfigError("experiment.true_hyp", f"{true_hyp!r} is not one of {list(hs.labels)}")
    needs_truth = {"misid", "partial", "delay", "L"} & set(outputs)
    if needs_truth and true_hyp is None:
        raise ConfigError("experiment.true_hyp", f"required for outputs {sorted(needs_truth)}")

    nus = exp.get("nu", 0)
    nus = nus if isinstance(nus, list) else [nus]
    for nu in nus:
        if isinstance(nu, bool) or not isinstance(nu, int) or nu < 0:
            raise ConfigError("experiment.nu", f"change points must be non-negative integers, got {nu!r}")

    if "thresholds" not in exp:
        raise ConfigError("experiment.thresholds", "is required")
    thresholds = threshold_grid(exp["thresholds"])
    if not thresholds:
        raise ConfigError("experiment.thresholds", "threshold grid is empty")
    if any(b <= 0 for b in thresholds):
        raise ConfigError("experiment.thresholds", "thresholds must be positive")
    if any(b2 <= b1 for b1, b2 in zip(thresholds, thresholds[1:])):
        raise ConfigError("experiment.thresholds", "thresholds must be strictly increasing")

    partial_k = [str(k) for k in exp.get("partial_k", [lab for lab in hs.labels if lab != true_hyp])]
    for k in partial_k:
        if k not in hs.labels or k == true_hyp:
            raise ConfigError("experiment.partial_k", f"{k!r} is not a rival hypothesis")

    L_spec = dict(exp.get("L", {}))
    if "L" in outputs:
        rival = L_spec.get("i")
        if rival is None or str(rival) not in hs.labels or str(rival) == true_hyp:
            raise ConfigError("experiment.L.i", "must name a rival hypothesis")
        if not isinstance(L_spec.get("x_grid"), list) or not L_spec["x_grid"]:
            raise ConfigError("experiment.L.x_grid", "must be a non-empty list")
    tail_spec = dict(exp.get("condition34", {}))
    if "condition34" in outputs:
        if not isinstance(tail_spec.get("x_grid"), list) or not tail_spec["x_grid"]:
            raise ConfigError("experiment.condition34.x_grid", "must be a non-empty list")
        if not any(nu >= 1 for nu in nus):
            raise ConfigError("experiment.nu", "condition34 needs a change point of at least 1")

    output = raw.get("output", {})
    return RunConfig(
        raw=raw,
        hs=hs,
        scenario_id=str(output.get("scenario_id", hs.kind)),
        true_hyp=true_hyp,
        nus=[int(nu) for nu in nus],
        thresholds=thresholds,
        n_paths=_int(exp, "n_paths", 10_000, 1),
        seed=_int(exp, "seed", 0, 0),
        horizon=_int(exp, "horizon", DEFAULT_HORIZON, 1),
        outputs=list(outputs),
        partial_k=partial_k,
        L_spec=L_spec,
        tail_spec=tail_spec,
        out_dir=output.get("dir"),
    )


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON in {path}: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> RunConfig:
    return parse_config(read_json(path), overrides)


@dataclass
class BoundsConfig:
    hs: HypothesisSet
    scenario_id: str
    alphas: list[float]
    thresholds: list[float]
    out_dir: str | None = None


def parse_bounds_config(raw: dict, default_grid) -> BoundsConfig:
    """Only ``scenario`` is required here; the grid falls back to ``default_grid``."""
    if not isinstance(raw, dict) or "scenario" not in raw:
        raise ConfigError("scenario", "section is missing")
    try:
        hs = scenario_from_record(raw["scenario"])
    except ValueError as exc:
        raise ConfigError("scenario", str(exc)) from exc
    section = raw.get("bounds", {})
    alphas = section.get("alpha", [0.01])
    alphas = alphas if isinstance(alphas, list) else [alphas]
    for a in alphas:
        if isinstance(a, bool) or not isinstance(a, (int, float)) or not 0 < a < 1:
            raise ConfigError("bounds.alpha", f"must lie in (0, 1), got {a!r}")
    spec = section.get("thresholds", raw.get("experiment", {}).get("thresholds", default_grid))
    grid = threshold_grid(spec)
    if not grid or any(b <= 0 for b in grid):
        raise ConfigError("bounds.thresholds", "need a non-empty grid of positive thresholds")
    output = raw.get("output", {})
    return BoundsConfig(hs, str(output.get("scenario_id", hs.kind)), [float(a) for a in alphas],
                        grid, output.get("dir"))
