"""Experiment config files: INI-style sections of key = value pairs.

Grammar (see README for a complete example)::

    [trajectory]
    source = sine            # sine | file
    amplitude = 10.0         # sine parameters ...
    period_s = 1.0
    rate_hz = 200.0
    steps = 10000
    noise_var = 1.0
    # path = data/run.csv    # for source = file

    [run]
    horizon = 3
    seeds = 1 2 3 4 5        # space and/or comma separated integers
    windows = 0:10000 8000:10000
    metric = abs_sum         # abs_sum | sq_sum
    # warmup = 25            # default: max(horizon, roster input windows)

    [estimator:NAME]         # one section per roster entry, order preserved
    kind = nnsse_uke         # see runners.build_runner for kinds and keys
    <parameter> = <value>

Unknown estimator parameters are rejected at build time, not here.
"""

from __future__ import annotations

import configparser

from .bench import EstimatorSpec, ExperimentConfig, Metric
from .runners import ConfigError

_SINE_KEYS = {"amplitude", "period_s", "rate_hz", "steps", "noise_var"}


def _split_ints(text: str) -> list[int]:
    parts = text.replace(",", " ").split()
    try:
        return [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"expected integers, got {text!r}") from None


def _split_windows(text: str) -> list[tuple[int, int]]:
    windows = []
    for token in text.replace(",", " ").split():
        try:
            lo, hi = token.split(":")
            windows.append((int(lo), int(hi)))
        except ValueError:
            raise ConfigError(
                f"expected window as start:end, got {token!r}") from None
    return windows


def _trajectory_section(section) -> dict:
    source = section.get("source", "sine").strip().lower()
    if source == "sine":
        spec = {"source": "sine"}
        for key in _SINE_KEYS:
            if key in section:
                spec[key] = float(section[key])
        spec["steps"] = int(float(spec.get("steps", 10_000)))
        return spec
    if source == "file":
        if "path" not in section:
            raise ConfigError("trajectory source 'file' requires path =")
        return {"source": "file", "path": section["path"].strip()}
    raise ConfigError(f"unknown trajectory source {source!r}")


def load_config(path) -> ExperimentConfig:
    """Parse and validate an experiment config file."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",),
                                       interpolation=None)
    parser.optionxform = str  # keep parameter case as written
    read = parser.read(path, encoding="utf-8")
    if not read:
        raise ConfigError(f"cannot read config file {path}")

    if "trajectory" not in parser:
        raise ConfigError("missing [trajectory] section")
    if "run" not in parser:
        raise ConfigError("missing [run] section")
    try:
        trajectory = _trajectory_section(parser["trajectory"])

        run = parser["run"]
        horizon = int(run.get("horizon", 3))
        seeds = _split_ints(run.get("seeds", "1"))
        windows = _split_windows(run.get("windows", ""))
        metric = Metric.parse(run.get("metric", "abs_sum"))
        warmup = run.get("warmup", "").strip()
        warmup_val = int(warmup) if warmup else None

        estimators = []
        for section in parser.sections():
            if not section.startswith("estimator:"):
                if section not in ("trajectory", "run"):
                    raise ConfigError(f"unknown section [{section}]")
                continue
            name = section.split(":", 1)[1].strip()
            if not name:
                raise ConfigError("estimator section needs a name after ':'")
            items = dict(parser[section])
            kind = items.pop("kind", None)
            if kind is None:
                raise ConfigError(f"estimator {name!r} is missing kind =")
            estimators.append(EstimatorSpec(name, kind.strip(), items))
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc

    if not windows:
        steps = trajectory.get("steps")
        if steps:
            windows = [(0, int(steps))]
        else:
            raise ConfigError("windows = is required for file trajectories")

    return ExperimentConfig(
        trajectory=trajectory,
        horizon=horizon,
        estimators=estimators,
        windows=windows,
        metric=metric,
        seeds=seeds,
        warmup=warmup_val,
    )
