"""Experiment runner: wires trajectories, runners and error accounting.

Per step, every estimator in the roster ingests the measurement and emits a
horizon-step forecast.  Forecast errors are realized ``horizon`` steps later
against truth (or against the measurement for recorded data), and summed over
configurable step windows.  The first ``warmup`` steps (default: the largest
input window in the roster, at least the horizon) are excluded from error
accumulation.  Estimator failures are isolated: the rest of the roster keeps
running and the failure is recorded in the report.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .estimators import EstimatorError
from .runners import ConfigError, RunContext, Runner, build_runner
from .signals import Trajectory, gen_sine, load_trajectory


class Metric(Enum):
    ABS_SUM = "abs_sum"
    SQ_SUM = "sq_sum"

    @classmethod
    def parse(cls, text: str) -> "Metric":
        try:
            return cls(text.strip().lower())
        except ValueError:
            raise ConfigError(f"unknown metric {text!r}") from None


def accumulated_error(pred: np.ndarray, ref: np.ndarray, window: tuple[int, int],
                      metric: Metric = Metric.ABS_SUM) -> float:
    """Sum of |pred - ref| (or squared) over the half-open step window."""
    start, end = int(window[0]), int(window[1])
    if end <= start:
        raise ValueError(f"empty error window {window}")
    d = np.asarray(pred[start:end], dtype=float) - np.asarray(ref[start:end], dtype=float)
    if metric is Metric.SQ_SUM:
        return float(np.sum(d * d))
    return float(np.sum(np.abs(d)))


@dataclass
class EstimatorSpec:
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """Resolved experiment description (see config.py for the file grammar)."""

    trajectory: dict                       # sine params or {"path": ...}
    horizon: int
    estimators: list[EstimatorSpec]
    windows: list[tuple[int, int]]
    metric: Metric = Metric.ABS_SUM
    seeds: list[int] = field(default_factory=lambda: [1])
    warmup: int | None = None              # None: max(horizon, input windows)

    def __post_init__(self):
        if not self.estimators:
            raise ConfigError("estimator roster must not be empty")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        names = [e.name for e in self.estimators]
        if len(set(names)) != len(names):
            raise ConfigError("estimator names must be unique")
        for (s, e) in self.windows:
            if e <= s or s < 0:
                raise ConfigError(f"invalid window {(s, e)}")

    def make_trajectory(self, seed: int) -> Trajectory:
        src = dict(self.trajectory)
        kind = src.pop("source", "sine")
        if kind == "sine":
            return gen_sine(
                amplitude=float(src.get("amplitude", 10.0)),
                period_s=float(src.get("period_s", 1.0)),
                rate_hz=float(src.get("rate_hz", 200.0)),
                steps=int(src.get("steps", 10_000)),
                noise_var=float(src.get("noise_var", 1.0)),
                seed=seed,
            )
        if kind == "file":
            return load_trajectory(src["path"])
        raise ConfigError(f"unknown trajectory source {kind!r}")

    def echo(self) -> dict:
        return {
            "trajectory": dict(self.trajectory),
            "horizon": self.horizon,
            "metric": self.metric.value,
            "windows": [list(w) for w in self.windows],
            "seeds": list(self.seeds),
            "warmup": self.warmup,
            "estimators": [
                {"name": e.name, "kind": e.kind, "params": dict(e.params)}
                for e in self.estimators
            ],
        }


@dataclass
class EstimatorResult:
    """Series and summaries for one estimator on one seed."""

    predictions: np.ndarray          # emitted at step i (forecast of i+a)
    errors: np.ndarray               # realized at target step (signed), NaN-padded
    window_errors: dict[str, float]
    seconds: float
    failure: str | None = None
    min_eigenvalue: float | None = None
    max_asymmetry: float | None = None


@dataclass
class SeedRun:
    seed: int
    trajectory: Trajectory
    order: list[str]
    horizon: int
    warmup: int
    results: dict[str, EstimatorResult]

    def aligned_predictions(self, name: str) -> np.ndarray:
        """Forecasts re-indexed to their target step (NaN where undefined)."""
        pred = self.results[name].predictions
        out = np.full(len(self.trajectory), np.nan)
        a = self.horizon
        out[a:] = pred[:len(pred) - a]
        return out

    def csv_columns(self) -> dict[str, np.ndarray]:
        cols: dict[str, np.ndarray] = {}
        for name in self.order:
            cols[f"pred_{name}"] = self.aligned_predictions(name)
            cols[f"err_{name}"] = self.results[name].errors
        return cols


@dataclass
class RunReport:
    config_echo: dict
    horizon: int
    warmup: int
    metric: Metric
    windows: list[tuple[int, int]]
    seed_runs: list[SeedRun]

    def window_label(self, window: tuple[int, int]) -> str:
        return f"{window[0]}-{window[1]}"

    @property
    def failures(self) -> list[tuple[int, str, str]]:
        out = []
        for run in self.seed_runs:
            for name, res in run.results.items():
                if res.failure:
                    out.append((run.seed, name, res.failure))
        return out


def resolve_warmup(config: ExperimentConfig, runners: list[Runner]) -> int:
    if config.warmup is not None:
        return int(config.warmup)
    return max([config.horizon] + [r.warmup_hint for r in runners])


def _audit_update(runner: Runner, worst: dict) -> None:
    cov = runner.covariance()
    if cov is None:
        return
    asym = float(np.abs(cov - cov.T).max())
    min_eig = float(np.linalg.eigvalsh(cov).min())
    worst["asym"] = max(worst["asym"], asym)
    worst["eig"] = min(worst["eig"], min_eig)


def run_single_seed(config: ExperimentConfig, seed: int, audit: bool = False) -> SeedRun:
    """Execute the full roster on one seed's trajectory."""
    traj = config.make_trajectory(seed)
    n = len(traj)
    a = config.horizon
    omega = None
    if traj.meta.get("source") == "sine":
        omega = 2.0 * np.pi / traj.meta["period_s"]
    ctx = RunContext(a, traj.sample_period, seed, omega)
    runners = [build_runner(e.name, e.kind, e.params, ctx) for e in config.estimators]
    warmup = resolve_warmup(config, runners)
    first_target = warmup + a
    if first_target >= n:
        raise ConfigError(
            f"trajectory too short ({n} steps) for warmup {warmup} + horizon {a}")
    for (s, e) in config.windows:
        if min(e, n) <= max(s, first_target):
            raise ConfigError(
                f"window {(s, e)} has no steps past warmup+horizon ({first_target})")

    ref = traj.reference
    z = traj.measurement
    results: dict[str, EstimatorResult] = {}
    for runner in runners:
        preds = np.full(n, np.nan)
        failure = None
        worst = {"asym": 0.0, "eig": np.inf}
        t0 = time.perf_counter()
        for i in range(n):
            try:
                preds[i] = runner.step(z[i])
            except EstimatorError as exc:
                failure = f"step {i}: {exc}"
                break
            if audit:
                _audit_update(runner, worst)
        seconds = time.perf_counter() - t0

        errors = np.full(n, np.nan)
        valid = slice(first_target, n)
        errors[valid] = preds[first_target - a:n - a] - ref[valid]
        window_errors: dict[str, float] = {}
        if failure is None:
            aligned = np.concatenate([np.full(a, np.nan), preds[:n - a]])
            for w in config.windows:
                lo = max(w[0], first_target)
                hi = min(w[1], n)
                window_errors[f"{w[0]}-{w[1]}"] = accumulated_error(
                    aligned, ref, (lo, hi), config.metric)
        results[runner.name] = EstimatorResult(
            predictions=preds,
            errors=errors,
            window_errors=window_errors,
            seconds=seconds,
            failure=failure,
            min_eigenvalue=(worst["eig"] if audit and np.isfinite(worst["eig"]) else None),
            max_asymmetry=(worst["asym"] if audit else None),
        )
    return SeedRun(seed, traj, [r.name for r in runners], a, warmup, results)


def _seed_worker(args):
    config, seed, audit = args
    return run_single_seed(config, seed, audit)


def run_experiment(config: ExperimentConfig, audit: bool = False,
                   parallel: int = 1) -> RunReport:
    """Run every (seed, estimator) pair; seeds may execute in parallel."""
    if parallel > 1 and len(config.seeds) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            seed_runs = list(pool.map(_seed_worker,
                                      [(config, s, audit) for s in config.seeds]))
    else:
        seed_runs = [run_single_seed(config, s, audit) for s in config.seeds]
    warmup = seed_runs[0].warmup
    return RunReport(config.echo(), config.horizon, warmup, config.metric,
                     list(config.windows), seed_runs)
