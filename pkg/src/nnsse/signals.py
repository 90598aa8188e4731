"""Trajectory sources: seeded noisy-sine generation and CSV persistence.

Reproducibility: Gaussian noise comes from ``numpy.random.Generator`` over
the counter-based Philox bit generator, via ``standard_normal`` (ziggurat
transform).  The (seed, parameters) pair therefore determines the series
bitwise; golden values are pinned in the test suite.

CSV schema: header ``step,t,truth,measurement`` (UTF-8, ``.`` decimal
separator, LF line endings).  Truth cells may be empty, or the column may be
absent entirely for recorded data.  Report files append ``pred_<name>`` /
``err_<name>`` columns; unknown columns are ignored on load.  Floats are
written with 17 significant digits so values round-trip losslessly.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

REQUIRED_COLUMNS = ("step", "t", "measurement")


class TrajectoryFormatError(ValueError):
    """Raised on malformed trajectory CSV input; includes the line number."""


@dataclass
class Trajectory:
    """Uniformly sampled scalar series with optional ground truth."""

    sample_period: float
    measurement: np.ndarray
    truth: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.measurement = np.asarray(self.measurement, dtype=float)
        if self.measurement.size == 0:
            raise TrajectoryFormatError("trajectory must contain at least one sample")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=float)
            if self.truth.shape != self.measurement.shape:
                raise TrajectoryFormatError(
                    "truth and measurement series must have equal length")
        if not self.sample_period > 0:
            raise ValueError("sample period must be > 0")

    def __len__(self) -> int:
        return int(self.measurement.size)

    @property
    def times(self) -> np.ndarray:
        return np.arange(len(self)) * self.sample_period

    @property
    def reference(self) -> np.ndarray:
        """Error reference: truth when present, else the measurement itself."""
        return self.measurement if self.truth is None else self.truth


def gen_sine(amplitude: float, period_s: float, rate_hz: float, steps: int,
             noise_var: float, seed: int) -> Trajectory:
    """Noisy sine: truth_i = A sin(2 pi i / (rate * period)), plus N(0, var).

    Identical (seed, parameters) produce a bitwise-identical trajectory.
    """
    if not (amplitude > 0 and period_s > 0 and rate_hz > 0 and steps > 0):
        raise ValueError("amplitude, period_s, rate_hz and steps must be positive")
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    i = np.arange(int(steps))
    truth = amplitude * np.sin(2.0 * np.pi * i / (rate_hz * period_s))
    rng = np.random.Generator(np.random.Philox(seed))
    measurement = truth + np.sqrt(noise_var) * rng.standard_normal(int(steps))
    meta = {
        "source": "sine",
        "seed": int(seed),
        "amplitude": float(amplitude),
        "period_s": float(period_s),
        "rate_hz": float(rate_hz),
        "noise_var": float(noise_var),
    }
    return Trajectory(1.0 / rate_hz, measurement, truth, meta)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_cell(text: str, column: str, line_no: int) -> float:
    try:
        return float(text)
    except ValueError:
        raise TrajectoryFormatError(
            f"line {line_no}: non-numeric value {text!r} in column {column!r}") from None


def save_trajectory(path, trajectory: Trajectory,
                    extra_columns: dict[str, np.ndarray] | None = None) -> None:
    """Write the CSV schema; extra columns are appended after `measurement`.

    Extra-column cells that are NaN are written empty.
    """
    extra = extra_columns or {}
    n = len(trajectory)
    for name, series in extra.items():
        if len(series) != n:
            raise ValueError(f"extra column {name!r} has wrong length")
    header = ["step", "t", "truth", "measurement", *extra.keys()]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        T = trajectory.sample_period
        truth = trajectory.truth
        for i in range(n):
            row = [
                str(i),
                _fmt(i * T),
                _fmt(truth[i]) if truth is not None else "",
                _fmt(trajectory.measurement[i]),
            ]
            for series in extra.values():
                v = series[i]
                row.append("" if v is None or not np.isfinite(v) else _fmt(v))
            fh.write(",".join(row) + "\n")


def save_run(path, run) -> None:
    """Write one benchmark run: trajectory plus its pred/err columns.

    ``run`` must expose ``trajectory`` and ``csv_columns()`` (an ordered
    mapping of column name to series).
    """
    save_trajectory(path, run.trajectory, run.csv_columns())


def load_trajectory(path) -> Trajectory:
    """Read the CSV schema back; unknown columns are ignored.

    Raises `TrajectoryFormatError` (with a line number where applicable) on a
    missing required column, a non-numeric cell, an inconsistent row length,
    or a file with no data rows.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TrajectoryFormatError("empty file: no header row") from None
        header = [h.strip() for h in header]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise TrajectoryFormatError(f"missing column {col!r} in header")
        idx = {name: header.index(name) for name in header}
        has_truth = "truth" in idx

        times: list[float] = []
        truth: list[float] = []
        meas: list[float] = []
        any_truth = False
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and row[0].strip() == ""):
                continue
            if len(row) != len(header):
                raise TrajectoryFormatError(
                    f"line {line_no}: expected {len(header)} cells, got {len(row)}")
            times.append(_parse_cell(row[idx["t"]], "t", line_no))
            meas.append(_parse_cell(row[idx["measurement"]], "measurement", line_no))
            if has_truth:
                cell = row[idx["truth"]].strip()
                if cell == "":
                    truth.append(np.nan)
                else:
                    truth.append(_parse_cell(cell, "truth", line_no))
                    any_truth = True

    if not meas:
        raise TrajectoryFormatError("empty trajectory: header only, no data rows")
    period = times[1] - times[0] if len(times) > 1 else 1.0
    if not period > 0:
        raise TrajectoryFormatError("time column must be strictly increasing")
    truth_arr = np.array(truth) if (has_truth and any_truth) else None
    return Trajectory(period, np.array(meas), truth_arr,
                      {"source": "file", "path": str(path)})
