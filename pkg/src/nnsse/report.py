"""Report rendering and persistence.

A benchmark run is persisted as:

* ``report.json``   - config echo, per-estimator window errors, timings,
                      failures and covariance-health audit results;
* ``run_seed<N>.csv`` - the trajectory plus ``pred_<name>``/``err_<name>``
                      columns (loadable by ``signals.load_trajectory``);
* ``summary.csv``   - one row per (seed, estimator) with window errors and
                      the wall-clock seconds column;
* ``table.txt``     - the aligned text table (table format only).

Accumulated errors are shown scaled by 1e4 (noted in the heading) whenever
the largest value reaches 1e4.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .bench import RunReport
from .signals import save_run

SCALE_THRESHOLD = 1e4
SCALE_LABEL = "×10⁴"  # x10^4


def report_to_dict(report: RunReport) -> dict:
    data = {
        "config": report.config_echo,
        "horizon": report.horizon,
        "warmup": report.warmup,
        "metric": report.metric.value,
        "windows": [list(w) for w in report.windows],
        "seeds": [run.seed for run in report.seed_runs],
        "results": [],
    }
    for run in report.seed_runs:
        entry = {
            "seed": run.seed,
            "series_csv": f"run_seed{run.seed}.csv",
            "order": list(run.order),
            "estimators": {},
        }
        for name in run.order:
            res = run.results[name]
            entry["estimators"][name] = {
                "windows": {k: v for k, v in res.window_errors.items()},
                "seconds": round(res.seconds, 4),
                "failure": res.failure,
                "min_eigenvalue": res.min_eigenvalue,
                "max_asymmetry": res.max_asymmetry,
            }
        data["results"].append(entry)
    return data


def _window_labels(data: dict) -> list[str]:
    return [f"{w[0]}-{w[1]}" for w in data["windows"]]


def _max_error(data: dict) -> float:
    worst = 0.0
    for entry in data["results"]:
        for res in entry["estimators"].values():
            for v in res["windows"].values():
                worst = max(worst, abs(v))
    return worst


def _render_block(title: str, order: list[str], rows: dict[str, dict],
                  labels: list[str], scale: float) -> list[str]:
    cols = [f"steps {lbl}" for lbl in labels] + ["time (s)"]
    flagged: dict[str, list[str]] = {name: [] for name in order}
    for j, lbl in enumerate(labels):
        vals = {n: rows[n]["windows"].get(lbl) for n in order
                if rows[n]["failure"] is None and lbl in rows[n]["windows"]}
        lo = min(vals.values()) if vals else None
        hi = max(vals.values()) if vals else None
        for n in order:
            v = vals.get(n)
            if v is None:
                flagged[n].append("failed" if rows[n]["failure"] else "")
                continue
            mark = ""
            if len(vals) > 1:
                if v == lo:
                    mark = " (min)"
                elif v == hi:
                    mark = " (max)"
            flagged[n].append(f"{v / scale:.4f}{mark}")
    for n in order:
        flagged[n].append(f"{rows[n]['seconds']:.4f}")

    name_w = max(len("estimator"), *(len(n) for n in order))
    col_ws = [max(len(c), *(len(flagged[n][j]) for n in order))
              for j, c in enumerate(cols)]
    lines = [title]
    header = "estimator".ljust(name_w) + "".join(
        "  " + c.rjust(w) for c, w in zip(cols, col_ws))
    lines.append(header)
    lines.append("-" * len(header))
    for n in order:
        lines.append(n.ljust(name_w) + "".join(
            "  " + cell.rjust(w) for cell, w in zip(flagged[n], col_ws)))
    return lines


def render_table(data: dict) -> str:
    """Aligned text table: one block per seed, plus a median block."""
    labels = _window_labels(data)
    scaled = _max_error(data) >= SCALE_THRESHOLD
    scale = SCALE_THRESHOLD if scaled else 1.0
    unit = f" ({SCALE_LABEL})" if scaled else ""
    lines = [f"Accumulated prediction error{unit} and run time",
             f"metric: {data['metric']}; horizon: {data['horizon']}; "
             f"warmup: {data['warmup']} steps", ""]
    for entry in data["results"]:
        lines.extend(_render_block(f"seed {entry['seed']}", entry["order"],
                                   entry["estimators"], labels, scale))
        lines.append("")
    if len(data["results"]) > 1:
        order = data["results"][0]["order"]
        med_rows: dict[str, dict] = {}
        for n in order:
            per_window = {}
            for lbl in labels:
                vals = [e["estimators"][n]["windows"][lbl]
                        for e in data["results"]
                        if e["estimators"][n]["failure"] is None
                        and lbl in e["estimators"][n]["windows"]]
                if vals:
                    per_window[lbl] = float(np.median(vals))
            seconds = float(np.median([e["estimators"][n]["seconds"]
                                       for e in data["results"]]))
            failures = [e["estimators"][n]["failure"] for e in data["results"]]
            med_rows[n] = {"windows": per_window, "seconds": seconds,
                           "failure": next((f for f in failures if f), None)}
        seeds = ", ".join(str(s) for s in data["seeds"])
        lines.extend(_render_block(f"median over seeds {seeds}", order,
                                   med_rows, labels, scale))
        lines.append("")
    return "\n".join(lines)


def write_summary_csv(path, data: dict) -> None:
    labels = _window_labels(data)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        header = ["seed", "estimator"] + [f"err_{lbl}" for lbl in labels] + \
            ["seconds", "failure"]
        fh.write(",".join(header) + "\n")
        for entry in data["results"]:
            for name in entry["order"]:
                res = entry["estimators"][name]
                cells = [str(entry["seed"]), name]
                for lbl in labels:
                    v = res["windows"].get(lbl)
                    cells.append("" if v is None else format(v, ".17g"))
                cells.append(format(res["seconds"], ".4f"))
                cells.append(res["failure"] or "")
                fh.write(",".join(cells) + "\n")


def emit_report(report: RunReport, fmt: str, out_dir) -> list[Path]:
    """Write report files; fmt 'table' additionally renders table.txt."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = report_to_dict(report)
    written = []

    json_path = out / "report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(data, fh, indent=2)
        fh.write("\n")
    written.append(json_path)

    for run in report.seed_runs:
        csv_path = out / f"run_seed{run.seed}.csv"
        save_run(csv_path, run)
        written.append(csv_path)

    summary_path = out / "summary.csv"
    write_summary_csv(summary_path, data)
    written.append(summary_path)

    if fmt == "table":
        table_path = out / "table.txt"
        table_path.write_text(render_table(data), encoding="utf-8")
        written.append(table_path)
    elif fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    return written


def load_report(path) -> dict:
    """Read back a persisted report.json (or the directory holding one)."""
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    with open(p, "r", encoding="utf-8") as fh:
        return json.load(fh)
