"""Figures from result CSVs."""

from __future__ import annotations

import csv
import os
from collections import OrderedDict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from ..exceptions import DomainError  # noqa: E402
from .runner import CSV_COLUMNS  # noqa: E402

_NUMERIC = {"axis_value": float, "value_db": float, "n_trials": int, "divergence_rate": float,
            "seed": int}


class CsvSchemaError(DomainError):
    """The CSV does not follow the result schema."""


def read_results(path):
    """Parse and check a result CSV; errors name the offending column."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise CsvSchemaError(f"{path}: empty file, expected header {','.join(CSV_COLUMNS)}")
        for i, col in enumerate(CSV_COLUMNS):
            got = header[i] if i < len(header) else None
            if got != col:
                raise CsvSchemaError(f"{path}: column {i + 1} should be {col!r}, got {got!r}")
        if len(header) > len(CSV_COLUMNS):
            raise CsvSchemaError(f"{path}: unexpected extra column {header[len(CSV_COLUMNS)]!r}")
        rows = []
        for lineno, raw in enumerate(reader, start=2):
            if not raw:
                continue
            if len(raw) != len(CSV_COLUMNS):
                raise CsvSchemaError(f"{path}:{lineno}: expected {len(CSV_COLUMNS)} fields, got {len(raw)}")
            row = dict(zip(CSV_COLUMNS, raw))
            for col, conv in _NUMERIC.items():
                try:
                    row[col] = conv(row[col])
                except ValueError:
                    raise CsvSchemaError(f"{path}:{lineno}: column {col!r} is not numeric: {row[col]!r}") from None
            rt = row["runtime_s"]
            try:
                row["runtime_s"] = float(rt) if rt != "" else None
            except ValueError:
                raise CsvSchemaError(f"{path}:{lineno}: column 'runtime_s' is not numeric: {rt!r}") from None
            rows.append(row)
    if not rows:
        raise CsvSchemaError(f"{path}: no data rows")
    return rows


def _series(rows, metric):
    out = OrderedDict()
    for r in rows:
        if r["metric"] == metric:
            xs, ys = out.setdefault(r["solver"], ([], []))
            xs.append(r["axis_value"])
            ys.append(r["value_db"])
    return out


def _style(solver):
    if solver.startswith("oracle") or solver.startswith("se"):
        return {"linestyle": "--"}
    return {"marker": "o", "markersize": 3}


def _panel(ax, rows, metric, axis):
    for solver, (xs, ys) in _series(rows, metric).items():
        ax.plot(xs, ys, label=solver, **_style(solver))
    ax.set_xlabel(axis)
    ax.set_ylabel(f"{metric} (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)


def emit_plots(csv_path, out_dir, style="default"):
    """Write one figure per metric, a combined NMSE panel figure when the CSV
    has both ``b``/``c`` (or ``A``/``C``) metrics, and a runtime figure when
    runtimes were recorded.  Returns the list of written paths."""
    rows = read_results(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    with plt.style.context(style):
        for exp in OrderedDict.fromkeys(r["experiment"] for r in rows):
            sub = [r for r in rows if r["experiment"] == exp]
            axis = sub[0]["axis"]
            metrics = list(OrderedDict.fromkeys(r["metric"] for r in sub))
            for m in metrics:
                fig, ax = plt.subplots(figsize=(5, 4))
                _panel(ax, sub, m, axis)
                path = os.path.join(out_dir, f"{exp}_{m}.png")
                fig.tight_layout()
                fig.savefig(path, dpi=100)
                plt.close(fig)
                written.append(path)
            pairs = [p for p in (("nmse_b", "nmse_c"), ("nmse_A", "nmse_C")) if set(p) <= set(metrics)]
            for pair in pairs:
                fig, axes = plt.subplots(1, 2, figsize=(9, 4))
                for ax, m in zip(axes, pair):
                    _panel(ax, sub, m, axis)
                path = os.path.join(out_dir, f"{exp}_nmse.png")
                fig.tight_layout()
                fig.savefig(path, dpi=100)
                plt.close(fig)
                written.append(path)
            timed = [r for r in sub if r["runtime_s"] is not None and r["metric"] == metrics[0]]
            if timed:
                fig, ax = plt.subplots(figsize=(5, 4))
                series = OrderedDict()
                for r in timed:
                    if r["solver"].startswith("oracle") or r["solver"].startswith("se"):
                        continue
                    xs, ys = series.setdefault(r["solver"], ([], []))
                    xs.append(r["axis_value"])
                    ys.append(r["runtime_s"])
                for solver, (xs, ys) in series.items():
                    ax.plot(xs, ys, label=solver, marker="o", markersize=3)
                ax.set_xlabel(axis)
                ax.set_ylabel("runtime (s)")
                ax.grid(True, alpha=0.3)
                ax.legend(fontsize=7)
                path = os.path.join(out_dir, f"{exp}_runtime.png")
                fig.tight_layout()
                fig.savefig(path, dpi=100)
                plt.close(fig)
                written.append(path)
    return written
