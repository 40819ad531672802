"""Render figures from the experiment CSV schema.

Three figure kinds, all pure functions of the CSV contents:

``lstep_efficiency``
    One efficiency-vs-L curve per phi-cost value t, with a filled marker on
    the per-t maximum.
``tuning_curve``
    Empirical acceptance against the sweep parameter with the optimal-rate
    reference line (0.574, or 0.651 for the Hamiltonian family), and the
    mean empirical squared jump on a twin axis with its peak marked.
``jump_overlay``
    Predicted vs empirical squared jump per monitored eigen-direction, one
    series per CSV row, empirical points with 2-standard-error bars.

Every artist a test may care about carries a ``gid`` (``efficiency-t0``,
``optimal-t0``, ``acceptance``, ``reference``, ``jump``, ``jump-peak``,
``predicted-*``, ``empirical-*``), so figures are inspectable without image
diffing.  All validation happens before the output file is touched: a bad
spec or CSV never leaves a partial image behind.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

KINDS = ("lstep_efficiency", "tuning_curve", "jump_overlay")

# Optimal acceptance rates for the reference line, keyed by CSV family.
REFERENCE_RATES = {"hmc": 0.651}
DEFAULT_REFERENCE = 0.574


class PlotError(ValueError):
    """Bad figure spec or CSV input (exit code 2 in the CLI)."""


@dataclass(frozen=True)
class FigureSpec:
    """Everything one figure needs: input, kind, output, cosmetics."""

    csv_path: str
    kind: str
    out: str
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None
    dpi: int = 150

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PlotError(f"unknown figure kind {self.kind!r}; choose from {KINDS}")
        if self.dpi <= 0:
            raise PlotError(f"dpi must be positive, got {self.dpi}")


def load_spec(path: str) -> FigureSpec:
    """Parse a figure-spec JSON file.

    Keys: csv, kind, out (required); title, xlabel, ylabel, dpi (optional).
    Unknown keys are rejected by name so typos do not silently fall back to
    defaults.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise PlotError(f"spec {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise PlotError(f"spec {path} must be a JSON object")
    known = {"csv", "kind", "out", "title", "xlabel", "ylabel", "dpi"}
    unknown = sorted(set(doc) - known)
    if unknown:
        raise PlotError(f"unknown spec keys {unknown}; known keys are {sorted(known)}")
    for key in ("csv", "kind", "out"):
        if key not in doc:
            raise PlotError(f"spec is missing required key '{key}'")
    return FigureSpec(
        csv_path=str(doc["csv"]),
        kind=str(doc["kind"]),
        out=str(doc["out"]),
        title=None if doc.get("title") is None else str(doc["title"]),
        xlabel=None if doc.get("xlabel") is None else str(doc["xlabel"]),
        ylabel=None if doc.get("ylabel") is None else str(doc["ylabel"]),
        dpi=int(doc.get("dpi", 150)),
    )


def _read_rows(path: str) -> tuple[list[str], list[dict[str, str]]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise PlotError(f"{path} has no header row")
        rows = list(reader)
    if not rows:
        raise PlotError(f"{path} has no data rows (empty sweep)")
    return list(reader.fieldnames), rows


def _column(rows: list[dict[str, str]], fields: list[str], name: str, path: str) -> np.ndarray:
    if name not in fields:
        raise PlotError(f"missing column '{name}' in {path}")
    return np.array([float(row[name]) for row in rows])


def _jump_columns(fields: list[str], prefix: str) -> list[str]:
    found = [(int(f[len(prefix):]), f) for f in fields if f.startswith(prefix) and f[len(prefix):].isdigit()]
    return [name for _, name in sorted(found)]


def _finish(fig, ax, spec: FigureSpec, default_title: str, default_x: str, default_y: str):
    ax.set_title(spec.title if spec.title is not None else default_title)
    ax.set_xlabel(spec.xlabel if spec.xlabel is not None else default_x)
    ax.set_ylabel(spec.ylabel if spec.ylabel is not None else default_y)


def _render_lstep_efficiency(spec: FigureSpec, fields, rows):
    t_vals = _column(rows, fields, "t_phi_cost", spec.csv_path)
    l_vals = _column(rows, fields, "n_compositions", spec.csv_path)
    eff = _column(rows, fields, "efficiency", spec.csv_path)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for t in sorted(set(t_vals.tolist())):
        mask = t_vals == t
        order = np.argsort(l_vals[mask])
        x = l_vals[mask][order]
        y = eff[mask][order]
        (line,) = ax.plot(x, y, marker=".", label=f"t = {t:g}")
        line.set_gid(f"efficiency-t{t:g}")
        best = int(np.argmax(y))
        (marker,) = ax.plot(
            [x[best]],
            [y[best]],
            marker="o",
            linestyle="",
            markersize=9,
            color=line.get_color(),
        )
        marker.set_gid(f"optimal-t{t:g}")
    ax.legend(title="phi cost")
    _finish(fig, ax, spec, "Composition efficiency", "compositions L", "efficiency")
    return fig


def _render_tuning_curve(spec: FigureSpec, fields, rows):
    x = _column(rows, fields, "sweep_value", spec.csv_path)
    if np.all(np.isnan(x)):
        x = _column(rows, fields, "l", spec.csv_path)
    acceptance = _column(rows, fields, "empirical_acceptance", spec.csv_path)
    jump_cols = _jump_columns(fields, "empirical_jump_")
    if not jump_cols:
        raise PlotError(f"missing column 'empirical_jump_1' in {spec.csv_path}")
    jump = np.mean(
        [_column(rows, fields, col, spec.csv_path) for col in jump_cols], axis=0
    )
    family = rows[0].get("family", "")
    reference = REFERENCE_RATES.get(family, DEFAULT_REFERENCE)

    order = np.argsort(x)
    x, acceptance, jump = x[order], acceptance[order], jump[order]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    (acc_line,) = ax.plot(x, acceptance, marker=".", color="C0", label="acceptance")
    acc_line.set_gid("acceptance")
    ref_line = ax.axhline(reference, color="C3", linestyle=":", label=f"{reference:g}")
    ref_line.set_gid("reference")
    ax.set_ylim(0.0, 1.0)

    twin = ax.twinx()
    (jump_line,) = twin.plot(x, jump, marker=".", linestyle="--", color="C2", label="mean jump")
    jump_line.set_gid("jump")
    peak = int(np.argmax(jump))
    (peak_marker,) = twin.plot(
        [x[peak]], [jump[peak]], marker="o", linestyle="", markersize=9, color="C2"
    )
    peak_marker.set_gid("jump-peak")
    twin.set_ylabel("mean squared jump")

    handles = [acc_line, ref_line, jump_line]
    ax.legend(handles, [h.get_label() for h in handles], loc="lower left")
    sweep = rows[0].get("sweep_parameter", "") or "l"
    _finish(fig, ax, spec, f"{family or 'proposal'} tuning", sweep, "acceptance rate")
    return fig


def _render_jump_overlay(spec: FigureSpec, fields, rows):
    pred_cols = _jump_columns(fields, "predicted_jump_")
    emp_cols = _jump_columns(fields, "empirical_jump_")
    err_cols = _jump_columns(fields, "stderr_jump_")
    if not pred_cols:
        raise PlotError(f"missing column 'predicted_jump_1' in {spec.csv_path}")
    if len(emp_cols) != len(pred_cols) or len(err_cols) != len(pred_cols):
        raise PlotError(
            f"missing column '{'empirical' if len(emp_cols) != len(pred_cols) else 'stderr'}"
            f"_jump_{len(pred_cols)}' in {spec.csv_path}"
        )
    directions = np.arange(1, len(pred_cols) + 1)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for index, row in enumerate(rows):
        sweep_value = row.get("sweep_value", "")
        label = f"{row.get('sweep_parameter') or 'row'} = {sweep_value}" if sweep_value else f"row {index}"
        predicted = np.array([float(row[c]) for c in pred_cols])
        empirical = np.array([float(row[c]) for c in emp_cols])
        stderr = np.array([float(row[c]) for c in err_cols])
        (pred_line,) = ax.plot(
            directions, predicted, marker="_", linestyle="-", label=f"predicted, {label}"
        )
        pred_line.set_gid(f"predicted-{index}")
        container = ax.errorbar(
            directions,
            empirical,
            yerr=2.0 * stderr,
            marker="o",
            linestyle="",
            color=pred_line.get_color(),
            alpha=0.7,
            label=f"empirical, {label}",
        )
        container.lines[0].set_gid(f"empirical-{index}")
    ax.legend(fontsize="small")
    _finish(
        fig, ax, spec, "Jump size: theory vs chain", "eigen-direction", "squared jump"
    )
    return fig


_RENDERERS = {
    "lstep_efficiency": _render_lstep_efficiency,
    "tuning_curve": _render_tuning_curve,
    "jump_overlay": _render_jump_overlay,
}


def render(spec: FigureSpec):
    """Render one figure and write it to ``spec.out``.

    Returns the matplotlib Figure so callers (and tests) can inspect the
    plotted data.  The output format follows the file extension (.png/.svg).
    """
    fields, rows = _read_rows(spec.csv_path)
    fig = _RENDERERS[spec.kind](spec, fields, rows)
    fig.savefig(spec.out, dpi=spec.dpi)
    plt.close(fig)
    return fig
