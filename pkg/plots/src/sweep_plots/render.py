"""Parse sweep CSVs and render log-log error-vs-cost panels.

One figure per distinct n_steps value, each showing the single-level and
multilevel series with least-squares slope annotations (fitted on log10,
rows with recorded failures excluded from the fits).  A slopes.json next
to the images records the fitted slopes; it is a pure function of the
CSV, so re-rendering reproduces it byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

CSV_HEADER = "epsilon,n_steps,rmse_sl,cost_sl,rmse_ml,cost_ml,reps,failures,seed_base"

_COLUMNS = CSV_HEADER.split(",")
_INT_COLUMNS = {"n_steps", "reps", "failures", "seed_base"}


class SchemaError(ValueError):
    """The CSV does not match the documented sweep schema."""


@dataclass(frozen=True)
class SweepTable:
    rows: list[dict]

    def n_steps_values(self) -> list[int]:
        return sorted({row["n_steps"] for row in self.rows})

    def panel(self, n_steps: int) -> list[dict]:
        return [row for row in self.rows if row["n_steps"] == n_steps]


def parse_sweep_csv(path) -> SweepTable:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise SchemaError("empty file")
    header = lines[0].split(",")
    for i, (got, expected) in enumerate(zip(header, _COLUMNS)):
        if got != expected:
            raise SchemaError(f"column {i + 1}: expected '{expected}', got '{got}'")
    if len(header) != len(_COLUMNS):
        raise SchemaError(
            f"expected {len(_COLUMNS)} columns, got {len(header)}"
        )
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        fields = line.split(",")
        if len(fields) != len(_COLUMNS):
            raise SchemaError(f"line {lineno}: expected {len(_COLUMNS)} fields")
        row = {}
        for name, field in zip(_COLUMNS, fields):
            try:
                value = int(field) if name in _INT_COLUMNS else float(field)
            except ValueError:
                raise SchemaError(
                    f"line {lineno}, column '{name}': cannot parse '{field}'"
                ) from None
            if not np.isfinite(value):
                raise SchemaError(f"line {lineno}, column '{name}': not finite")
            row[name] = value
        rows.append(row)
    if not rows:
        raise SchemaError("no data rows")
    return SweepTable(rows)


def fit_slope(costs, rmses) -> float:
    """Least-squares slope of log10(rmse) against log10(cost)."""
    if len(costs) < 2:
        raise SchemaError("need at least two rows per series to fit a slope")
    return float(np.polyfit(np.log10(costs), np.log10(rmses), 1)[0])


def panel_slopes(rows) -> dict:
    clean = [row for row in rows if row["failures"] == 0]
    return {
        "sl_slope": fit_slope([r["cost_sl"] for r in clean], [r["rmse_sl"] for r in clean]),
        "ml_slope": fit_slope([r["cost_ml"] for r in clean], [r["rmse_ml"] for r in clean]),
    }


def _render_panel(rows, n_steps, slopes, out_path):
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    for prefix, label, marker in (("sl", "single level", "o"), ("ml", "multilevel", "s")):
        costs = [r[f"cost_{prefix}"] for r in rows]
        rmses = [r[f"rmse_{prefix}"] for r in rows]
        slope = slopes[f"{prefix}_slope"]
        ax.loglog(costs, rmses, marker=marker, label=f"{label} (slope {slope:.2f})")
    ax.set_xlabel("cost (gradient-evaluation units)")
    ax.set_ylabel("RMSE vs reference")
    ax.set_title(f"error vs cost, {n_steps} iterations")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render(csv_path, out_dir) -> dict:
    """Render one PNG per n_steps plus slopes.json; returns the slopes payload."""
    table = parse_sweep_csv(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    panels = []
    for n_steps in table.n_steps_values():
        rows = sorted(table.panel(n_steps), key=lambda r: r["epsilon"], reverse=True)
        slopes = panel_slopes(rows)
        _render_panel(rows, n_steps, slopes, out_dir / f"error_vs_cost_n{n_steps}.png")
        panels.append({
            "n_steps": n_steps,
            "sl_slope": slopes["sl_slope"],
            "ml_slope": slopes["ml_slope"],
        })
    payload = {"panels": panels}
    (out_dir / "slopes.json").write_text(json.dumps(payload, indent=1, sort_keys=True))
    return payload
