"""Render figure-style plots from sweep result tables (CSV or JSON schema 1).

Each plot is described by a small JSON spec file:

    {"input": "data/theta_sweep.csv", "kind": "curve",
     "x": "theta_p", "y": "same_phase", "output": "theta_sweep.png"}

Kinds:
    curve         x-y line through the rows in table order
    heatmap       regular (possibly unevenly spaced) x-y grid colored by a
                  value column
    category-map  x-y grid colored by the argmax oscillation state out of
                  the four quadrant probability columns, with a legend of
                  exactly the states present

Paths inside a spec are resolved relative to the spec file, so a spec
directory is self-contained and renders identically from any working
directory. Rendering is deterministic: identical inputs produce identical
image bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.colors import ListedColormap
from matplotlib.patches import Patch

KINDS = ("curve", "heatmap", "category-map")

QUADRANT_COLUMNS = ("p_pp", "p_pm", "p_mp", "p_mm")
STATE_LABELS = ("(+,+)", "(+,-)", "(-,+)", "(-,-)")
STATE_COLORS = {
    "(+,+)": "#1f77b4",
    "(+,-)": "#ff7f0e",
    "(-,+)": "#2ca02c",
    "(-,-)": "#d62728",
}


class PlotError(ValueError):
    """Bad spec, unreadable input, or input lacking the referenced columns."""


@dataclass(frozen=True)
class PlotSpec:
    input: Path
    kind: str
    output: Path
    x: str
    y: str | None = None
    value: str | None = None
    title: str | None = None

    @classmethod
    def load(cls, path) -> "PlotSpec":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except OSError as exc:
            raise PlotError(f"cannot read spec {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise PlotError(f"spec {path} is not valid JSON: {exc}") from exc
        known = {"input", "kind", "output", "x", "y", "value", "title"}
        unknown = set(obj) - known
        if unknown:
            raise PlotError(f"spec {path}: unknown key(s) {', '.join(sorted(unknown))}")
        missing = [k for k in ("input", "kind", "output", "x") if k not in obj]
        if missing:
            raise PlotError(f"spec {path}: missing key(s) {', '.join(missing)}")
        kind = obj["kind"]
        if kind not in KINDS:
            raise PlotError(f"spec {path}: unknown kind {kind!r}; one of {', '.join(KINDS)}")
        if kind == "curve" and "y" not in obj:
            raise PlotError(f"spec {path}: curve needs a y column")
        if kind == "heatmap" and ("y" not in obj or "value" not in obj):
            raise PlotError(f"spec {path}: heatmap needs y and value columns")
        if kind == "category-map" and "y" not in obj:
            raise PlotError(f"spec {path}: category-map needs a y column")
        base = path.resolve().parent
        return cls(input=base / obj["input"], kind=kind, output=base / obj["output"],
                   x=obj["x"], y=obj.get("y"), value=obj.get("value"),
                   title=obj.get("title"))


def _maybe_number(text):
    if text is None or text == "":
        return None
    try:
        return float(text)
    except ValueError:
        return text


def load_table(path) -> tuple[list[str], list[dict]]:
    """Read a result table: CSV with a header row, or JSON result schema 1
    (rows flattened to sweep values + probabilities)."""
    path = Path(path)
    if not path.exists():
        raise PlotError(f"input file {path} does not exist")
    if path.suffix.lower() == ".json":
        obj = json.loads(path.read_text())
        if obj.get("schema") != 1:
            raise PlotError(f"{path}: unsupported result schema {obj.get('schema')!r}")
        rows = []
        for r in obj.get("rows", []):
            flat = dict(r.get("values") or {})
            probs = r.get("probs")
            if probs:
                flat.update({k: v for k, v in probs.items() if k != "n_modes"})
            rows.append(flat)
        if not rows:
            raise PlotError(f"{path}: no data rows")
        columns = sorted({k for row in rows for k in row})
        return columns, rows
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise PlotError(f"{path}: empty file")
        columns = list(reader.fieldnames)
        rows = [{k: _maybe_number(v) for k, v in r.items()} for r in reader]
    if not rows:
        raise PlotError(f"{path}: no data rows")
    return columns, rows


def _require_columns(columns, needed, path):
    missing = [c for c in needed if c not in columns]
    if missing:
        raise PlotError(
            f"{path}: missing column(s) {', '.join(missing)}; "
            f"available: {', '.join(columns)}"
        )


def _usable(rows, needed, path):
    kept = [r for r in rows if all(isinstance(r.get(c), float) for c in needed)]
    if not kept:
        raise PlotError(f"{path}: no rows with numeric values in "
                        f"{', '.join(needed)}")
    return kept


def _edges(centers: np.ndarray) -> np.ndarray:
    """Cell boundaries around sorted center coordinates (uneven spacing ok)."""
    c = np.asarray(centers, dtype=float)
    if c.size == 1:
        half = 0.5 * abs(c[0]) if c[0] != 0 else 0.5
        return np.array([c[0] - half, c[0] + half])
    mids = 0.5 * (c[1:] + c[:-1])
    return np.concatenate([[2 * c[0] - mids[0]], mids, [2 * c[-1] - mids[-1]]])


def _grid(rows, xcol, ycol):
    xs = np.array(sorted({r[xcol] for r in rows}))
    ys = np.array(sorted({r[ycol] for r in rows}))
    xi = {v: i for i, v in enumerate(xs)}
    yi = {v: i for i, v in enumerate(ys)}
    return xs, ys, xi, yi


def category_layout(rows, xcol, ycol, path="<input>"):
    """Grid of argmax-state indices -> (xs, ys, grid, present labels).

    Grid cells without a row are masked; `present` lists, in canonical
    order, exactly the states that appear, and grid values index into it.
    """
    needed = (xcol, ycol) + QUADRANT_COLUMNS
    rows = _usable(rows, needed, path)
    xs, ys, xi, yi = _grid(rows, xcol, ycol)
    state = np.full((ys.size, xs.size), -1, dtype=int)
    for r in rows:
        k = int(np.argmax([r[c] for c in QUADRANT_COLUMNS]))
        state[yi[r[ycol]], xi[r[xcol]]] = k
    present = [lab for k, lab in enumerate(STATE_LABELS) if np.any(state == k)]
    remap = {STATE_LABELS.index(lab): i for i, lab in enumerate(present)}
    grid = np.ma.masked_equal(state, -1)
    grid = np.ma.masked_array([[remap.get(v, -1) if v != -1 else -1 for v in row]
                               for row in state], mask=grid.mask)
    return xs, ys, grid, present


def _draw_curve(ax, spec, columns, rows):
    _require_columns(columns, (spec.x, spec.y), spec.input)
    rows = _usable(rows, (spec.x, spec.y), spec.input)
    ax.plot([r[spec.x] for r in rows], [r[spec.y] for r in rows],
            marker="o", color="#1f77b4")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y)
    ax.grid(True, alpha=0.3)


def _draw_heatmap(fig, ax, spec, columns, rows):
    _require_columns(columns, (spec.x, spec.y, spec.value), spec.input)
    rows = _usable(rows, (spec.x, spec.y, spec.value), spec.input)
    xs, ys, xi, yi = _grid(rows, spec.x, spec.y)
    grid = np.full((ys.size, xs.size), np.nan)
    for r in rows:
        grid[yi[r[spec.y]], xi[r[spec.x]]] = r[spec.value]
    mesh = ax.pcolormesh(_edges(xs), _edges(ys), np.ma.masked_invalid(grid),
                         cmap="viridis", shading="flat")
    fig.colorbar(mesh, ax=ax, label=spec.value)
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y)


def _draw_category(fig, ax, spec, columns, rows):
    _require_columns(columns, (spec.x, spec.y) + QUADRANT_COLUMNS, spec.input)
    xs, ys, grid, present = category_layout(rows, spec.x, spec.y, spec.input)
    cmap = ListedColormap([STATE_COLORS[lab] for lab in present])
    ax.pcolormesh(_edges(xs), _edges(ys), grid, cmap=cmap, shading="flat",
                  vmin=-0.5, vmax=len(present) - 0.5)
    handles = [Patch(facecolor=STATE_COLORS[lab], label=lab) for lab in present]
    ax.legend(handles=handles, loc="center left", bbox_to_anchor=(1.02, 0.5),
              title="argmax state")
    ax.set_xlabel(spec.x)
    ax.set_ylabel(spec.y)


def render(spec: PlotSpec) -> Path:
    """Render one plot; returns the output path. Never mutates the input."""
    columns, rows = load_table(spec.input)
    fig, ax = plt.subplots(figsize=(6.0, 4.2), dpi=150)
    try:
        if spec.kind == "curve":
            _draw_curve(ax, spec, columns, rows)
        elif spec.kind == "heatmap":
            _draw_heatmap(fig, ax, spec, columns, rows)
        else:
            _draw_category(fig, ax, spec, columns, rows)
        if spec.title:
            ax.set_title(spec.title)
        spec.output.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(spec.output, format="png", bbox_inches="tight",
                    metadata={"Software": None})
    finally:
        plt.close(fig)
    return spec.output


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Render a plot from a sweep result table.")
    parser.add_argument("--spec", required=True, help="path to a JSON plot spec")
    args = parser.parse_args(argv)
    try:
        out = render(PlotSpec.load(args.spec))
    except PlotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
