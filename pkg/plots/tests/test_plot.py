import csv
import json
from pathlib import Path

import numpy as np
import pytest

from plot import PlotError, PlotSpec, category_layout, load_table, render

EXAMPLES = Path(__file__).resolve().parents[1] / "examples"

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(columns)
        w.writerows(rows)


def write_spec(path, **fields):
    path.write_text(json.dumps(fields))
    return path


def quadrant_rows(assignments):
    """(x, y, favored-state-index) triples -> table rows with one dominant
    quadrant probability per cell."""
    rows = []
    for x, y, k in assignments:
        probs = [0.1, 0.1, 0.1, 0.1]
        probs[k] = 0.7
        rows.append([x, y] + probs)
    return rows


def test_curve_renders_two_point_line(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [[0.0, 1.0], [1.0, 3.0]])
    spec = write_spec(tmp_path / "s.json", input="t.csv", kind="curve",
                      x="a", y="b", output="out.png")
    out = render(PlotSpec.load(spec))
    data = out.read_bytes()
    assert out == tmp_path / "out.png"
    assert data.startswith(PNG_MAGIC) and len(data) > 1000


def test_rerender_is_byte_stable(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [[0.0, 1.0], [0.5, 0.2], [1.0, 3.0]])
    spec = PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                    kind="curve", x="a", y="b", output="out.png"))
    first = render(spec).read_bytes()
    second = render(spec).read_bytes()
    assert first == second


def test_missing_column_error_names_the_column(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [[0.0, 1.0]])
    spec = PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                    kind="curve", x="a", y="nope", output="o.png"))
    with pytest.raises(PlotError, match="nope"):
        render(spec)


def test_empty_input_is_an_error(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [])
    spec = PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                    kind="curve", x="a", y="b", output="o.png"))
    with pytest.raises(PlotError, match="no data rows"):
        render(spec)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(PlotError, match="unknown kind"):
        PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                 kind="pie", x="a", output="o.png"))


def test_spec_requires_kind_specific_columns(tmp_path):
    with pytest.raises(PlotError, match="heatmap needs"):
        PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                 kind="heatmap", x="a", y="b", output="o.png"))


def test_json_result_table_loads(tmp_path):
    payload = {
        "schema": 1,
        "scenario": "x",
        "n_modes": 2,
        "axis_labels": ["theta_p"],
        "rows": [
            {"values": {"theta_p": 0.0},
             "probs": {"n_modes": 2, "p_pp": 0.48, "p_pm": 0.02, "p_mp": 0.02,
                       "p_mm": 0.48, "same_phase": 0.96}},
            {"values": {"theta_p": 3.14},
             "probs": {"n_modes": 2, "p_pp": 0.26, "p_pm": 0.24, "p_mp": 0.24,
                       "p_mm": 0.26, "same_phase": 0.52}},
        ],
    }
    (tmp_path / "r.json").write_text(json.dumps(payload))
    columns, rows = load_table(tmp_path / "r.json")
    assert "same_phase" in columns and "n_modes" not in columns
    assert rows[0]["theta_p"] == 0.0 and rows[1]["same_phase"] == 0.52

    spec = write_spec(tmp_path / "s.json", input="r.json", kind="curve",
                      x="theta_p", y="same_phase", output="o.png")
    assert render(PlotSpec.load(spec)).read_bytes().startswith(PNG_MAGIC)


def test_wrong_json_schema_rejected(tmp_path):
    (tmp_path / "r.json").write_text(json.dumps({"schema": 2, "rows": []}))
    with pytest.raises(PlotError, match="schema"):
        load_table(tmp_path / "r.json")


def test_heatmap_renders_uneven_grid(tmp_path):
    rows = [[x, y, x + 10 * y] for x in (0.0, 1.0, 3.0) for y in (0.0, 2.0)]
    write_csv(tmp_path / "t.csv", ["x", "y", "v"], rows)
    spec = PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                    kind="heatmap", x="x", y="y", value="v",
                                    output="o.png"))
    assert render(spec).read_bytes().startswith(PNG_MAGIC)
    assert render(spec).read_bytes() == render(spec).read_bytes()


def test_category_legend_covers_exactly_the_states_present(tmp_path):
    cells = [(x, y, 0) for x in (0.0, 1.0) for y in (0.0, 1.0)]
    cells[1] = (0.0, 1.0, 1)
    cells[2] = (1.0, 0.0, 3)
    rows = [dict(zip(["x", "y", "p_pp", "p_pm", "p_mp", "p_mm"], r))
            for r in quadrant_rows(cells)]
    _, _, grid, present = category_layout(rows, "x", "y")
    assert present == ["(+,+)", "(+,-)", "(-,-)"]
    assert int(grid.max()) == len(present) - 1

    write_csv(tmp_path / "t.csv", ["x", "y", "p_pp", "p_pm", "p_mp", "p_mm"],
              quadrant_rows(cells))
    spec = PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                    kind="category-map", x="x", y="y",
                                    output="o.png"))
    assert render(spec).read_bytes().startswith(PNG_MAGIC)


def test_category_map_requires_quadrant_columns(tmp_path):
    write_csv(tmp_path / "t.csv", ["x", "y", "p_pp"], [[0, 0, 1.0]])
    spec = PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                    kind="category-map", x="x", y="y",
                                    output="o.png"))
    with pytest.raises(PlotError, match="p_pm"):
        render(spec)


def test_render_does_not_mutate_input(tmp_path):
    write_csv(tmp_path / "t.csv", ["a", "b"], [[0.0, 1.0], [1.0, 3.0]])
    before = (tmp_path / "t.csv").read_bytes()
    spec = PlotSpec.load(write_spec(tmp_path / "s.json", input="t.csv",
                                    kind="curve", x="a", y="b", output="o.png"))
    render(spec)
    assert (tmp_path / "t.csv").read_bytes() == before


# ---------------------------------------------------------------------------
# shipped examples


def test_example_specs_render(tmp_path):
    specs = sorted(EXAMPLES.glob("*.json"))
    assert len(specs) >= 3
    kinds = set()
    for path in specs:
        spec = PlotSpec.load(path)
        kinds.add(spec.kind)
        out = render(PlotSpec(input=spec.input, kind=spec.kind,
                              output=tmp_path / spec.output.name, x=spec.x,
                              y=spec.y, value=spec.value, title=spec.title))
        assert out.read_bytes().startswith(PNG_MAGIC)
    assert kinds == {"curve", "heatmap", "category-map"}


def test_example_phase_curve_is_cosine_like():
    _, rows = load_table(EXAMPLES / "data" / "theta_sweep.csv")
    same = [r["same_phase"] for r in rows]
    assert 0.90 <= max(same) <= 1.0
    assert 0.40 <= min(same) <= 0.60
    assert max(same[0], same[-1]) == max(same)
    assert abs(np.argmin(same) - (len(same) - 1) / 2) <= 1


def test_example_boundary_map_shows_three_regions():
    _, rows = load_table(EXAMPLES / "data" / "boundary_grid.csv")
    xs, ys, grid, present = category_layout(rows, "drives.0.omega_d",
                                            "drives.1.omega_d")
    assert len(present) >= 3
    diag = [present[int(grid[i, i])] for i in range(len(xs))]
    assert diag[0] in ("(+,+)", "(-,-)")
    assert diag[-1] == "(+,-)"
