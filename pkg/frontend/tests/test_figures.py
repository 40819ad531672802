"""Tests for the figure renderer.

Unit tests drive hand-written CSV fragments; the end-to-end class generates
real CSVs through the `splitmh` command line tool (skipped when it is not
installed) and checks the two reference figures: composition-efficiency
curves with filled markers on the per-t optimum, and a tuning curve whose
0.574 reference line crosses the acceptance curve within one grid step of
the empirical jump-size peak.
"""

import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from plots.figures import FigureSpec, PlotError, load_spec, render


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    return str(path)


def write_spec(path, **doc):
    path.write_text(json.dumps(doc))
    return str(path)


def artist(fig, gid):
    for ax in fig.axes:
        for line in ax.get_lines():
            if line.get_gid() == gid:
                return line
    raise AssertionError(f"no artist with gid {gid!r}")


def efficiency_rows():
    rows = []
    for t, effs in (("0", (0.2, 0.5, 0.4)), ("2", (0.1, 0.3, 0.6))):
        for n, eff in enumerate(effs, start=1):
            rows.append({"t_phi_cost": t, "n_compositions": str(n), "efficiency": str(eff)})
    return ["t_phi_cost", "n_compositions", "efficiency"], rows


class TestLoadSpec:
    def test_round_trip(self, tmp_path):
        path = write_spec(
            tmp_path / "s.json",
            csv="data.csv",
            kind="tuning_curve",
            out="fig.png",
            title="T",
            dpi=72,
        )
        spec = load_spec(path)
        assert spec == FigureSpec(
            csv_path="data.csv", kind="tuning_curve", out="fig.png", title="T", dpi=72
        )

    def test_unknown_key_named(self, tmp_path):
        path = write_spec(tmp_path / "s.json", csv="a", kind="jump_overlay", out="b", dpo=100)
        with pytest.raises(PlotError, match="dpo"):
            load_spec(path)

    @pytest.mark.parametrize("missing", ["csv", "kind", "out"])
    def test_required_keys(self, tmp_path, missing):
        doc = {"csv": "a", "kind": "tuning_curve", "out": "b"}
        doc.pop(missing)
        path = write_spec(tmp_path / "s.json", **doc)
        with pytest.raises(PlotError, match=missing):
            load_spec(path)

    def test_bad_kind(self, tmp_path):
        path = write_spec(tmp_path / "s.json", csv="a", kind="scatter3d", out="b")
        with pytest.raises(PlotError, match="scatter3d"):
            load_spec(path)

    def test_not_json(self, tmp_path):
        path = tmp_path / "s.json"
        path.write_text("{oops")
        with pytest.raises(PlotError, match="not valid JSON"):
            load_spec(str(path))

    def test_bad_dpi(self, tmp_path):
        path = write_spec(tmp_path / "s.json", csv="a", kind="tuning_curve", out="b", dpi=0)
        with pytest.raises(PlotError, match="dpi"):
            load_spec(path)


class TestLstepEfficiency:
    def test_marks_per_t_argmax(self, tmp_path):
        columns, rows = efficiency_rows()
        data = write_csv(tmp_path / "eff.csv", columns, rows)
        out = tmp_path / "eff.png"
        fig = render(FigureSpec(csv_path=data, kind="lstep_efficiency", out=str(out)))
        assert out.exists() and out.stat().st_size > 0
        # t=0 peaks at L=2, t=2 at L=3
        assert artist(fig, "optimal-t0").get_xydata().tolist() == [[2.0, 0.5]]
        assert artist(fig, "optimal-t2").get_xydata().tolist() == [[3.0, 0.6]]
        curve = artist(fig, "efficiency-t0")
        assert curve.get_xdata().tolist() == [1.0, 2.0, 3.0]

    def test_row_order_does_not_matter(self, tmp_path):
        columns, rows = efficiency_rows()
        straight = write_csv(tmp_path / "a.csv", columns, rows)
        shuffled = write_csv(tmp_path / "b.csv", columns, rows[::-1])
        fig_a = render(FigureSpec(csv_path=straight, kind="lstep_efficiency", out=str(tmp_path / "a.png")))
        fig_b = render(FigureSpec(csv_path=shuffled, kind="lstep_efficiency", out=str(tmp_path / "b.png")))
        for gid in ("efficiency-t0", "efficiency-t2", "optimal-t0", "optimal-t2"):
            assert np.array_equal(artist(fig_a, gid).get_xydata(), artist(fig_b, gid).get_xydata())

    def test_rendering_is_deterministic(self, tmp_path):
        columns, rows = efficiency_rows()
        data = write_csv(tmp_path / "eff.csv", columns, rows)
        spec = FigureSpec(csv_path=data, kind="lstep_efficiency", out=str(tmp_path / "x.png"))
        first = render(spec)
        second = render(spec)
        for gid in ("efficiency-t0", "optimal-t0"):
            assert np.array_equal(artist(first, gid).get_xydata(), artist(second, gid).get_xydata())

    def test_missing_column_named_and_no_file(self, tmp_path):
        data = write_csv(
            tmp_path / "eff.csv",
            ["t_phi_cost", "n_compositions"],
            [{"t_phi_cost": "0", "n_compositions": "1"}],
        )
        out = tmp_path / "eff.png"
        with pytest.raises(PlotError, match="'efficiency'"):
            render(FigureSpec(csv_path=data, kind="lstep_efficiency", out=str(out)))
        assert not out.exists()

    def test_empty_sweep_errors_and_no_file(self, tmp_path):
        columns, _ = efficiency_rows()
        data = write_csv(tmp_path / "empty.csv", columns, [])
        out = tmp_path / "empty.png"
        with pytest.raises(PlotError, match="no data rows"):
            render(FigureSpec(csv_path=data, kind="lstep_efficiency", out=str(out)))
        assert not out.exists()


def tuning_rows(family="sla"):
    columns = [
        "family",
        "sweep_parameter",
        "sweep_value",
        "l",
        "empirical_acceptance",
        "empirical_jump_1",
        "empirical_jump_2",
    ]
    grid = (1.0, 1.2, 1.4, 1.6)
    acc = (0.8, 0.65, 0.55, 0.4)
    jump = (0.1, 0.3, 0.4, 0.2)
    rows = [
        {
            "family": family,
            "sweep_parameter": "l",
            "sweep_value": str(l),
            "l": str(l),
            "empirical_acceptance": str(a),
            "empirical_jump_1": str(j),
            "empirical_jump_2": str(j),
        }
        for l, a, j in zip(grid, acc, jump)
    ]
    return columns, rows


class TestTuningCurve:
    def test_reference_line_and_peak_marker(self, tmp_path):
        columns, rows = tuning_rows()
        data = write_csv(tmp_path / "sweep.csv", columns, rows)
        out = tmp_path / "sweep.png"
        fig = render(FigureSpec(csv_path=data, kind="tuning_curve", out=str(out)))
        assert out.exists()
        ref = artist(fig, "reference")
        assert set(np.asarray(ref.get_ydata()).tolist()) == {0.574}
        assert artist(fig, "jump-peak").get_xydata().tolist() == [[1.4, 0.4]]
        acc_curve = artist(fig, "acceptance")
        assert acc_curve.get_ydata().tolist() == [0.8, 0.65, 0.55, 0.4]

    def test_hamiltonian_reference(self, tmp_path):
        columns, rows = tuning_rows(family="hmc")
        data = write_csv(tmp_path / "sweep.csv", columns, rows)
        fig = render(FigureSpec(csv_path=data, kind="tuning_curve", out=str(tmp_path / "h.png")))
        assert set(np.asarray(artist(fig, "reference").get_ydata()).tolist()) == {0.651}

    def test_missing_jump_columns_named(self, tmp_path):
        columns, rows = tuning_rows()
        keep = columns[:-2]
        data = write_csv(
            tmp_path / "sweep.csv", keep, [{k: row[k] for k in keep} for row in rows]
        )
        with pytest.raises(PlotError, match="'empirical_jump_1'"):
            render(FigureSpec(csv_path=data, kind="tuning_curve", out=str(tmp_path / "x.png")))


class TestJumpOverlay:
    def columns_and_rows(self):
        columns = ["sweep_parameter", "sweep_value"]
        for prefix in ("predicted_jump_", "empirical_jump_", "stderr_jump_"):
            columns.extend(f"{prefix}{i}" for i in (1, 2, 3))
        rows = []
        for value, scale in (("0.1", 1.0), ("0.2", 2.0)):
            row = {"sweep_parameter": "h", "sweep_value": value}
            for i in (1, 2, 3):
                row[f"predicted_jump_{i}"] = str(scale * 0.1 * i)
                row[f"empirical_jump_{i}"] = str(scale * 0.1 * i + 0.01)
                row[f"stderr_jump_{i}"] = "0.005"
            rows.append(row)
        return columns, rows

    def test_predicted_and_empirical_series(self, tmp_path):
        columns, rows = self.columns_and_rows()
        data = write_csv(tmp_path / "rows.csv", columns, rows)
        out = tmp_path / "overlay.svg"
        fig = render(FigureSpec(csv_path=data, kind="jump_overlay", out=str(out)))
        assert out.exists() and out.stat().st_size > 0
        pred = artist(fig, "predicted-0")
        assert pred.get_ydata().tolist() == pytest.approx([0.1, 0.2, 0.3])
        emp = artist(fig, "empirical-1")
        assert emp.get_xdata().tolist() == [1.0, 2.0, 3.0]
        assert emp.get_ydata().tolist() == pytest.approx([0.21, 0.41, 0.61])

    def test_missing_stderr_named(self, tmp_path):
        columns, rows = self.columns_and_rows()
        keep = [c for c in columns if not c.startswith("stderr")]
        data = write_csv(
            tmp_path / "rows.csv", keep, [{k: row[k] for k in keep} for row in rows]
        )
        with pytest.raises(PlotError, match="stderr_jump_3"):
            render(FigureSpec(csv_path=data, kind="jump_overlay", out=str(tmp_path / "x.png")))


@pytest.fixture(scope="module")
def figures_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "efficiency.csv"
    subprocess.run(
        ["splitmh", "verify", "--suite", "figures", "--out", str(path)],
        check=True,
        capture_output=True,
    )
    return str(path)


@pytest.fixture(scope="module")
def tuning_csv(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    config = base / "config.json"
    config.write_text(
        json.dumps(
            {
                "target": {"dim": 200},
                "proposal": {"family": "sla", "scaling": {"l": 1.65}},
                "chain": {"n_steps": 100_000, "seed": 3},
                "sweep": {
                    "parameter": "l",
                    "grid": [1.3, 1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0],
                },
                "jump_directions": 3,
                "record_timing": False,
            }
        )
    )
    path = base / "tuning.csv"
    subprocess.run(
        ["splitmh", "run", "--config", str(config), "--out", str(path)],
        check=True,
        capture_output=True,
    )
    return str(path)


@pytest.mark.skipif(shutil.which("splitmh") is None, reason="splitmh CLI not installed")
class TestAgainstExperimentCli:
    """Render the two reference figures from real CLI output."""

    def test_efficiency_markers_sit_on_known_optima(self, figures_csv, tmp_path):
        out = tmp_path / "efficiency.png"
        fig = render(FigureSpec(csv_path=figures_csv, kind="lstep_efficiency", out=str(out)))
        assert out.exists()
        # Integer argmax of L^(2/3)/(1.426 + 0.426 t + L) per phi-cost t.
        for t, best in ((0, 3), (1, 4), (2, 5), (4, 6), (8, 10)):
            marker = artist(fig, f"optimal-t{t}")
            assert marker.get_xdata().tolist() == [float(best)]

    def test_reference_rate_crosses_at_jump_peak(self, tuning_csv, tmp_path):
        out = tmp_path / "tuning.png"
        fig = render(FigureSpec(csv_path=tuning_csv, kind="tuning_curve", out=str(out)))
        acc = artist(fig, "acceptance").get_xydata()
        reference = artist(fig, "reference").get_ydata()[0]
        assert reference == 0.574
        # interpolate where the plotted acceptance curve crosses the line
        above = np.where(acc[:, 1] >= reference)[0][-1]
        x0, y0 = acc[above]
        x1, y1 = acc[above + 1]
        crossing = x0 + (reference - y0) * (x1 - x0) / (y1 - y0)
        peak = artist(fig, "jump-peak").get_xdata()[0]
        grid_step = float(np.diff(acc[:, 0]).max())
        assert abs(crossing - peak) <= grid_step + 1e-12

    def test_cli_entry_point_writes_figure(self, figures_csv, tmp_path):
        out = tmp_path / "fig.png"
        spec = tmp_path / "spec.json"
        spec.write_text(
            json.dumps({"csv": figures_csv, "kind": "lstep_efficiency", "out": str(out)})
        )
        proc = subprocess.run(
            [sys.executable, "-m", "plots.cli", "render", "--spec", str(spec)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists() and out.stat().st_size > 0

    def test_cli_reports_bad_spec(self, tmp_path):
        spec = tmp_path / "spec.json"
        spec.write_text(json.dumps({"csv": "nowhere.csv", "kind": "bad_kind", "out": "x.png"}))
        proc = subprocess.run(
            [sys.executable, "-m", "plots.cli", "render", "--spec", str(spec)],
            capture_output=True,
            text=True,
        )
        assert proc.returncode == 2
        assert "bad_kind" in proc.stderr
