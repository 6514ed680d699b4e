import numpy as np
import pytest

from drivenscatter.io import write_csv
from drivenscatter.plotting import H_PRIME, MissingColumn, PlotKind, PlotSpec, emit_plot


def test_scatter_with_reference_line(tmp_path):
    csv = write_csv(tmp_path / "s.csv", ["input", "h0_final"],
                    [(v, 0.6 + 0.01 * v) for v in np.linspace(-1, 1, 30)])
    spec = PlotSpec(PlotKind.SCATTER_XY, [("input", "h0_final")], hlines=[H_PRIME])
    svg = emit_plot(spec, csv, tmp_path / "s.svg").read_text()
    assert svg.lstrip().startswith("<?xml") and "<svg" in svg
    assert "0.588" in svg  # legend entry of the reference level


def test_loglog_annotates_exponent(tmp_path):
    t = np.geomspace(1, 1e3, 30)
    csv = write_csv(tmp_path / "n.csv", ["t", "N"], zip(t, 1e5 * t ** -1.6))
    svg = emit_plot(PlotSpec("loglog", [("t", "N")]), csv, tmp_path / "n.svg").read_text()
    assert "z = 1.600" in svg


def test_missing_column(tmp_path):
    csv = write_csv(tmp_path / "s.csv", ["a", "b"], [(1, 2)])
    with pytest.raises(MissingColumn):
        emit_plot(PlotSpec("scatter_xy", [("a", "c")]), csv, tmp_path / "x.svg")


@pytest.mark.parametrize("empty", ["header", "nothing"])
def test_empty_csv_gives_empty_axes(tmp_path, empty):
    p = tmp_path / "e.csv"
    p.write_text("t,N\n" if empty == "header" else "")
    out = emit_plot(PlotSpec("loglog", [("t", "N")]), p, tmp_path / "e.svg")
    assert "<svg" in out.read_text()


def test_heatmap_and_overlay(tmp_path):
    rows = [(x, v, int(x + v > 1)) for x in (0.0, 0.5, 1.0) for v in (0.0, 0.5, 1.0)]
    csv = write_csv(tmp_path / "g.csv", ["x0", "v0", "n_c"], rows)
    emit_plot(PlotSpec("grid_heatmap", [("x0", "v0")], value="n_c"), csv, tmp_path / "g.svg")
    csv = write_csv(tmp_path / "m.csv", ["x", "p", "curve"],
                    [(i, i * i, i % 2) for i in range(10)])
    emit_plot(PlotSpec("manifold_overlay", [("x", "p")], group="curve"), csv, tmp_path / "m.svg")
    with pytest.raises(ValueError):
        PlotSpec("grid_heatmap", [("x0", "v0")])


def test_svg_is_reproducible(tmp_path):
    csv = write_csv(tmp_path / "s.csv", ["a", "b"], [(i, i * i) for i in range(5)])
    spec = PlotSpec("scatter_xy", [("a", "b")])
    a = emit_plot(spec, csv, tmp_path / "1.svg").read_bytes()
    b = emit_plot(spec, csv, tmp_path / "2.svg").read_bytes()
    assert a == b
