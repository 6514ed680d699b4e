"""Vector figures from the CSV outputs.

Every figure is described by a :class:`PlotSpec` that binds series to CSV
columns. Rendering uses the non-interactive Agg backend and writes SVG, so no
display is needed.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "drivenscatter"  # stable element ids
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import read_csv  # noqa: E402

__all__ = ["PlotKind", "PlotSpec", "MissingColumn", "emit_plot", "H_PRIME"]

H_PRIME = 0.588


class MissingColumn(KeyError):
    pass


class PlotKind(str, enum.Enum):
    SCATTER_XY = "scatter_xy"
    LOGLOG = "loglog"
    GRID_HEATMAP = "grid_heatmap"
    MANIFOLD_OVERLAY = "manifold_overlay"


@dataclass
class PlotSpec:
    """What to draw.

    ``series`` holds (x column, y column) pairs. For ``grid_heatmap`` the
    first pair names the axes and ``value`` the cell column. For
    ``manifold_overlay`` ``group`` splits rows into separate curves.
    ``hlines`` are horizontal reference levels such as the escape energy.
    """

    kind: PlotKind
    series: List[Tuple[str, str]]
    xlabel: str = ""
    ylabel: str = ""
    title: str = ""
    hlines: List[float] = field(default_factory=list)
    value: Optional[str] = None
    group: Optional[str] = None
    fit_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.kind = PlotKind(self.kind)
        if not self.series:
            raise ValueError("at least one series is required")
        if self.kind is PlotKind.GRID_HEATMAP and self.value is None:
            raise ValueError("grid_heatmap needs a value column")

    def columns(self) -> List[str]:
        cols = [c for pair in self.series for c in pair]
        cols += [c for c in (self.value, self.group) if c]
        return cols


def _check_columns(spec: PlotSpec, header: Sequence[str], path) -> None:
    missing = [c for c in spec.columns() if c not in header]
    if missing:
        raise MissingColumn(f"{path}: missing column(s) {', '.join(missing)}")


def _loglog_fit(x, y, fit_range):
    m = (x > 0) & (y > 0)
    if fit_range is not None:
        m &= (x >= fit_range[0]) & (x <= fit_range[1])
    if m.sum() < 2:
        return None
    slope, icpt = np.polyfit(np.log(x[m]), np.log(y[m]), 1)
    return slope, icpt, x[m]


def emit_plot(spec: PlotSpec, csv_path: Union[str, Path], out: Union[str, Path]) -> Path:
    """Render ``spec`` from ``csv_path`` into the SVG file ``out``.

    A CSV with a header but no rows still gives a figure with empty axes.
    """
    header, cols = read_csv(csv_path)
    if header:
        _check_columns(spec, header, csv_path)
    else:
        cols = {c: np.empty(0) for c in spec.columns()}
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    try:
        if spec.kind is PlotKind.SCATTER_XY:
            for xc, yc in spec.series:
                ax.plot(cols[xc], cols[yc], ".", ms=1.5, label=yc)
        elif spec.kind is PlotKind.LOGLOG:
            for xc, yc in spec.series:
                x, y = cols[xc], cols[yc]
                good = (x > 0) & (y > 0)
                ax.plot(x[good], y[good], "o", ms=2.5, label=yc)
                fit = _loglog_fit(x, y, spec.fit_range)
                if fit is not None:
                    slope, icpt, xs = fit
                    xx = np.array([xs.min(), xs.max()])
                    ax.plot(xx, np.exp(icpt) * xx ** slope, "-", lw=1.0,
                            label=f"z = {-slope:.3f}")
            ax.set_xscale("log")
            ax.set_yscale("log")
            if not any(len(line.get_xdata()) for line in ax.get_lines()):
                ax.set_xlim(1, 10)
                ax.set_ylim(1, 10)
        elif spec.kind is PlotKind.GRID_HEATMAP:
            xc, yc = spec.series[0]
            x, y, v = cols[xc], cols[yc], cols[spec.value]
            if len(v):
                xu, yu = np.unique(x), np.unique(y)
                img = np.full((len(yu), len(xu)), np.nan)
                img[np.searchsorted(yu, y), np.searchsorted(xu, x)] = v
                mesh = ax.pcolormesh(xu, yu, img, shading="nearest", cmap="viridis")
                fig.colorbar(mesh, ax=ax, label=spec.value)
        elif spec.kind is PlotKind.MANIFOLD_OVERLAY:
            for xc, yc in spec.series:
                x, y = cols[xc], cols[yc]
                if spec.group is None:
                    ax.plot(x, y, "-", lw=0.6)
                    continue
                g = cols[spec.group]
                for key in np.unique(g[np.isfinite(g)]):
                    m = g == key
                    ax.plot(x[m], y[m], "-", lw=0.6, label=f"{spec.group} {key:g}")
        for level in spec.hlines:
            ax.axhline(level, color="k", lw=0.8, ls="--", label=f"{level:g}")
        ax.set_xlabel(spec.xlabel or spec.series[0][0])
        ax.set_ylabel(spec.ylabel or spec.series[0][1])
        if spec.title:
            ax.set_title(spec.title)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(fontsize="small")
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        # fixed metadata keeps the SVG reproducible
        fig.savefig(out, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    return out


def default_specs() -> Dict[str, PlotSpec]:
    """Plot specs matching the CSV layouts written by the command line."""
    return {
        "sweep": PlotSpec(PlotKind.SCATTER_XY, [("input", "h0_final")],
                          ylabel="asymptotic energy", hlines=[H_PRIME]),
        "sweep_nc": PlotSpec(PlotKind.SCATTER_XY, [("input", "n_c")], ylabel="N_c"),
        "survive": PlotSpec(PlotKind.LOGLOG, [("t", "N")], xlabel="t", ylabel="N(t)"),
        "zeros": PlotSpec(PlotKind.LOGLOG, [("n", "N")], xlabel="n", ylabel="N(n)"),
        "grid": PlotSpec(PlotKind.GRID_HEATMAP, [("x0", "v0")], value="n_c"),
        "manifolds": PlotSpec(PlotKind.MANIFOLD_OVERLAY, [("x", "p")], group="curve"),
    }
