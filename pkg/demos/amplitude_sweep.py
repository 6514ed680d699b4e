"""Outgoing energy as a function of the amplitude of the finite driver.

Fixes the launch (x0 = 0, v0 = 1.049) and scans e0. Regular intervals
alternate with irregular ones, and some regular intervals contain a
smooth jump of the zero count.
"""
from pathlib import Path

from drivenscatter.dynamics import Driver, SystemConfig
from drivenscatter.io import write_csv
from drivenscatter.plotting import H_PRIME, PlotSpec, emit_plot
from drivenscatter.scattering import segment_intervals, smooth_nc_jumps, sweep

OUT = Path("demo_output")
cfg = SystemConfig(driver=Driver.F1, nu=1.0, envelope_n=360)
recs = sweep(cfg, "e0", 0.0, 0.8, 1500, x0=0.0, v0=1.049)
csv = write_csv(OUT / "amplitude_sweep.csv", ["e0", "h0", "n_c"],
                [(r.input, r.h0_final, r.n_c) for r in recs])
seg = segment_intervals(recs)
print(f"{len(seg.regular_intervals)} regular intervals, {len(seg.singular_gaps)} singular gaps")
for a, b, na, nb in smooth_nc_jumps(seg):
    print(f"N_c jumps {na} -> {nb} inside a regular interval between e0 = {a:.5f} and {b:.5f}")
emit_plot(PlotSpec("scatter_xy", [("e0", "h0")], ylabel="outgoing energy", hlines=[H_PRIME]),
          csv, OUT / "amplitude_sweep.svg")
