"""Horseshoe geometry on an analytic kicked barrier map.

The driven oscillator at the reference parameters has no period-one saddle
at finite x, so the manifold machinery is shown on a map with two known
saddles at x = +-1: fixed points, invariant manifolds, the fundamental
region and the development parameter.
"""
from pathlib import Path

from drivenscatter.io import write_csv
from drivenscatter.plotting import PlotSpec, emit_plot
from drivenscatter.saddle import (
    KickedBarrierMap, development_parameter, find_fixed_points, fundamental_region,
    manifold_continuation,
)

OUT = Path("demo_output")
m = KickedBarrierMap(1.6)
fs = find_fixed_points(m, (-1.5, 1.5), (-1.5, 1.5), (15, 15))
for fp in fs.points:
    ev = ", ".join(f"{complex(e).real:+.4f}{complex(e).imag:+.4f}j" for e in fp.eigenvalues)
    print(f"{fp.label or '-':6s} {fp.stability.value:8s} at ({fp.location[0]:+.6f}, "
          f"{fp.location[1]:+.6f})  eigenvalues {ev}  residual {fp.residual:.1e}")

rows = []
for i, (label, kind) in enumerate([(l, k) for l in "AB" for k in ("unstable", "stable")]):
    for branch in (1, -1):
        c = manifold_continuation(m, fs.by_label(label), kind, branch, 6.0, stop_on_blowup=True)
        rows += [(x, p, 2 * i + (branch < 0)) for x, p in c.points]
csv = write_csv(OUT / "kicked_manifolds.csv", ["x", "p", "curve"], rows)
emit_plot(PlotSpec("manifold_overlay", [("x", "p")], group="curve"), csv,
          OUT / "kicked_manifolds.svg")

fr = fundamental_region(m, fs.by_label("A"), fs.by_label("B"), fs.by_label("inner"),
                        max_arclength=15.0)
print("corners:", {k: tuple(round(float(v), 5) for v in z) for k, z in fr.corners.items()})
print(f"region area {fr.area:.5f}, image area {fr.image_area:.5f}")
rep = development_parameter(m, fr, 2)
print("development parameter:", rep.to_dict())
