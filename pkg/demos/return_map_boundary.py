"""Return map on the section x = 0.

Bisects the boundary between returning and escaping points along one ray of
the section, shows that the return time diverges towards it, and checks
area preservation of the map on a small disk.
"""
import math

import numpy as np

from drivenscatter.dynamics import SystemConfig
from drivenscatter.returnmap import SectionPoint, area_check, boundary_bisect, return_map

free = SystemConfig(e0=0.0)
driven = SystemConfig(e0=1.0, nu=0.8)

res = boundary_bisect(free, 0.0, 0.5, 1.5, tol=1e-8)
print(f"undriven boundary p = {res.p_boundary:.6f}, sqrt(2 h') = {math.sqrt(2 * 0.588):.6f}")

res = boundary_bisect(driven, math.pi, 0.5, 3.0, tol=1e-7)
print(f"driven boundary at tau = pi: p = {res.p_boundary:.6f}")
for p, t in res.inside_path[::4]:
    print(f"  p = {p:.7f}  return time {t:9.2f}")
inner = [return_map(driven, SectionPoint(p, math.pi)).return_time
         for p in np.linspace(0.2, 0.9 * res.p_inside, 15)]
print(f"interior median return time {np.median(inner):.2f}")

chk = area_check(driven, SectionPoint(0.6, 3.6), 0.2, 20000)
print(f"area ratio {chk.ratio:.4f} +- {chk.stderr:.4f}, polygon ratio {chk.polygon_ratio:.5f}")
