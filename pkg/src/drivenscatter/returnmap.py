"""Return map on the section x = 0.

Zeros of a solution are labelled by polar coordinates ``(p, tau)`` with
``p >= 0`` and ``tau = nu t mod 2 pi``. For the periodic driver
``f(t + pi/nu) = -f(t)`` and V is even, so ``y(t) = -x(t - pi/nu)`` is again a
solution. A crossing with negative momentum at phase ``tau`` is therefore the
same point of the section as the crossing ``(|p|, tau + pi)``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import shapely
from shapely.geometry import Polygon

from . import _kernel as K
from .dynamics import (Driver, DynamicsError, State, SystemConfig, potential_value, run_raw)
from .parallel import parallel_map

__all__ = [
    "SectionPoint", "Outcome", "ReturnOutcome", "RegionClass", "BoundaryResult", "AreaCheck",
    "NotInRPlus", "SameClassEndpoints", "RegionNotInRPlus",
    "return_map", "h_plus", "h_minus", "classify", "boundary_bisect",
    "escape_index", "qn_membership", "area_check", "section_point",
]

TWO_PI = 2.0 * math.pi


class NotInRPlus(ValueError):
    pass


class SameClassEndpoints(ValueError):
    pass


class RegionNotInRPlus(ValueError):
    pass


@dataclass(frozen=True)
class SectionPoint:
    p: float
    tau: float

    def __post_init__(self):
        if not (self.p >= 0 and math.isfinite(self.p)):
            raise ValueError("SectionPoint needs finite p >= 0")
        object.__setattr__(self, "tau", float(self.tau) % TWO_PI)

    @property
    def xy(self) -> Tuple[float, float]:
        """Cartesian view in which p dp dtau is the ordinary area element."""
        return self.p * math.cos(self.tau), self.p * math.sin(self.tau)

    @classmethod
    def from_xy(cls, x: float, y: float) -> "SectionPoint":
        return cls(math.hypot(x, y), math.atan2(y, x))


def section_point(p_signed: float, t: float, nu: float) -> SectionPoint:
    """Section label of a zero crossing with signed momentum at time t."""
    tau = nu * t + (math.pi if p_signed < 0 else 0.0)
    return SectionPoint(abs(p_signed), tau)


class Outcome(enum.Enum):
    RETURNS = "returns"
    ESCAPES = "escapes"
    UNDECIDED = "undecided"


@dataclass
class ReturnOutcome:
    kind: Outcome
    direction: str
    next: Optional[SectionPoint] = None
    turning_x: float = math.nan
    return_time: float = math.nan

    @property
    def returns(self) -> bool:
        return self.kind is Outcome.RETURNS


@dataclass(frozen=True)
class RegionClass:
    forward: str  # Rplus | Hplus | undecided (Pplus_approx from bisection only)
    backward: str  # Rminus | Hminus | undecided


def _check(config: SystemConfig):
    if config.driver is Driver.F1:
        raise ValueError("the return map needs the periodic driver (or none)")


def return_map(config: SystemConfig, pt: SectionPoint, direction: str = "forward", *,
               t_limit: Optional[float] = None, prm=None) -> ReturnOutcome:
    """Next (forward) or previous (backward) zero of x starting on the section.

    ``turning_x`` is the extremum of x between the two zeros. The orbit
    escapes when the no-return criterion fires; it is undecided when
    ``t_limit`` (default: the no-return time) runs out first.
    """
    _check(config)
    if direction not in ("forward", "backward"):
        raise ValueError("direction must be 'forward' or 'backward'")
    if prm is None:
        prm = config.params()
    sgn = 1.0 if direction == "forward" else -1.0
    dt = sgn * config.step
    t0 = pt.tau / config.nu
    limit = config.noreturn_time * 1.01 if t_limit is None else float(t_limit)
    st, t1, p1, xext, _ = K.first_return(0.0, pt.p, t0, dt, prm, int(config.max_steps), limit)
    if st == K.ST_CROSSINGS:
        return ReturnOutcome(Outcome.RETURNS, direction, section_point(p1, t1, config.nu),
                             float(xext), float(abs(t1 - t0)))
    if st in (K.ST_ESCAPED, K.ST_NORETURN):
        return ReturnOutcome(Outcome.ESCAPES, direction)
    if st == K.ST_STEPLIMIT or st == K.ST_NONFINITE:
        raise DynamicsError(f"return map failed with status {st}")
    return ReturnOutcome(Outcome.UNDECIDED, direction)


def _h(config, pt, direction):
    out = return_map(config, pt, direction)
    if not out.returns:
        raise NotInRPlus(f"{pt} does not return ({direction}): {out.kind.value}")
    return config.omega ** 2 * potential_value(config.potential, out.turning_x)


def h_plus(config: SystemConfig, pt: SectionPoint) -> float:
    """omega^2 V(X+) with X+ the turning point before the next return."""
    return _h(config, pt, "forward")


def h_minus(config: SystemConfig, pt: SectionPoint) -> float:
    """omega^2 V(X-) with X- the turning point after the previous zero."""
    return _h(config, pt, "backward")


def _fate(config: SystemConfig, pt: SectionPoint, direction: str, prm=None) -> Tuple[str, float]:
    """('returns' | 'escapes' | 'undecided', return time).

    Conservative systems are decided exactly from the energy so that points
    just inside the energy boundary do not need their (huge) return time.
    """
    if prm is None:
        prm = config.params()
    if config.amplitude == 0.0:
        e = 0.5 * pt.p * pt.p
        return ("escapes", math.nan) if e >= config.escape_energy else ("returns", math.nan)
    out = return_map(config, pt, direction, prm=prm)
    return out.kind.value, out.return_time


def classify(config: SystemConfig, pt: SectionPoint) -> RegionClass:
    names_f = {"returns": "Rplus", "escapes": "Hplus", "undecided": "undecided"}
    names_b = {"returns": "Rminus", "escapes": "Hminus", "undecided": "undecided"}
    return RegionClass(names_f[_fate(config, pt, "forward")[0]],
                       names_b[_fate(config, pt, "backward")[0]])


@dataclass
class BoundaryResult:
    p_boundary: float
    p_inside: float
    p_outside: float
    inside_path: List[Tuple[float, float]] = field(default_factory=list)  # (p, return time)
    label: str = "Pplus_approx"


def boundary_bisect(config: SystemConfig, tau: float, p_lo: float, p_hi: float,
                    direction: str = "forward", tol: float = 1e-6) -> BoundaryResult:
    """Bisect the ray ``tau = const`` between a returning and an escaping point.

    The sequence of inside points and their return times is kept; the
    return time diverges as the boundary is approached from inside.
    """
    _check(config)
    prm = config.params()
    f_lo, t_lo = _fate(config, SectionPoint(p_lo, tau), direction, prm)
    f_hi, t_hi = _fate(config, SectionPoint(p_hi, tau), direction, prm)
    if "undecided" in (f_lo, f_hi):
        raise SameClassEndpoints("an endpoint is undecided")
    if f_lo == f_hi:
        raise SameClassEndpoints(f"both endpoints {f_lo}")
    inside, outside = (p_lo, p_hi) if f_lo == "returns" else (p_hi, p_lo)
    path = [(inside, t_lo if f_lo == "returns" else t_hi)]
    while abs(outside - inside) > tol:
        mid = 0.5 * (inside + outside)
        fate, t_ret = _fate(config, SectionPoint(mid, tau), direction, prm)
        if fate == "undecided":
            raise DynamicsError(f"undecided point p={mid} during bisection")
        if fate == "returns":
            inside = mid
            path.append((mid, t_ret))
        else:
            outside = mid
    label = "Pplus_approx" if direction == "forward" else "Pminus_approx"
    return BoundaryResult(0.5 * (inside + outside), inside, outside, path, label)


# ---------------------------------------------------------------------------
# Q_n: n returns, then escape

def escape_index(config: SystemConfig, pt: SectionPoint, n_max: int) -> Optional[int]:
    """Number of forward returns before escape, following the return map.

    Returns ``n`` with ``D^k(pt)`` returning for k < n and ``D^n(pt)``
    escaping, ``n_max + 1`` when more than ``n_max`` returns happen, or
    ``None`` when an iterate is undecided.
    """
    prm = config.params()
    cur = pt
    for k in range(n_max + 1):
        out = return_map(config, cur, "forward", prm=prm)
        if out.kind is Outcome.ESCAPES:
            return k
        if out.kind is Outcome.UNDECIDED:
            return None
        cur = out.next
    return n_max + 1


def escape_index_direct(config: SystemConfig, pt: SectionPoint, n_max: int) -> Optional[int]:
    """Same count from a single continuous integration (cross-check)."""
    prm = config.params()
    t0 = pt.tau / config.nu
    t_end = t0 + (n_max + 2) * config.noreturn_time
    out = run_raw(config, State(0.0, pt.p, t0), t_end, stop_after=n_max + 2, prm=prm)
    st, n = out[0], len(out[5])
    if st in (K.ST_ESCAPED, K.ST_NORETURN):
        return n - 1
    if st == K.ST_CROSSINGS:
        return n_max + 1
    return None


def qn_membership(config: SystemConfig, pt: SectionPoint, n: int) -> Optional[bool]:
    """Whether ``pt`` returns exactly ``n`` times and then escapes.

    ``None`` means undecided within the cutoffs.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    q = escape_index(config, pt, n)
    if q is None:
        return None
    return q == n


# ---------------------------------------------------------------------------
# area preservation

@dataclass
class AreaCheck:
    ratio: float
    stderr: float
    polygon_ratio: float
    samples: int
    hits: int
    source_area: float


def _forward_xy(job):
    config, xs, ys = job
    prm = config.params()
    out = np.empty((len(xs), 2))
    for i, (x, y) in enumerate(zip(xs, ys)):
        r = return_map(config, SectionPoint.from_xy(x, y), "forward", prm=prm)
        if not r.returns:
            out[i] = np.nan
        else:
            out[i] = r.next.xy
    return out


def _backward_hits(job):
    config, xs, ys, cx, cy, rad = job
    prm = config.params()
    hits = 0
    for x, y in zip(xs, ys):
        r = return_map(config, SectionPoint.from_xy(x, y), "backward", prm=prm)
        if r.returns:
            bx, by = r.next.xy
            if (bx - cx) ** 2 + (by - cy) ** 2 <= rad * rad:
                hits += 1
    return hits


def _chunks(n, size):
    return [(i, min(n, i + size)) for i in range(0, n, size)]


def area_check(config: SystemConfig, center: SectionPoint, radius: float, samples: int, *,
               boundary_points: int = 2000, seed: int = 0, workers: Optional[int] = None,
               chunk: int = 500) -> AreaCheck:
    """Area of the image of a disk in the section over the disk's area.

    The disk lives in the Cartesian view (p cos tau, p sin tau), where the
    area element is p dp dtau. The image boundary is traced by mapping
    ``boundary_points`` points of the circle; its slightly enlarged polygon
    is then sampled uniformly and each sample is mapped backward: it belongs
    to the image exactly when its pre-image lies in the disk.
    """
    _check(config)
    cx, cy = center.xy
    th = np.linspace(0.0, TWO_PI, boundary_points, endpoint=False)
    bx, by = cx + radius * np.cos(th), cy + radius * np.sin(th)
    parts = parallel_map(_forward_xy, [(config, bx[a:b], by[a:b]) for a, b in _chunks(len(bx), chunk)],
                         workers=workers)
    img = np.concatenate(parts)
    if np.any(~np.isfinite(img)):
        raise RegionNotInRPlus("part of the disk boundary does not return")
    src_area = math.pi * radius * radius
    poly = Polygon(img)
    poly_ratio = abs(poly.area) / src_area
    if not poly.is_valid:
        poly = poly.buffer(0)
    # enlarge by a few boundary spacings so the true image is covered
    spacing = float(np.max(np.hypot(*np.diff(np.vstack([img, img[:1]]), axis=0).T)))
    region = poly.buffer(3.0 * spacing)
    x0, y0, x1, y1 = region.bounds
    rng = np.random.default_rng(seed)
    pts = np.empty((0, 2))
    while len(pts) < samples:
        cand = rng.uniform((x0, y0), (x1, y1), size=(2 * samples, 2))
        cand = cand[shapely.contains_xy(region, cand[:, 0], cand[:, 1])]
        pts = np.vstack([pts, cand])
    pts = pts[:samples]
    jobs = [(config, pts[a:b, 0], pts[a:b, 1], cx, cy, radius) for a, b in _chunks(samples, chunk)]
    hits = int(sum(parallel_map(_backward_hits, jobs, workers=workers)))
    frac = hits / samples
    ratio = region.area * frac / src_area
    stderr = region.area * math.sqrt(frac * (1 - frac) / samples) / src_area
    return AreaCheck(ratio, stderr, poly_ratio, samples, hits, src_area)


def area_check_source(config: SystemConfig, center: SectionPoint, radius: float, samples: int,
                      *, seed: int = 0, workers: Optional[int] = None, chunk: int = 500):
    """Forward images of uniform samples of the disk (all must return)."""
    cx, cy = center.xy
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(size=samples))
    a = rng.uniform(0, TWO_PI, size=samples)
    xs, ys = cx + r * np.cos(a), cy + r * np.sin(a)
    parts = parallel_map(_forward_xy, [(config, xs[i:j], ys[i:j]) for i, j in _chunks(samples, chunk)],
                         workers=workers)
    img = np.concatenate(parts)
    if np.any(~np.isfinite(img)):
        raise RegionNotInRPlus("a sample of the disk does not return")
    return np.column_stack([xs, ys]), img
