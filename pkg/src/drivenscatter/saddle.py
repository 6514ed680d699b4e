"""Outermost saddles of the stroboscopic map and their invariant manifolds.

The operations here work on any area-preserving plane map that provides
vectorised ``forward``/``backward`` methods. :class:`StroboMap` is the one-period
map of the periodically driven oscillator; :class:`KickedBarrierMap` is a cheap
analytic map with saddles at x = +-1 and an elliptic point at the origin, used
as a reference for the geometry code.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, List, Optional, Tuple

import numpy as np
from shapely.geometry import LineString, Point, Polygon

from . import _kernel as K
from .dynamics import Driver, SystemConfig
from .parallel import parallel_map

__all__ = [
    "StroboMap", "KickedBarrierMap", "Stability", "FixedPointInfo", "FixedPointSearch",
    "find_fixed_points", "sprinkler", "SprinklerResult", "reflection_overlap",
    "ManifoldCurve", "manifold_continuation", "FundamentalRegion", "fundamental_region",
    "GapNode", "GapTree", "gap_tree", "gamma_from_index", "gap_index_from_crossings",
    "HorseshoeReport", "development_parameter", "SaddleError", "NoSaddleFound",
    "EmptyCloud", "CurvatureBlowup", "TipNotFound", "AmbiguousTip", "NotPeriodic",
]

DELTA0 = 1e-7
DS_MAX = 1e-2
DS_MIN = 1e-5
THETA_MAX = 0.3
DEFAULT_REGION = ((-6.0, 6.0), (-2.0, 2.0))


class SaddleError(RuntimeError):
    pass


class NotPeriodic(ValueError):
    pass


class NoSaddleFound(SaddleError):
    pass


class EmptyCloud(SaddleError):
    pass


class CurvatureBlowup(SaddleError):
    pass


class TipNotFound(SaddleError):
    pass


class AmbiguousTip(SaddleError):
    pass


# ---------------------------------------------------------------------------
# maps

class StroboMap:
    """One driver period of the f2-driven oscillator, sampled at ``phase``.

    ``phase`` is a time offset t0; the map advances t0 -> t0 + 2 pi / nu.
    Fixed RK4 steps with the configured step size (rounded to an integer
    number of steps per period).
    """

    def __init__(self, config: SystemConfig, phase: float = 0.0):
        if config.driver is not Driver.F2:
            raise NotPeriodic("stroboscopic map needs the periodic driver f2")
        self.config = config
        self.phase = float(phase)
        self.steps = max(1, int(round(config.period / config.step)))
        self.h = config.period / self.steps
        self.prm = config.params()

    def forward(self, x, p):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return K.advance_many(x, p, self.phase, self.h, self.steps, self.prm)

    def backward(self, x, p):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return K.advance_many(x, p, self.phase, -self.h, self.steps, self.prm)

    def survivors(self, x, p, periods, box):
        (xlo, xhi), (plo, phi) = box
        return K.sprinkle(np.asarray(x, dtype=float), np.asarray(p, dtype=float),
                          self.phase, self.h, self.steps, int(periods), self.prm,
                          xlo, xhi, plo, phi)

    def reflect(self, x, p):
        """Time-reversal partner: x -> -x maps W_s onto W_u (phase 0 or T/2)."""
        return -np.asarray(x), np.asarray(p)


class KickedBarrierMap:
    """p' = p + k (x^3 - x), x' = x + k p'.

    Saddles at (+-1, 0), elliptic point at the origin for 0 < k < 2.
    Orbits beyond |x| = ``cap`` are frozen at infinity.
    """

    def __init__(self, k: float = 1.0, cap: float = 1e3):
        self.k = float(k)
        self.cap = float(cap)

    def _clip(self, x, p):
        bad = ~(np.abs(x) < self.cap)
        if np.any(bad):
            x = np.where(bad, np.inf * np.sign(x), x)
            p = np.where(bad, np.nan, p)
        return x, p

    def forward(self, x, p):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        with np.errstate(invalid="ignore", over="ignore"):
            p1 = p + self.k * (x ** 3 - x)
            x1 = x + self.k * p1
        return self._clip(x1, p1)

    def backward(self, x, p):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        with np.errstate(invalid="ignore", over="ignore"):
            x0 = x - self.k * p
            p0 = p - self.k * (x0 ** 3 - x0)
        return self._clip(x0, p0)

    def survivors(self, x, p, periods, box):
        return _generic_survivors(self, x, p, periods, box)

    def reflect(self, x, p):
        # reversor of the kicked map: (x, p) -> (x, -p + k (x^3 - x)) composed
        # with the step; for the duality test (-x, -p) symmetry is used instead
        return -np.asarray(x), -np.asarray(p)


def _generic_survivors(mapping, x, p, periods, box):
    (xlo, xhi), (plo, phi) = box
    x = np.asarray(x, dtype=float).copy()
    p = np.asarray(p, dtype=float).copy()
    alive = np.ones(x.shape, dtype=bool)
    for _ in range(int(periods)):
        x, p = mapping.forward(x, p)
        with np.errstate(invalid="ignore"):
            alive &= (x >= xlo) & (x <= xhi) & (p >= plo) & (p <= phi)
    return alive, x, p


def _apply(mapping, z, n=1):
    x, p = np.array([z[0]]), np.array([z[1]])
    step = mapping.forward if n >= 0 else mapping.backward
    for _ in range(abs(n)):
        x, p = step(x, p)
    return np.array([x[0], p[0]])


def strobo_map(config: SystemConfig, x: float, p: float, phase: float = 0.0):
    """Advance (x, p) by exactly one driver period."""
    m = StroboMap(config, phase)
    xo, po = m.forward([x], [p])
    return float(xo[0]), float(po[0])


# ---------------------------------------------------------------------------
# fixed points

class Stability(str, enum.Enum):
    SADDLE = "saddle"
    ELLIPTIC = "elliptic"


@dataclass
class FixedPointInfo:
    location: Tuple[float, float]
    eigenvalues: Tuple[complex, complex]
    eigenvectors: np.ndarray  # columns, matching eigenvalues
    stability: Stability
    label: Optional[str] = None  # "A", "B", "inner" or None
    residual: float = math.nan

    @property
    def det(self) -> float:
        return float(np.real(self.eigenvalues[0] * self.eigenvalues[1]))

    def to_dict(self) -> dict:
        ev = [complex(e) for e in self.eigenvalues]
        return {"x": self.location[0], "p": self.location[1],
                "eigenvalues": [[e.real, e.imag] for e in ev],
                "stability": self.stability.value, "label": self.label,
                "residual": self.residual}

    def unstable(self) -> Tuple[float, np.ndarray]:
        i = int(np.argmax(np.abs(self.eigenvalues)))
        return float(np.real(self.eigenvalues[i])), np.real(self.eigenvectors[:, i])

    def stable(self) -> Tuple[float, np.ndarray]:
        i = int(np.argmin(np.abs(self.eigenvalues)))
        return float(np.real(self.eigenvalues[i])), np.real(self.eigenvectors[:, i])


@dataclass
class FixedPointSearch:
    points: List[FixedPointInfo]
    failed_seeds: int
    seeds: int

    def by_label(self, label: str) -> FixedPointInfo:
        for fp in self.points:
            if fp.label == label:
                return fp
        raise KeyError(label)

    @property
    def saddles(self) -> List[FixedPointInfo]:
        return [fp for fp in self.points if fp.stability is Stability.SADDLE]


def jacobian(mapping, z, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of the map at z."""
    z = np.asarray(z, dtype=float)
    xs = np.array([z[0] + h, z[0] - h, z[0], z[0]])
    ps = np.array([z[1], z[1], z[1] + h, z[1] - h])
    xo, po = mapping.forward(xs, ps)
    return np.array([[(xo[0] - xo[1]) / (2 * h), (xo[2] - xo[3]) / (2 * h)],
                     [(po[0] - po[1]) / (2 * h), (po[2] - po[3]) / (2 * h)]])


def _newton(job):
    mapping, z, tol, max_iter, h, bound = job
    z = np.array(z, dtype=float)
    for _ in range(max_iter):
        F = _apply(mapping, z) - z
        r = float(np.linalg.norm(F))
        if not np.isfinite(r) or abs(z[0]) > bound or abs(z[1]) > bound:
            return None
        if r < tol:
            return z, r
        try:
            d = np.linalg.solve(jacobian(mapping, z, h) - np.eye(2), -F)
        except np.linalg.LinAlgError:
            return None
        # backtracking on the residual norm
        lam = 1.0
        while lam > 1e-4:
            zn = z + lam * d
            rn = float(np.linalg.norm(_apply(mapping, zn) - zn))
            if np.isfinite(rn) and rn < r:
                break
            lam *= 0.5
        z = zn
    r = float(np.linalg.norm(_apply(mapping, z) - z))
    return (z, r) if r < tol else None


def _classify_fp(mapping, z, r, h) -> FixedPointInfo:
    J = jacobian(mapping, z, h)
    ev, vec = np.linalg.eig(J)
    real = np.all(np.abs(np.imag(ev)) < 1e-12)
    if real and np.max(np.abs(ev)) > 1.0 + 1e-9:
        st = Stability.SADDLE
        ev = np.real(ev)
        vec = np.real(vec)
        order = np.argsort(-np.abs(ev))  # unstable first
        ev, vec = ev[order], vec[:, order]
    else:
        st = Stability.ELLIPTIC
    return FixedPointInfo((float(z[0]), float(z[1])), (ev[0], ev[1]), vec, st, None, r)


def find_fixed_points(mapping, x_range=DEFAULT_REGION[0], p_range=DEFAULT_REGION[1],
                      seeds: Tuple[int, int] = (25, 9), *, tol: float = 1e-10,
                      max_iter: int = 40, h: float = 1e-6, require_saddle: bool = True,
                      workers: Optional[int] = None) -> FixedPointSearch:
    """Period-1 points from Newton iteration started on a seed grid.

    Roots are deduplicated after sorting by location, so the result does not
    depend on the order in which seeds finish. The outermost saddles are
    labelled A (largest x, x > 0) and B (smallest x, x < 0); the elliptic
    point nearest the origin is labelled ``inner``.
    """
    if isinstance(mapping, SystemConfig):
        mapping = StroboMap(mapping)
    bound = 10.0 * max(abs(v) for v in (*x_range, *p_range))
    grid = [(x, p) for x in np.linspace(*x_range, seeds[0]) for p in np.linspace(*p_range, seeds[1])]
    results = parallel_map(_newton, [(mapping, z, tol, max_iter, h, bound) for z in grid],
                           workers=workers)
    roots = sorted((r for r in results if r is not None), key=lambda zr: (zr[0][0], zr[0][1]))
    unique: List[Tuple[np.ndarray, float]] = []
    for z, r in roots:
        if not any(np.linalg.norm(z - u) < 1e-6 for u, _ in unique):
            unique.append((z, r))
    points = [_classify_fp(mapping, z, r, h) for z, r in unique]
    saddles = [fp for fp in points if fp.stability is Stability.SADDLE]
    right = [fp for fp in saddles if fp.location[0] > 0]
    left = [fp for fp in saddles if fp.location[0] < 0]
    if right:
        max(right, key=lambda fp: fp.location[0]).label = "A"
    if left:
        min(left, key=lambda fp: fp.location[0]).label = "B"
    ell = [fp for fp in points if fp.stability is Stability.ELLIPTIC]
    if ell:
        min(ell, key=lambda fp: math.hypot(*fp.location)).label = "inner"
    if require_saddle and not saddles:
        raise NoSaddleFound(
            f"no period-1 saddle in x {x_range}, p {p_range}; "
            f"{len(points)} fixed point(s) found")
    return FixedPointSearch(points, sum(r is None for r in results), len(grid))


# ---------------------------------------------------------------------------
# sprinkler

@dataclass
class SprinklerResult:
    stable: np.ndarray    # (n, 2) initial points still inside after t_stay
    unstable: np.ndarray  # (n, 2) their positions at t_stay
    region: Tuple[Tuple[float, float], Tuple[float, float]]
    grid: Tuple[int, int]
    t_stay: int


def _sprinkle_chunk(job):
    mapping, xs, ps, t_stay, region = job
    alive, xf, pf = mapping.survivors(xs, ps, t_stay, region)
    return xs[alive], ps[alive], xf[alive], pf[alive]


def sprinkler(mapping, region=DEFAULT_REGION, grid: Tuple[int, int] = (2000, 600),
              t_stay: int = 6, *, workers: Optional[int] = None,
              min_grid: int = 100) -> SprinklerResult:
    """Grid points that stay in ``region`` for ``t_stay`` periods.

    The survivors' initial points approximate the stable manifold of the
    chaotic set, their final points the unstable manifold. Grid points are
    cell centres.
    """
    if isinstance(mapping, SystemConfig):
        mapping = StroboMap(mapping)
    nx, npp = grid
    if nx < min_grid or npp < min_grid:
        raise ValueError(f"grid must be at least {min_grid}x{min_grid}")
    if t_stay < 3:
        raise ValueError("t_stay must be >= 3 periods")
    (xlo, xhi), (plo, phi) = region
    xc = xlo + (np.arange(nx) + 0.5) * (xhi - xlo) / nx
    pc = plo + (np.arange(npp) + 0.5) * (phi - plo) / npp
    X, P = np.meshgrid(xc, pc, indexing="ij")
    X, P = X.ravel(), P.ravel()
    nchunk = max(1, len(X) // 20000)
    jobs = [(mapping, xs, ps, int(t_stay), region)
            for xs, ps in zip(np.array_split(X, nchunk), np.array_split(P, nchunk))]
    parts = parallel_map(_sprinkle_chunk, jobs, workers=workers)
    sx = np.concatenate([q[0] for q in parts])
    if len(sx) == 0:
        raise EmptyCloud(f"no grid point stays {t_stay} periods in the region; "
                         "refine the grid or lower t_stay")
    sp = np.concatenate([q[1] for q in parts])
    ux = np.concatenate([q[2] for q in parts])
    up = np.concatenate([q[3] for q in parts])
    return SprinklerResult(np.column_stack([sx, sp]), np.column_stack([ux, up]),
                           region, grid, int(t_stay))


def reflection_overlap(result: SprinklerResult, mapping, bins: Tuple[int, int] = (60, 20)) -> float:
    """Correlation of the coarse-grained densities of R(stable) and unstable.

    ``R`` is the map's time-reversal reflection; values near 1 mean the
    stable cloud maps onto the unstable one.
    """
    (xlo, xhi), (plo, phi) = result.region
    rx, rp = mapping.reflect(result.stable[:, 0], result.stable[:, 1])
    rng = [[xlo, xhi], [plo, phi]]
    a, _, _ = np.histogram2d(rx, rp, bins=bins, range=rng)
    b, _, _ = np.histogram2d(result.unstable[:, 0], result.unstable[:, 1], bins=bins, range=rng)
    a, b = a.ravel(), b.ravel()
    if a.std() == 0 or b.std() == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])


# ---------------------------------------------------------------------------
# manifold continuation

@dataclass
class ManifoldCurve:
    owner: str
    kind: str  # "stable" or "unstable"
    branch: int
    points: np.ndarray      # (n, 2)
    arclength: np.ndarray   # (n,)
    params: np.ndarray      # (n,) iterate parameter u = k + s
    order_marks: List[float] = field(default_factory=list)
    truncated: bool = False  # stopped because the curve left to infinity

    def line(self) -> LineString:
        return LineString(self.points)

    def point_at(self, s: float) -> np.ndarray:
        return np.array([np.interp(s, self.arclength, self.points[:, 0]),
                         np.interp(s, self.arclength, self.points[:, 1])])

    def upto(self, s: float) -> np.ndarray:
        """Polyline from the fixed point to arclength ``s`` (end interpolated)."""
        k = int(np.searchsorted(self.arclength, s))
        return np.vstack([self.points[:k], self.point_at(s)[None, :]])


def _turn_angles(pts):
    d = np.diff(pts, axis=0)
    a = np.arctan2(d[:, 1], d[:, 0])
    t = np.abs(np.diff(a))
    return np.minimum(t, 2 * np.pi - t)


def manifold_continuation(mapping, fp: FixedPointInfo, kind: str, branch: int,
                          max_arclength: float, *, delta0: float = DELTA0,
                          ds_max: float = DS_MAX, theta_max: float = THETA_MAX,
                          ds_min: float = DS_MIN, region: Optional[Polygon] = None,
                          max_points: int = 500_000,
                          stop_on_blowup: bool = False) -> ManifoldCurve:
    """Grow one branch of W_u (forward map) or W_s (backward map) of a saddle.

    A point with parameter ``u = k + s`` (0 <= s < 1) is the k-th image of
    the seed ``fp + branch * delta0 * lam**s * v`` on the local linear
    manifold, so every inserted point is computed from the seed segment and
    errors do not accumulate along the curve. Points are inserted until the
    spacing is at most ``ds_max`` and the turning angle at most ``theta_max``.

    With ``stop_on_blowup`` an unresolvable fold ends the curve (marked
    ``truncated``) instead of raising :class:`CurvatureBlowup`.

    ``order_marks`` holds arclengths where the curve re-enters ``region``
    after leaving it; without a region they mark whole iterates of the
    seed segment.
    """
    if isinstance(mapping, SystemConfig):
        mapping = StroboMap(mapping)
    if fp.stability is not Stability.SADDLE:
        raise SaddleError("manifolds are defined for saddles only")
    if kind == "unstable":
        lam, v = fp.unstable()
        step = mapping.forward
    elif kind == "stable":
        lam, v = fp.stable()
        lam = 1.0 / lam
        step = mapping.backward
    else:
        raise ValueError("kind must be 'stable' or 'unstable'")
    if branch not in (1, -1):
        raise ValueError("branch must be +1 or -1")
    v = v / np.linalg.norm(v)
    z0 = np.asarray(fp.location, dtype=float)
    alam = abs(lam)
    # reflection-hyperbolic saddles flip sides every step: use two iterates
    per = 2 if lam < 0 else 1

    def eval_u(u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        k = np.floor(u).astype(int)
        s = u - k
        r = branch * delta0 * alam ** (per * s)
        x = z0[0] + r * v[0]
        p = z0[1] + r * v[1]
        for j in range(int(k.max()) if len(k) else 0):
            m = k > j
            for _ in range(per):
                xm, pm = step(x[m], p[m])
                x[m], p[m] = xm, pm
        return np.column_stack([x, p])

    us = np.linspace(0.0, 1.0, 9)
    pts = eval_u(us)
    total_u = [us]
    total_p = [pts]
    seg_u, seg_p = us, pts
    length = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=1)))
    truncated = False
    k = 0
    while length < max_arclength:
        k += 1
        # next fundamental segment: images of the previous one, then refine
        u = seg_u + 1.0
        p_new = seg_p.copy()
        for _ in range(per):
            xm, pm = step(p_new[:, 0], p_new[:, 1])
            p_new = np.column_stack([xm, pm])
        try:
            u, p_new = _refine(eval_u, u, p_new, ds_max, theta_max, ds_min)
        except CurvatureBlowup as exc:
            if not stop_on_blowup:
                raise
            u, p_new = exc.args[1], exc.args[2]
            cut = exc.args[3]
            u, p_new = u[:cut + 1], p_new[:cut + 1]
            truncated = True
        fin = np.all(np.isfinite(p_new), axis=1)
        if not fin.all():
            cut = int(np.argmin(fin))
            u, p_new = u[:cut], p_new[:cut]
            truncated = True
        total_u.append(u[1:])
        total_p.append(p_new[1:])
        seg_u, seg_p = u, p_new
        if len(p_new) > 1:
            length += float(np.sum(np.linalg.norm(np.diff(p_new, axis=0), axis=1)))
        if truncated or sum(len(a) for a in total_u) > max_points:
            truncated = True
            break
    U = np.concatenate(total_u)
    Z = np.concatenate(total_p)
    S = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(Z, axis=0), axis=1))])
    if S[-1] > max_arclength:
        n = int(np.searchsorted(S, max_arclength))
        f = (max_arclength - S[n - 1]) / (S[n] - S[n - 1])
        Z = np.vstack([Z[:n], Z[n - 1] + f * (Z[n] - Z[n - 1])])
        U = np.append(U[:n], U[n - 1] + f * (U[n] - U[n - 1]))
        S = np.append(S[:n], max_arclength)
    label = fp.label or f"({fp.location[0]:.4g},{fp.location[1]:.4g})"
    curve = ManifoldCurve(label, kind, branch, Z, S, U, [], truncated)
    if region is not None:
        curve.order_marks = region_reentries(curve, region)
    else:
        curve.order_marks = [float(np.interp(j, U, S)) for j in range(1, int(U[-1]) + 1)]
    return curve


def _refine(eval_u, u, pts, ds_max, theta_max, ds_min):
    for _ in range(60):
        d = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        bad = d > ds_max
        if len(pts) > 2:
            ang = _turn_angles(pts)
            sharp = ang > theta_max
            bad[:-1] |= sharp
            bad[1:] |= sharp
        bad &= np.isfinite(d)
        if not bad.any():
            return u, pts
        # a sharp turn that survives at the minimum spacing is unresolvable
        stuck = bad & (d < ds_min)
        if stuck.any():
            i = int(np.argmax(stuck))
            raise CurvatureBlowup(f"turning angle above {theta_max} at spacing "
                                  f"{d[i]:.2e} < ds_min near {pts[i]}", u, pts, i)
        idx = np.nonzero(bad)[0]
        um = 0.5 * (u[idx] + u[idx + 1])
        pm = eval_u(um)
        u = np.insert(u, idx + 1, um)
        pts = np.insert(pts, idx + 1, pm, axis=0)
    raise CurvatureBlowup("point insertion did not converge", u, pts, 0)


def region_reentries(curve: ManifoldCurve, region: Polygon) -> List[float]:
    """Arclengths where the curve enters ``region`` after having left it."""
    inside = np.array([region.covers(Point(x, p)) for x, p in curve.points])
    marks = []
    left = False
    for i in range(1, len(inside)):
        if inside[i - 1] and not inside[i]:
            left = True
        elif left and not inside[i - 1] and inside[i]:
            marks.append(float(curve.arclength[i]))
    return marks


# ---------------------------------------------------------------------------
# fundamental region

@dataclass
class FundamentalRegion:
    polygon: Polygon
    corners: Dict[str, Tuple[float, float]]  # A, A1, B, B1
    curves: Dict[str, ManifoldCurve]         # Wu_A, Ws_A, Wu_B, Ws_B
    corner_arclength: Dict[str, float]       # position of the corner on each curve
    area: float
    image_area: float

    def side(self, key: str) -> LineString:
        """Boundary piece of manifold ``key`` between its saddle and corner."""
        return LineString(self.curves[key].upto(self.corner_arclength[key]))

    def contains(self, z) -> bool:
        return bool(self.polygon.covers(Point(*z)))

    @property
    def area_mismatch(self) -> float:
        return abs(self.image_area - self.area) / self.area


def _inward_branch(fp: FixedPointInfo, kind: str, toward) -> int:
    v = (fp.unstable() if kind == "unstable" else fp.stable())[1]
    d = np.asarray(toward, dtype=float) - np.asarray(fp.location)
    return 1 if float(np.dot(v, d)) >= 0 else -1


def _primary_intersection(a: ManifoldCurve, b: ManifoldCurve) -> Tuple[np.ndarray, float, float]:
    """Heteroclinic point of ``a`` and ``b`` with the shortest combined arclength.

    Images of a primary intersection point are primary too and accumulate
    on both saddles; the representative nearest the middle is the one whose
    connecting segments are shortest.
    """
    la, lb = a.line(), b.line()
    hit = la.intersection(lb)
    if hit.is_empty:
        raise TipNotFound(f"{a.kind} {a.owner} does not meet {b.kind} {b.owner}; extend the curves")
    pts = [hit] if isinstance(hit, Point) else [g for g in getattr(hit, "geoms", []) if isinstance(g, Point)]
    # the saddles themselves are excluded
    pts = [q for q in pts if la.project(q) > 1e-6 and lb.project(q) > 1e-6]
    if not pts:
        raise TipNotFound("no crossing apart from the fixed points")
    q = min(pts, key=lambda q: la.project(q) + lb.project(q))
    return np.array([q.x, q.y]), la.project(q), lb.project(q)


def polygon_image_area(mapping, poly: Polygon, spacing: float = 2e-3) -> float:
    """Area enclosed by the forward image of a densely resampled boundary."""
    ring = LineString(poly.exterior.coords)
    n = max(200, int(ring.length / spacing))
    pts = np.array([ring.interpolate(s).coords[0] for s in np.linspace(0, ring.length, n)])
    xo, po = mapping.forward(pts[:, 0], pts[:, 1])
    return float(abs(0.5 * np.sum(xo * np.roll(po, -1) - np.roll(xo, -1) * po)))


def fundamental_region(mapping, A: FixedPointInfo, B: FixedPointInfo,
                       inner: Optional[FixedPointInfo] = None, *,
                       max_arclength: float = 20.0, ds_max: float = DS_MAX,
                       image_spacing: float = 2e-3) -> FundamentalRegion:
    """Region A A1 B B1 bounded by the inward local manifold segments.

    A1 is a primary crossing of W_u(A) with W_s(B), B1 one of W_u(B) with
    W_s(A).
    """
    if isinstance(mapping, SystemConfig):
        mapping = StroboMap(mapping)
    centre = inner.location if inner is not None else tuple(
        0.5 * (np.asarray(A.location) + np.asarray(B.location)))
    curves = {}
    for name, fp in (("A", A), ("B", B)):
        for kind, tag in (("unstable", "Wu"), ("stable", "Ws")):
            br = _inward_branch(fp, kind, centre)
            curves[f"{tag}_{name}"] = manifold_continuation(
                mapping, fp, kind, br, max_arclength, ds_max=ds_max, stop_on_blowup=True)
    a1, sa_u, sb_s = _primary_intersection(curves["Wu_A"], curves["Ws_B"])
    b1, sb_u, sa_s = _primary_intersection(curves["Wu_B"], curves["Ws_A"])
    ring = np.vstack([
        curves["Wu_A"].upto(sa_u),            # A -> A1
        curves["Ws_B"].upto(sb_s)[::-1],      # A1 -> B
        curves["Wu_B"].upto(sb_u),            # B -> B1
        curves["Ws_A"].upto(sa_s)[::-1],      # B1 -> A
    ])
    poly = Polygon(ring)
    if not poly.is_valid:
        poly = poly.buffer(0)
    area = float(poly.area)
    image = polygon_image_area(mapping, poly, image_spacing)
    return FundamentalRegion(
        poly,
        {"A": A.location, "A1": tuple(a1), "B": B.location, "B1": tuple(b1)},
        curves,
        {"Wu_A": sa_u, "Ws_B": sb_s, "Wu_B": sb_u, "Ws_A": sa_s},
        area, image)


# ---------------------------------------------------------------------------
# symbolic gap tree and development parameter

@dataclass
class GapNode:
    kind: str          # "strip" or "gap"
    order: int         # tendril order for strips, gap order for gaps
    lo: Fraction       # position across the tendril, 0 = fixed-point side
    hi: Fraction       # gaps are cuts: lo == hi
    index: int = 0     # gaps: position among gaps of the same order
    children: List["GapNode"] = field(default_factory=list)


@dataclass
class GapTree:
    tendril_order: int
    depth: int
    root: GapNode

    def gaps(self, max_level: Optional[int] = None) -> List[GapNode]:
        """Gap nodes up to ``max_level`` subdivisions, ordered from the fixed point."""
        lim = self.depth if max_level is None else max_level
        out = []

        def walk(node):
            for c in node.children:
                if c.kind == "gap":
                    if c.order - self.tendril_order <= lim:
                        out.append(c)
                else:
                    walk(c)
        walk(self.root)
        return sorted(out, key=lambda g: g.lo)

    def count(self, level: int) -> int:
        return sum(1 for g in self.gaps() if g.order == self.tendril_order + level)

    def cumulative(self, level: int) -> int:
        return len(self.gaps(level))

    def gap_index(self, position: Fraction, level: int) -> int:
        """1-based index, among gaps of order <= n + level, of the gap at ``position``."""
        for i, g in enumerate(self.gaps(level), 1):
            if g.lo == position:
                return i
        raise AmbiguousTip(f"no gap of relative order <= {level} at {position}")


def gap_tree(tendril_order: int, depth: int) -> GapTree:
    """Ternary subdivision of a tendril of order ``n``.

    At every level each strip is cut into three equal strips; the two cuts
    are gaps of the next order. Through ``level`` subdivisions the gaps sit
    at k / 3^level, k = 1 .. 3^level - 1, so gap k at one level is gap 3k at
    the next. Gap indices run from the fixed-point side.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    root = GapNode("strip", tendril_order, Fraction(0), Fraction(1))
    level_strips = [root]
    for lvl in range(1, depth + 1):
        nxt = []
        counter = 0
        for st in level_strips:
            w = (st.hi - st.lo) / 3
            cuts = [st.lo + i * w for i in range(4)]
            for i in range(3):
                strip = GapNode("strip", tendril_order, cuts[i], cuts[i + 1])
                st.children.append(strip)
                nxt.append(strip)
                if i < 2:
                    counter += 1
                    st.children.append(GapNode("gap", tendril_order + lvl, cuts[i + 1],
                                               cuts[i + 1], counter))
        level_strips = nxt
    return GapTree(tendril_order, depth, root)


def gamma_from_index(r: int, n: int) -> Fraction:
    """Development parameter r_n / 3^n."""
    if n < 1:
        raise ValueError("order n must be >= 1")
    if not 1 <= r <= 3 ** n:
        raise ValueError(f"gap index {r} outside 1..{3 ** n}")
    return Fraction(r, 3 ** n)


def gap_index_from_crossings(c: int) -> int:
    """Gap index of a tip whose leg crosses ``c`` stable gap arcs.

    Gaps are counted from the fixed point along the leg. Passing a gap
    fully crosses both of its legs; an odd count means the tip ends inside
    gap (c + 1) / 2. An even count leaves the tip between gaps, where the
    index is not defined.
    """
    if c < 0:
        raise ValueError("crossing count must be >= 0")
    if c % 2 == 0:
        raise AmbiguousTip(f"tip lies between gaps ({c} crossings)")
    return (c + 1) // 2


@dataclass
class HorseshoeReport:
    gamma_A: Optional[Fraction]
    gamma_B: Optional[Fraction]
    n_used: int
    r_n: Dict[str, Optional[int]]
    complete: Dict[str, bool]
    notes: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        f = lambda g: None if g is None else str(g)
        return {"gamma_A": f(self.gamma_A), "gamma_B": f(self.gamma_B),
                "gamma_A_float": None if self.gamma_A is None else float(self.gamma_A),
                "gamma_B_float": None if self.gamma_B is None else float(self.gamma_B),
                "n_used": self.n_used, "r_n": self.r_n, "complete": self.complete,
                "notes": self.notes}


def _segments_inside(curve: ManifoldCurve, region: Polygon, start: float):
    """Maximal pieces of the curve beyond arclength ``start`` lying in region."""
    sel = curve.arclength > start
    pts = curve.points[sel]
    s = curve.arclength[sel]
    inside = np.array([region.covers(Point(x, p)) for x, p in pts])
    pieces = []
    i = 0
    while i < len(pts):
        if inside[i]:
            j = i
            while j + 1 < len(pts) and inside[j + 1]:
                j += 1
            if j > i:
                pieces.append((pts[max(i - 1, 0):min(j + 2, len(pts))], s[i], s[j]))
            i = j + 1
        else:
            i += 1
    return pieces


def _gap_order(curve: ManifoldCurve, s_corner: float, s_mid: float) -> int:
    u_c = float(np.interp(s_corner, curve.arclength, curve.params))
    u_m = float(np.interp(s_mid, curve.arclength, curve.params))
    return int(math.floor(u_m - u_c)) + 1


def development_parameter(mapping, fr: FundamentalRegion, n: int = 2) -> HorseshoeReport:
    """gamma = r_n 3^-n for each saddle from the manifolds of ``fr``.

    For saddle X the first unstable gap is the first piece of W_u(X) past
    its corner that runs inside the region. If it leaves through the stable
    side opposite its entry, the horseshoe is complete (r_n = 3^n).
    Otherwise its tip is the point farthest from the entry side, and the
    leg from entry to tip is intersected with the stable gap arcs of order
    <= n; the crossing count gives r_n.
    """
    region = fr.polygon
    sides = {k: fr.side(k) for k in ("Wu_A", "Ws_B", "Wu_B", "Ws_A")}
    r_n: Dict[str, Optional[int]] = {}
    gam: Dict[str, Optional[Fraction]] = {}
    complete: Dict[str, bool] = {}
    notes: List[str] = []
    stable_arcs = []
    for key in ("Ws_A", "Ws_B"):
        c = fr.curves[key]
        sc = fr.corner_arclength[key]
        for piece, s0, s1 in _segments_inside(c, region, sc + 1e-9):
            if _gap_order(c, sc, 0.5 * (s0 + s1)) <= n and len(piece) > 1:
                stable_arcs.append(LineString(piece))

    def nearest_side(q):
        return min(sides, key=lambda k: sides[k].distance(Point(*q)))

    for X in ("A", "B"):
        key = f"Wu_{X}"
        c = fr.curves[key]
        pieces = _segments_inside(c, region, fr.corner_arclength[key] + 1e-9)
        if not pieces:
            raise TipNotFound(f"W_u({X}) never re-enters the fundamental region; extend it")
        piece = pieces[0][0]
        entry, leave = nearest_side(piece[0]), nearest_side(piece[-1])
        if entry.startswith("Ws") and leave.startswith("Ws") and entry != leave:
            r, full = 3 ** n, True
        else:
            dist = np.array([sides[entry].distance(Point(*q)) for q in piece])
            tip = int(np.argmax(dist))
            leg = LineString(piece[:tip + 1])
            crossings = 0
            for arc in stable_arcs:
                hit = leg.intersection(arc)
                if not hit.is_empty:
                    crossings += len(getattr(hit, "geoms", [hit]))
            full = False
            try:
                r = gap_index_from_crossings(crossings)
            except AmbiguousTip as exc:
                notes.append(f"{X}: {exc}")
                r = None
        r_n[X] = r
        gam[X] = None if r is None else gamma_from_index(r, n)
        complete[X] = full
    return HorseshoeReport(gam["A"], gam["B"], n, r_n, complete, notes)
