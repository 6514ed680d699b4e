"""Escape statistics over orbit ensembles.

``N(t)`` counts orbits that still cross x = 0 at some time ``t1 >= t``;
``N(n)`` counts orbits with at least ``n`` crossings. Both decay
algebraically for sticky chaotic scattering, and the exponent is read off a
straight-line fit in log-log coordinates.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from . import _kernel as K
from .dynamics import DynamicsError, State, SystemConfig, run_raw
from .parallel import parallel_map

__all__ = [
    "EnsembleSpec", "OrbitSummary", "DecayCurve", "PowerLawFit", "InsufficientData",
    "run_ensemble", "survival_function", "zeros_distribution", "powerlaw_fit",
    "staircase_detect", "DEFAULT_CUTOFF_PERIODS",
]

DEFAULT_CUTOFF_PERIODS = 500
MIN_COUNT = 10


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class EnsembleSpec:
    x0: float
    v0_lo: float
    v0_hi: float
    count: int
    sampling: str = "uniform_grid"
    seed: Optional[int] = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("count must be >= 1")
        if not self.v0_lo < self.v0_hi:
            raise ValueError("need v0_lo < v0_hi")
        if self.sampling not in ("uniform_grid", "uniform_random"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if self.sampling == "uniform_random" and self.seed is None:
            raise ValueError("uniform_random sampling needs an explicit seed")

    def velocities(self) -> np.ndarray:
        if self.sampling == "uniform_grid":
            # cell midpoints: the open interval (v0_lo, v0_hi)
            edges = np.linspace(self.v0_lo, self.v0_hi, self.count + 1)
            return 0.5 * (edges[1:] + edges[:-1])
        rng = np.random.default_rng(self.seed)
        return np.sort(rng.uniform(self.v0_lo, self.v0_hi, self.count))


@dataclass
class OrbitSummary:
    v0: float
    n_c: int
    t_first: float
    t_last: float
    trapped: bool
    error: Optional[str] = None


@dataclass
class DecayCurve:
    abscissa: np.ndarray
    counts: np.ndarray
    size: int = 0
    cutoff: float = math.inf
    excluded: int = 0  # orbits dropped because of integrator failures
    trapped: int = 0

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.counts = np.asarray(self.counts)
        if self.abscissa.shape != self.counts.shape:
            raise ValueError("abscissa and counts differ in length")


@dataclass
class PowerLawFit:
    z: float
    stderr: float
    fit_range: Tuple[float, float]
    residual: float
    points: int
    prefactor: float = math.nan

    def to_dict(self) -> dict:
        return asdict(self)


def _orbit(job) -> OrbitSummary:
    config, x0, v0, t_cut = job
    try:
        prm = config.params()
        out = run_raw(config, State(x0, v0, 0.0), t_cut, prm=prm)
    except DynamicsError as exc:
        return OrbitSummary(v0, 0, math.nan, math.nan, False, f"{type(exc).__name__}: {exc}")
    cross = out[5]
    trapped = out[0] not in (K.ST_ESCAPED, K.ST_NORETURN)
    if len(cross) == 0:
        return OrbitSummary(v0, 0, math.nan, math.nan, trapped)
    return OrbitSummary(v0, len(cross), float(cross[0, 0]), float(cross[-1, 0]), trapped)


def run_ensemble(config: SystemConfig, ensemble: EnsembleSpec, *,
                 cutoff: Optional[float] = None,
                 workers: Optional[int] = None) -> List[OrbitSummary]:
    """Integrate every orbit of the ensemble up to ``cutoff`` (default 500 periods)."""
    t_cut = DEFAULT_CUTOFF_PERIODS * config.period if cutoff is None else float(cutoff)
    jobs = [(config, float(ensemble.x0), float(v), t_cut) for v in ensemble.velocities()]
    return parallel_map(_orbit, jobs, workers=workers)


def _cutoff_of(config, cutoff):
    return DEFAULT_CUTOFF_PERIODS * config.period if cutoff is None else float(cutoff)


def survival_curve(orbits: Sequence[OrbitSummary], cutoff: float, bins: int = 200) -> DecayCurve:
    """N(t) on a logarithmic grid from the earliest final crossing to ``cutoff``.

    Orbits trapped at the cutoff count as surviving through it.
    """
    good = [o for o in orbits if o.error is None and o.n_c > 0]
    t_last = np.array([cutoff if o.trapped else o.t_last for o in good])
    escaped = np.array([o.t_last for o in good if not o.trapped and o.t_last > 0])
    t_min = escaped.min() if len(escaped) else cutoff / 10
    t_min = min(t_min, cutoff / 10)
    grid = np.geomspace(t_min, cutoff, bins)
    srt = np.sort(t_last)
    counts = len(srt) - np.searchsorted(srt, grid, side="left")
    return DecayCurve(grid, counts, size=len(good), cutoff=cutoff,
                      excluded=len(orbits) - len(good),
                      trapped=sum(o.trapped for o in good))


def zeros_curve(n_c: Sequence[int], trapped: int = 0, excluded: int = 0,
                cutoff: float = math.inf) -> DecayCurve:
    """N(n) = number of orbits with at least n crossings, n = 1 .. max."""
    n_c = np.asarray(n_c, dtype=int)
    n_max = int(n_c.max()) if len(n_c) else 1
    ns = np.arange(1, n_max + 1)
    hist = np.bincount(n_c, minlength=n_max + 1)
    tail = np.cumsum(hist[::-1])[::-1]  # tail[n] = #(n_c >= n)
    return DecayCurve(ns.astype(float), tail[1:n_max + 1], size=len(n_c), cutoff=cutoff,
                      excluded=excluded, trapped=trapped)


def survival_function(config: SystemConfig, ensemble: EnsembleSpec, *,
                      cutoff: Optional[float] = None, bins: int = 200,
                      workers: Optional[int] = None, orbits=None) -> DecayCurve:
    t_cut = _cutoff_of(config, cutoff)
    if orbits is None:
        orbits = run_ensemble(config, ensemble, cutoff=t_cut, workers=workers)
    return survival_curve(orbits, t_cut, bins)


def zeros_distribution(config: SystemConfig, ensemble: EnsembleSpec, *,
                       cutoff: Optional[float] = None, workers: Optional[int] = None,
                       orbits=None) -> DecayCurve:
    t_cut = _cutoff_of(config, cutoff)
    if orbits is None:
        orbits = run_ensemble(config, ensemble, cutoff=t_cut, workers=workers)
    good = [o for o in orbits if o.error is None]
    return zeros_curve([o.n_c for o in good], trapped=sum(o.trapped for o in good),
                       excluded=len(orbits) - len(good), cutoff=t_cut)


def powerlaw_fit(curve: DecayCurve, fit_range: Optional[Tuple[float, float]] = None,
                 min_count: int = MIN_COUNT) -> PowerLawFit:
    """Least-squares line through ``log N`` against ``log x``; ``z = -slope``.

    Points outside ``fit_range`` or with fewer than ``min_count`` orbits are
    dropped. At least three points must remain.
    """
    x = curve.abscissa
    c = curve.counts.astype(float)
    lo, hi = (-math.inf, math.inf) if fit_range is None else fit_range
    m = (x >= lo) & (x <= hi) & (c >= min_count) & (x > 0)
    if m.sum() < 3:
        raise InsufficientData(f"only {int(m.sum())} usable points in range {lo}..{hi}")
    lx, ly = np.log(x[m]), np.log(c[m])
    if np.ptp(lx) == 0:
        raise InsufficientData("degenerate abscissa")
    res = stats.linregress(lx, ly)
    resid = ly - (res.intercept + res.slope * lx)
    return PowerLawFit(z=float(-res.slope), stderr=float(res.stderr),
                       fit_range=(float(x[m].min()), float(x[m].max())),
                       residual=float(np.sqrt(np.mean(resid ** 2))), points=int(m.sum()),
                       prefactor=float(math.exp(res.intercept)))


def default_time_range(curve: DecayCurve, period: float) -> Tuple[float, float]:
    """Fit range for N(t): beyond the first driver period, below the cutoff."""
    return (period, curve.cutoff * (1 - 1e-12))


def staircase_detect(curve: DecayCurve, start: float) -> List[float]:
    """Abscissae beyond ``start`` where the count strictly drops."""
    x, c = curve.abscissa, curve.counts
    return [float(x[i]) for i in range(1, len(x)) if x[i] > start and c[i] < c[i - 1]]
