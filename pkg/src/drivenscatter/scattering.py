"""Scattering functions, zero-count maps and their interval structure.

Two scattering functions are provided. ``scatter_s1`` reads the free energy
after the finite pulse f1 has switched off, where it is exactly conserved.
``scatter_s2`` samples the free energy stroboscopically under the periodic
driver f2; once the particle has left the interaction region the samples
settle onto a near-constant value.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import _kernel as K
from .dynamics import (Driver, DynamicsError, State, SystemConfig, run_raw)
from .parallel import parallel_map

__all__ = [
    "HYPERBOLIC", "PARABOLIC", "TRAPPED", "PARABOLIC_TOL",
    "ScatterRecord", "Interval", "IntervalSegmentation", "HierarchyReport",
    "GridField", "DegenerateScan",
    "scatter_s1", "scatter_s2", "scatter", "sweep", "segment_intervals",
    "validate_hierarchy", "grid_nc", "smooth_nc_jumps",
]

HYPERBOLIC = "hyperbolic"
PARABOLIC = "parabolic"
TRAPPED = "trapped_at_cutoff"
PARABOLIC_TOL = 1e-3
K_MAX_DEFAULT = 500
POST_ESCAPE_PERIODS = 10


class DegenerateScan(ValueError):
    pass


@dataclass
class ScatterRecord:
    """Scattering outputs of one orbit.

    ``h0_out`` holds the stroboscopic free-energy samples (a single value for
    S1). ``h0_final`` is the asymptotic outgoing energy used for the
    classification: the conserved free energy after switch-off for S1, the
    guiding-centre energy for S2.
    """

    input: float
    h0_out: np.ndarray
    h0_final: float
    n_c: int
    delay_time: float
    classification: str
    error: Optional[str] = None
    escape_time: float = math.nan

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def regular(self) -> bool:
        return self.error is None and self.classification != TRAPPED


def _classify(energy: float, escaped: bool, h_esc: float) -> str:
    if not escaped:
        return TRAPPED
    if abs(energy - h_esc) <= PARABOLIC_TOL:
        return PARABOLIC
    if energy > h_esc:
        return HYPERBOLIC
    return TRAPPED


def _crossing_stats(cross: np.ndarray) -> Tuple[int, float]:
    n = len(cross)
    if n == 0:
        return 0, 0.0
    return n, float(cross[-1, 0] - cross[0, 0])


def scatter_s1(config: SystemConfig, x0: float, v0: float, *, input=None) -> ScatterRecord:
    """Outgoing energy after the f1 pulse for the orbit launched at (x0, v0, 0)."""
    if config.driver is not Driver.F1:
        raise ValueError("scatter_s1 needs the f1 driver")
    prm = config.params()
    prm[K.P_TNR] = math.inf  # fate is decided exactly after switch-off
    t_end = config.switch_off_time + config.noreturn_time
    out = run_raw(config, State(x0, v0, 0.0), t_end, stop_when_bound=True, prm=prm)
    status, x, p = out[0], out[1], out[2]
    n_c, delay = _crossing_stats(out[5])
    h0 = float(K.free_energy(prm, x, p))
    escaped = status == K.ST_ESCAPED
    return ScatterRecord(
        input=v0 if input is None else input, h0_out=np.array([h0]), h0_final=h0,
        n_c=n_c, delay_time=delay,
        classification=_classify(h0, escaped, config.escape_energy),
        escape_time=float(out[3]) if escaped else math.nan)


def scatter_s2(config: SystemConfig, x0: float, v0: float, k_max: int = K_MAX_DEFAULT, *,
               strobe_phase: float = 0.0, input=None) -> ScatterRecord:
    """Stroboscopic free energies of the orbit launched at (x0, v0, 0).

    Samples are taken at ``nu t_k = strobe_phase + 2 pi k`` for at most
    ``k_max`` periods. After an escape the orbit is followed for a few more
    periods so that the settled value is visible in ``h0_out``.
    """
    if config.driver is Driver.F1:
        raise ValueError("scatter_s2 needs the periodic driver (or none)")
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    T = config.period
    strobe = (strobe_phase / config.nu, T)
    prm = config.params()
    out = run_raw(config, State(x0, v0, 0.0), k_max * T, strobe=strobe, prm=prm)
    status, x, p, t = out[0], out[1], out[2], out[3]
    n_c, delay = _crossing_stats(out[5])
    samples = [out[7]]
    escaped = status in (K.ST_ESCAPED, K.ST_NORETURN)
    if escaped:
        # keep following the free flight; no fate checks
        tail = prm.copy()
        tail[K.P_ESCX] = 1e300
        tail[K.P_HESC] = math.inf
        tail[K.P_TNR] = math.inf
        more = run_raw(config, State(x, p, t), t + POST_ESCAPE_PERIODS * T,
                       strobe=strobe, start_is_crossing=False, prm=tail)
        s = more[7]
        if len(s) and len(out[7]) and s[0, 2] == out[7][-1, 2]:
            s = s[1:]
        samples.append(s)
        energy = float(K.asymptotic_energy(prm, x, p, t))
    strobe_rows = np.concatenate(samples)
    h0 = np.array([K.free_energy(prm, r[0], r[1]) for r in strobe_rows])
    if not escaped:
        energy = float(h0[-1]) if len(h0) else float(K.free_energy(prm, x, p))
    return ScatterRecord(
        input=v0 if input is None else input, h0_out=h0, h0_final=energy,
        n_c=n_c, delay_time=delay,
        classification=_classify(energy, escaped, config.escape_energy),
        escape_time=float(t) if escaped else math.nan)


def scatter(config: SystemConfig, x0: float, v0: float, *, k_max: int = K_MAX_DEFAULT,
            strobe_phase: float = 0.0, input=None) -> ScatterRecord:
    """S1 for the f1 driver, S2 otherwise; integrator failures stay in-band."""
    try:
        if config.driver is Driver.F1:
            return scatter_s1(config, x0, v0, input=input)
        return scatter_s2(config, x0, v0, k_max, strobe_phase=strobe_phase, input=input)
    except (DynamicsError, FloatingPointError) as exc:
        return ScatterRecord(input=v0 if input is None else input, h0_out=np.empty(0),
                             h0_final=math.nan, n_c=0, delay_time=0.0,
                             classification=TRAPPED, error=f"{type(exc).__name__}: {exc}")


def _sweep_one(job):
    config, axis, value, x0, v0, k_max = job
    phase = 0.0
    if axis == "v0":
        v0 = value
    elif axis == "x0":
        x0 = value
    else:
        config = config.with_(e0=value)
        phase = 0.5 * math.pi  # nu t_k = pi/2 + 2 pi k for amplitude scans
    return scatter(config, x0, v0, k_max=k_max, strobe_phase=phase, input=value)


def sweep(config: SystemConfig, axis: str, lo: float, hi: float, samples: int, *,
          x0: float = 0.0, v0: float = 0.0, k_max: int = K_MAX_DEFAULT,
          workers: Optional[int] = None) -> List[ScatterRecord]:
    """Uniform scan of ``v0``, ``x0`` or ``e0``; the other inputs stay fixed.

    Records come back sorted by input whatever the execution schedule.
    """
    if axis not in ("v0", "x0", "e0"):
        raise ValueError(f"unknown scan axis {axis!r}")
    if samples < 2:
        raise ValueError("samples must be >= 2")
    if not hi > lo:
        raise ValueError("need lo < hi")
    values = np.linspace(lo, hi, int(samples))
    jobs = [(config, axis, float(v), float(x0), float(v0), int(k_max)) for v in values]
    records = parallel_map(_sweep_one, jobs, workers=workers)
    return sorted(records, key=lambda r: r.input)


# ---------------------------------------------------------------------------
# interval structure

class Interval(NamedTuple):
    lo: float
    hi: float
    n_c: int
    first: int  # sample indices, inclusive
    last: int

    @property
    def count(self) -> int:
        return self.last - self.first + 1


@dataclass
class IntervalSegmentation:
    regular_intervals: List[Interval]
    singular_gaps: List[Tuple[float, float]]
    resolution: float
    inputs: np.ndarray = field(repr=False)
    n_c: np.ndarray = field(repr=False)
    h0: np.ndarray = field(repr=False)
    regular_mask: np.ndarray = field(repr=False)

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "intervals": [[iv.lo, iv.hi, iv.n_c] for iv in self.regular_intervals],
            "gaps": [list(g) for g in self.singular_gaps],
        }


def segment_intervals(records: Sequence[ScatterRecord]) -> IntervalSegmentation:
    """Maximal runs of constant N_c among non-trapped samples.

    Everything between two consecutive runs (and any non-regular samples at
    the ends of the scan) is a singular gap.
    """
    if len(records) < 3:
        raise DegenerateScan("segmentation needs at least 3 samples")
    recs = sorted(records, key=lambda r: r.input)
    x = np.array([r.input for r in recs], dtype=float)
    nc = np.array([r.n_c for r in recs], dtype=int)
    h0 = np.array([r.h0_final for r in recs], dtype=float)
    reg = np.array([r.regular for r in recs], dtype=bool)
    res = float((x[-1] - x[0]) / (len(x) - 1))

    intervals: List[Interval] = []
    i = 0
    n = len(x)
    while i < n:
        if not reg[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and reg[j + 1] and nc[j + 1] == nc[i]:
            j += 1
        intervals.append(Interval(float(x[i]), float(x[j]), int(nc[i]), i, j))
        i = j + 1

    gaps: List[Tuple[float, float]] = []
    if intervals and intervals[0].first > 0:
        gaps.append((float(x[0]), intervals[0].lo))
    for a, b in zip(intervals, intervals[1:]):
        gaps.append((a.hi, b.lo))
    if intervals and intervals[-1].last < n - 1:
        gaps.append((intervals[-1].hi, float(x[-1])))
    if not intervals:
        gaps.append((float(x[0]), float(x[-1])))
    return IntervalSegmentation(intervals, gaps, res, x, nc, h0, reg)


@dataclass
class RuleResult:
    holds: bool
    checked: int
    violations: int
    witnesses: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"holds": self.holds, "checked": self.checked,
                "violations": self.violations, "witnesses": self.witnesses[:20]}


@dataclass
class HierarchyReport:
    rule_i: RuleResult
    rule_ii: RuleResult
    rule_iii: RuleResult

    @property
    def all_hold(self) -> bool:
        return self.rule_i.holds and self.rule_ii.holds and self.rule_iii.holds

    def to_dict(self) -> dict:
        return {"rule_i": self.rule_i.to_dict(), "rule_ii": self.rule_ii.to_dict(),
                "rule_iii": self.rule_iii.to_dict()}


def smooth_nc_jumps(seg: IntervalSegmentation, *, min_samples: int = 3,
                    slack: float = 3.0) -> List[Tuple[float, float, int, int]]:
    """Places where N_c changes although the outgoing energy runs on smoothly.

    A change between samples k and k+1 counts when both neighbouring runs
    have at least ``min_samples`` samples and the linear extrapolation of H0
    from either side misses the other side by at most ``slack`` local steps.
    Returns ``(x_k, x_k+1, n_k, n_k+1)`` tuples.
    """
    x, nc, h, reg = seg.inputs, seg.n_c, seg.h0, seg.regular_mask
    owner = np.full(len(x), -1)
    for j, iv in enumerate(seg.regular_intervals):
        owner[iv.first:iv.last + 1] = j
    out = []
    ivs = seg.regular_intervals
    for a, b in zip(ivs, ivs[1:]):
        k = a.last
        if b.first != k + 1 or a.count < min_samples or b.count < min_samples:
            continue
        step_l = abs(h[k] - h[k - 1])
        step_r = abs(h[k + 2] - h[k + 1])
        scale = slack * max(step_l, step_r) + 1e-12
        from_left = 2 * h[k] - h[k - 1]
        from_right = 2 * h[k + 1] - h[k + 2]
        if abs(from_left - h[k + 1]) <= scale and abs(from_right - h[k]) <= scale:
            out.append((float(x[k]), float(x[k + 1]), int(nc[k]), int(nc[k + 1])))
    return out


def _rule_i(seg: IntervalSegmentation, min_samples: int) -> RuleResult:
    # N_c constant where the map is regular; N_c changes only where H0 is singular
    bad = []
    for iv in seg.regular_intervals:
        if np.any(seg.n_c[iv.first:iv.last + 1] != iv.n_c):
            bad.append(("nc_not_constant", iv.lo, iv.hi))
    for xa, xb, na, nb in smooth_nc_jumps(seg, min_samples=min_samples):
        bad.append(("nc_jump_inside_smooth_run", xa, xb, na, nb))
    return RuleResult(not bad, len(seg.regular_intervals), len(bad), bad)


def _rule_ii(seg: IntervalSegmentation, min_samples: int) -> RuleResult:
    # between two neighbouring resolved intervals with equal N_c only larger N_c
    ivs = seg.regular_intervals
    ncs = np.array([iv.n_c for iv in ivs], dtype=int)
    resolved = np.array([iv.count >= min_samples for iv in ivs], dtype=bool)
    bad = []
    pairs = 0
    for v in np.unique(ncs[resolved]):
        idx = np.flatnonzero((ncs == v) & resolved)
        for a, b in zip(idx, idx[1:]):
            inner = slice(a + 1, b)
            if np.any(resolved[inner] & (ncs[inner] < v)):
                continue  # separated by a resolved lower interval: not neighbours
            pairs += 1
            low = np.flatnonzero(ncs[inner] < v)
            if len(low):
                m = a + 1 + int(low[0])
                bad.append({"left": ivs[a].lo, "middle": ivs[m].lo, "right": ivs[b].lo,
                            "n_c": int(v), "middle_n_c": int(ncs[m])})
    return RuleResult(not bad, pairs, len(bad), bad)


def _rule_iii(seg: IntervalSegmentation, members: int, min_members: int) -> RuleResult:
    # in each gap between consecutive intervals with N_c <= n, the n+1 intervals
    # shrink toward both ends of the gap
    ivs = seg.regular_intervals
    ncs = np.array([iv.n_c for iv in ivs], dtype=int)
    length = np.array([iv.count for iv in ivs], dtype=float)
    tol = 1.0  # one sample
    checked = 0
    bad = []
    for a in range(len(ivs)):
        n = ncs[a]
        b = a + 1
        while b < len(ivs) and ncs[b] > n:
            b += 1
        if b >= len(ivs) or ncs[b] != n:
            continue
        fam = [k for k in range(a + 1, b) if ncs[k] == n + 1]
        if not fam:
            continue
        lens = length[fam]
        top = int(np.argmax(lens))
        sides = (("left", ivs[a].hi, lens[:top + 1][::-1]), ("right", ivs[b].lo, lens[top:]))
        for side, edge, seq in sides:
            seq = seq[-members:] if len(seq) > members else seq
            if len(seq) < min_members:
                continue
            checked += 1
            # seq runs from the largest member toward the boundary
            if np.any(np.diff(seq) > tol):
                bad.append({"boundary": edge, "n_c": int(n), "side": side,
                            "lengths": (seq * seg.resolution).tolist()})
    return RuleResult(checked > 0 and not bad, checked, len(bad), bad)


def validate_hierarchy(seg: IntervalSegmentation, *, min_samples: int = 3,
                       members: int = 5, min_members: int = 3) -> HierarchyReport:
    """Check the three hierarchy rules at the scan resolution.

    Intervals spanning at least ``min_samples`` samples count as resolved.

    (i) N_c is constant on regular intervals and does not change inside a
    run where the outgoing energy continues smoothly.
    (ii) Between two neighbouring resolved intervals with equal N_c (no
    resolved interval with smaller N_c between them) no interval with a
    smaller N_c occurs.
    (iii) In the region between two consecutive intervals with N_c = n (all
    intervals inside have N_c > n) the n+1 intervals shrink toward the
    region's ends; the ``members`` intervals nearest each end are compared,
    to within one sample, and ends with fewer than ``min_members`` are
    skipped.

    A segmentation with a single interval passes vacuously.
    """
    if len(seg.regular_intervals) <= 1:
        ok = RuleResult(True, len(seg.regular_intervals), 0)
        return HierarchyReport(ok, RuleResult(True, 0, 0), RuleResult(True, 0, 0))
    return HierarchyReport(_rule_i(seg, min_samples), _rule_ii(seg, min_samples),
                           _rule_iii(seg, members, min_members))


# ---------------------------------------------------------------------------
# two-dimensional grids

@dataclass
class GridField:
    x0_axis: np.ndarray
    v0_axis: np.ndarray
    n_c_field: np.ndarray  # shape (len(x0_axis), len(v0_axis))
    same_as_neighbors_mask: np.ndarray
    trapped: np.ndarray
    errors: int = 0


def _grid_one(job):
    config, x0, v0, k_max = job
    r = scatter(config, x0, v0, k_max=k_max)
    return r.n_c, r.regular, r.error is not None


def neighbour_mask(field: np.ndarray, valid: np.ndarray) -> np.ndarray:
    """True where a valid cell equals all of its (up to 4) valid neighbours."""
    same = valid.copy()
    for axis in (0, 1):
        for shift in (1, -1):
            nb = np.roll(field, shift, axis=axis)
            nb_valid = np.roll(valid, shift, axis=axis)
            edge = np.zeros_like(valid)
            if axis == 0:
                edge[0 if shift == 1 else -1, :] = True
            else:
                edge[:, 0 if shift == 1 else -1] = True
            ok = edge | (nb_valid & (nb == field))
            same &= ok
    return same


def grid_nc(config: SystemConfig, x0_range: Tuple[float, float], v0_range: Tuple[float, float],
            nx: int, nv: int, *, k_max: int = K_MAX_DEFAULT,
            workers: Optional[int] = None) -> GridField:
    """Zero counts on a uniform (x0, v0) grid plus the neighbour-equality mask."""
    if nx < 2 or nv < 2:
        raise ValueError("nx and nv must be >= 2")
    xs = np.linspace(*x0_range, int(nx))
    vs = np.linspace(*v0_range, int(nv))
    jobs = [(config, float(x), float(v), int(k_max)) for x in xs for v in vs]
    res = parallel_map(_grid_one, jobs, workers=workers)
    nc = np.array([r[0] for r in res], dtype=int).reshape(len(xs), len(vs))
    regular = np.array([r[1] for r in res], dtype=bool).reshape(nc.shape)
    n_err = sum(1 for r in res if r[2])
    return GridField(xs, vs, nc, neighbour_mask(nc, regular), ~regular, n_err)
