"""Driven one-dimensional oscillator: potentials, drivers and integration.

The particle (mass 1) moves in ``omega**2 * V(x)`` and feels a homogeneous
force ``f(t)``::

    H(p, x, t) = p**2 / 2 + omega**2 V(x) - f(t) x

The driver amplitude ``e0`` enters once, through ``f``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import _kernel as K

__all__ = [
    "Potential", "Driver", "SystemConfig", "State", "EventLog", "Trajectory",
    "DynamicsError", "StepLimitExceeded", "NonFiniteState",
    "potential_value", "potential_force", "driver_value", "hamiltonian",
    "free_energy", "escape_energy", "rk4_step", "integrate",
]


class Potential(enum.Enum):
    V1 = "v1"  # rigid spheres, C^2
    V2 = "v2"  # Lorentz-shaped


class Driver(enum.Enum):
    NONE = "none"
    F1 = "f1"  # sin^2 envelope, compact support
    F2 = "f2"  # purely sinusoidal


class DynamicsError(RuntimeError):
    pass


class StepLimitExceeded(DynamicsError):
    pass


class NonFiniteState(DynamicsError):
    pass


@dataclass(frozen=True)
class SystemConfig:
    """Physical parameters plus integrator settings.

    ``dt`` and ``t_noreturn`` default (``None``) to one two-thousandth of a
    driver period and to 200 driver periods respectively.
    """

    potential: Potential = Potential.V1
    driver: Driver = Driver.F2
    omega: float = 0.7
    e0: float = 1.0
    nu: float = 0.8
    envelope_n: int = 340
    dt: Optional[float] = None
    escape_x: float = 50.0
    t_noreturn: Optional[float] = None
    max_steps: int = 2_000_000_000

    def __post_init__(self):
        if isinstance(self.potential, str):
            object.__setattr__(self, "potential", Potential(self.potential.lower()))
        if isinstance(self.driver, str):
            object.__setattr__(self, "driver", Driver(self.driver.lower()))
        checks = [
            (self.omega > 0, "omega > 0"),
            (self.nu > 0, "nu > 0"),
            (int(self.envelope_n) == self.envelope_n and self.envelope_n >= 1,
             "envelope_n >= 1 (integer)"),
            (self.dt is None or self.dt > 0, "dt > 0"),
            (self.escape_x > 2, "escape_x > 2"),
            (self.t_noreturn is None or self.t_noreturn > 0, "t_noreturn > 0"),
            (self.max_steps >= 1, "max_steps >= 1"),
        ]
        for ok, what in checks:
            if not ok:
                raise ValueError(f"invalid SystemConfig: {what}")
        for name in ("omega", "e0", "nu", "escape_x"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"invalid SystemConfig: {name} must be finite")

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.nu

    @property
    def step(self) -> float:
        return self.dt if self.dt is not None else self.period / 2000.0

    @property
    def noreturn_time(self) -> float:
        return self.t_noreturn if self.t_noreturn is not None else 200.0 * self.period

    @property
    def amplitude(self) -> float:
        """Effective driver amplitude (zero when there is no driver)."""
        return 0.0 if self.driver is Driver.NONE else self.e0

    @property
    def escape_energy(self) -> float:
        return escape_energy(self.omega)

    @property
    def switch_off_time(self) -> float:
        """End of the f1 pulse; infinite for the other drivers."""
        if self.driver is Driver.F1:
            return self.envelope_n * math.pi / self.nu
        return math.inf

    def with_(self, **changes) -> "SystemConfig":
        return replace(self, **changes)

    def params(self) -> np.ndarray:
        prm = np.zeros(K.NPARAM)
        prm[K.P_POT] = K.POT_V1 if self.potential is Potential.V1 else K.POT_V2
        prm[K.P_DRV] = {Driver.NONE: K.DRV_NONE, Driver.F1: K.DRV_F1,
                        Driver.F2: K.DRV_F2}[self.driver]
        prm[K.P_OMEGA] = self.omega
        prm[K.P_E0] = self.amplitude
        prm[K.P_NU] = self.nu
        prm[K.P_NENV] = self.envelope_n
        prm[K.P_ESCX] = self.escape_x
        prm[K.P_TNR] = self.noreturn_time
        prm[K.P_HESC] = self.escape_energy
        return prm


@dataclass(frozen=True)
class State:
    x: float
    p: float
    t: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.p) and math.isfinite(self.t)):
            raise NonFiniteState(f"non-finite state {self!r}")


@dataclass
class EventLog:
    """Zero crossings as rows (t, p) and turning points as rows (t, x)."""

    zero_crossings: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    turning_points: np.ndarray = field(default_factory=lambda: np.empty((0, 2)))
    escaped: bool = False
    escape_time: Optional[float] = None
    status: str = "cutoff"

    @property
    def n_crossings(self) -> int:
        return len(self.zero_crossings)

    @property
    def delay_time(self) -> float:
        if len(self.zero_crossings) == 0:
            return 0.0
        return float(self.zero_crossings[-1, 0] - self.zero_crossings[0, 0])


@dataclass
class Trajectory:
    samples: np.ndarray  # rows (x, p, t)
    events: EventLog
    final: State

    def states(self):
        for x, p, t in self.samples:
            yield State(float(x), float(p), float(t))


STATUS_NAMES = {
    K.ST_CUTOFF: "cutoff",
    K.ST_ESCAPED: "escaped",
    K.ST_NORETURN: "noreturn",
    K.ST_BOUND: "bound",
    K.ST_CROSSINGS: "crossings",
    K.ST_STEPLIMIT: "steplimit",
    K.ST_NONFINITE: "nonfinite",
}


def escape_energy(omega: float = 0.7) -> float:
    """Energy of the unperturbed escape orbit, 6/5 omega**2."""
    return 1.2 * omega * omega


def potential_value(kind: Potential, x):
    kind = Potential(kind)
    code = K.POT_V1 if kind is Potential.V1 else K.POT_V2
    if np.ndim(x) == 0:
        return K.v_value(code, float(x))
    return np.array([K.v_value(code, float(v)) for v in np.ravel(x)]).reshape(np.shape(x))


def potential_force(kind: Potential, x):
    """``-dV/dx`` without the omega**2 factor."""
    kind = Potential(kind)
    code = K.POT_V1 if kind is Potential.V1 else K.POT_V2
    if np.ndim(x) == 0:
        return K.v_force(code, float(x))
    return np.array([K.v_force(code, float(v)) for v in np.ravel(x)]).reshape(np.shape(x))


def driver_value(kind: Driver, config: SystemConfig, t: float) -> float:
    if Driver(kind) is not config.driver:
        config = config.with_(driver=Driver(kind))
    return K.drive(config.params(), float(t))


def hamiltonian(config: SystemConfig, s: State) -> float:
    prm = config.params()
    return K.free_energy(prm, s.x, s.p) - K.drive(prm, s.t) * s.x


def free_energy(config: SystemConfig, s: State) -> float:
    return K.free_energy(config.params(), s.x, s.p)


def rk4_step(config: SystemConfig, s: State, dt: float) -> State:
    if not dt > 0:
        raise ValueError("dt must be positive")
    x, p = K.rk4(config.params(), s.x, s.p, s.t, float(dt))
    return State(x, p, s.t + dt)


def run_raw(config: SystemConfig, s0: State, t_end: float, *, backward=False,
            stop_after=0, stop_when_bound=False, start_is_crossing=True,
            strobe=None, stride=0, prm=None):
    """Thin wrapper over the compiled loop; raises on integrator failures."""
    dt = config.step
    if backward:
        dt = -dt
    if prm is None:
        prm = config.params()
    s_t0, s_per = (-1.0, 0.0) if strobe is None else strobe
    out = K.run(float(s0.x), float(s0.p), float(s0.t), dt, float(t_end), prm,
                int(config.max_steps), int(stop_after), bool(stop_when_bound),
                bool(start_is_crossing), float(s_t0), float(s_per), int(stride))
    status = out[0]
    if status == K.ST_STEPLIMIT:
        raise StepLimitExceeded(f"more than {config.max_steps} steps")
    if status == K.ST_NONFINITE:
        raise NonFiniteState(f"state overflowed near t={out[3]:.6g}")
    return out


def integrate(config: SystemConfig, s0: State, t_end: float, *, stride: int = 0,
              stop_when_bound: bool = False) -> Trajectory:
    """Fixed-step RK4 from ``s0`` to ``t_end`` (or until escape).

    ``stride`` > 0 stores every stride-th step in ``samples``. A start at
    exactly x = 0 counts as the first zero crossing.
    """
    if not t_end > s0.t:
        raise ValueError("t_end must exceed the initial time")
    out = run_raw(config, s0, t_end, stride=stride, stop_when_bound=stop_when_bound)
    status, x, p, t = out[0], out[1], out[2], out[3]
    escaped = status in (K.ST_ESCAPED, K.ST_NORETURN)
    log = EventLog(zero_crossings=out[5], turning_points=out[6], escaped=escaped,
                   escape_time=float(t) if escaped else None,
                   status=STATUS_NAMES[status])
    return Trajectory(samples=out[8], events=log, final=State(float(x), float(p), float(t)))
