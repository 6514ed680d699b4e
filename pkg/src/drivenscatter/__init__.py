"""Chaotic scattering of a driven one-dimensional oscillator."""
from .dynamics import (
    Driver, Potential, State, SystemConfig, EventLog, Trajectory,
    DynamicsError, StepLimitExceeded, NonFiniteState,
    potential_value, potential_force, driver_value, hamiltonian, free_energy,
    escape_energy, rk4_step, integrate,
)

__version__ = "0.1.0"
