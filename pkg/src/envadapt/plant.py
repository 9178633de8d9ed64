"""Single-DOF motor rigidly coupled to a spring-mass-damper-load environment."""
from __future__ import annotations

import math
from dataclasses import dataclass

from numba import njit

from .estimator import ImpedanceParams

J_NOMINAL = 1.3589e-5


class DivergenceError(RuntimeError):
    def __init__(self, tick: int, detail: str = ""):
        self.tick = tick
        super().__init__(f"simulation diverged at tick {tick}" + (f": {detail}" if detail else ""))


@dataclass(frozen=True)
class MotorParams:
    J_n: float = J_NOMINAL

    def __post_init__(self):
        if not self.J_n > 0:
            raise ValueError(f"J_n must be positive, got {self.J_n}")


@dataclass(frozen=True)
class EnvironmentModel:
    imp: ImpedanceParams
    label: str = ""

    def __post_init__(self):
        imp = self.imp
        if not all(math.isfinite(v) for v in imp.as_tuple()):
            raise ValueError(f"non-finite impedance for {self.label!r}")
        if imp.K < 0 or imp.D < 0 or imp.M < 0:
            raise ValueError(f"negative M/D/K for environment {self.label!r}")


@dataclass(frozen=True)
class PlantState:
    x: float = 0.0
    xd: float = 0.0
    xdd_last: float = 0.0
    f_env_last: float = 0.0


@njit(cache=True)
def reaction_force_scalar(M, D, K, H, x, xd, xdd):
    return M * xdd + D * xd + K * x + H


@njit(cache=True)
def plant_update(x, xd, f_applied, J, M, D, K, H, dt):
    """Semi-implicit Euler: velocity first, then position.

    The reaction force is evaluated on the pre-step state, which is the force
    that actually acted during the step.
    """
    xdd = (f_applied - (D * xd + K * x + H)) / (J + M)
    f_env = reaction_force_scalar(M, D, K, H, x, xd, xdd)
    xd_new = xd + dt * xdd
    x_new = x + dt * xd_new
    return x_new, xd_new, xdd, f_env


def reaction_force(env: EnvironmentModel, x: float, xd: float, xdd: float) -> float:
    m = env.imp
    return reaction_force_scalar(m.M, m.D, m.K, m.H, x, xd, xdd)


def plant_step(
    state: PlantState,
    motor: MotorParams,
    env: EnvironmentModel,
    f_applied: float,
    dt: float,
    tick: int = -1,
) -> PlantState:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not math.isfinite(f_applied):
        raise DivergenceError(tick, f"non-finite applied torque {f_applied!r}")
    m = env.imp
    x, xd, xdd, f_env = plant_update(state.x, state.xd, f_applied, motor.J_n, m.M, m.D, m.K, m.H, dt)
    if not all(math.isfinite(v) for v in (x, xd, xdd, f_env)):
        raise DivergenceError(tick, "non-finite plant state")
    return PlantState(x=x, xd=xd, xdd_last=xdd, f_env_last=f_env)
