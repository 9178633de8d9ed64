"""Disturbance observer, reaction-force observer and feedback filters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from numba import njit

from .plant import J_NOMINAL
from .signals import FEEDBACK_CUTOFF_HZ, LowPassState, SignalFault, lpf_step

DOB_CUTOFF = 800.0


@njit(cache=True)
def dob_velocity_gain(g, dt):
    # Discrete pseudo-derivative gain that makes the exponential-hold
    # observer cancel the nominal inertia exactly; tends to g as dt -> 0.
    return math.expm1(g * dt) / dt


@njit(cache=True)
def dob_update_scalar(y_prev, f_applied, xd, coeff, gJ):
    y = y_prev + coeff * (f_applied + gJ * xd - y_prev)
    return y, y - gJ * xd


@njit(cache=True)
def rfob_scalar(f_dis_hat, xd, coulomb, viscous):
    s = 0.0
    if xd > 0.0:
        s = 1.0
    elif xd < 0.0:
        s = -1.0
    return f_dis_hat - coulomb * s - viscous * xd


@dataclass
class DobState:
    g: float = DOB_CUTOFF
    J_n: float = J_NOMINAL
    lpf: LowPassState = None
    f_dis_hat: float = 0.0

    def __post_init__(self):
        if not self.g > 0:
            raise ValueError(f"DOB cutoff must be positive, got {self.g}")
        if self.lpf is None:
            self.lpf = LowPassState(self.g)


def dob_update(state: DobState, f_applied: float, xd: float, dt: float) -> float:
    """Velocity-based disturbance observer.

    Low-pass of (applied torque + g J_n xd) minus g J_n xd, with the lag at
    cutoff ``g``.
    """
    if not (math.isfinite(f_applied) and math.isfinite(xd)):
        raise SignalFault("non-finite DOB input")
    gJ = dob_velocity_gain(state.g, dt) * state.J_n
    lpf_step(state.lpf, f_applied + gJ * xd, dt)
    state.f_dis_hat = state.lpf.y_prev - gJ * xd
    return state.f_dis_hat


@dataclass
class RfobState:
    coulomb: float = 0.0
    viscous: float = 0.0
    f_rfob_hat: float = 0.0


def rfob_update(state: RfobState, f_dis_hat: float, xd: float) -> float:
    if not (math.isfinite(f_dis_hat) and math.isfinite(xd)):
        raise SignalFault("non-finite RFOB input")
    state.f_rfob_hat = rfob_scalar(f_dis_hat, xd, state.coulomb, state.viscous)
    return state.f_rfob_hat


def _feedback_lpf() -> LowPassState:
    return LowPassState(2 * math.pi * FEEDBACK_CUTOFF_HZ)


@dataclass
class FeedbackFilters:
    lpf_x: LowPassState = field(default_factory=_feedback_lpf)
    lpf_f: LowPassState = field(default_factory=_feedback_lpf)


def filter_feedback(filters: FeedbackFilters, x_res: float, f_rfob: float, dt: float) -> tuple[float, float]:
    return lpf_step(filters.lpf_x, x_res, dt), lpf_step(filters.lpf_f, f_rfob, dt)


@dataclass
class RegressorFilter:
    """Applies the DOB's own low-pass to the estimator regressors.

    The reaction-force estimate is the true reaction force seen through the
    observer lag; filtering x, xd, xdd and the constant regressor through the
    same lag keeps the linear relation between them exact, start-up included.
    """

    cutoff: float = DOB_CUTOFF
    x: LowPassState = None
    xd: LowPassState = None
    xdd: LowPassState = None
    bias: LowPassState = None

    def __post_init__(self):
        for name in ("x", "xd", "xdd", "bias"):
            if getattr(self, name) is None:
                setattr(self, name, LowPassState(self.cutoff))

    def step(self, x: float, xd: float, xdd: float, dt: float) -> tuple[float, float, float, float]:
        """Returns filtered ``(x, xd, xdd, bias)``."""
        return (lpf_step(self.x, x, dt), lpf_step(self.xd, xd, dt), lpf_step(self.xdd, xdd, dt),
                lpf_step(self.bias, 1.0, dt))
