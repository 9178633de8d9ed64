"""Position, force, hybrid and motion-replay control laws."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from numba import njit

from .signals import MotionRecord

POSITION_ONLY = 0
FORCE_ONLY = 1
HYBRID = 2


class ControlMode(enum.IntEnum):
    POSITION_ONLY = POSITION_ONLY
    FORCE_ONLY = FORCE_ONLY
    HYBRID = HYBRID


class ReplayExhausted(IndexError):
    pass


@dataclass(frozen=True)
class ControllerGains:
    K_pos: float = 22500.0
    K_vel: float = 300.0
    K_for: float = 1.0

    def __post_init__(self):
        if not (self.K_pos > 0 and self.K_vel > 0 and self.K_for > 0):
            raise ValueError(f"controller gains must be positive: {self}")


@dataclass(frozen=True)
class ControlCommand:
    x_cmd: float = 0.0
    xd_cmd: float = 0.0
    f_cmd: float = 0.0
    mode: ControlMode = ControlMode.HYBRID


@njit(cache=True)
def torque_ref(mode, K_pos, K_vel, K_for, J_n, x_cmd, xd_cmd, f_cmd, x_res, xd_res, f_rfob_hat, f_dis_hat):
    pos = J_n * (K_pos * (x_cmd - x_res) + K_vel * (xd_cmd - xd_res))
    force = K_for * (f_cmd - f_rfob_hat)
    if mode == POSITION_ONLY:
        return pos + f_dis_hat
    if mode == FORCE_ONLY:
        return force + f_dis_hat
    return pos / 2.0 + force / 2.0 + f_dis_hat


def _check(*values):
    if not all(math.isfinite(v) for v in values):
        raise ValueError("non-finite controller input")


def position_accel_ref(g: ControllerGains, x_cmd, xd_cmd, x_res, xd_res, f_dis_hat, J_n) -> float:
    _check(x_cmd, xd_cmd, x_res, xd_res, f_dis_hat, J_n)
    return g.K_pos * (x_cmd - x_res) + g.K_vel * (xd_cmd - xd_res) + f_dis_hat / J_n


def force_accel_ref(g: ControllerGains, f_cmd, f_rfob_hat, f_dis_hat, J_n) -> float:
    _check(f_cmd, f_rfob_hat, f_dis_hat, J_n)
    return g.K_for * (f_cmd - f_rfob_hat) / J_n + f_dis_hat / J_n


def hybrid_force_ref(g: ControllerGains, cmd: ControlCommand, x_res, xd_res, f_rfob_hat, f_dis_hat, J_n) -> float:
    """Motor torque reference.

    Hybrid mode halves both branches and adds the full disturbance estimate;
    single-branch modes drop the halving.
    """
    _check(cmd.x_cmd, cmd.xd_cmd, cmd.f_cmd, x_res, xd_res, f_rfob_hat, f_dis_hat, J_n)
    return torque_ref(
        int(cmd.mode), g.K_pos, g.K_vel, g.K_for, J_n,
        cmd.x_cmd, cmd.xd_cmd, cmd.f_cmd, x_res, xd_res, f_rfob_hat, f_dis_hat,
    )


def mrs_force_ref(g: ControllerGains, rec: MotionRecord, tick: int, x_res, xd_res, f_rfob_hat, f_dis_hat, J_n) -> float:
    if not 0 <= tick < len(rec):
        raise ReplayExhausted(f"tick {tick} outside record of length {len(rec)}")
    cmd = ControlCommand(float(rec.x[tick]), float(rec.xd[tick]), float(rec.f[tick]), ControlMode.HYBRID)
    return hybrid_force_ref(g, cmd, x_res, xd_res, f_rfob_hat, f_dis_hat, J_n)
