"""Impedance-matched blending of two recordings.

Each tick the current impedance estimate picks weights so that the blended
position/force command satisfies the environment relation
``f = M xdd + D xd + K x + H`` while the weights sum to one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .control import ControlCommand, ControlMode, hybrid_force_ref
from .estimator import (
    DegenerateWindow,
    EstimatorWindow,
    ImpedanceParams,
    NoiseGenerator,
    WindowNotFull,
    estimate_impedance,
    noise_amplitude,
    noise_signal,
)
from .observers import (
    DobState,
    FeedbackFilters,
    RegressorFilter,
    RfobState,
    dob_update,
    filter_feedback,
    rfob_update,
)
from .plant import PlantState
from .settings import DEN_THRESHOLD, LoopConfig
from .signals import LowPassState, MotionRecord


class ConfigurationError(ValueError):
    pass


class RecordSample(NamedTuple):
    x: float
    xd: float
    xdd: float
    f: float


@dataclass(frozen=True)
class AlphaWeights:
    alpha_A: float
    alpha_B: float
    fallback: bool = False


@dataclass(frozen=True)
class SynthesizedCommand:
    x_C: float
    xd_C: float
    xdd_C: float
    f_C: float


@njit(cache=True)
def unit_sum_pair(a, b):
    """Return weights close to ``(a, b)`` whose float sum is exactly 1.

    ``1 - w`` is exact for ``0.5 <= w < 2**53``, so the member that is at least
    one half is kept and the other is derived from it.
    """
    if a >= 0.5:
        return a, 1.0 - a
    if not b >= 0.5:
        b = 1.0 - a
    return 1.0 - b, b


@njit(cache=True)
def alpha_scalar(xA, xdA, xddA, fA, xB, xdB, xddB, fB, M, D, K, H, ready, threshold):
    """Returns ``(alpha_A, alpha_B, fallback)``."""
    den = fA - fB + K * (xB - xA) + D * (xdB - xdA) + M * (xddB - xddA)
    if not ready or not abs(den) >= threshold:
        return 1.0, 0.0, True
    aA = (H - fB + K * xB + D * xdB + M * xddB) / den
    aB = -(H - fA + K * xA + D * xdA + M * xddA) / den
    if not (math.isfinite(aA) and math.isfinite(aB)):
        return 1.0, 0.0, True
    aA, aB = unit_sum_pair(aA, aB)
    return aA, aB, False


def compute_alpha(
    a: RecordSample,
    b: RecordSample,
    imp_C: ImpedanceParams,
    window_ready: bool,
    den_threshold: float = DEN_THRESHOLD,
) -> AlphaWeights:
    aA, aB, fb = alpha_scalar(
        float(a[0]), float(a[1]), float(a[2]), float(a[3]),
        float(b[0]), float(b[1]), float(b[2]), float(b[3]),
        imp_C.M, imp_C.D, imp_C.K, imp_C.H, bool(window_ready), den_threshold,
    )
    return AlphaWeights(aA, aB, fb)


def synthesize_command(w: AlphaWeights, a: RecordSample, b: RecordSample) -> SynthesizedCommand:
    pA, pB = w.alpha_A, w.alpha_B
    return SynthesizedCommand(*(pA * float(va) + pB * float(vb) for va, vb in zip(a, b)))


class AdaptiveLoop:
    """Tick-by-tick reference implementation of the adaptive controller.

    The batch kernel in :mod:`envadapt.simulation` runs the same sequence of
    operations; this class keeps every intermediate state inspectable.
    """

    def __init__(self, rec_a: MotionRecord, rec_b: MotionRecord, cfg: LoopConfig | None = None):
        if len(rec_a) != len(rec_b) or rec_a.dt != rec_b.dt:
            raise ConfigurationError(
                f"recordings differ: {len(rec_a)} vs {len(rec_b)} samples, dt {rec_a.dt} vs {rec_b.dt}"
            )
        self.cfg = cfg = cfg or LoopConfig()
        self.rec_a, self.rec_b = rec_a, rec_b
        self.dt = rec_a.dt
        self.dob = DobState(g=cfg.dob_cutoff, J_n=cfg.J_n)
        self.rfob = RfobState(coulomb=cfg.coulomb, viscous=cfg.viscous)
        cutoff = 2 * math.pi * cfg.feedback_cutoff_hz
        self.filters = FeedbackFilters(LowPassState(cutoff), LowPassState(cutoff))
        self.regressors = RegressorFilter(cfg.dob_cutoff)
        self.window = EstimatorWindow(cfg.window, cfg.lambda_scale, cfg.cond_max)
        self.noise = NoiseGenerator(0.0, cfg.noise_enabled)
        self.fdis_history: list[float] = []
        self.alpha_smooth: float | None = None
        self.last_alpha = AlphaWeights(1.0, 0.0, True)
        self.last_estimate: ImpedanceParams | None = None
        self.degenerate_events = 0

    def current_estimate(self) -> ImpedanceParams | None:
        try:
            return estimate_impedance(self.window)
        except WindowNotFull:
            return None
        except DegenerateWindow:
            self.degenerate_events += 1
            return None

    def command(self, tick: int) -> SynthesizedCommand:
        a = RecordSample(*self.rec_a.sample(tick))
        b = RecordSample(*self.rec_b.sample(tick))
        imp = self.last_estimate = self.current_estimate()
        w = compute_alpha(a, b, imp or ImpedanceParams(), imp is not None, self.cfg.den_threshold)
        if self.cfg.smoothing_tau > 0:
            target = w.alpha_A
            if self.alpha_smooth is None:
                self.alpha_smooth = target
            else:
                self.alpha_smooth += -math.expm1(-self.dt / self.cfg.smoothing_tau) * (target - self.alpha_smooth)
            pA, pB = _unit_pair(self.alpha_smooth)
            w = AlphaWeights(pA, pB, w.fallback)
        self.last_alpha = w
        return synthesize_command(w, a, b)

    def step(self, tick: int, plant: PlantState) -> float:
        """Steps 1-4 for one tick; returns the torque for the plant."""
        cfg = self.cfg
        x_f, f_f = filter_feedback(self.filters, plant.x, self.rfob.f_rfob_hat, self.dt)
        c = self.command(tick)
        cmd = ControlCommand(c.x_C, c.xd_C, c.f_C, ControlMode.HYBRID)
        f_ref = hybrid_force_ref(cfg.gains, cmd, x_f, plant.xd, f_f, self.dob.f_dis_hat, cfg.J_n)
        if cfg.torque_limit > 0:
            f_ref = min(cfg.torque_limit, max(-cfg.torque_limit, f_ref))
        self.noise.amplitude = cfg.excitation_gain * noise_amplitude(self.fdis_history, cfg.window, cfg.amplitude_cap)
        return f_ref + noise_signal(self.noise, tick * self.dt)

    def observe(self, f_applied: float, before: PlantState, after: PlantState) -> None:
        """Observer update after the plant has advanced one step."""
        f_dis = dob_update(self.dob, f_applied, after.xd, self.dt)
        f_rfob = rfob_update(self.rfob, f_dis, after.xd)
        self.fdis_history.append(f_dis)
        if len(self.fdis_history) > self.cfg.window:
            del self.fdis_history[0]
        qx, qxd, qxdd, q1 = self.regressors.step(before.x, before.xd, after.xdd_last, self.dt)
        self.window.push_sample(qx, qxd, qxdd, f_rfob, q1)


def _unit_pair(alpha_a: float) -> tuple[float, float]:
    return unit_sum_pair(alpha_a, 1.0 - alpha_a)


def adaptive_step(loop: AdaptiveLoop, tick: int, plant: PlantState) -> float:
    return loop.step(tick, plant)

