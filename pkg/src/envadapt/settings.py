"""Numeric knobs shared by the control loop, the kernel and the config file."""
from __future__ import annotations

from dataclasses import dataclass, field

from .control import ControllerGains
from .estimator import AMPLITUDE_CAP, COND_MAX, LAMBDA_SCALE, WINDOW_SIZE
from .observers import DOB_CUTOFF
from .plant import J_NOMINAL
from .signals import FEEDBACK_CUTOFF_HZ

DEN_THRESHOLD = 1e-3
# Excitation amplitude is this fraction of the mean disturbance estimate.
# With the literal mean (gain 1) the multi-sine drives the 1.4e-5 kg m^2
# rotor into divergence; see README "Excitation scaling".
EXCITATION_GAIN = 0.01


@dataclass
class LoopConfig:
    J_n: float = J_NOMINAL
    gains: ControllerGains = field(default_factory=ControllerGains)
    dob_cutoff: float = DOB_CUTOFF
    coulomb: float = 0.0
    viscous: float = 0.0
    feedback_cutoff_hz: float = FEEDBACK_CUTOFF_HZ

    noise_enabled: bool = True
    noise_during_recording: bool = False
    amplitude_cap: float = AMPLITUDE_CAP
    excitation_gain: float = EXCITATION_GAIN

    window: int = WINDOW_SIZE
    lambda_scale: float = LAMBDA_SCALE
    cond_max: float = COND_MAX

    den_threshold: float = DEN_THRESHOLD
    smoothing_tau: float = 0.0

    torque_limit: float = 0.0
    divergence_x: float = 10.0
    divergence_f: float = 10.0
