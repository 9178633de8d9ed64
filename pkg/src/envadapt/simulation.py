"""Compiled closed-loop trial runner.

One call simulates a whole trial (recording, replay or adaptive) on one
environment. The per-tick sequence matches :class:`envadapt.adapt.AdaptiveLoop`
and the single-step functions of the other modules.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .adapt import ConfigurationError, alpha_scalar, unit_sum_pair
from .control import FORCE_ONLY, HYBRID, POSITION_ONLY, torque_ref
from .estimator import multisine, solve_normal_equations, window_push
from .observers import dob_update_scalar, dob_velocity_gain, rfob_scalar
from .plant import EnvironmentModel, plant_update
from .settings import LoopConfig
from .signals import MotionRecord, RecordMode, lpf_coeff, lpf_update

RECORD_POSITION = 0
RECORD_FORCE = 1
REPLAY = 2
ADAPTIVE = 3


@dataclass
class SimResult:
    """Per-tick measurements taken at the start of each tick."""

    x: np.ndarray
    xd: np.ndarray
    xdd: np.ndarray
    f: np.ndarray
    diverged_tick: int
    degenerate_events: int
    estimates: np.ndarray | None = None
    alpha_A: np.ndarray | None = None
    fallback: np.ndarray | None = None
    noise: np.ndarray | None = None

    @property
    def diverged(self) -> bool:
        return self.diverged_tick >= 0


@njit(cache=True)
def _run(method, n, dt, p, env, cmd, rec_a, rec_b, flags, diag):
    """``p`` packs scalar settings, ``flags`` = [noise_on, estimate]."""
    J, K_pos, K_vel, K_for = p[0], p[1], p[2], p[3]
    g_dob, coulomb, viscous, fb_cut = p[4], p[5], p[6], p[7]
    amp_cap, exc_gain, lam, cond_max = p[8], p[9], p[10], p[11]
    den_thr, tau, t_lim, div_x, div_f = p[12], p[13], p[14], p[15], p[16]
    N = int(p[17])
    M, D, K, H = env[0], env[1], env[2], env[3]
    noise_on = flags[0] != 0
    estimating = flags[1] != 0 or method == ADAPTIVE

    a_dob = lpf_coeff(g_dob, dt)
    gJ = dob_velocity_gain(g_dob, dt) * J
    a_fb = lpf_coeff(fb_cut, dt)
    a_q = a_dob
    a_s = 0.0
    if tau > 0.0:
        a_s = -math.expm1(-dt / tau)

    X = np.empty(n)
    XD = np.empty(n)
    XDD = np.empty(n)
    F = np.empty(n)
    m = n if diag else 0
    EST = np.full((m, 4), np.nan)
    ALPHA = np.ones(m)
    FALL = np.ones(m, dtype=np.bool_)
    NOISE = np.zeros(m)

    buf = np.zeros((N, 5))
    G = np.zeros((4, 4))
    bvec = np.zeros(4)
    wstate = np.zeros(3, dtype=np.int64)
    hist = np.zeros(N)
    hsum = 0.0
    hcount = 0

    x = 0.0
    xd = 0.0
    xdd = 0.0
    dob_y = 0.0
    fdis = 0.0
    frf = 0.0
    xf = 0.0
    ff = 0.0
    qx = 0.0
    qxd = 0.0
    qxdd = 0.0
    q1 = 0.0
    alpha_s = 1.0
    smooth_init = False
    diverged = -1
    degenerate = 0
    theta = np.zeros(4)

    for k in range(n):
        t = k * dt
        X[k] = x
        XD[k] = xd
        XDD[k] = xdd
        F[k] = frf
        xf = lpf_update(xf, x, a_fb)
        ff = lpf_update(ff, frf, a_fb)

        if method == RECORD_POSITION:
            f_ref = torque_ref(POSITION_ONLY, K_pos, K_vel, K_for, J, cmd[k, 0], cmd[k, 1], 0.0,
                               xf, xd, ff, fdis)
        elif method == RECORD_FORCE:
            f_ref = torque_ref(FORCE_ONLY, K_pos, K_vel, K_for, J, 0.0, 0.0, cmd[k, 2],
                               xf, xd, ff, fdis)
        elif method == REPLAY:
            f_ref = torque_ref(HYBRID, K_pos, K_vel, K_for, J, rec_a[k, 0], rec_a[k, 1], rec_a[k, 3],
                               xf, xd, ff, fdis)
        else:
            ready = wstate[1] == N
            if ready:
                theta, cond = solve_normal_equations(G, bvec, lam)
                if not cond <= cond_max:
                    ready = False
                    degenerate += 1
            aA, aB, fb = alpha_scalar(rec_a[k, 0], rec_a[k, 1], rec_a[k, 2], rec_a[k, 3],
                                      rec_b[k, 0], rec_b[k, 1], rec_b[k, 2], rec_b[k, 3],
                                      theta[0], theta[1], theta[2], theta[3], ready, den_thr)
            if tau > 0.0:
                if not smooth_init:
                    alpha_s = aA
                    smooth_init = True
                else:
                    alpha_s += a_s * (aA - alpha_s)
                aA, aB = unit_sum_pair(alpha_s, 1.0 - alpha_s)
            x_c = aA * rec_a[k, 0] + aB * rec_b[k, 0]
            xd_c = aA * rec_a[k, 1] + aB * rec_b[k, 1]
            f_c = aA * rec_a[k, 3] + aB * rec_b[k, 3]
            f_ref = torque_ref(HYBRID, K_pos, K_vel, K_for, J, x_c, xd_c, f_c, xf, xd, ff, fdis)
            if diag:
                if ready:
                    for i in range(4):
                        EST[k, i] = theta[i]
                ALPHA[k] = aA
                FALL[k] = fb

        if method != ADAPTIVE and diag and estimating and wstate[1] == N:
            th, cond = solve_normal_equations(G, bvec, lam)
            if cond <= cond_max:
                for i in range(4):
                    EST[k, i] = th[i]
            else:
                degenerate += 1

        if t_lim > 0.0:
            f_ref = min(t_lim, max(-t_lim, f_ref))

        noise = 0.0
        if noise_on:
            amp = 0.0
            if hcount > 0:
                amp = hsum / min(hcount, N)
                amp = min(amp_cap, max(-amp_cap, amp))
            noise = exc_gain * amp * multisine(t)
            if diag:
                NOISE[k] = noise
        fa = f_ref + noise
        if not abs(fa) <= div_f:
            diverged = k
            break

        x_old = x
        xd_old = xd
        x, xd, xdd, f_env = plant_update(x, xd, fa, J, M, D, K, H, dt)
        if not abs(x) <= div_x or not math.isfinite(xd):
            diverged = k
            break

        dob_y, fdis = dob_update_scalar(dob_y, fa, xd, a_dob, gJ)
        frf = rfob_scalar(fdis, xd, coulomb, viscous)

        slot = hcount % N
        if hcount >= N:
            hsum -= hist[slot]
        hist[slot] = fdis
        hsum += fdis
        hcount += 1

        if estimating:
            qx = lpf_update(qx, x_old, a_q)
            qxd = lpf_update(qxd, xd_old, a_q)
            qxdd = lpf_update(qxdd, xdd, a_q)
            q1 = lpf_update(q1, 1.0, a_q)
            window_push(buf, G, bvec, wstate, qx, qxd, qxdd, frf, q1)

    return X, XD, XDD, F, diverged, degenerate, EST, ALPHA, FALL, NOISE


def pack_settings(cfg: LoopConfig) -> np.ndarray:
    g = cfg.gains
    return np.array([
        cfg.J_n, g.K_pos, g.K_vel, g.K_for,
        cfg.dob_cutoff, cfg.coulomb, cfg.viscous, 2 * math.pi * cfg.feedback_cutoff_hz,
        cfg.amplitude_cap, cfg.excitation_gain, cfg.lambda_scale, cfg.cond_max,
        cfg.den_threshold, cfg.smoothing_tau, cfg.torque_limit, cfg.divergence_x, cfg.divergence_f,
        float(cfg.window),
    ])


_EMPTY2 = np.zeros((0, 4))


def simulate(
    method: int,
    env: EnvironmentModel,
    cfg: LoopConfig,
    n: int,
    dt: float,
    commands: np.ndarray | None = None,
    rec_a: MotionRecord | None = None,
    rec_b: MotionRecord | None = None,
    noise: bool | None = None,
    estimate: bool = False,
    diagnostics: bool = False,
) -> SimResult:
    """Run one closed-loop trial of ``n`` ticks.

    ``commands`` is an ``(n, 3)`` array of ``x_cmd, xd_cmd, f_cmd`` for the
    recording methods. Replay and adaptive runs take their commands from the
    records. ``noise`` defaults to on for replay/adaptive runs and to
    ``cfg.noise_during_recording`` for recordings.
    """
    if method in (RECORD_POSITION, RECORD_FORCE):
        if commands is None or commands.shape != (n, 3):
            raise ConfigurationError("recording needs an (n, 3) command array")
        cmd = np.ascontiguousarray(commands, dtype=float)
        if noise is None:
            noise = cfg.noise_during_recording
    else:
        cmd = _EMPTY2
    if noise is None:
        noise = True
    noise = bool(noise and cfg.noise_enabled)

    a = b = _EMPTY2
    if method in (REPLAY, ADAPTIVE):
        if rec_a is None or len(rec_a) < n or rec_a.dt != dt:
            raise ConfigurationError("replay record is shorter than the run or has a different dt")
        a = rec_a.stacked()
    if method == ADAPTIVE:
        if rec_b is None or len(rec_b) != len(rec_a) or rec_b.dt != rec_a.dt:
            raise ConfigurationError("recordings A and B must have equal length and dt")
        b = rec_b.stacked()

    imp = env.imp
    out = _run(
        method, n, dt, pack_settings(cfg), np.array(imp.as_tuple()), cmd, a, b,
        np.array([int(noise), int(estimate)], dtype=np.int64), diagnostics,
    )
    X, XD, XDD, F, diverged, degenerate, EST, ALPHA, FALL, NOISE = out
    stop = n if diverged < 0 else diverged + 1
    res = SimResult(X[:stop], XD[:stop], XDD[:stop], F[:stop], int(diverged), int(degenerate))
    if diagnostics:
        res.estimates, res.alpha_A, res.fallback, res.noise = EST[:stop], ALPHA[:stop], FALL[:stop], NOISE[:stop]
    return res


def method_for_mode(mode: RecordMode) -> int:
    return RECORD_POSITION if mode is RecordMode.POSITION_CONTROL else RECORD_FORCE
