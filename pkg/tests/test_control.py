import numpy as np
import pytest
import sympy as sp
from hypothesis import given
from hypothesis import strategies as st

from envadapt.control import (
    ControlCommand,
    ControllerGains,
    ControlMode,
    ReplayExhausted,
    force_accel_ref,
    hybrid_force_ref,
    mrs_force_ref,
    position_accel_ref,
    torque_ref,
)
from envadapt.plant import J_NOMINAL
from envadapt.signals import MotionRecord

G = ControllerGains()
J = J_NOMINAL
val = st.floats(-10, 10, allow_nan=False)

# Independent symbolic form of the hybrid torque law.
_xc, _vc, _fc, _xr, _vr, _fr, _fd, _kp, _kv, _kf, _j = sp.symbols("xc vc fc xr vr fr fd kp kv kf j")
_HYBRID = sp.lambdify(
    (_xc, _vc, _fc, _xr, _vr, _fr, _fd, _kp, _kv, _kf, _j),
    _j * (_kp * (_xc - _xr) + _kv * (_vc - _vr)) / 2 + _kf * (_fc - _fr) / 2 + _fd,
)


def test_gains_match_motor_table():
    assert (G.K_pos, G.K_vel, G.K_for) == (22500.0, 300.0, 1.0)
    with pytest.raises(ValueError):
        ControllerGains(K_pos=-1.0)


def test_position_accel_examples():
    assert position_accel_ref(G, 0.4, 1.0, 0.4, 1.0, 0.0, J) == 0.0
    assert position_accel_ref(G, 0.1, 0.0, 0.0, 0.0, 0.0, J) == pytest.approx(2250.0)
    assert position_accel_ref(G, 0.0, 0.0, 0.0, 0.0, 1.3589e-5, J) == pytest.approx(1.0)


def test_force_accel_examples():
    assert force_accel_ref(G, 0.3, 0.3, 0.0, J) == 0.0
    assert force_accel_ref(G, 0.2, 0.0, 0.0, J) == pytest.approx(14717.78, rel=1e-6)
    g2 = ControllerGains(K_for=2.0)
    a1, a2 = force_accel_ref(G, 0.2, 0.0, 0.05, J), force_accel_ref(g2, 0.2, 0.0, 0.05, J)
    assert a2 - 0.05 / J == pytest.approx(2 * (a1 - 0.05 / J), rel=1e-12)


def test_hybrid_examples():
    zero = ControlCommand(0.5, 0.1, 0.2, ControlMode.HYBRID)
    assert hybrid_force_ref(G, zero, 0.5, 0.1, 0.2, 0.0, J) == 0.0
    cmd = ControlCommand(0.1, 0.0, 0.2, ControlMode.HYBRID)
    assert hybrid_force_ref(G, cmd, 0.0, 0.0, 0.0, 0.0, J) == pytest.approx(0.1152876, abs=1e-7)


@given(val, val, val, val, val, val, val)
def test_hybrid_matches_symbolic_law(xc, vc, fc, xr, vr, fr, fd):
    got = hybrid_force_ref(G, ControlCommand(xc, vc, fc), xr, vr, fr, fd, J)
    want = float(_HYBRID(xc, vc, fc, xr, vr, fr, fd, G.K_pos, G.K_vel, G.K_for, J))
    assert got == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_hybrid_symbolic_bulk():
    rng = np.random.default_rng(11)
    args = rng.uniform(-2, 2, size=(10_000, 7))
    for xc, vc, fc, xr, vr, fr, fd in args:
        got = hybrid_force_ref(G, ControlCommand(xc, vc, fc), xr, vr, fr, fd, J)
        want = float(_HYBRID(xc, vc, fc, xr, vr, fr, fd, G.K_pos, G.K_vel, G.K_for, J))
        assert got == pytest.approx(want, rel=1e-12, abs=1e-14)


@given(val, val, val, val, val, val, val)
def test_hybrid_is_half_of_both_branches(xc, vc, fc, xr, vr, fr, fd):
    out = hybrid_force_ref(G, ControlCommand(xc, vc, fc), xr, vr, fr, fd, J)
    pos = J * (position_accel_ref(G, xc, vc, xr, vr, 0.0, J))
    force = J * force_accel_ref(G, fc, fr, 0.0, J)
    assert out - fd == pytest.approx(pos / 2 + force / 2, rel=1e-12, abs=1e-12)


@given(val, val, val, val, val, val, val, st.floats(-5, 5))
def test_control_linear_in_errors(xc, vc, fc, xr, vr, fr, fd, c):
    for mode in ControlMode:
        base = torque_ref(int(mode), G.K_pos, G.K_vel, G.K_for, J, xc - xr, vc - vr, fc - fr, 0.0, 0.0, 0.0, fd) - fd
        scaled = torque_ref(int(mode), G.K_pos, G.K_vel, G.K_for, J, c * (xc - xr), c * (vc - vr), c * (fc - fr),
                            0.0, 0.0, 0.0, fd) - fd
        assert scaled == pytest.approx(c * base, rel=1e-9, abs=1e-12)


pd_err = st.floats(-10, 10).filter(lambda v: v == 0 or abs(v) > 1e-200)


@given(pd_err, pd_err)
def test_position_only_is_pd(e, ed):
    out = hybrid_force_ref(G, ControlCommand(e, ed, 0.0, ControlMode.POSITION_ONLY), 0.0, 0.0, 0.0, 0.0, J)
    assert np.sign(out) == np.sign(G.K_pos * e + G.K_vel * ed)


def test_single_branch_modes_drop_halving():
    fo = hybrid_force_ref(G, ControlCommand(0.0, 0.0, 0.2, ControlMode.FORCE_ONLY), 0.0, 0.0, 0.0, 0.01, J)
    assert fo == pytest.approx(0.21)


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        hybrid_force_ref(G, ControlCommand(float("nan")), 0.0, 0.0, 0.0, 0.0, J)


def test_mrs_uses_recorded_sample_and_bounds():
    x = np.array([0.1, 0.2, 0.3])
    rec = MotionRecord(1e-4, x, x * 2, x * 3, x * 4)
    assert mrs_force_ref(G, rec, 1, 0.2, 0.4, 0.8, 0.0, J) == 0.0
    assert mrs_force_ref(G, rec, 2, 0.0, 0.0, 0.0, 0.0, J) == pytest.approx(
        hybrid_force_ref(G, ControlCommand(0.3, 0.6, 1.2), 0.0, 0.0, 0.0, 0.0, J))
    with pytest.raises(ReplayExhausted):
        mrs_force_ref(G, rec, 3, 0.0, 0.0, 0.0, 0.0, J)
