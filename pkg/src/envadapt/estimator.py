"""Sliding-window impedance estimation and the multi-sine excitation.

The window regresses force on ``[xdd, xd, x, 1]`` by ordinary least squares.
Gram matrix and moment vector are maintained incrementally and re-anchored
from the ring buffer every ``capacity`` pushes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numba import njit

WINDOW_SIZE = 1000
LAMBDA_SCALE = 1e-12
COND_MAX = 1e10
AMPLITUDE_CAP = 1.0
NOISE_FREQS_HZ = (50.0, 60.0, 70.0, 80.0, 90.0, 100.0)


class WindowNotFull(RuntimeError):
    pass


class DegenerateWindow(RuntimeError):
    def __init__(self, cond: float):
        self.cond = cond
        super().__init__(f"regression window is ill-conditioned (condition estimate {cond:.3g})")


@dataclass(frozen=True)
class ImpedanceParams:
    M: float = 0.0
    D: float = 0.0
    K: float = 0.0
    H: float = 0.0

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.M, self.D, self.K, self.H)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    @classmethod
    def from_array(cls, theta) -> "ImpedanceParams":
        return cls(*(float(v) for v in theta))


@njit(cache=True)
def solve_normal_equations(G, b, lam_scale):
    """Tikhonov-regularized OLS on Jacobi-equilibrated normal equations.

    Returns ``(theta, cond)`` where ``cond`` is the 2-norm condition number of
    the equilibrated, regularized Gram matrix. A zero diagonal entry gives
    ``cond = inf``.
    """
    n = G.shape[0]
    theta = np.zeros(n)
    s = np.empty(n)
    for i in range(n):
        if not G[i, i] > 0.0:
            return theta, np.inf
        s[i] = 1.0 / math.sqrt(G[i, i])
    A = np.empty((n, n))
    bs = np.empty(n)
    for i in range(n):
        bs[i] = b[i] * s[i]
        for j in range(n):
            A[i, j] = G[i, j] * s[i] * s[j]
    # unit diagonal after equilibration, so max(1, trace/n) == 1
    for i in range(n):
        A[i, i] += lam_scale
    w, V = np.linalg.eigh(A)
    if not w[0] > 0.0:
        return theta, np.inf
    cond = w[n - 1] / w[0]
    y = np.zeros(n)
    for k in range(n):
        c = 0.0
        for i in range(n):
            c += V[i, k] * bs[i]
        c /= w[k]
        for i in range(n):
            y[i] += c * V[i, k]
    for i in range(n):
        theta[i] = y[i] * s[i]
    return theta, cond


@njit(cache=True)
def window_push(buf, G, b, state, x, xd, xdd, f, bias=1.0):
    """Ring-buffer push with incremental accumulators.

    ``state`` holds ``[head, fill, pushes]`` as int64. ``bias`` is the
    regressor multiplying H.
    """
    cap = buf.shape[0]
    head = state[0]
    fill = state[1]
    if fill == cap:
        r0 = buf[head, 0]
        r1 = buf[head, 1]
        r2 = buf[head, 2]
        r3 = buf[head, 3]
        fo = buf[head, 4]
        old = (r0, r1, r2, r3)
        for i in range(4):
            b[i] -= old[i] * fo
            for j in range(4):
                G[i, j] -= old[i] * old[j]
    buf[head, 0] = xdd
    buf[head, 1] = xd
    buf[head, 2] = x
    buf[head, 3] = bias
    buf[head, 4] = f
    new = (xdd, xd, x, bias)
    for i in range(4):
        b[i] += new[i] * f
        for j in range(4):
            G[i, j] += new[i] * new[j]
    state[0] = (head + 1) % cap
    if fill < cap:
        state[1] = fill + 1
    state[2] += 1
    if state[2] % cap == 0:
        recompute_accumulators(buf, G, b, state[1])


@njit(cache=True)
def recompute_accumulators(buf, G, b, fill):
    # ring slots beyond fill are never read before being written
    for i in range(4):
        b[i] = 0.0
        for j in range(4):
            G[i, j] = 0.0
    for k in range(fill):
        for i in range(4):
            b[i] += buf[k, i] * buf[k, 4]
            for j in range(4):
                G[i, j] += buf[k, i] * buf[k, j]


class EstimatorWindow:
    """Fixed-capacity regression window over the most recent samples."""

    def __init__(self, capacity: int = WINDOW_SIZE, lambda_scale: float = LAMBDA_SCALE, cond_max: float = COND_MAX):
        if capacity < 4:
            raise ValueError("window needs at least 4 samples")
        self.capacity = capacity
        self.lambda_scale = lambda_scale
        self.cond_max = cond_max
        self.buf = np.zeros((capacity, 5))
        self.gram = np.zeros((4, 4))
        self.moment = np.zeros(4)
        self._state = np.zeros(3, dtype=np.int64)

    @property
    def fill(self) -> int:
        return int(self._state[1])

    @property
    def ready(self) -> bool:
        return self.fill == self.capacity

    def samples(self) -> np.ndarray:
        """Retained rows ``[xdd, xd, x, 1, f]``, oldest first."""
        head, fill = int(self._state[0]), self.fill
        if fill < self.capacity:
            return self.buf[:fill].copy()
        return np.concatenate((self.buf[head:], self.buf[:head]))

    def push_sample(self, x: float, xd: float, xdd: float, f: float, bias: float = 1.0) -> None:
        if not all(math.isfinite(v) for v in (x, xd, xdd, f, bias)):
            raise ValueError("non-finite estimator sample")
        window_push(self.buf, self.gram, self.moment, self._state, x, xd, xdd, f, bias)

    def condition(self) -> float:
        return solve_normal_equations(self.gram, self.moment, self.lambda_scale)[1]


def push_sample(w: EstimatorWindow, x: float, xd: float, xdd: float, f: float, bias: float = 1.0) -> None:
    w.push_sample(x, xd, xdd, f, bias)


def estimate_impedance(w: EstimatorWindow) -> ImpedanceParams:
    if not w.ready:
        raise WindowNotFull(f"window holds {w.fill} of {w.capacity} samples")
    theta, cond = solve_normal_equations(w.gram, w.moment, w.lambda_scale)
    if not cond <= w.cond_max:
        raise DegenerateWindow(cond)
    return ImpedanceParams.from_array(theta)


@njit(cache=True)
def multisine(t):
    s = 0.0
    for k in range(6):
        s += math.sin(2.0 * math.pi * (50.0 + 10.0 * k) * t)
    return s


@dataclass
class NoiseGenerator:
    amplitude: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if not math.isfinite(self.amplitude):
            raise ValueError("noise amplitude must be finite")


def noise_amplitude(recent_fdis: Sequence[float], N: int = WINDOW_SIZE, cap: float = AMPLITUDE_CAP) -> float:
    """Mean of the last ``min(N, len)`` disturbance estimates, clipped to ``±cap``.

    Sign is kept; an empty history gives 0.
    """
    arr = np.asarray(recent_fdis, dtype=float)
    if arr.size == 0:
        return 0.0
    amp = float(np.mean(arr[-N:]))
    return min(cap, max(-cap, amp))


def noise_signal(gen: NoiseGenerator, t: float) -> float:
    if not gen.enabled:
        return 0.0
    if t < 0:
        raise ValueError("noise time must be nonnegative")
    return gen.amplitude * multisine(t)
