"""Shared signal types: sampling grid, motion records, first-order low-pass."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit

FEEDBACK_CUTOFF_HZ = 50.0


class SignalFault(ValueError):
    """A non-finite value reached a filter or observer."""


class RecordError(ValueError):
    """Motion record violates its invariants or cannot be parsed."""


class RecordMode(enum.Enum):
    POSITION_CONTROL = "PositionControl"
    FORCE_CONTROL = "ForceControl"


@dataclass(frozen=True)
class SamplingConfig:
    dt: float = 1e-4
    duration: float = 20.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        steps = self.duration / self.dt
        if self.duration < 0 or abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValueError(f"duration {self.duration} is not a multiple of dt {self.dt}")

    @property
    def n_ticks(self) -> int:
        """Samples on the grid, both endpoints included."""
        return int(round(self.duration / self.dt)) + 1

    def times(self) -> np.ndarray:
        return np.arange(self.n_ticks) * self.dt


@dataclass
class MotionRecord:
    dt: float
    x: np.ndarray
    xd: np.ndarray
    xdd: np.ndarray
    f: np.ndarray
    mode: RecordMode = RecordMode.POSITION_CONTROL
    sample_id: int = 0

    def __post_init__(self):
        self.x, self.xd, self.xdd, self.f = (
            np.ascontiguousarray(a, dtype=float) for a in (self.x, self.xd, self.xdd, self.f)
        )
        self.validate()

    def validate(self) -> None:
        n = len(self.x)
        if n < 1:
            raise RecordError("record must hold at least one sample")
        if any(len(a) != n for a in (self.xd, self.xdd, self.f)):
            raise RecordError("record series have unequal lengths")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise RecordError(f"invalid dt {self.dt}")
        for name in ("x", "xd", "xdd", "f"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise RecordError(f"non-finite entries in column {name}")

    def __len__(self) -> int:
        return len(self.x)

    def __eq__(self, other):
        if not isinstance(other, MotionRecord):
            return NotImplemented
        return (
            self.dt == other.dt
            and self.mode == other.mode
            and self.sample_id == other.sample_id
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("x", "xd", "xdd", "f"))
        )

    def sample(self, tick: int) -> tuple[float, float, float, float]:
        return float(self.x[tick]), float(self.xd[tick]), float(self.xdd[tick]), float(self.f[tick])

    def stacked(self) -> np.ndarray:
        """(n, 4) array of x, xd, xdd, f for the simulation kernel."""
        return np.ascontiguousarray(np.column_stack((self.x, self.xd, self.xdd, self.f)))


@njit(cache=True)
def lpf_coeff(cutoff, dt):
    return 1.0 - math.exp(-cutoff * dt)


@njit(cache=True)
def lpf_update(y_prev, u, coeff):
    return y_prev + coeff * (u - y_prev)


@dataclass
class LowPassState:
    cutoff: float
    y_prev: float = 0.0

    def __post_init__(self):
        if not self.cutoff > 0:
            raise ValueError(f"cutoff must be positive, got {self.cutoff}")
        if not math.isfinite(self.y_prev):
            raise SignalFault("initial filter output must be finite")

    def coeff(self, dt: float) -> float:
        return 1.0 - math.exp(-self.cutoff * dt)


def lpf_step(state: LowPassState, u: float, dt: float) -> float:
    """Advance a first-order lag by one sample using the exact exponential hold.

    Unity DC gain; stable for any ``cutoff * dt``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not math.isfinite(u):
        raise SignalFault(f"non-finite filter input {u!r}")
    state.y_prev = state.y_prev + state.coeff(dt) * (u - state.y_prev)
    return state.y_prev


def lpf_series(u: np.ndarray, cutoff: float, dt: float, y0: float | None = None) -> np.ndarray:
    return _lpf_series(np.asarray(u, dtype=float), lpf_coeff(cutoff, dt), u[0] if y0 is None else y0)


@njit(cache=True)
def _lpf_series(u, coeff, y0):
    out = np.empty_like(u)
    y = y0
    for i in range(u.shape[0]):
        y = y + coeff * (u[i] - y)
        out[i] = y
    return out


HEADER = ("t", "x", "xd", "xdd", "f")


def write_record(rec: MotionRecord, path) -> None:
    rec.validate()
    path = Path(path)
    # repr() gives the shortest round-trippable decimal for each double
    with path.open("w", newline="") as fh:
        fh.write(",".join(HEADER) + "\n")
        lines = [
            f"{(i * rec.dt)!r},{x!r},{xd!r},{xdd!r},{f!r}\n"
            for i, (x, xd, xdd, f) in enumerate(
                zip(rec.x.tolist(), rec.xd.tolist(), rec.xdd.tolist(), rec.f.tolist())
            )
        ]
        fh.writelines(lines)


def read_record(
    path,
    mode: RecordMode = RecordMode.POSITION_CONTROL,
    sample_id: int = 0,
    dt: float | None = None,
) -> MotionRecord:
    """Parse a motion-record CSV.

    If the ``xdd`` column is missing, acceleration is rebuilt from ``xd`` by
    central differences followed by the 50 Hz feedback low-pass.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise RecordError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    required = {"t", "x", "xd", "f"}
    if not required.issubset(header) or not set(header) <= set(HEADER):
        raise RecordError(f"{path}: unexpected header {header}")
    width = len(header)
    data = rows[1:]
    if not data:
        raise RecordError(f"{path}: no data rows")
    cols: dict[str, list[float]] = {h: [] for h in header}
    for lineno, row in enumerate(data, start=2):
        if len(row) != width:
            raise RecordError(f"{path}:{lineno}: expected {width} fields, got {len(row)}")
        try:
            for h, v in zip(header, row):
                cols[h].append(float(v))
        except ValueError as exc:
            raise RecordError(f"{path}:{lineno}: {exc}") from None
    arr = {h: np.asarray(v) for h, v in cols.items()}
    for h, a in arr.items():
        if not np.all(np.isfinite(a)):
            raise RecordError(f"{path}: non-finite entries in column {h}")

    t = arr["t"]
    if dt is None:
        dt = float(t[1] - t[0]) if len(t) > 1 else SamplingConfig().dt
    if not dt > 0:
        raise RecordError(f"{path}: time column is not increasing")
    if len(t) > 1 and np.max(np.abs(t - t[0] - np.arange(len(t)) * dt)) > 1e-6 * dt * len(t):
        raise RecordError(f"{path}: time column is not uniformly sampled")

    if "xdd" in arr:
        xdd = arr["xdd"]
    else:
        xd = arr["xd"]
        raw = np.gradient(xd, dt) if len(xd) > 1 else np.zeros_like(xd)
        xdd = lpf_series(raw, 2 * math.pi * FEEDBACK_CUTOFF_HZ, dt)
    return MotionRecord(dt=dt, x=arr["x"], xd=arr["xd"], xdd=xdd, f=arr["f"], mode=mode, sample_id=sample_id)
