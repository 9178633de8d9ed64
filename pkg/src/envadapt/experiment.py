"""Sample catalog, command generators, trials and the four-pattern comparison."""
from __future__ import annotations

import csv
import enum
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .estimator import EstimatorWindow, ImpedanceParams, estimate_impedance
from .plant import DivergenceError, EnvironmentModel
from .settings import LoopConfig
from .signals import MotionRecord, RecordMode, SamplingConfig, lpf_series
from .simulation import ADAPTIVE, REPLAY, method_for_mode, simulate

# Stiffness measured at a 0.2 Nm grip, softest first.
MATERIAL_STIFFNESS = {
    "balloons": 1.35,
    "puffs": 1.71,
    "sponges": 2.05,
    "vinyl balls": 3.12,
    "soft springs": 3.86,
    "hard springs": 4.88,
    "erasers": 6.92,
    "wood blocks": 13.68,
}
POSITION_SAMPLES = ("balloons", "puffs", "sponges", "vinyl balls", "soft springs", "hard springs")
FORCE_SAMPLES = ("balloons", "sponges", "vinyl balls", "hard springs", "erasers", "wood blocks")

DEFAULT_M = 1.0e-5
DEFAULT_D = 0.05
DEFAULT_H = 0.05

X_AMPLITUDE = 4 * math.pi / 9
F_AMPLITUDE = 0.8


class Method(enum.Enum):
    MRS_A = "MRS_A"
    MRS_B = "MRS_B"
    PROPOSED = "Proposed"


@dataclass(frozen=True)
class CatalogEntry:
    id: int
    name: str
    imp: ImpedanceParams

    @property
    def environment(self) -> EnvironmentModel:
        return EnvironmentModel(self.imp, self.name)


@dataclass(frozen=True)
class SampleCatalog:
    position: tuple[CatalogEntry, ...]
    force: tuple[CatalogEntry, ...]

    def for_mode(self, mode: RecordMode) -> tuple[CatalogEntry, ...]:
        return self.position if mode is RecordMode.POSITION_CONTROL else self.force

    def entry(self, mode: RecordMode, sample_id: int) -> CatalogEntry:
        for e in self.for_mode(mode):
            if e.id == sample_id:
                return e
        raise KeyError(f"no sample {sample_id} in {mode.value} catalog")


def material_impedance(name: str, overrides: dict | None = None) -> ImpedanceParams:
    vals = dict(M=DEFAULT_M, D=DEFAULT_D, K=MATERIAL_STIFFNESS[name], H=DEFAULT_H)
    vals.update((overrides or {}).get(name, {}))
    return ImpedanceParams(**vals)


def build_catalog(overrides: dict | None = None) -> SampleCatalog:
    """``overrides`` maps material name to a dict of M/D/K/H replacements."""

    def entries(names):
        out = tuple(CatalogEntry(i + 1, n, material_impedance(n, overrides)) for i, n in enumerate(names))
        ks = [e.imp.K for e in out]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("catalog stiffness must increase with sample id")
        return out

    return SampleCatalog(entries(POSITION_SAMPLES), entries(FORCE_SAMPLES))


@dataclass(frozen=True)
class Pattern:
    id: int
    pair: tuple[int, int]

    @property
    def held_out(self) -> tuple[int, ...]:
        return tuple(i for i in range(1, 7) if i not in self.pair)


PATTERNS = (Pattern(1, (1, 6)), Pattern(2, (3, 4)), Pattern(3, (1, 2)), Pattern(4, (5, 6)))


def position_command(t):
    """Two-cosine grip trajectory in rad and its derivative; works on arrays."""
    w1, w2 = 2 * np.pi / 10, 2 * np.pi / 2
    x = (np.pi / 9) * (-np.cos(w1 * t) - np.cos(w2 * t) + 2)
    xd = (np.pi / 9) * (w1 * np.sin(w1 * t) + w2 * np.sin(w2 * t))
    return x, xd


def force_command(t):
    w1, w2 = 2 * np.pi / 10, 2 * np.pi / 2
    return 0.2 * (-np.cos(w1 * t) - np.cos(w2 * t) + 2)


def command_table(sampling: SamplingConfig) -> np.ndarray:
    t = sampling.times()
    x, xd = position_command(t)
    return np.column_stack((x, xd, force_command(t)))


def rmse(series, reference) -> float:
    a = np.asarray(series, dtype=float)
    b = np.asarray(reference, dtype=float)
    if a.shape != b.shape or a.size == 0:
        raise ValueError(f"rmse needs equal nonempty series, got {a.shape} and {b.shape}")
    return float(np.sqrt(np.mean((a - b) ** 2)))


@dataclass(frozen=True)
class WelchResult:
    t: float
    p: float
    df: float


def welch_t_test(group1: Sequence[float], group2: Sequence[float]) -> WelchResult:
    """Two-sided Welch t-test; df from Welch-Satterthwaite."""
    a = np.asarray(group1, dtype=float)
    b = np.asarray(group2, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    se2 = va + vb
    if not se2 > 0:
        raise ValueError("both groups have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(se2)
    df = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = float(2 * stats.t.sf(abs(t), df))
    return WelchResult(float(t), min(p, 1.0), float(df))


def significance_stars(p: float) -> str:
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return "n.s."


@dataclass(frozen=True)
class TrialResult:
    method: Method
    sample: int
    rmse: float | None
    diverged: bool = False
    mode: RecordMode = RecordMode.POSITION_CONTROL

    def __post_init__(self):
        if self.diverged and self.rmse is not None:
            raise ValueError("diverged trials carry no rmse")
        if self.rmse is not None and self.rmse < 0:
            raise ValueError("rmse must be nonnegative")


def _reference(mode: RecordMode, sampling: SamplingConfig, n: int) -> np.ndarray:
    t = np.arange(n) * sampling.dt
    return position_command(t)[0] if mode is RecordMode.POSITION_CONTROL else force_command(t)


def _score(res, mode: RecordMode, sampling: SamplingConfig) -> float | None:
    if res.diverged:
        return None
    resp = res.x if mode is RecordMode.POSITION_CONTROL else res.f
    return rmse(resp, _reference(mode, sampling, len(resp)))


def run_recording(sample: CatalogEntry, mode: RecordMode, sampling: SamplingConfig | None = None,
                  cfg: LoopConfig | None = None) -> MotionRecord:
    sampling = sampling or SamplingConfig()
    cfg = cfg or LoopConfig()
    res = simulate(method_for_mode(mode), sample.environment, cfg, sampling.n_ticks, sampling.dt,
                   commands=command_table(sampling))
    if res.diverged:
        raise DivergenceError(res.diverged_tick, f"recording on {sample.name}")
    return MotionRecord(sampling.dt, res.x, res.xd, res.xdd, res.f, mode=mode, sample_id=sample.id)


def estimate_from_record(rec: MotionRecord, end_tick: int | None = None,
                         cfg: LoopConfig | None = None) -> tuple[ImpedanceParams, float]:
    """Impedance estimate from the window the controller holds at ``end_tick``.

    Row ``k`` stores the state after step ``k-1`` together with that step's
    acceleration, so step ``k-1`` pairs ``x, xd`` of row ``k-1`` with ``xdd, f``
    of row ``k``. Returns the estimate and the window's condition number.
    """
    cfg = cfg or LoopConfig()
    n = len(rec)
    end = n - 1 if end_tick is None else int(end_tick)
    if not 0 <= end < n:
        raise ValueError(f"tick {end_tick} outside record of length {n}")
    qx = lpf_series(rec.x[:end], cfg.dob_cutoff, rec.dt, 0.0)
    qxd = lpf_series(rec.xd[:end], cfg.dob_cutoff, rec.dt, 0.0)
    qxdd = lpf_series(rec.xdd[1:end + 1], cfg.dob_cutoff, rec.dt, 0.0)
    q1 = lpf_series(np.ones(end), cfg.dob_cutoff, rec.dt, 0.0)
    w = EstimatorWindow(cfg.window, cfg.lambda_scale, cfg.cond_max)
    for i in range(max(0, end - cfg.window), end):
        w.push_sample(qx[i], qxd[i], qxdd[i], rec.f[i + 1], q1[i])
    return estimate_impedance(w), w.condition()


def _check_dt(rec: MotionRecord, sampling: SamplingConfig) -> None:
    if rec.dt != sampling.dt:
        raise ValueError(f"record dt {rec.dt} differs from configured dt {sampling.dt}")


def run_mrs(rec: MotionRecord, test: CatalogEntry, sampling: SamplingConfig | None = None,
            cfg: LoopConfig | None = None, method: Method = Method.MRS_A) -> TrialResult:
    sampling = sampling or SamplingConfig(dt=rec.dt, duration=(len(rec) - 1) * rec.dt)
    _check_dt(rec, sampling)
    res = simulate(REPLAY, test.environment, cfg or LoopConfig(), len(rec), rec.dt, rec_a=rec)
    return TrialResult(method, test.id, _score(res, rec.mode, sampling), res.diverged, rec.mode)


def run_proposed(rec_A: MotionRecord, rec_B: MotionRecord, test: CatalogEntry,
                 sampling: SamplingConfig | None = None, cfg: LoopConfig | None = None) -> TrialResult:
    if rec_A.mode != rec_B.mode:
        raise ValueError("recordings must share a control mode")
    sampling = sampling or SamplingConfig(dt=rec_A.dt, duration=(len(rec_A) - 1) * rec_A.dt)
    _check_dt(rec_A, sampling)
    res = simulate(ADAPTIVE, test.environment, cfg or LoopConfig(), len(rec_A), rec_A.dt,
                   rec_a=rec_A, rec_b=rec_B)
    return TrialResult(Method.PROPOSED, test.id, _score(res, rec_A.mode, sampling), res.diverged, rec_A.mode)


@dataclass
class ComparisonReport:
    pattern: int
    mode: RecordMode
    trials: list[TrialResult] = field(default_factory=list)
    welch: WelchResult | None = None

    @property
    def mrs_rmses(self) -> list[float]:
        return [t.rmse for t in self.trials if t.method is not Method.PROPOSED and not t.diverged]

    @property
    def proposed_rmses(self) -> list[float]:
        return [t.rmse for t in self.trials if t.method is Method.PROPOSED and not t.diverged]

    @property
    def diverged(self) -> int:
        return sum(t.diverged for t in self.trials)

    @property
    def t_stat(self) -> float:
        return self.welch.t if self.welch else math.nan

    @property
    def p_value(self) -> float:
        return self.welch.p if self.welch else math.nan

    def means(self) -> tuple[float, float]:
        return float(np.mean(self.mrs_rmses)), float(np.mean(self.proposed_rmses))


class RecordingCache:
    """Records each (mode, sample) at most once per configuration."""

    def __init__(self, catalog: SampleCatalog, sampling: SamplingConfig, cfg: LoopConfig):
        self.catalog, self.sampling, self.cfg = catalog, sampling, cfg
        self._store: dict[tuple[RecordMode, int], MotionRecord] = {}

    def get(self, mode: RecordMode, sample_id: int) -> MotionRecord:
        key = (mode, sample_id)
        if key not in self._store:
            self._store[key] = run_recording(self.catalog.entry(mode, sample_id), mode, self.sampling, self.cfg)
        return self._store[key]


def _trial(args) -> TrialResult:
    kind, rec_a, rec_b, test, sampling, cfg = args
    if kind is Method.PROPOSED:
        return run_proposed(rec_a, rec_b, test, sampling, cfg)
    return run_mrs(rec_a, test, sampling, cfg, method=kind)


def run_pattern_comparison(pattern: Pattern, mode: RecordMode, sampling: SamplingConfig | None = None,
                           cfg: LoopConfig | None = None, catalog: SampleCatalog | None = None,
                           cache: RecordingCache | None = None, jobs: int = 1) -> ComparisonReport:
    sampling = sampling or SamplingConfig()
    cfg = cfg or LoopConfig()
    catalog = catalog or build_catalog()
    cache = cache or RecordingCache(catalog, sampling, cfg)
    rec_a = cache.get(mode, pattern.pair[0])
    rec_b = cache.get(mode, pattern.pair[1])
    work = []
    for sid in pattern.held_out:
        test = catalog.entry(mode, sid)
        work += [
            (Method.MRS_A, rec_a, None, test, sampling, cfg),
            (Method.MRS_B, rec_b, None, test, sampling, cfg),
            (Method.PROPOSED, rec_a, rec_b, test, sampling, cfg),
        ]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            trials = list(ex.map(_trial, work))
    else:
        trials = [_trial(w) for w in work]
    report = ComparisonReport(pattern.id, mode, trials)
    if len(report.mrs_rmses) >= 2 and len(report.proposed_rmses) >= 2:
        report.welch = welch_t_test(report.mrs_rmses, report.proposed_rmses)
    return report


@dataclass
class ComparisonSummary:
    reports: list[ComparisonReport]

    def for_mode(self, mode: RecordMode) -> list[ComparisonReport]:
        return [r for r in self.reports if r.mode is mode]

    def aggregate(self, mode: RecordMode) -> tuple[list[float], list[float]]:
        mrs = [v for r in self.for_mode(mode) for v in r.mrs_rmses]
        prop = [v for r in self.for_mode(mode) for v in r.proposed_rmses]
        return mrs, prop

    def ratio(self, mode: RecordMode) -> float:
        mrs, prop = self.aggregate(mode)
        return float(np.mean(prop) / np.mean(mrs))

    def aggregate_welch(self, mode: RecordMode) -> WelchResult:
        return welch_t_test(*self.aggregate(mode))

    @property
    def diverged(self) -> int:
        return sum(r.diverged for r in self.reports)


def run_all_comparisons(sampling: SamplingConfig | None = None, cfg: LoopConfig | None = None,
                        catalog: SampleCatalog | None = None, jobs: int = 1) -> ComparisonSummary:
    sampling = sampling or SamplingConfig()
    cfg = cfg or LoopConfig()
    catalog = catalog or build_catalog()
    cache = RecordingCache(catalog, sampling, cfg)
    reports = [
        run_pattern_comparison(p, mode, sampling, cfg, catalog, cache, jobs)
        for mode in (RecordMode.POSITION_CONTROL, RecordMode.FORCE_CONTROL)
        for p in PATTERNS
    ]
    return ComparisonSummary(reports)


TRIAL_FIELDS = ("pattern", "mode", "method", "sample", "rmse", "diverged")


def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def trials_csv(summary: ComparisonSummary) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(TRIAL_FIELDS)
    for r in summary.reports:
        for t in r.trials:
            w.writerow((r.pattern, r.mode.value, t.method.value, t.sample, _fmt(t.rmse), int(t.diverged)))
    return out.getvalue()


def summary_text(summary: ComparisonSummary, seed: int = 0) -> str:
    unit = {RecordMode.POSITION_CONTROL: "rad", RecordMode.FORCE_CONTROL: "Nm"}
    lines = [f"seed {seed}"]
    for r in summary.reports:
        mrs, prop = r.mrs_rmses, r.proposed_rmses
        lines.append(f"[pattern {r.pattern} {r.mode.value}] n_mrs={len(mrs)} n_proposed={len(prop)} diverged={r.diverged}")
        lines.append(f"  MRS      mean {np.mean(mrs):.6g} sd {np.std(mrs, ddof=1):.6g} {unit[r.mode]}")
        lines.append(f"  Proposed mean {np.mean(prop):.6g} sd {np.std(prop, ddof=1):.6g} {unit[r.mode]}")
        lines.append(f"  Welch t {r.t_stat:.6g} p {r.p_value:.6g} {significance_stars(r.p_value)}")
    for mode in (RecordMode.POSITION_CONTROL, RecordMode.FORCE_CONTROL):
        mrs, prop = summary.aggregate(mode)
        if not mrs or not prop:
            continue
        wt = summary.aggregate_welch(mode)
        lines.append(
            f"[all patterns {mode.value}] MRS mean {np.mean(mrs):.6g} Proposed mean {np.mean(prop):.6g} "
            f"ratio {summary.ratio(mode):.6g} reduction {100 * (1 - summary.ratio(mode)):.1f}% "
            f"Welch t {wt.t:.6g} p {wt.p:.6g} {significance_stars(wt.p)}"
        )
    return "\n".join(lines) + "\n"

