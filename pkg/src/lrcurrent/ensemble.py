"""Disorder averages over independent samples, self-averaging scans and the
non-vanishing-fluctuation floor check."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from dataclasses import field as dfield

import numpy as np

from .currents import Direction, FieldProfile, assemble_K, build_system
from .lattice import DisorderSpec, build_box, sample_disorder
from .ldp import (fluct_floor, fluctuation_trace, hs_lower_bound, make_instance,
                  richardson_derivative, upsilon)

QUANTITIES = ("omega0", "J1", "d2J0", "F", "hs_bound", "current", "quad_error")
MAX_FAILURE_RATE = 0.05


class ConfigError(ValueError):
    """An ensemble request violates a documented precondition."""


def sample_seed(base_seed: int, index: int) -> int:
    """Per-sample 64-bit seed hashed from (base seed, sample index)."""
    state = np.random.SeedSequence([int(base_seed), int(index)]).generate_state(1, np.uint64)
    return int(state[0])


@dataclass(frozen=True)
class EnsembleSpec:
    n_samples: int = 10
    base_seed: int = 0
    L_schedule: tuple = (8,)
    d: int = 1
    beta: float = 1.0
    lam: float = 1.0
    theta: float = 0.0
    disorder: DisorderSpec = dfield(default_factory=DisorderSpec)
    field: FieldProfile = dfield(default_factory=FieldProfile)
    w: Direction = dfield(default_factory=lambda: Direction((1.0,)))
    margin: int | None = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("need at least one sample")
        sched = tuple(int(L) for L in self.L_schedule)
        if not sched or any(b <= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("L-schedule must be non-empty and strictly increasing")
        object.__setattr__(self, "L_schedule", sched)


def sample_quantities(spec: EnsembleSpec, L: int, index: int,
                      quantities=QUANTITIES) -> dict:
    """All requested per-sample outputs for one (L, sample index)."""
    seed = sample_seed(spec.base_seed, index)
    disorder = spec.disorder.with_seed(seed)
    out = {}
    if "omega0" in quantities:
        # values are keyed by lattice position, so the one-site box suffices
        origin = sample_disorder(disorder, build_box(spec.d, 0))
        out["omega0"] = float(origin.onsite[0])
    if set(quantities) <= {"omega0"}:
        return out
    sys_ = build_system(spec.d, L, disorder, spec.lam, spec.theta, margin=spec.margin,
                        horizon=spec.field.horizon)
    kern = assemble_K(sys_, spec.field, spec.w)
    inst = make_instance(sys_, kern, spec.beta)
    values = {
        "J1": lambda: inst.J(1.0),
        "d2J0": lambda: richardson_derivative(inst.moment, 0.0, 2) / inst.volume,
        "F": lambda: fluctuation_trace(kern, inst.symbol),
        "hs_bound": lambda: hs_lower_bound(kern, spec.beta, spec.lam, spec.theta, spec.d),
        "current": inst.current,
        "quad_error": lambda: kern.quad_error,
    }
    for q in quantities:
        if q != "omega0":
            out[q] = float(values[q]())
    return out


def _task(args):
    spec, L, index, quantities = args
    try:
        return index, L, sample_quantities(spec, L, index, quantities), None
    except Exception as exc:  # skip-and-report
        return index, L, None, f"{type(exc).__name__}: {exc}"


@dataclass(frozen=True)
class EnsembleStats:
    quantity: str
    L: int
    mean: float
    variance: float
    stderr: float
    count: int
    failures: int

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


def summarize(quantity: str, L: int, values, failures: int = 0) -> EnsembleStats:
    """Statistics from values in sample-index order, with exactly rounded sums."""
    vals = [float(v) for v in values]
    n = len(vals)
    if n == 0:
        nan = float("nan")
        return EnsembleStats(quantity, L, nan, nan, nan, 0, failures)
    mean = math.fsum(vals) / n
    var = math.fsum((v - mean) ** 2 for v in vals) / (n - 1) if n > 1 else 0.0
    return EnsembleStats(quantity, L, mean, var, math.sqrt(var / n), n, failures)


@dataclass(frozen=True)
class EnsembleResult:
    rows: list                     # (sample_index, seed, L, quantity, value)
    stats: dict                    # (L, quantity) -> EnsembleStats
    failures: list                 # (sample_index, L, message)
    n_requested: int

    @property
    def failure_rate(self) -> float:
        return len(self.failures) / max(self.n_requested, 1)

    @property
    def valid(self) -> bool:
        return self.failure_rate <= MAX_FAILURE_RATE

    def values(self, quantity: str, L: int) -> np.ndarray:
        return np.array([r[4] for r in self.rows if r[2] == L and r[3] == quantity])


def run_ensemble(spec: EnsembleSpec, quantities=("J1",), workers: int = 1) -> EnsembleResult:
    """Evaluate every (L, sample) task and reduce in (L, sample index) order."""
    bad = [q for q in quantities if q not in QUANTITIES]
    if bad:
        raise ConfigError(f"unknown quantities {bad}")
    tasks = [(spec, L, i, tuple(quantities))
             for L in spec.L_schedule for i in range(spec.n_samples)]
    workers = max(1, int(workers or os.cpu_count() or 1))
    if workers == 1:
        results = [_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_task, tasks, chunksize=1))
    results.sort(key=lambda r: (spec.L_schedule.index(r[1]), r[0]))
    rows, failures = [], []
    for index, L, vals, err in results:
        if err is not None:
            failures.append((index, L, err))
            continue
        seed = sample_seed(spec.base_seed, index)
        rows.extend((index, seed, L, q, vals[q]) for q in quantities)
    stats = {}
    for L in spec.L_schedule:
        n_fail = sum(1 for f in failures if f[1] == L)
        for q in quantities:
            stats[(L, q)] = summarize(q, L, [r[4] for r in rows if r[2] == L and r[3] == q],
                                      n_fail)
    return EnsembleResult(rows, stats, failures, len(tasks))


def disorder_average(quantity: str, spec: EnsembleSpec, workers: int = 1) -> EnsembleStats:
    """Statistics of one quantity at the first L of the schedule."""
    res = run_ensemble(replace(spec, L_schedule=spec.L_schedule[:1]), (quantity,), workers)
    return res.stats[(spec.L_schedule[0], quantity)]


@dataclass(frozen=True)
class ScanRow:
    L: int
    mean: float
    std: float
    stderr: float
    count: int
    single_deviation: float        # |sample 0 value - ensemble mean|


def self_averaging_scan(spec: EnsembleSpec, quantity: str = "J1",
                        workers: int = 1) -> tuple[list, EnsembleResult]:
    res = run_ensemble(spec, (quantity,), workers)
    table = []
    for L in spec.L_schedule:
        st = res.stats[(L, quantity)]
        first = [r[4] for r in res.rows if r[2] == L and r[3] == quantity and r[0] == 0]
        dev = abs(first[0] - st.mean) if first else float("nan")
        table.append(ScanRow(L, st.mean, st.std, st.stderr, st.count, dev))
    return table, res


@dataclass(frozen=True)
class FloorReport:
    passed: bool
    floor: float
    mean: float
    stderr: float
    margin: float                  # mean - 3 stderr - floor
    trivial: bool
    per_sample_ok: bool
    quadrature_flag: bool
    result: EnsembleResult | None = dfield(default=None, repr=False)


def floor_check(spec: EnsembleSpec, t_max: float = 0.2, workers: int = 1,
                trace_tol: float = 1e-5) -> FloorReport:
    """Compare E[J''(0)] - 3 stderr with the non-vanishing-fluctuation floor."""
    if spec.theta != 0:
        raise ConfigError("floor check requires theta = 0")
    if spec.field.T > t_max:
        raise ConfigError(f"field horizon {spec.field.T} exceeds the smallness bound {t_max}")
    if spec.disorder.onsite not in ("uniform", "rademacher", "point"):
        raise ConfigError("floor check requires an i.i.d. on-site law")
    floor = fluct_floor(spec.lam, spec.beta, spec.theta, spec.d,
                        upsilon(spec.field, spec.w), spec.disorder.onsite_variance)
    if floor == 0.0:
        return FloorReport(True, 0.0, float("nan"), float("nan"), float("nan"),
                           True, True, False)
    L = spec.L_schedule[0]
    res = run_ensemble(replace(spec, L_schedule=(L,)),
                       ("d2J0", "F", "hs_bound", "quad_error"), workers)
    st = res.stats[(L, "d2J0")]
    d2 = res.values("d2J0", L)
    fl = res.values("F", L)
    hs = res.values("hs_bound", L)
    ok = bool(np.all(fl - hs >= -1e-12) and
              np.all(np.abs(fl - d2) <= trace_tol * np.maximum(fl, 1e-10)))
    qerr = res.values("quad_error", L)
    qflag = bool(st.std > 0 and np.any(qerr >= 0.01 * st.std))
    margin = st.mean - 3.0 * st.stderr - floor
    return FloorReport(bool(margin >= 0 and res.valid), floor, st.mean, st.stderr,
                       margin, False, ok, qflag, res)
