"""Theory predictions (regions, exponents), sweep orchestration, scaling fits.

Region classification works at the exponent level: a point (ell, delta, mu) is
labeled by which scaling exponents dominate the overlap dynamics, so all
boundaries are fuzzy at desk-scale d.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Optional

import numpy as np

from .activations import ActivationSpec, hermite
from .engine import (
    TeacherModel,
    TrainConfig,
    init_student,
    orthonormal_teacher,
    run,
)
from .ode import ScalingRegime
from .streams import mix64, stream

REGION_LABELS = (
    "not_correlating",
    "self_interaction",
    "weak_recovery_sgd",
    "polylog",
    "one_step",
    "dynamics_undefined",
    "critical_line_unaddressed",
)

_BOUNDARY_EPS = 1e-12


class OutsideRegion(ValueError):
    """Raised when a time-exponent is requested where recovery fails."""


class InsufficientData(ValueError):
    pass


class AllCensored(ValueError):
    pass


def optimal_delta(ell: int, mu: float, loss: str) -> float:
    """Optimal learning-rate exponent delta*(mu)."""
    if ell < 1 or mu < 0:
        raise ValueError("require ell >= 1 and mu >= 0")
    if loss == "square":
        return max(ell / 2.0 - mu, 0.0)
    if loss == "correlation":
        return ell / 2.0 - mu
    raise ValueError(f"unknown loss {loss!r}")


def _square_achievable(ell: int, delta: float, mu: float) -> bool:
    return delta >= max(0.0, max(ell / 2.0, 1.0) - mu) - _BOUNDARY_EPS


def _correlation_achievable(ell: int, delta: float, mu: float) -> bool:
    return delta >= max(max(ell / 2.0, 1.0) - mu, (1.0 - mu) / 2.0) - _BOUNDARY_EPS


def classify_region(ell: int, delta: float, mu: float, loss: str) -> str:
    """Exponent-level phase-diagram label for one (delta, mu) point."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    if loss not in ("square", "correlation"):
        raise ValueError(f"unknown loss {loss!r}")
    if mu >= ell - _BOUNDARY_EPS and delta <= (1.0 - ell) / 2.0 + _BOUNDARY_EPS:
        return "one_step"
    if _square_achievable(ell, delta, mu):
        theta_raw = delta + max(ell / 2.0 - 1.0, 0.0)
        return "polylog" if theta_raw <= _BOUNDARY_EPS else "weak_recovery_sgd"
    if loss == "correlation" and _correlation_achievable(ell, delta, mu):
        if mu >= max(ell - 1.0, 1.0) - _BOUNDARY_EPS:
            return "critical_line_unaddressed"
        return "self_interaction"
    if delta < (1.0 - ell) / 2.0 and mu < ell:
        return "dynamics_undefined"
    return "not_correlating"


def predicted_time_exponent(ell: int, delta: float, mu: float, loss: str):
    """(theta, log_factor): weak recovery needs ~ d^theta (times log d) steps."""
    label = classify_region(ell, delta, mu, loss)
    if label in ("not_correlating", "dynamics_undefined", "critical_line_unaddressed"):
        raise OutsideRegion(f"no recovery prediction at region {label}")
    theta_raw = delta + max(ell / 2.0 - 1.0, 0.0)
    theta = max(0.0, theta_raw)
    log_factor = ell == 2 or theta == 0.0
    return theta, log_factor


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class SweepSpec:
    """Grid over (delta, mu, d) with several seeds per cell."""

    activation: ActivationSpec
    loss: str
    update: str
    deltas: tuple
    mus: tuple
    ds: tuple
    seeds_per_cell: int
    gamma0: float = 1.0
    n0: float = 1.0
    noise_var: float = 0.0
    eta: float = 0.5
    init: str = "cold"
    t_max_rule: Optional[str] = None  # python expression in d, e.g. "50 * d ** 0.5"
    master_seed: int = 0
    engine: str = "auto"
    ell: Optional[int] = None

    def __post_init__(self):
        if not (self.deltas and self.mus and self.ds):
            raise ValueError("grids must be nonempty")
        if self.seeds_per_cell < 1:
            raise ValueError("seeds_per_cell must be >= 1")

    def cells(self) -> Iterator[tuple]:
        for delta in self.deltas:
            for mu in self.mus:
                for d in self.ds:
                    yield (float(delta), float(mu), int(d))


@dataclass
class SweepRecord:
    delta: float
    mu: float
    d: int
    seed_index: int
    t_eta_plus: Optional[int]
    censored: bool
    final_overlap: float
    final_risk: float
    region: str
    wall_time: float
    error: Optional[str] = None


def _info_exponent_of(spec: SweepSpec) -> int:
    if spec.ell is not None:
        return spec.ell
    from .activations import hermite_coefficients, information_exponent

    return information_exponent(hermite_coefficients(spec.activation))


def default_t_max(spec: SweepSpec, delta: float, mu: float, d: int) -> int:
    """50x the predicted escape time when defined, else a sample-budget cap."""
    if spec.t_max_rule is not None:
        return max(1, int(eval(spec.t_max_rule, {"d": d, "math": math})))
    ell = _info_exponent_of(spec)
    try:
        theta, log_factor = predicted_time_exponent(ell, delta, mu, spec.loss)
    except OutsideRegion:
        n_b = max(1, int(round(spec.n0 * d**mu)))
        return max(1, int(10**6 / n_b))
    predicted = d**theta * (math.log(d) if log_factor else 1.0) / spec.gamma0
    return max(1, int(round(50 * predicted)))


def run_cell(spec: SweepSpec, delta: float, mu: float, d: int, seed_index: int) -> SweepRecord:
    """One (cell, seed) outcome; failures are captured, not raised."""
    ell = _info_exponent_of(spec)
    region = classify_region(ell, delta, mu, spec.loss)
    cell_seed = mix64(spec.master_seed, hash((round(delta, 12), round(mu, 12), d)) & (2**63 - 1))
    try:
        regime = ScalingRegime(spec.gamma0, delta, spec.n0, mu, d)
        teacher = orthonormal_teacher(1, d, spec.activation, spec.noise_var)
        config = TrainConfig(
            loss=spec.loss,
            update=spec.update,
            regime=regime,
            t_max=default_t_max(spec, delta, mu, d),
            eta=spec.eta,
            init=spec.init,
            record_stride=max(1, default_t_max(spec, delta, mu, d) // 200),
            seed=cell_seed,
            run_index=seed_index,
            engine=spec.engine,
        )
        rng = stream(cell_seed, seed_index, 2**61)
        student = init_student(1, d, spec.init, teacher, rng, spec.activation)
        traj = run(teacher, student, config)
        return SweepRecord(
            delta=delta,
            mu=mu,
            d=d,
            seed_index=seed_index,
            t_eta_plus=traj.t_eta_plus,
            censored=traj.censored,
            final_overlap=float(traj.overlap_fro[-1]),
            final_risk=float(traj.risk[-1]),
            region=region,
            wall_time=traj.wall_time,
        )
    except Exception as exc:  # record the failure, keep sweeping
        return SweepRecord(
            delta=delta, mu=mu, d=d, seed_index=seed_index,
            t_eta_plus=None, censored=True, final_overlap=math.nan,
            final_risk=math.nan, region=region, wall_time=0.0,
            error=f"{type(exc).__name__}: {exc}",
        )


def run_sweep(spec: SweepSpec, jobs: int = 1) -> list[SweepRecord]:
    """All (cell, seed) records, sorted by cell then seed regardless of scheduling."""
    tasks = [
        (delta, mu, d, s)
        for (delta, mu, d) in spec.cells()
        for s in range(spec.seeds_per_cell)
    ]
    if jobs <= 1:
        records = [run_cell(spec, *task) for task in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell_star, [(spec, *t) for t in tasks], chunksize=1))
    records.sort(key=lambda r: (r.d, r.delta, r.mu, r.seed_index))
    return records


def _run_cell_star(args):
    return run_cell(*args)


# ---------------------------------------------------------------------------
# Scaling fits


@dataclass
class FitResult:
    slope: float
    intercept: float
    r2: float
    model: str  # log-log | lin-log
    ds: tuple
    medians: tuple


def median_escape_times(records: Iterable[SweepRecord]) -> dict[int, float]:
    """Median uncensored escape time per d; cells over 50% censored are dropped."""
    by_d: dict[int, list] = {}
    for rec in records:
        by_d.setdefault(rec.d, []).append(rec)
    out = {}
    for d, recs in by_d.items():
        times = [r.t_eta_plus for r in recs if not r.censored and r.t_eta_plus is not None]
        if len(times) * 2 > len(recs):
            out[d] = float(np.median(times))
    return out


def fit_scaling(records: Iterable[SweepRecord], model: str = "log-log") -> FitResult:
    """OLS of median escape time against d (power law) or log d (polylog)."""
    medians = median_escape_times(list(records))
    if not medians:
        raise AllCensored("no d-group has a majority of uncensored runs")
    if len(medians) < 3:
        raise InsufficientData("need >= 3 distinct d values with uncensored medians")
    ds = sorted(medians)
    ts = np.array([medians[d] for d in ds], dtype=float)
    return fit_points(np.array(ds, dtype=float), ts, model)


def fit_points(ds: np.ndarray, ts: np.ndarray, model: str = "log-log") -> FitResult:
    if model == "log-log":
        x, y = np.log(ds), np.log(ts)
    elif model == "lin-log":
        x, y = np.log(ds), ts
    else:
        raise ValueError(f"unknown fit model {model!r}")
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return FitResult(float(slope), float(intercept), r2, model, tuple(ds), tuple(ts))
