"""Monte Carlo benchmarking of the estimators and rate-slope fitting."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed
from scipy import integrate

from .estimators import (
    SpectralConfig,
    TrcConfig,
    realized_covariance,
    spectral_estimate,
    trc_estimate,
)
from .model import (
    ClassParams,
    LevyModelSpec,
    ModelError,
    QuadratureError,
    check_class_membership,
    harmonic_mean_bound,
    large_jump_mass,
)
from .simulate import SimulationConfig, simulate_path

logger = logging.getLogger(__name__)

ESTIMATOR_KINDS = ("spectral", "trc", "rc")


class ClassMembershipError(ValueError):
    pass


class RateFitError(ValueError):
    pass


@dataclass(frozen=True)
class EstimatorSpec:
    """One estimator of a benchmark. ``r=None`` lets the plan pick it from the model."""

    kind: str
    M: float = 4.229
    r: Optional[float] = None
    u_override: Optional[float] = None
    u_exp: float = 0.387
    name: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ESTIMATOR_KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")

    @property
    def label(self) -> str:
        return self.name or self.kind

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "spectral":
            d.update(M=self.M, r=self.r, u_override=self.u_override)
        elif self.kind == "trc":
            d.update(u_exp=self.u_exp)
        if self.name:
            d["name"] = self.name
        return d


def default_cojump_index(model: LevyModelSpec) -> float:
    """An activity index just above the harmonic-mean bound, or 1 without co-jumps."""
    j = model.jumps
    if j is None or not j.has_cojumps:
        return 1.0
    return min(harmonic_mean_bound(j.r1, j.r2) + 0.05, 1.99)


@dataclass
class ExperimentPlan:
    model: LevyModelSpec
    estimators: list
    n_grid: list
    replications: int = 500
    master_seed: int = 0
    sim_cfg: SimulationConfig = field(default_factory=SimulationConfig)
    force: bool = False

    def __post_init__(self):
        if self.replications < 2:
            raise ValueError("replications must be at least 2")
        grid = [int(n) for n in self.n_grid]
        if not grid or any(n < 2 for n in grid):
            raise ValueError("every n in n_grid must be at least 2")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise ValueError("n_grid must be strictly increasing")
        self.n_grid = grid
        specs = []
        for e in self.estimators:
            e = e if isinstance(e, EstimatorSpec) else EstimatorSpec(**e)
            if e.kind == "spectral" and e.r is None:
                e = EstimatorSpec(**{**asdict(e), "r": default_cojump_index(self.model)})
            specs.append(e)
        labels = [e.label for e in specs]
        if len(set(labels)) != len(labels):
            raise ValueError(f"estimator labels must be unique, got {labels}")
        self.estimators = specs

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "sim": self.sim_cfg.to_dict(),
            "estimators": [e.to_dict() for e in self.estimators],
            "n_grid": list(self.n_grid),
            "replications": self.replications,
            "master_seed": self.master_seed,
            "force": self.force,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentPlan":
        return cls(
            model=LevyModelSpec.from_dict(d["model"]),
            estimators=[EstimatorSpec(**e) for e in d["estimators"]],
            n_grid=d["n_grid"],
            replications=int(d.get("replications", 500)),
            master_seed=int(d.get("master_seed", 0)),
            sim_cfg=SimulationConfig.from_dict(d.get("sim")),
            force=bool(d.get("force", False)),
        )


@dataclass
class CellStats:
    estimator: str
    n: int
    replications: int
    mean: float
    bias: float
    sd: float
    rmse: float
    invalid: int
    flagged: bool = False


@dataclass
class RateTarget:
    r: float

    @property
    def predicted_exponent(self) -> float:
        return -0.5 if self.r <= 1.0 else (self.r - 2.0) / 2.0

    @property
    def predictor(self) -> str:
        return "log n" if self.r <= 1.0 else "log(n log n)"


@dataclass
class RateFit:
    estimator: str
    slope: float
    intercept: float
    r_squared: float
    predicted: float
    predictor: str
    tolerance: float
    passed: bool


@dataclass
class BenchmarkReport:
    cells: list
    truth: float
    plan: Optional[dict] = None
    raw: dict = field(default_factory=dict)  # (label, n) -> ndarray, NaN for invalid
    rate_fits: dict = field(default_factory=dict)

    def cell(self, estimator: str, n: int) -> CellStats:
        for c in self.cells:
            if c.estimator == estimator and c.n == n:
                return c
        raise KeyError((estimator, n))

    def estimators(self) -> list:
        return list(dict.fromkeys(c.estimator for c in self.cells))

    CSV_FIELDS = ("estimator", "n", "replications", "mean", "bias", "sd", "rmse", "invalid")

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.CSV_FIELDS)
            for c in self.cells:
                w.writerow([c.estimator, c.n, c.replications, repr(c.mean), repr(c.bias),
                            repr(c.sd), repr(c.rmse), c.invalid])

    def write_raw_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["estimator", "n", "rep", "value"])
            for (label, n), values in self.raw.items():
                for k, v in enumerate(values):
                    w.writerow([label, n, k, repr(float(v))])

    def sidecar(self) -> dict:
        return {
            "truth": self.truth,
            "plan": self.plan,
            "flagged_cells": [[c.estimator, c.n] for c in self.cells if c.flagged],
            "rate_fits": {k: asdict(v) for k, v in self.rate_fits.items()},
        }

    @classmethod
    def read_csv(cls, path, truth: float = math.nan) -> "BenchmarkReport":
        cells = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(cls.CSV_FIELDS) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing report columns {sorted(missing)}")
            for row in reader:
                cells.append(CellStats(
                    row["estimator"], int(row["n"]), int(row["replications"]),
                    float(row["mean"]), float(row["bias"]), float(row["sd"]),
                    float(row["rmse"]), int(row["invalid"])))
        return cls(cells=cells, truth=truth)


def summarize(values, truth: float, label: str, n: int) -> CellStats:
    """Mean, bias, sample sd and RMSE over the valid (finite) estimates."""
    values = np.asarray(values, dtype=float)
    ok = values[np.isfinite(values)]
    invalid = len(values) - len(ok)
    R = len(ok)
    if R == 0:
        return CellStats(label, n, 0, math.nan, math.nan, math.nan, math.nan, invalid, True)
    mean = float(ok.mean())
    sd = float(ok.std(ddof=1)) if R > 1 else 0.0
    rmse = float(math.sqrt(np.mean((ok - truth) ** 2)))
    return CellStats(label, n, R, mean, mean - truth, sd, rmse, invalid,
                     flagged=invalid > 0.5 * len(values))


def _apply(est: EstimatorSpec, sample) -> float:
    if est.kind == "spectral":
        cfg = SpectralConfig(ClassParams(est.M, est.r), est.u_override)
        return spectral_estimate(sample, cfg).value  # NaN when invalid
    if est.kind == "trc":
        return trc_estimate(sample, TrcConfig(1.0 / sample.n, est.u_exp))
    return realized_covariance(sample)


def _replicate(plan: ExperimentPlan, n: int, rep: int) -> list:
    sample = simulate_path(plan.model, plan.sim_cfg, n, plan.master_seed,
                           replication=(n, rep), log=False)
    return [_apply(e, sample) for e in plan.estimators]


def _resolve_threads(threads: Optional[int]) -> int:
    if threads is None:
        env = os.environ.get("LEVYCOV_THREADS")
        threads = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(threads))


def run_experiment(plan: ExperimentPlan, threads: Optional[int] = None,
                   keep_raw: bool = True) -> BenchmarkReport:
    """Simulate ``plan.replications`` paths per sample size and score every estimator.

    All estimators see the same paths within a cell. Each path draws from the
    random sub-stream keyed by ``(master_seed, n, replication)``, so the report
    does not depend on ``threads``.

    Raises
    ------
    ClassMembershipError
        If the model lies outside a spectral estimator's class ``(M, r)`` and
        ``plan.force`` is false.
    """
    for e in plan.estimators:
        if e.kind != "spectral":
            continue
        rep = check_class_membership(plan.model, ClassParams(e.M, e.r))
        if not rep.passed:
            if not plan.force:
                raise ClassMembershipError(
                    f"model is outside the class (M={e.M}, r={e.r}) of estimator "
                    f"'{e.label}': {rep.reason}; set force to run anyway")
            logger.warning("class check failed for %s (%s); forced", e.label, rep.reason)

    truth = plan.model.co_volatility
    n_jobs = _resolve_threads(threads)
    cells, raw = [], {}
    for n in plan.n_grid:
        if n_jobs == 1:
            rows = [_replicate(plan, n, k) for k in range(plan.replications)]
        else:
            rows = Parallel(n_jobs=n_jobs)(
                delayed(_replicate)(plan, n, k) for k in range(plan.replications))
        values = np.array(rows, dtype=float).reshape(plan.replications, len(plan.estimators))
        for i, e in enumerate(plan.estimators):
            stats = summarize(values[:, i], truth, e.label, n)
            if stats.flagged:
                logger.warning("cell (%s, n=%d): %d of %d estimates invalid",
                               e.label, n, stats.invalid, plan.replications)
            cells.append(stats)
            if keep_raw:
                raw[(e.label, n)] = values[:, i].copy()
    return BenchmarkReport(cells=cells, truth=truth, plan=plan.to_dict(), raw=raw)


def fit_rate(report: BenchmarkReport, target: RateTarget, estimator: str = "spectral",
             slope_tolerance: float = 0.15) -> RateFit:
    """OLS of log RMSE on log n (``r <= 1``) or on log(n log n) (``r > 1``)."""
    cells = sorted((c for c in report.cells if c.estimator == estimator), key=lambda c: c.n)
    if len(cells) < 3:
        raise RateFitError(f"need at least 3 sample sizes for '{estimator}', got {len(cells)}")
    n = np.array([c.n for c in cells], dtype=float)
    rmse = np.array([c.rmse for c in cells], dtype=float)
    if not np.all(np.isfinite(rmse) & (rmse > 0)):
        raise RateFitError("RMSE values must be finite and positive")
    x = np.log(n) if target.r <= 1.0 else np.log(n * np.log(n))
    y = np.log(rmse)
    if np.ptp(x) == 0:
        raise RateFitError("degenerate regression: predictor has zero variance")
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    passed = abs(slope - target.predicted_exponent) <= slope_tolerance
    fit = RateFit(estimator, float(slope), float(intercept), r2, target.predicted_exponent,
                  target.predictor, slope_tolerance, bool(passed))
    report.rate_fits[estimator] = fit
    return fit


@dataclass
class DeterministicError:
    d_n: float
    bound: float
    U: float
    M: float
    r: float
    large_jump_mass: float
    holds: bool


def _fourier_tail(phase, dphase, x0: float, amplitude) -> float:
    """``∫_{x0}^∞ cos(phase(x)) amplitude(x) dx`` for a monotone increasing phase.

    Substituting ``t = phase(x)`` leaves a smooth, non-oscillating envelope
    under a pure ``cos t`` weight.
    """
    def x_of(t):
        x = max(x0, 1e-300)
        for _ in range(100):
            step = (phase(x) - t) / dphase(x)
            x_new = x - step
            if x_new <= 0:
                x_new = x / 2.0
            if abs(x_new - x) <= 1e-15 * x:
                return x_new
            x = x_new
        return x

    def envelope(t):
        x = x_of(t)
        return amplitude(x) / dphase(x)

    val, _ = integrate.quad(envelope, phase(x0), np.inf, weight="cos", wvar=1.0,
                            limlst=200, limit=400)
    return val


def _cojump_cos_gap(spec, U: float, max_split: float = 1e4) -> float:
    """``∫ (cos<(U,-U),x> - cos<(U,U),x>) dF`` over the dependent jumps.

    Along the graph the integrand is ``2 sin(U x) sin(U f(x)) c1 x^{-1-r1}``,
    integrated piecewise on ``[0, X]``. Beyond ``X`` it is rewritten as
    ``cos(U (x - f)) - cos(U (x + f))``; both phases are then monotone and each
    term goes through :func:`_fourier_tail`.
    """
    k, q = spec.graph_constant, spec.r1 / spec.r2
    c1, r1 = spec.c1, spec.r1

    def full(x):
        if x <= 0.0:
            return 0.0
        return 2.0 * math.sin(U * x) * math.sin(U * k * x**q) * c1 * x ** (-1.0 - r1)

    def amplitude(x):
        return c1 * x ** (-1.0 - r1)

    # beyond X the slope of k x^q is at most 1/2, so x - f(x) increases
    if q < 1.0:
        X = max(1.0, (2.0 * k * q) ** (1.0 / (1.0 - q)))
        if X > max_split:
            raise QuadratureError(
                f"dependence graph too close to the diagonal for the oscillatory rule (X={X:.3g})")
    else:
        X = 1.0
    half = math.pi / U
    pieces = int(math.ceil(X / half))
    edges = np.linspace(0.0, X, pieces + 1)
    head = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        head += integrate.quad(full, a, b, epsabs=1e-14, epsrel=1e-11, limit=400)[0]

    plus = _fourier_tail(lambda x: U * (x + k * x**q),
                         lambda x: U * (1.0 + k * q * x ** (q - 1.0)), X, amplitude)
    if q == 1.0 and k == 1.0:
        minus = c1 * X ** (-r1) / r1  # cos(0) = 1 along the diagonal
    elif q == 1.0 and k > 1.0:
        # phase U (x - k x) decreases; cos is even
        minus = _fourier_tail(lambda x: U * (k - 1.0) * x, lambda x: U * (k - 1.0), X, amplitude)
    else:
        minus = _fourier_tail(lambda x: U * (x - k * x**q),
                              lambda x: U * (1.0 - k * q * x ** (q - 1.0)), X, amplitude)
    return (1.0 - spec.gamma) * (head + minus - plus)


def deterministic_error_diagnostic(model: LevyModelSpec, params: ClassParams,
                                   U: float) -> DeterministicError:
    """Deterministic error of the spectral estimator at frequency ``U`` and its bound.

    The error is ``(1 / (2 U^2)) ∫ (cos<u~,x> - cos<u,x>) F(dx)`` with
    ``u = (U, U)``, ``u~ = (U, -U)``. Axis jumps cancel exactly, so only the
    dependent jumps enter. The bound is ``2^{r/2} M / 2 U^{r-2} + A U^{-2}`` with
    ``A`` the Lévy mass outside the unit ball.
    """
    if not U > 0:
        raise ModelError(f"U must be positive, got {U}")
    spec = model.jumps
    d_n = 0.0
    if spec is not None and spec.has_cojumps:
        with warnings.catch_warnings():
            warnings.simplefilter("error", integrate.IntegrationWarning)
            try:
                d_n = _cojump_cos_gap(spec, U) / (2.0 * U * U)
            except integrate.IntegrationWarning as exc:
                raise QuadratureError(f"deterministic-error quadrature: {exc}") from exc
    a = large_jump_mass(spec)
    r, M = params.r, params.M
    bound = 2.0 ** (r / 2.0) * M / 2.0 * U ** (r - 2.0) + a * U ** -2.0
    return DeterministicError(d_n, bound, float(U), M, r, a, abs(d_n) <= bound)


__all__ = [
    "BenchmarkReport", "CellStats", "ClassMembershipError", "DeterministicError",
    "EstimatorSpec", "ExperimentPlan", "RateFit", "RateFitError", "RateTarget",
    "deterministic_error_diagnostic", "fit_rate", "run_experiment",
    "summarize",
]
