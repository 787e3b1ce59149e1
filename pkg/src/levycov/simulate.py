"""Discrete observation of the bivariate Lévy model on the grid ``j / n``.

Jumps are generated by inverse-tail series: with unit-rate Poisson arrivals
``G_k`` on ``[0, Lambda]``, ``x_k = U^{-1}(G_k)`` has the Lévy measure with tail
``U`` restricted to sizes above ``U^{-1}(Lambda)``. Three independent streams are
drawn: dependent jumps ``(x, f(x))`` with tail ``(1 - gamma) U_1`` and axis jumps
with tails ``gamma U_1`` and ``gamma U_2``.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _rng
from .model import BrownianSpec, LevyModelSpec, ModelError, StableJumpSpec, dependence_graph

KINDS = ("common", "axis1", "axis2")


class SimulationError(RuntimeError):
    pass


class SmallJumpPolicy(str, enum.Enum):
    DISCARD = "discard"
    GAUSSIAN = "gaussian_approximation"


@dataclass(frozen=True)
class SimulationConfig:
    jump_truncation_eps: float = 1e-5
    small_jump_policy: SmallJumpPolicy = SmallJumpPolicy.DISCARD
    max_series_terms: int = 10_000_000

    def __post_init__(self):
        if not self.jump_truncation_eps > 0:
            raise ModelError("jump_truncation_eps must be positive")
        if int(self.max_series_terms) < 1:
            raise ModelError("max_series_terms must be at least 1")
        object.__setattr__(self, "small_jump_policy", SmallJumpPolicy(self.small_jump_policy))

    def to_dict(self) -> dict:
        return {"jump_truncation_eps": self.jump_truncation_eps,
                "small_jump_policy": self.small_jump_policy.value,
                "max_series_terms": int(self.max_series_terms)}

    @classmethod
    def from_dict(cls, d: Optional[dict]) -> "SimulationConfig":
        return cls(**(d or {}))


@dataclass
class JumpLog:
    """Jumps kept by the series, one entry per event."""

    time: np.ndarray
    size1: np.ndarray
    size2: np.ndarray
    kind: np.ndarray  # index into KINDS

    @classmethod
    def empty(cls) -> "JumpLog":
        z = np.empty(0)
        return cls(z, z, z, np.empty(0, dtype=np.int8))

    def __len__(self):
        return len(self.time)

    def count(self, kind: str) -> int:
        return int(np.count_nonzero(self.kind == KINDS.index(kind)))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "size1", "size2", "kind"])
            for t, a, b, k in zip(self.time, self.size1, self.size2, self.kind):
                w.writerow([repr(float(t)), repr(float(a)), repr(float(b)), KINDS[k]])


@dataclass
class PathSample:
    n: int
    increments: np.ndarray
    seed: Optional[int] = None
    model: Optional[LevyModelSpec] = None
    jump_log: Optional[JumpLog] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        if inc.ndim != 2 or inc.shape[1] != 2:
            raise ValueError(f"increments must have shape (n, 2), got {inc.shape}")
        if inc.shape[0] != self.n:
            raise ValueError(f"expected {self.n} increments, got {inc.shape[0]}")
        if not np.all(np.isfinite(inc)):
            raise ValueError("increments contain non-finite values")
        self.increments = inc

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "dx1", "dx2"])
            for j, (a, b) in enumerate(self.increments, start=1):
                w.writerow([j, repr(float(a)), repr(float(b))])

    @classmethod
    def read_csv(cls, path) -> "PathSample":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["j", "dx1", "dx2"]:
                raise ValueError(f"{path}: expected header 'j,dx1,dx2', got {header}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    rows.append((float(row[1]), float(row[2])))
                except (IndexError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad row {row}") from exc
        inc = np.array(rows, dtype=float).reshape(-1, 2)
        return cls(n=len(inc), increments=inc)


def simulate_brownian(brownian: BrownianSpec, n: int, rng: np.random.Generator) -> PathSample:
    """Increments ``Sigma @ Z * sqrt(1/n)`` with ``Z`` i.i.d. standard normal pairs."""
    if n < 1:
        raise ValueError("n must be at least 1")
    z = rng.standard_normal((n, 2))
    inc = math.sqrt(1.0 / n) * z @ brownian.cholesky.T
    return PathSample(n=n, increments=inc)


def _series_sizes(rng, r, c, weight, eps, cap, name):
    """Sizes above ``eps`` from the inverse-tail series of ``weight * c x^{-r} / r``."""
    lam = weight * c * eps ** (-r) / r
    count = rng.poisson(lam)
    if count > cap:
        raise SimulationError(
            f"stream '{name}' needs {count} series terms, above max_series_terms={cap}")
    arrivals = rng.uniform(0.0, lam, size=count)
    # guard the measure-zero arrival at exactly 0
    arrivals = np.maximum(arrivals, np.finfo(float).tiny)
    return (weight * c / (r * arrivals)) ** (1.0 / r)


def _truncated_second_moments(jumps: StableJumpSpec, eps: float) -> np.ndarray:
    """Covariance per unit time of the discarded symmetric jumps below ``eps``.

    Dependent jumps are cut on their first coordinate, so their second
    coordinate ranges up to ``f(eps)``.
    """
    cov = np.zeros((2, 2))
    g = jumps.gamma
    r1, r2 = jumps.r1, jumps.r2
    if r1 > 0:
        w = g if jumps.has_cojumps else 1.0
        cov[0, 0] += w * jumps.c1 * eps ** (2 - r1) / (2 - r1)
    if r2 > 0:
        w = g if jumps.has_cojumps else 1.0
        cov[1, 1] += w * jumps.c2 * eps ** (2 - r2) / (2 - r2)
    if jumps.has_cojumps:
        k = jumps.graph_constant
        q = r1 / r2
        common = (1 - g) * jumps.c1
        cov[0, 0] += common * eps ** (2 - r1) / (2 - r1)
        cov[1, 1] += common * k**2 * eps ** (2 * q - r1) / (2 * q - r1)
        off = common * k * eps ** (1 + q - r1) / (1 + q - r1)
        cov[0, 1] = cov[1, 0] = off
    return cov


def simulate_stable_jumps(jumps: StableJumpSpec, cfg: SimulationConfig, n: int,
                          rng: np.random.Generator, log: bool = True):
    """Binned jump increments of the three jump streams.

    Returns
    -------
    increments : ndarray of shape (n, 2)
    jump_log : JumpLog or None
    """
    if not jumps.symmetric and max(jumps.r1, jumps.r2) >= 1.0:
        raise SimulationError(
            "one-sided jumps with index >= 1 are not summable without compensation; "
            "use symmetric=True")
    eps = cfg.jump_truncation_eps
    cap = int(cfg.max_series_terms)

    streams = []  # (kind index, size1, size2)
    if jumps.has_cojumps:
        x = _series_sizes(rng, jumps.r1, jumps.c1, 1.0 - jumps.gamma, eps, cap, "common")
        streams.append((0, x, dependence_graph(jumps, x) if len(x) else x.copy()))
        axis_weight = jumps.gamma
    else:
        axis_weight = 1.0
    if jumps.r1 > 0 and axis_weight > 0:
        x = _series_sizes(rng, jumps.r1, jumps.c1, axis_weight, eps, cap, "axis1")
        streams.append((1, x, np.zeros_like(x)))
    if jumps.r2 > 0 and axis_weight > 0:
        x = _series_sizes(rng, jumps.r2, jumps.c2, axis_weight, eps, cap, "axis2")
        streams.append((2, np.zeros_like(x), x))

    if streams:
        kind = np.concatenate([np.full(len(s[1]), s[0], dtype=np.int8) for s in streams])
        size1 = np.concatenate([s[1] for s in streams])
        size2 = np.concatenate([s[2] for s in streams])
    else:
        kind, size1, size2 = np.empty(0, np.int8), np.empty(0), np.empty(0)

    times = rng.uniform(0.0, 1.0, size=len(kind))
    if jumps.symmetric:
        sign = np.where(rng.random(len(kind)) < 0.5, -1.0, 1.0)
        size1 = size1 * sign
        size2 = size2 * sign
    if jumps.swapped:
        size1, size2 = size2, size1
        kind = np.choose(kind, np.array([0, 2, 1], dtype=np.int8))

    bins = np.minimum((times * n).astype(np.int64), n - 1)
    inc = np.column_stack([np.bincount(bins, weights=size1, minlength=n),
                           np.bincount(bins, weights=size2, minlength=n)])

    if cfg.small_jump_policy is SmallJumpPolicy.GAUSSIAN and jumps.symmetric:
        cov = _truncated_second_moments(jumps, eps)
        if jumps.swapped:
            cov = cov[::-1, ::-1]
        chol = np.linalg.cholesky(cov + 1e-300 * np.eye(2))
        inc += math.sqrt(1.0 / n) * rng.standard_normal((n, 2)) @ chol.T

    jump_log = JumpLog(times, size1, size2, kind) if log else None
    return inc, jump_log


def simulate_path(model: LevyModelSpec, cfg: Optional[SimulationConfig], n: int, seed: int,
                  replication: int = 0, log: bool = True) -> PathSample:
    """One observed path: Brownian part + jumps + drift, deterministic in its inputs.

    The Brownian and jump parts draw from separate sub-streams of ``seed``, so a
    model without jumps reproduces ``simulate_brownian`` on the ``"brownian"``
    stream exactly.
    """
    cfg = cfg or SimulationConfig()
    if n < 1:
        raise ValueError("n must be at least 1")
    sample = simulate_brownian(model.brownian, n, _rng.stream(seed, replication, "brownian"))
    inc = sample.increments
    jump_log = JumpLog.empty() if log else None
    if model.jumps is not None:
        jinc, jump_log = simulate_stable_jumps(model.jumps, cfg, n,
                                               _rng.stream(seed, replication, "jumps"), log=log)
        inc = inc + jinc
    if any(model.drift):
        inc = inc + np.asarray(model.drift) / n
    return PathSample(n=n, increments=inc, seed=seed, model=model, jump_log=jump_log,
                      meta={"replication": replication, "sim_cfg": cfg.to_dict()})
