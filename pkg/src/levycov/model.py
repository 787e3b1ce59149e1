"""Bivariate Lévy model: Brownian part, copula-coupled stable jumps, class checks.

The jump part follows a gamma-mixture Lévy copula of the independence copula
and the complete-dependence copula. With one-sided stable marginals whose tail
integrals are ``U_i(x) = c_i x**(-r_i) / r_i`` the dependent jumps live on the
graph ``x2 = f(x1) = U_2^{-1}(U_1(x1))``.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, optimize


class ModelError(ValueError):
    """Raised for invalid model parameters or out-of-domain arguments."""


class QuadratureError(RuntimeError):
    """Raised when an adaptive quadrature does not reach its tolerance."""


@dataclass(frozen=True)
class BrownianSpec:
    sigma1: float
    sigma2: float
    rho: float

    def __post_init__(self):
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ModelError("sigma1 and sigma2 must be positive")
        if not -1.0 <= self.rho <= 1.0:
            raise ModelError(f"rho must lie in [-1, 1], got {self.rho}")
        eig = np.linalg.eigvalsh(self.covariance)
        assert eig.min() >= -1e-12 * max(1.0, eig.max())

    @property
    def covariance(self) -> np.ndarray:
        """The matrix ``Sigma Sigma^T``."""
        c12 = self.rho * self.sigma1 * self.sigma2
        return np.array([[self.sigma1**2, c12], [c12, self.sigma2**2]])

    @property
    def cholesky(self) -> np.ndarray:
        """Lower-triangular ``Sigma`` with ``W2 = rho W1 + sqrt(1 - rho^2) W3``."""
        return np.array(
            [
                [self.sigma1, 0.0],
                [self.rho * self.sigma2, math.sqrt(1.0 - self.rho**2) * self.sigma2],
            ]
        )

    @classmethod
    def from_covariance(cls, cov) -> "BrownianSpec":
        cov = np.asarray(cov, dtype=float)
        s1, s2 = math.sqrt(cov[0, 0]), math.sqrt(cov[1, 1])
        return cls(s1, s2, float(np.clip(cov[0, 1] / (s1 * s2), -1.0, 1.0)))


@dataclass(frozen=True)
class StableJumpSpec:
    """Stable marginals coupled by the gamma-mixture Lévy copula.

    ``gamma = 0`` gives completely dependent jumps, ``gamma = 1`` independent
    ones. Indices are stored in canonical order ``r1 <= r2``; if they were
    given reversed the components are swapped (with their scales) and
    ``swapped`` is set.
    """

    r1: float
    r2: float
    c1: float = 1.0
    c2: float = 1.0
    gamma: float = 0.0
    symmetric: bool = True
    swapped: bool = False

    def __post_init__(self):
        for name in ("r1", "r2"):
            v = getattr(self, name)
            if not 0.0 <= v < 2.0:
                raise ModelError(f"{name} must lie in [0, 2), got {v}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ModelError("c1 and c2 must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ModelError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.r1 > self.r2:
            r1, r2, c1, c2 = self.r1, self.r2, self.c1, self.c2
            object.__setattr__(self, "r1", r2)
            object.__setattr__(self, "r2", r1)
            object.__setattr__(self, "c1", c2)
            object.__setattr__(self, "c2", c1)
            object.__setattr__(self, "swapped", not self.swapped)

    @property
    def has_cojumps(self) -> bool:
        return self.gamma < 1.0 and self.r1 > 0.0 and self.r2 > 0.0

    def tail(self, component: int, x):
        """Tail integral ``U_i(x) = c_i x**(-r_i) / r_i`` of one marginal."""
        r, c = self._rc(component)
        x = np.asarray(x, dtype=float)
        return c * x ** (-r) / r

    def tail_inverse(self, component: int, level):
        r, c = self._rc(component)
        level = np.asarray(level, dtype=float)
        return (c / (r * level)) ** (1.0 / r)

    def _rc(self, component):
        if component == 1:
            r, c = self.r1, self.c1
        elif component == 2:
            r, c = self.r2, self.c2
        else:
            raise ModelError(f"component must be 1 or 2, got {component}")
        if r == 0.0:
            raise ModelError(f"component {component} has no jumps (index 0)")
        return r, c

    @property
    def graph_constant(self) -> float:
        """``(c1 r2 / (r1 c2))**(-1/r2)``, the prefactor of the dependence graph."""
        return (self.c1 * self.r2 / (self.r1 * self.c2)) ** (-1.0 / self.r2)


@dataclass(frozen=True)
class LevyModelSpec:
    brownian: BrownianSpec
    jumps: Optional[StableJumpSpec] = None
    drift: tuple = (0.0, 0.0)

    def __post_init__(self):
        drift = tuple(float(d) for d in self.drift)
        if len(drift) != 2 or not all(math.isfinite(d) for d in drift):
            raise ModelError("drift must be a finite 2-vector")
        object.__setattr__(self, "drift", drift)

    @property
    def co_volatility(self) -> float:
        """Target co-integrated volatility over [0, 1]: ``rho sigma1 sigma2``."""
        b = self.brownian
        return b.rho * b.sigma1 * b.sigma2

    def to_dict(self) -> dict:
        out = {"brownian": asdict(self.brownian), "jumps": None, "drift": list(self.drift)}
        if self.jumps is not None:
            j = self.jumps
            # serialise in the caller's original orientation
            if j.swapped:
                out["jumps"] = dict(r1=j.r2, r2=j.r1, c1=j.c2, c2=j.c1,
                                    gamma=j.gamma, symmetric=j.symmetric)
            else:
                out["jumps"] = dict(r1=j.r1, r2=j.r2, c1=j.c1, c2=j.c2,
                                    gamma=j.gamma, symmetric=j.symmetric)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LevyModelSpec":
        try:
            b = d["brownian"]
            brownian = BrownianSpec(float(b["sigma1"]), float(b["sigma2"]), float(b["rho"]))
            jumps = None
            if d.get("jumps"):
                j = d["jumps"]
                jumps = StableJumpSpec(
                    r1=float(j["r1"]), r2=float(j["r2"]),
                    c1=float(j.get("c1", 1.0)), c2=float(j.get("c2", 1.0)),
                    gamma=float(j.get("gamma", 0.0)),
                    symmetric=bool(j.get("symmetric", True)),
                )
            drift = d.get("drift", [0.0, 0.0])
        except (KeyError, TypeError) as exc:
            raise ModelError(f"malformed model document: missing or bad field {exc}") from exc
        return cls(brownian, jumps, tuple(drift))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "LevyModelSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ClassParams:
    M: float
    r: float

    def __post_init__(self):
        if not self.M > 0:
            raise ModelError(f"M must be positive, got {self.M}")
        if not 0.0 <= self.r < 2.0:
            raise ModelError(f"r must lie in [0, 2), got {self.r}")


def harmonic_mean_bound(r1: float, r2: float) -> float:
    """Lower bound ``2 r1 r2 / (r1 + r2)`` for the co-jump activity index.

    Returns 0 when both indices are zero (the continuous limit).
    """
    if not (0.0 <= r1 < 2.0 and 0.0 <= r2 < 2.0):
        raise ModelError(f"indices must lie in [0, 2), got ({r1}, {r2})")
    if r1 == 0.0 and r2 == 0.0:
        return 0.0
    return 2.0 * r1 * r2 / (r1 + r2)


def _log_graph(spec: StableJumpSpec, log_x):
    return math.log(spec.graph_constant) + (spec.r1 / spec.r2) * log_x


def dependence_graph(spec: StableJumpSpec, x1):
    """Second coordinate ``U_2^{-1}(U_1(x1))`` of a completely dependent jump."""
    if spec.r1 == 0.0 or spec.r2 == 0.0:
        raise ModelError("dependence graph needs both indices positive")
    x1 = np.asarray(x1, dtype=float)
    if np.any(x1 <= 0):
        raise ModelError("dependence graph is defined for x1 > 0 only")
    out = spec.graph_constant * x1 ** (spec.r1 / spec.r2)
    return out if out.ndim else float(out)


def cojump_exponent(spec: StableJumpSpec, r: float) -> float:
    """Power ``p`` with ``(x f(x))**(r/2) dU_1 ∝ x**(p-1) dx`` near zero."""
    return (1.0 + spec.r1 / spec.r2) * (r / 2.0) - spec.r1


def cojump_integral(spec: StableJumpSpec, r: float, eps: float = 1.0,
                    rtol: float = 1e-10) -> float:
    """Integral of ``(x1 x2)**(r/2)`` against the dependent-jump measure on ``x1 <= eps``.

    The integrand is evaluated along the dependence graph and integrated
    numerically after the substitution ``x = eps * s**(2/p)``, which turns the
    power singularity at zero into a linear function of ``s``. Divergence is
    decided from the sign of ``p`` alone; in that case ``math.inf`` is returned.

    Raises
    ------
    QuadratureError
        If the adaptive rule does not meet ``rtol``.
    """
    if not eps > 0:
        raise ModelError(f"eps must be positive, got {eps}")
    if not 0.0 <= r < 2.0:
        raise ModelError(f"r must lie in [0, 2), got {r}")
    if not spec.has_cojumps:
        return 0.0
    p = cojump_exponent(spec, r)
    # r at the harmonic mean gives p = 0 up to rounding
    if p <= 16 * np.finfo(float).eps * max(1.0, spec.r1):
        return math.inf

    m = 2.0 / p
    log_eps = math.log(eps)
    log_c1 = math.log(spec.c1)

    def integrand(s):
        if s <= 0.0:
            return 0.0
        log_s = math.log(s)
        log_x = log_eps + m * log_s
        log_f = _log_graph(spec, log_x)
        # (x f)^{r/2} * c1 x^{-1-r1} * dx/ds, dx/ds = m x / s
        log_val = ((r / 2.0) * (log_x + log_f) + log_c1 - (1.0 + spec.r1) * log_x
                   + math.log(m) + log_x - log_s)
        return math.exp(log_val)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=rtol, limit=200)
    # the log-space exponent cancels terms of size m, so roundoff scales with m
    floor = max(100 * rtol, 64 * np.finfo(float).eps * m)
    if not (math.isfinite(val) and err <= max(floor * abs(val), 1e-300)):
        raise QuadratureError(f"co-jump quadrature did not converge (value={val}, err={err})")
    return (1.0 - spec.gamma) * val


def _unit_ball_exit(spec: StableJumpSpec) -> float:
    """The ``x1`` at which the dependence graph leaves the Euclidean unit ball."""
    g = lambda x: x * x + dependence_graph(spec, x) ** 2 - 1.0
    return optimize.brentq(g, 1e-300, 1.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def large_jump_mass(spec: Optional[StableJumpSpec]) -> float:
    """Lévy measure of the complement of the unit ball, in closed form.

    Axis jumps contribute ``gamma (U_1(1) + U_2(1))``; dependent jumps leave
    the ball once ``x1`` passes the point where ``x1^2 + f(x1)^2 = 1``.
    """
    if spec is None:
        return 0.0
    mass = 0.0
    for comp, r in ((1, spec.r1), (2, spec.r2)):
        if r > 0.0:
            mass += spec.gamma * float(spec.tail(comp, 1.0))
    if spec.has_cojumps:
        mass += (1.0 - spec.gamma) * float(spec.tail(1, _unit_ball_exit(spec)))
    elif spec.gamma < 1.0:
        # one marginal jump-free: the "dependent" jumps of the other are axis jumps
        for comp, r in ((1, spec.r1), (2, spec.r2)):
            if r > 0.0:
                mass += (1.0 - spec.gamma) * float(spec.tail(comp, 1.0))
    return mass


@dataclass
class MembershipReport:
    passed: bool
    total: float
    M: float
    r: float
    covariance_norm: float
    small_cojump_integral: float
    large_cojump_mass: float
    large_jump_mass: float
    reason: str = ""
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def check_class_membership(model: LevyModelSpec, params: ClassParams) -> MembershipReport:
    """Check ``||C||_inf + ∫ (1 ∧ |x1 x2|^{r/2}) F(dx) <= M``.

    The dependent-jump part of the integral is split at the point ``x*`` on
    the graph where ``x1 f(x1) = 1``: below it the numeric co-jump integral,
    above it the closed-form mass ``(1 - gamma) U_1(x*)``. Axis jumps contribute
    nothing since ``x1 x2 = 0`` there.
    """
    cov_norm = float(np.abs(model.brownian.covariance).sum(axis=1).max())
    spec = model.jumps
    small = big = 0.0
    if spec is not None and spec.has_cojumps:
        # x f(x) = C x^{1 + r1/r2} = 1
        x_star = spec.graph_constant ** (-1.0 / (1.0 + spec.r1 / spec.r2))
        small = cojump_integral(spec, params.r, eps=x_star)
        big = (1.0 - spec.gamma) * float(spec.tail(1, x_star))
    a = large_jump_mass(spec)
    if math.isinf(small):
        return MembershipReport(False, math.inf, params.M, params.r, cov_norm, small, big, a,
                                reason="divergent: r below harmonic-mean bound")
    total = cov_norm + small + big
    passed = total <= params.M
    reason = "" if passed else f"total {total:.6g} exceeds M = {params.M:.6g}"
    return MembershipReport(passed, total, params.M, params.r, cov_norm, small, big, a, reason)
