"""Closed-form aggregation-error and convergence bounds.

All functions take a :class:`BoundParams` plus, where the bound depends on the
round's schedule, the selection vector ``beta`` and power scale ``b``.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InfeasibleError, ParameterError

RIP_DELTA_MAX = math.sqrt(2.0) - 1.0


@dataclass(frozen=True)
class BoundParams:
    """Constants shared by the bounds and the scheduler objective.

    ``strict_rip`` keeps ``delta`` inside (0, sqrt(2) - 1), where the
    stable-recovery constant C is positive.  With ``strict_rip=False`` any
    ``delta`` in (0, 1) is accepted and C is evaluated from the same closed
    form (only C^2 enters the bounds).
    """

    L: float = 10.0
    rho1: float = 20.0
    rho2: float = 0.5
    G: float = 1.0
    delta: float = 0.2
    kappa: int = 10
    S: int = 1000
    D: int = 50890
    sigma2: float = 1e-4
    K: tuple = field(default=(3000,) * 10)
    alpha: float = 0.1
    strict_rip: bool = True

    def __post_init__(self):
        object.__setattr__(self, "K", tuple(int(k) for k in self.K))
        _check_delta(self.delta, self.strict_rip)
        if not 0 <= self.rho2 < 1:
            raise ParameterError(f"rho2 must lie in [0, 1), got {self.rho2}")
        if self.rho1 < 0:
            raise ParameterError("rho1 must be >= 0")
        if not self.L > 0:
            raise ParameterError("L must be positive")
        if not self.G > 0:
            raise ParameterError("G must be positive")
        if not 1 <= self.kappa <= self.D:
            raise ParameterError(f"kappa must lie in [1, D], got {self.kappa}")
        if not 1 <= self.S <= self.D:
            raise ParameterError(f"S must lie in [1, D], got {self.S}")
        if self.sigma2 < 0:
            raise ParameterError("sigma2 must be >= 0")
        if not self.K or min(self.K) < 1:
            raise ParameterError("every K_i must be >= 1")

    @property
    def U(self):
        return len(self.K)

    @property
    def K_total(self):
        return sum(self.K)

    @property
    def C(self):
        return rip_constants(self.delta, strict=self.strict_rip)[2]

    def with_(self, **kw):
        return replace(self, **kw)


def _check_delta(delta, strict):
    upper = RIP_DELTA_MAX if strict else 1.0
    if not 0 < delta < upper:
        raise ParameterError(f"RIP constant delta must lie in (0, {upper:.6g}), got {delta}")
    if not strict and abs(math.sqrt(2.0) * delta - (1 - delta)) < 1e-15:
        raise ParameterError("delta = sqrt(2) - 1 makes the recovery constant infinite")


def rip_constants(delta, strict=True):
    """(varpi, varrho, C) with C = 2 varpi / (1 - varrho)."""
    _check_delta(delta, strict)
    varpi = 2.0 * math.sqrt(1.0 + delta) / math.sqrt(1.0 - delta)
    varrho = math.sqrt(2.0) * delta / (1.0 - delta)
    return varpi, varrho, 2.0 * varpi / (1.0 - varrho)


def _tail(p):
    """(1 + delta) (D - kappa) / D * G^2, the per-worker sparsification term."""
    return (1.0 + p.delta) * (p.D - p.kappa) / p.D * p.G**2


def _beta(p, beta):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (p.U,):
        raise ParameterError(f"beta must have length U={p.U}")
    return beta


def _received_scale(p, beta, b):
    """sum_i K_i beta_i b, which must be positive."""
    if not b > 0:
        raise ParameterError(f"power scale b must be positive, got {b}")
    s = float(np.dot(p.K, beta)) * b
    if not s > 0:
        raise InfeasibleError("empty schedule: sum K_i beta_i b = 0")
    return s


def sparsification_error_bound(p):
    return _tail(p)


def quantization_error_bound(p):
    return p.S + _tail(p)


def epsilon_bound(p, beta, b):
    beta = _beta(p, beta)
    s = _received_scale(p, beta, b)
    return p.S + _tail(p) + p.S * p.sigma2 / s**2


def total_error_bound(p, beta, b):
    beta = _beta(p, beta)
    s = _received_scale(p, beta, b)
    c2 = p.C**2
    core = 1.0 + (1.0 + p.delta) * (p.D - p.kappa) * p.G**2 / (p.S * p.D) + p.sigma2 / s**2
    return c2 * core + beta.sum() * _tail(p)


def bt_term(p, beta, b):
    beta = _beta(p, beta)
    s = _received_scale(p, beta, b)
    c2 = p.C**2
    dropped = float(np.dot(p.K, 1.0 - beta)) * p.rho1 / (2.0 * p.L * p.K_total)
    core = 1.0 + (1.0 + p.delta) * (p.D - p.kappa) * p.G**2 / (p.S * p.D) + p.sigma2 / s**2
    return dropped + c2 / (2.0 * p.L) * core + beta.sum() * (1.0 + p.delta) * (p.D - p.kappa) * p.G**2 / (2.0 * p.L * p.D)


def at_term(p, beta):
    """Diagnostic coefficient 1/(2L) - sum K_i rho2 (1-beta_i) / (2LK)."""
    beta = _beta(p, beta)
    return 1.0 / (2.0 * p.L) - float(np.dot(p.K, 1.0 - beta)) * p.rho2 / (2.0 * p.L * p.K_total)


def convergence_rhs(p, f0_minus_fstar, bt_series):
    """Right-hand side of the averaged gradient-norm bound after T rounds.

    Pass ``f0_minus_fstar=0`` to get the error floor.
    """
    if not p.rho2 < 1:
        raise ParameterError("rho2 must be < 1")
    bt = np.asarray(bt_series, dtype=np.float64)
    if bt.size < 1:
        raise ParameterError("need at least one round")
    coef = 2.0 * p.L / (bt.size * (1.0 - p.rho2))
    return coef * f0_minus_fstar + coef * float(bt.sum())


def error_floor(p, bt_series):
    return convergence_rhs(p, 0.0, bt_series)


@dataclass(frozen=True)
class RoundBoundReport:
    sparsify_bound: float
    quantize_bound: float
    epsilon: float
    total_error_bound: float
    b_term: float

    def as_dict(self):
        return dict(self.__dict__)


def round_report(p, beta, b):
    return RoundBoundReport(
        sparsification_error_bound(p),
        quantization_error_bound(p),
        epsilon_bound(p, beta, b),
        total_error_bound(p, beta, b),
        bt_term(p, beta, b),
    )
