"""Top-k sparsification, Gaussian projection, 1-bit quantization and recovery.

A worker turns its dense gradient ``g`` into ``sign(Phi @ top_k(g))``; the
server recovers a sparse estimate from the (averaged, noisy) measurements with
iterative hard thresholding.
"""
import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import _kernels
from .errors import ParameterError, ShapeError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SparseGradient:
    values: np.ndarray
    support: np.ndarray

    def __len__(self):
        return self.values.shape[0]


def _as_gradient(g):
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1:
        raise ShapeError(f"gradient must be 1-D, got shape {g.shape}")
    if not np.all(np.isfinite(g)):
        raise ParameterError("gradient has non-finite entries")
    return g


def top_k_sparsify(g, kappa):
    """Keep the ``kappa`` largest-magnitude entries of ``g`` and zero the rest.

    Equal magnitudes are resolved towards the lower index, so the result is a
    deterministic function of ``g``.
    """
    g = _as_gradient(g)
    d = g.shape[0]
    if not 1 <= kappa <= d:
        raise ParameterError(f"kappa must lie in [1, {d}], got {kappa}")
    support = _kernels.topk_indices(np.abs(g), int(kappa))
    out = np.zeros_like(g)
    out[support] = g[support]
    return SparseGradient(out, np.asarray(support, dtype=np.int64))


def hard_threshold(x, k):
    """Project ``x`` onto k-sparse vectors (same tie rule as top_k_sparsify)."""
    support = _kernels.topk_indices(np.abs(x), int(k))
    out = np.zeros_like(x)
    out[support] = x[support]
    return out, support


@lru_cache(maxsize=2)
def _gaussian_entries(s, d, seed, variance):
    rng = np.random.default_rng(seed)
    # (d, s) C-order transposed -> column-major S x D; column gathers stay contiguous
    entries = rng.standard_normal((d, s)).T
    entries *= math.sqrt(variance)
    entries.setflags(write=False)
    return entries


@dataclass(frozen=True)
class MeasurementMatrix:
    """Shared S x D projection, identified by ``(S, D, seed, variance)``.

    ``kind="identity"`` gives the S = D identity used to switch compression
    off; it is not produced by :func:`gen_measurement_matrix`.
    """

    S: int
    D: int
    seed: int = 0
    variance: float = field(default=None)
    kind: str = "gaussian"

    def __post_init__(self):
        if self.variance is None:
            object.__setattr__(self, "variance", 1.0 / self.S)

    @property
    def entries(self):
        if self.kind == "identity":
            return _identity(self.D)
        return _gaussian_entries(self.S, self.D, self.seed, self.variance)

    @property
    def shape(self):
        return (self.S, self.D)

    def matvec_sparse(self, x, support=None):
        """``Phi @ x`` for sparse ``x``; only the supported columns are touched."""
        if support is None:
            support = np.flatnonzero(x)
        support = np.asarray(support, dtype=np.int64)
        if self.kind == "identity":
            out = np.zeros(self.S)
            out[support] = x[support]
            return out
        return _kernels.column_matvec(self.entries, support, np.ascontiguousarray(x[support]))

    def rmatvec(self, r):
        if self.kind == "identity":
            return np.array(r, dtype=np.float64)
        return self.entries.T @ r

    def to_record(self):
        return {"S": self.S, "D": self.D, "seed": self.seed, "variance": self.variance, "kind": self.kind}

    @classmethod
    def from_record(cls, rec):
        return cls(int(rec["S"]), int(rec["D"]), int(rec["seed"]), float(rec["variance"]), rec.get("kind", "gaussian"))

    @classmethod
    def identity(cls, d):
        return cls(d, d, 0, 1.0, "identity")


@lru_cache(maxsize=1)
def _identity(d):
    eye = np.eye(d)
    eye.setflags(write=False)
    return eye


def gen_measurement_matrix(S, D, seed, variance=None):
    """Seeded i.i.d. N(0, variance) matrix of shape S x D (variance defaults to 1/S)."""
    if not 1 <= S < D:
        raise ParameterError(f"need 1 <= S < D for a compressive projection, got S={S}, D={D}")
    if variance is None:
        variance = 1.0 / S
    if not variance > 0:
        raise ParameterError(f"variance must be positive, got {variance}")
    return MeasurementMatrix(int(S), int(D), int(seed), float(variance))


def sign_pm1(v):
    """Elementwise sign with sign(0) = +1."""
    return np.where(v >= 0, 1.0, -1.0)


@dataclass(frozen=True)
class CompressedUpdate:
    signs: np.ndarray
    degenerate: bool = False

    def __len__(self):
        return self.signs.shape[0]


def compress_1bit(g_sparse, phi):
    """1-bit measurement ``sign(Phi @ g_sparse)``.

    An all-zero input yields all +1 and ``degenerate=True`` plus a warning.
    """
    if isinstance(g_sparse, SparseGradient):
        values, support = g_sparse.values, g_sparse.support
    else:
        values = _as_gradient(g_sparse)
        support = np.flatnonzero(values)
    if values.shape[0] != phi.D:
        raise ShapeError(f"gradient length {values.shape[0]} != Phi columns {phi.D}")
    if not np.any(values[support]):
        warnings.warn("compress_1bit: all-zero sparse gradient; emitting all +1", RuntimeWarning, stacklevel=2)
        return CompressedUpdate(np.ones(phi.S), degenerate=True)
    return CompressedUpdate(sign_pm1(phi.matvec_sparse(values, support)))


class RecoveryMode(str, enum.Enum):
    IHT_REAL = "iht_real"
    BIHT_SIGN = "biht_sign"


@dataclass(frozen=True)
class RecoveryConfig:
    sparsity_budget: int
    max_iterations: int = 300
    step_size: float = 1.0
    tolerance: float = 1e-6
    mode: RecoveryMode = RecoveryMode.IHT_REAL

    def __post_init__(self):
        if self.sparsity_budget < 1:
            raise ParameterError("sparsity_budget must be >= 1")
        if self.max_iterations < 1:
            raise ParameterError("max_iterations must be >= 1")
        if not self.step_size > 0:
            raise ParameterError("step_size must be positive")
        object.__setattr__(self, "mode", RecoveryMode(self.mode))


def default_sparsity_budget(kappa, n_scheduled, S):
    """min(kappa * U_scheduled, S / 4), at least 1."""
    return max(1, min(kappa * n_scheduled, S // 4))


def check_rip_regime(kappa, U, S, D):
    """Warn (but allow) when kappa * U <= S < D does not hold."""
    ok = kappa * U <= S < D
    if not ok:
        log.warning("kappa*U=%d, S=%d, D=%d outside the kappa*U <= S < D regime", kappa * U, S, D)
    return ok


@dataclass
class Recovery:
    x: np.ndarray
    converged: bool
    iterations: int
    residual: float
    support: np.ndarray = None


def reconstruct_sparse(y, phi, cfg, magnitude=None):
    """Recover a sparse vector from measurements ``y``.

    IHT_REAL runs ``x <- H(x + step * Phi^T (y - Phi x))``.  A step that would
    increase the residual is rejected and the step halved, so the residual is
    non-increasing over accepted iterates.  Stops when the relative residual
    change drops below ``cfg.tolerance``.

    BIHT_SIGN runs binary IHT on ``sign(y)`` and returns a unit-norm direction
    scaled by ``magnitude`` (default ``||y|| * sqrt(D / S)``).
    """
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (phi.S,):
        raise ShapeError(f"y must have length S={phi.S}, got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ParameterError("measurement vector has non-finite entries")
    k = min(cfg.sparsity_budget, phi.D)
    if cfg.mode is RecoveryMode.IHT_REAL:
        return _iht(y, phi, k, cfg)
    rec = _biht(y, phi, k, cfg)
    norm = np.linalg.norm(rec.x)
    if magnitude is None:
        magnitude = np.linalg.norm(y) * math.sqrt(phi.D / phi.S)
    if norm > 0:
        rec.x = rec.x * (magnitude / norm)
    return rec


def _iht(y, phi, k, cfg):
    d = phi.D
    x = np.zeros(d)
    support = np.arange(0)
    r = y.copy()
    res = float(np.linalg.norm(r))
    step = cfg.step_size
    if res == 0.0:
        return Recovery(x, True, 0, 0.0, support)
    converged = False
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        x_new, supp_new = hard_threshold(x + step * phi.rmatvec(r), k)
        r_new = y - phi.matvec_sparse(x_new, supp_new)
        res_new = float(np.linalg.norm(r_new))
        if res_new > res:
            step *= 0.5
            if step < 1e-12 * cfg.step_size:
                converged = True
                break
            continue
        change = (res - res_new) / res
        x, support, r, res = x_new, supp_new, r_new, res_new
        if res == 0.0 or change < cfg.tolerance:
            converged = True
            break
    return Recovery(x, converged, it, res, support)


def _biht(y, phi, k, cfg):
    target = sign_pm1(y)
    x = np.zeros(phi.D)
    support = np.arange(0)
    converged = False
    it = 0
    mismatches = phi.S
    for it in range(1, cfg.max_iterations + 1):
        cur = sign_pm1(phi.matvec_sparse(x, support)) if support.size else np.ones(phi.S)
        diff = target - cur
        mismatches = int(np.count_nonzero(diff))
        if it > 1 and mismatches == 0:
            converged = True
            break
        x_new, support = hard_threshold(x + 0.5 * cfg.step_size * phi.rmatvec(diff), k)
        delta = np.linalg.norm(x_new - x)
        scale = max(np.linalg.norm(x_new), 1e-300)
        x = x_new
        if delta / scale < cfg.tolerance:
            converged = True
            break
    return Recovery(x, converged, it, float(mismatches), support)


def empirical_rip_fraction(phi, sparsity, delta, trials, seed):
    """Fraction of random unit ``sparsity``-sparse x with
    (1-delta) <= ||Phi x||^2 <= (1+delta).  Diagnostic only."""
    rng = np.random.default_rng(seed)
    ok = 0
    for _ in range(trials):
        idx = rng.choice(phi.D, size=sparsity, replace=False)
        vals = rng.standard_normal(sparsity)
        vals /= np.linalg.norm(vals)
        x = np.zeros(phi.D)
        x[idx] = vals
        e = float(np.sum(phi.matvec_sparse(x, idx) ** 2))
        ok += (1 - delta) <= e <= (1 + delta)
    return ok / trials
