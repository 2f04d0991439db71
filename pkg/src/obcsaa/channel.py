"""Analog multiple-access channel with channel-inversion power control.

Worker ``i`` transmits ``p_i * c_i`` with ``p_i = beta_i K_i b / h_i``, so the
server receives ``y = sum_i K_i b beta_i c_i + z``.  Because every ``c_i`` is a
+-1 vector, the peak power ``(beta_i K_i b / h_i)^2`` does not depend on the
gradient.
"""
from dataclasses import dataclass

import numpy as np

from .errors import ChannelError, ConstraintError, InfeasibleError, ParameterError, ShapeError

# slack when checking (K b / h)^2 <= P_max; b_max itself is computed in floating point
POWER_TOL = 1e-12


@dataclass(frozen=True)
class WorkerProfile:
    sample_count: int
    max_power: float = 10.0

    def __post_init__(self):
        if self.sample_count < 1:
            raise ParameterError("sample_count must be >= 1")
        if not self.max_power > 0:
            raise ParameterError("max_power must be positive")


@dataclass(frozen=True)
class ChannelRound:
    gains: np.ndarray
    noise_variance: float
    round_index: int = 0

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.float64)
        if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
            raise ChannelError("channel gains must be finite and strictly positive")
        if self.noise_variance < 0:
            raise ParameterError("noise_variance must be >= 0")
        object.__setattr__(self, "gains", gains)

    @property
    def U(self):
        return self.gains.shape[0]


@dataclass(frozen=True)
class SchedulingDecision:
    selected: np.ndarray
    power_scale: float

    def __post_init__(self):
        sel = np.asarray(self.selected).astype(np.int8)
        if not np.all((sel == 0) | (sel == 1)):
            raise ParameterError("selection vector must be binary")
        if not sel.any():
            raise InfeasibleError("at least one worker must be scheduled")
        if not self.power_scale > 0:
            raise ParameterError("power scale b must be positive")
        object.__setattr__(self, "selected", sel)

    @property
    def count(self):
        return int(self.selected.sum())


def draw_channel_gains(U, seed, round_index=0, noise_variance=0.0):
    """Block-fading magnitudes ``|N(0, 1)|`` for one round.

    The stream is keyed on ``(seed, round_index)``; an exact zero draw
    (probability zero, but possible in floating point) is redrawn.
    """
    if U < 1:
        raise ParameterError("U must be >= 1")
    rng = np.random.default_rng([int(seed), int(round_index)])
    gains = np.abs(rng.standard_normal(U))
    while np.any(gains == 0):
        zero = gains == 0
        gains[zero] = np.abs(rng.standard_normal(int(zero.sum())))
    return ChannelRound(gains, float(noise_variance), int(round_index))


def power_control_factor(worker, beta, b, h):
    if not h > 0:
        raise ChannelError(f"channel gain must be positive, got {h}")
    if not b > 0:
        raise ParameterError(f"power scale must be positive, got {b}")
    return beta * worker.sample_count * b / h


def transmit_powers(workers, decision, gains):
    """Per-symbol transmit power ``(beta_i K_i b / h_i)^2`` for every worker."""
    k = np.array([w.sample_count for w in workers], dtype=np.float64)
    p = decision.selected * k * decision.power_scale / gains
    return p**2


def check_feasible(workers, decision, gains):
    pmax = np.array([w.max_power for w in workers])
    power = transmit_powers(workers, decision, gains)
    bad = np.flatnonzero(power > pmax + POWER_TOL)
    if bad.size:
        i = int(bad[0])
        raise ConstraintError(f"worker {i} needs power {power[i]:.6g} > P_max {pmax[i]:.6g}")


def _check_lengths(n, workers, decision, gains=None):
    if len(workers) != n or decision.selected.shape[0] != n or (gains is not None and gains.shape[0] != n):
        raise ShapeError("updates, workers, gains and selection must all have length U")


def aggregate_over_air(updates, channel, workers, decision, noise_seed):
    """Superimposed received vector ``sum_i K_i b beta_i c_i + z``.

    ``updates`` holds one +-1 vector (or CompressedUpdate) per worker; entries
    for unscheduled workers may be ``None`` since they do not transmit.
    """
    u = channel.U
    _check_lengths(u, workers, decision, channel.gains)
    if len(updates) != u:
        raise ShapeError(f"expected {u} updates, got {len(updates)}")
    check_feasible(workers, decision, channel.gains)

    sel = np.flatnonzero(decision.selected)
    signals = [_signs(updates[i]) for i in sel]
    s = signals[0].shape[0]
    if any(sig.shape[0] != s for sig in signals):
        raise ShapeError("compressed updates differ in length")
    y = np.zeros(s)
    for i, sig in zip(sel, signals):
        # h_i * p_i collapses to K_i b beta_i under the power-control rule
        y += workers[i].sample_count * decision.power_scale * sig
    if channel.noise_variance > 0:
        rng = np.random.default_rng(noise_seed)
        y += rng.normal(0.0, np.sqrt(channel.noise_variance), s)
    return y


def _signs(update):
    if update is None:
        raise ShapeError("scheduled worker has no update")
    return np.asarray(getattr(update, "signs", update), dtype=np.float64)


def post_process(y, workers, decision):
    """Scale by ``(sum_i K_i beta_i b)^-1`` to estimate the weighted average."""
    _check_lengths(decision.selected.shape[0], workers, decision)
    k = np.array([w.sample_count for w in workers], dtype=np.float64)
    denom = float(k @ decision.selected) * decision.power_scale
    if not denom > 0:
        raise InfeasibleError("post-processing factor undefined: no worker scheduled")
    return np.asarray(y, dtype=np.float64) / denom


def desired_average(updates, workers, selected):
    """Noise-free target ``sum K_i beta_i c_i / sum K_i beta_i``."""
    sel = np.flatnonzero(selected)
    k = np.array([workers[i].sample_count for i in sel], dtype=np.float64)
    stack = np.stack([_signs(updates[i]) for i in sel])
    return (k @ stack) / k.sum()


def snr_db_to_noise_variance(snr_db, max_power):
    return max_power / 10.0 ** (snr_db / 10.0)
