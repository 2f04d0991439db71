"""Per-round worker selection and power scaling.

Minimises

    R(beta, b) = sum_i K_i rho1 (1 - beta_i) / K
                 + C^2 (1 + (1+delta)(D-kappa)G^2/(DS) + sigma^2 / (sum_i K_i beta_i b)^2)
                 + sum_i beta_i (1+delta)(D-kappa)G^2/D

subject to (K_i b / h_i)^2 <= P_i for every scheduled worker.  For a fixed
``beta`` the objective decreases in ``b``, so the best ``b`` is the largest
feasible one.  ``solve_enumeration`` searches all non-empty ``beta``;
``solve_admm`` runs the three-block ADMM on the split problem with auxiliary
``r_i = beta_i q_i`` and ``q_i = b``.
"""
import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .bounds import BoundParams
from .channel import SchedulingDecision, WorkerProfile
from .errors import ChannelError, InfeasibleError, ParameterError, ShapeError

ENUMERATION_CAP = 20
FLOOR = 1e-12


class Solver(str, enum.Enum):
    ENUMERATION = "enumeration"
    ADMM = "admm"


@dataclass(frozen=True)
class SchedulerInstance:
    gains: np.ndarray
    workers: tuple
    params: BoundParams

    def __post_init__(self):
        gains = np.asarray(self.gains, dtype=np.float64)
        if np.any(gains <= 0) or not np.all(np.isfinite(gains)):
            raise ChannelError("channel gains must be finite and strictly positive")
        workers = tuple(self.workers)
        if len(workers) != gains.shape[0]:
            raise ShapeError("one WorkerProfile per channel gain required")
        if tuple(w.sample_count for w in workers) != self.params.K:
            raise ParameterError("BoundParams.K must match the workers' sample counts")
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "workers", workers)

    @property
    def U(self):
        return self.gains.shape[0]

    @property
    def K(self):
        return np.array(self.params.K, dtype=np.float64)

    @property
    def b_caps(self):
        """Per-worker largest feasible b, h_i sqrt(P_i) / K_i."""
        pmax = np.array([w.max_power for w in self.workers])
        return self.gains * np.sqrt(pmax) / self.K

    def to_record(self):
        p = self.params
        return {
            "U": self.U,
            "h": self.gains.tolist(),
            "K": list(p.K),
            "Pmax": [w.max_power for w in self.workers],
            "L": p.L, "rho1": p.rho1, "rho2": p.rho2, "G": p.G, "delta": p.delta,
            "kappa": p.kappa, "S": p.S, "D": p.D, "sigma2": p.sigma2, "strict_rip": p.strict_rip,
        }

    @classmethod
    def from_record(cls, rec):
        rec = dict(rec)
        h = rec.pop("h")
        k = rec.pop("K")
        pmax = rec.pop("Pmax")
        u = rec.pop("U", len(h))
        if isinstance(pmax, (int, float)):
            pmax = [pmax] * u
        if not len(h) == len(k) == len(pmax) == u:
            raise ShapeError("h, K and Pmax must all have length U")
        workers = tuple(WorkerProfile(int(ki), float(pi)) for ki, pi in zip(k, pmax))
        return cls(np.asarray(h, dtype=np.float64), workers, BoundParams(K=tuple(k), **rec))


@dataclass
class SchedulerResult:
    decision: SchedulingDecision
    objective: float
    solver: Solver
    iterations: int = 0
    converged: bool = True
    history: dict = field(default_factory=dict, repr=False)

    def to_record(self):
        return {
            "beta": self.decision.selected.tolist(),
            "b": self.decision.power_scale,
            "R": self.objective,
            "solver": self.solver.value,
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _constants(p):
    c2 = p.C**2
    spars = (1.0 + p.delta) * (p.D - p.kappa) / p.D * p.G**2
    base = c2 * (1.0 + (1.0 + p.delta) * (p.D - p.kappa) * p.G**2 / (p.D * p.S))
    return c2, spars, base


def objective_R(instance, beta, b):
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (instance.U,):
        raise ShapeError("beta must have length U")
    if beta.sum() < 1:
        raise InfeasibleError("empty schedule leaves the noise term unbounded")
    if not b > 0:
        raise ParameterError(f"b must be positive, got {b}")
    p = instance.params
    k = instance.K
    c2, spars, base = _constants(p)
    return (
        float(k @ (1.0 - beta)) * p.rho1 / p.K_total
        + base
        + c2 * p.sigma2 * (float(k @ beta) * b) ** -2
        + beta.sum() * spars
    )


def feasible_b_max(instance, beta):
    beta = np.asarray(beta)
    if beta.shape != (instance.U,):
        raise ShapeError("beta must have length U")
    sel = beta.astype(bool)
    if not sel.any():
        raise InfeasibleError("empty schedule has no power scale")
    return float(instance.b_caps[sel].min())


def _decision(instance, beta):
    return SchedulingDecision(np.asarray(beta, dtype=np.int8), feasible_b_max(instance, beta))


def solve_enumeration(instance, cap=ENUMERATION_CAP):
    """Exact optimum over all 2^U - 1 non-empty schedules."""
    u = instance.U
    if u > cap:
        raise ParameterError(f"U={u} exceeds the enumeration cap {cap}; use solve_admm")
    p = instance.params
    c2, spars, base = _constants(p)
    mask, _ = _kernels.enumerate_schedules(
        instance.K, instance.b_caps, float(p.rho1), float(base), float(c2 * p.sigma2), float(spars)
    )
    beta = np.array([(mask >> i) & 1 for i in range(u)], dtype=np.int8)
    decision = _decision(instance, beta)
    r = objective_R(instance, beta, decision.power_scale)
    return SchedulerResult(decision, r, Solver.ENUMERATION, iterations=(1 << u) - 1)


@dataclass
class DualState:
    """ADMM iterate in scaled units (b = b_ref * b_hat, r and q likewise)."""

    r: np.ndarray
    q: np.ndarray
    b: float
    beta: np.ndarray
    nu: np.ndarray
    xi: np.ndarray
    vs: np.ndarray
    step_c: float

    def __post_init__(self):
        if not self.step_c > 0:
            raise ParameterError("step_c must be positive")
        if np.any(self.nu < 0):
            raise ParameterError("power multipliers must be >= 0")

    @classmethod
    def initial(cls, u, step_c):
        ones = np.ones(u)
        return cls(ones.copy(), ones.copy(), 1.0, np.ones(u, dtype=np.int8),
                   np.zeros(u), np.zeros(u), np.zeros(u), float(step_c))


class _Scaled:
    """Instance rewritten in O(1) units.

    b_ref is the median per-worker power cap and weights are K_i / K, so
    Q1 = noise / (sum_i w_i r_i)^2 and the power constraint reads
    (r_i / cap_i)^2 <= 1.
    """

    def __init__(self, instance):
        p = instance.params
        caps = instance.b_caps
        self.b_ref = float(np.median(caps))
        self.w = instance.K / p.K_total
        self.cap = caps / self.b_ref
        c2, spars, _ = _constants(p)
        self.noise = c2 * p.sigma2 / (self.b_ref * p.K_total) ** 2
        self.drop_cost = self.w * p.rho1
        self.keep_cost = spars


def admm_worker_subproblem(i, state, instance, scaled=None):
    """Best (q_i, beta_i) for worker ``i`` given the step-1 output in ``state``.

    Both branches are quadratics in q_i minimised in closed form and clamped
    at the positivity floor; ties go to beta_i = 1.
    """
    s = scaled or _Scaled(instance)
    q, beta = _worker_step(state, s, np.array([i]))
    return float(q[0]), int(beta[0])


def _branch_costs(state, s, idx):
    c = state.step_c
    r, xi, vs, b = state.r[idx], state.xi[idx], state.vs[idx], state.b
    # beta_i = 0: q only couples to b through the consensus term
    q0 = np.maximum(b - vs / c, FLOOR)
    l0 = s.drop_cost[idx] + xi * r + 0.5 * c * r**2 + vs * (q0 - b) + 0.5 * c * (q0 - b) ** 2
    # beta_i = 1: stationarity of xi(r-q) + c/2 (r-q)^2 + vs(q-b) + c/2 (q-b)^2
    q1 = np.maximum(0.5 * (r + b) + (xi - vs) / (2.0 * c), FLOOR)
    l1 = s.keep_cost + xi * (r - q1) + 0.5 * c * (r - q1) ** 2 + vs * (q1 - b) + 0.5 * c * (q1 - b) ** 2
    return q0, l0, q1, l1


def _worker_step(state, s, idx=None):
    if idx is None:
        idx = np.arange(state.r.shape[0])
    q0, l0, q1, l1 = _branch_costs(state, s, idx)
    pick = l1 <= l0
    return np.where(pick, q1, q0), pick.astype(np.int8)


def _rb_step(state, s):
    c = state.step_c
    u = state.r.shape[0]
    # b-block is separable from r: -sum vs_i b + c/2 sum (q_i - b)^2
    b = max((state.q.sum() + state.vs.sum() / c) / u, FLOOR)
    num = c * state.beta * state.q - state.xi
    den = 2.0 * state.nu / s.cap**2 + c
    if s.noise > 0:
        r = _kernels.admm_r_block(num, den, s.w, 2.0 * s.noise, FLOOR)
    else:
        r = np.maximum(num / den, FLOOR)
    return r, b


def solve_admm(instance, step_c=1.0, abs_tol=1e-4, rel_tol=1e-4, max_iter=500,
               incumbent="best", keep_history=False):
    """ADMM on the split problem, finished by a feasibility repair.

    Stops once ``sum |q_i - b| < abs_tol`` and ``|b_new - b_old| < rel_tol``
    (both in the scaled units described in :class:`_Scaled`), or after
    ``max_iter`` iterations.  Every step-2 selection is repaired to
    ``(beta, feasible_b_max(beta))``; ``incumbent="best"`` returns the repaired
    selection with the lowest R seen, ``incumbent="last"`` the final one.
    """
    if not step_c > 0:
        raise ParameterError("step_c must be positive")
    if incumbent not in ("best", "last"):
        raise ParameterError("incumbent must be 'best' or 'last'")
    s = _Scaled(instance)
    u = instance.U
    st = DualState.initial(u, step_c)
    history = {"primal_rq": [], "primal_qb": [], "b": [], "R": []} if keep_history else {}
    best_beta, best_r = None, np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        b_old = st.b
        st.r, st.b = _rb_step(st, s)
        st.q, st.beta = _worker_step(st, s)
        c = st.step_c
        st.nu = np.maximum(st.nu + c * ((st.r / s.cap) ** 2 - 1.0), 0.0)
        st.xi = st.xi + c * (st.r - st.beta * st.q)
        st.vs = st.vs + c * (st.q - st.b)

        r_cur = np.inf
        if st.beta.any():
            r_cur = objective_R(instance, st.beta, feasible_b_max(instance, st.beta))
            if r_cur < best_r:
                best_beta, best_r = st.beta.copy(), r_cur
        res_qb = float(np.abs(st.q - st.b).sum())
        if keep_history:
            history["primal_rq"].append(float(np.abs(st.r - st.beta * st.q).sum()))
            history["primal_qb"].append(res_qb)
            history["b"].append(st.b * s.b_ref)
            history["R"].append(r_cur)
        if res_qb < abs_tol and abs(st.b - b_old) < rel_tol:
            converged = True
            break

    beta = st.beta.copy() if incumbent == "last" or best_beta is None else best_beta
    if not beta.any():
        # nearest non-empty schedule: the worker closest to preferring beta_i = 1
        _, l0, _, l1 = _branch_costs(st, s, np.arange(u))
        beta[int(np.argmin(l1 - l0))] = 1
    decision = _decision(instance, beta)
    r = objective_R(instance, beta, decision.power_scale)
    if keep_history:
        history["state"] = st
    return SchedulerResult(decision, r, Solver.ADMM, iterations=it, converged=converged, history=history)


def solve(instance, solver="auto", cap=ENUMERATION_CAP, **admm_kw):
    if solver == "auto":
        solver = Solver.ENUMERATION if instance.U <= cap else Solver.ADMM
    solver = Solver(solver)
    if solver is Solver.ENUMERATION:
        return solve_enumeration(instance, cap=cap)
    return solve_admm(instance, **admm_kw)


def random_instance(rng, U, params=None, k_range=(100, 5000), pmax=10.0):
    """Random instance with Rayleigh-magnitude gains and uniform K_i (for tests)."""
    gains = np.abs(rng.standard_normal(U)) + 1e-3
    k = tuple(int(x) for x in rng.integers(k_range[0], k_range[1] + 1, size=U))
    workers = tuple(WorkerProfile(ki, pmax) for ki in k)
    params = (params or BoundParams()).with_(K=k)
    return SchedulerInstance(gains, workers, params)
