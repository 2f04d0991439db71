import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from obcsaa import channel as ch
from obcsaa import scheduler as sch
from obcsaa.bounds import BoundParams
from obcsaa.errors import ChannelError, InfeasibleError, ParameterError


def instance(h, k, pmax=10.0, **kw):
    workers = tuple(ch.WorkerProfile(int(ki), pmax) for ki in k)
    return sch.SchedulerInstance(np.asarray(h, float), workers, BoundParams(K=tuple(k), **kw))


def r_oracle(inst, beta, b):
    """Direct evaluation of R for one (beta, b), independent of the module."""
    p = inst.params
    kt = sum(p.K)
    varpi = 2 * math.sqrt(1 + p.delta) / math.sqrt(1 - p.delta)
    varrho = math.sqrt(2) * p.delta / (1 - p.delta)
    c2 = (2 * varpi / (1 - varrho)) ** 2
    recv = sum(k * bi for k, bi in zip(p.K, beta)) * b
    tail = (1 + p.delta) * (p.D - p.kappa) * p.G**2 / p.D
    return (
        sum(k * p.rho1 * (1 - bi) for k, bi in zip(p.K, beta)) / kt
        + c2 * (1 + (1 + p.delta) * (p.D - p.kappa) * p.G**2 / (p.D * p.S) + p.sigma2 / recv**2)
        + sum(beta) * tail
    )


def brute_force(inst):
    """Independent re-enumeration: every non-empty beta paired with its own b_max."""
    best = (math.inf, None)
    pmax = [w.max_power for w in inst.workers]
    for bits in itertools.product((0, 1), repeat=inst.U):
        if not any(bits):
            continue
        b = min(inst.gains[i] * math.sqrt(pmax[i]) / inst.params.K[i] for i in range(inst.U) if bits[i])
        r = r_oracle(inst, bits, b)
        if r < best[0]:
            best = (r, bits)
    return best


# -- objective ----------------------------------------------------------------

def test_objective_all_ones_has_no_drop_term():
    inst = instance([0.5, 1.0, 2.0], [100, 200, 300])
    r = sch.objective_R(inst, np.ones(3), 1e-4)
    r0 = sch.objective_R(instance([0.5, 1.0, 2.0], [100, 200, 300], rho1=0.0), np.ones(3), 1e-4)
    assert r == pytest.approx(r0, rel=1e-15)


def test_objective_hand_instance():
    # delta -> 0 gives C = 4; kappa = D removes the sparsification terms
    inst = instance([1.0, 1.0], [1, 1], rho1=1.0, delta=1e-12, G=1.0, kappa=100, D=100, S=50, sigma2=0.3)
    for beta, b in (([1, 1], 0.2), ([1, 0], 0.5), ([0, 1], 1.0)):
        expected = 16 * (1 + 0.3 / (sum(beta) * b) ** 2) + sum(1 - x for x in beta) / 2
        assert sch.objective_R(inst, np.array(beta), b) == pytest.approx(expected, rel=1e-9)
        assert sch.objective_R(inst, np.array(beta), b) == pytest.approx(r_oracle(inst, beta, b), rel=1e-12)


def test_objective_decreases_in_b():
    inst = instance([0.5, 1.0], [100, 300])
    beta = np.array([1, 1])
    assert sch.objective_R(inst, beta, 2e-4) < sch.objective_R(inst, beta, 1e-4)


def test_objective_errors():
    inst = instance([0.5, 1.0], [100, 300])
    with pytest.raises(InfeasibleError):
        sch.objective_R(inst, np.zeros(2), 1e-4)
    with pytest.raises(ParameterError):
        sch.objective_R(inst, np.ones(2), 0.0)


# -- b_max ------------------------------------------------------------------

def test_b_max_single_worker():
    inst = instance([0.1], [3000])
    assert sch.feasible_b_max(inst, np.array([1])) == pytest.approx(0.1 * math.sqrt(10) / 3000, rel=1e-14)
    assert sch.feasible_b_max(inst, np.array([1])) == pytest.approx(1.0541e-4, rel=1e-4)


def test_b_max_ignores_unscheduled_workers():
    a = instance([0.1], [3000])
    b = instance([0.1, 1e-3], [3000, 5000])
    assert sch.feasible_b_max(a, np.array([1])) == sch.feasible_b_max(b, np.array([1, 0]))
    with pytest.raises(InfeasibleError):
        sch.feasible_b_max(b, np.array([0, 0]))


def golden_section(f, lo, hi, tol=1e-14):
    g = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c, d = b - g * (b - a), a + g * (b - a)
    while b - a > tol * hi:
        if f(c) < f(d):
            b, d = d, c
            c = b - g * (b - a)
        else:
            a, c = c, d
            d = a + g * (b - a)
    return (a + b) / 2


def test_b_max_agrees_with_numeric_minimisation():
    rng = np.random.default_rng(4)
    inst = sch.random_instance(rng, 5, BoundParams(sigma2=1.0))
    beta = np.array([1, 0, 1, 1, 0])
    b_max = sch.feasible_b_max(inst, beta)
    b_num = golden_section(lambda b: sch.objective_R(inst, beta, b), b_max * 1e-3, b_max)
    assert b_num == pytest.approx(b_max, rel=1e-8)


# -- enumeration --------------------------------------------------------------

def test_enumeration_single_worker():
    inst = instance([0.3], [1000])
    res = sch.solve_enumeration(inst)
    assert res.decision.selected.tolist() == [1]
    assert res.decision.power_scale == pytest.approx(0.3 * math.sqrt(10) / 1000)


def test_enumeration_matches_brute_force():
    rng = np.random.default_rng(0)
    for u in (2, 3, 5, 8):
        for sigma2 in (1e-4, 3.16, 31.6):
            inst = sch.random_instance(rng, u, BoundParams(sigma2=sigma2))
            res = sch.solve_enumeration(inst)
            r_bf, beta_bf = brute_force(inst)
            assert res.objective == pytest.approx(r_bf, rel=1e-12)
            assert tuple(res.decision.selected) == beta_bf


def test_enumeration_at_desk_scale_is_fast():
    import time

    inst = sch.random_instance(np.random.default_rng(1), 10, BoundParams(K=(3000,) * 10), k_range=(3000, 3000))
    sch.solve_enumeration(inst)
    t0 = time.perf_counter()
    res = sch.solve_enumeration(inst)
    assert time.perf_counter() - t0 < 1.0
    ch.check_feasible(inst.workers, res.decision, inst.gains)


def test_enumeration_cap():
    inst = sch.random_instance(np.random.default_rng(1), 6)
    with pytest.raises(ParameterError, match="ADMM|admm"):
        sch.solve_enumeration(inst, cap=5)


def test_better_channel_never_hurts():
    rng = np.random.default_rng(7)
    for _ in range(20):
        inst = sch.random_instance(rng, 6, BoundParams(sigma2=float(rng.choice([1e-4, 3.0]))))
        i = int(rng.integers(6))
        h = inst.gains.copy()
        h[i] *= 1.5
        better = sch.SchedulerInstance(h, inst.workers, inst.params)
        assert sch.solve_enumeration(better).objective <= sch.solve_enumeration(inst).objective * (1 + 1e-12)


# -- ADMM --------------------------------------------------------------------

def test_admm_single_worker_matches_enumeration():
    inst = instance([0.7], [1234])
    a, e = sch.solve_admm(inst), sch.solve_enumeration(inst)
    assert a.decision.selected.tolist() == [1]
    assert a.decision.power_scale == e.decision.power_scale
    assert a.objective == e.objective


def test_worker_subproblem_branch_zero_closed_form():
    inst = instance([1.0, 1.0], [10, 10])
    st_ = sch.DualState.initial(2, 2.0)
    st_.b, st_.vs = 1.5, np.array([0.4, -0.6])
    st_.r, st_.xi = np.array([0.0, 0.0]) + sch.FLOOR, np.zeros(2)
    s = sch._Scaled(inst)
    q0, _, _, _ = sch._branch_costs(st_, s, np.arange(2))
    np.testing.assert_allclose(q0, [1.5 - 0.4 / 2.0, 1.5 + 0.6 / 2.0])


def test_worker_subproblem_selection_flips_with_rho1():
    # zero multipliers and r = b: the branch gap is keep_cost vs K_i rho1 / K
    # plus the c r^2 / 2 penalty of forcing r_i to zero, negligible for small r
    keep = 1.2 * (50890 - 10) / 50890

    def pick(rho1, r):
        inst = instance([1.0, 1.0], [10, 10], rho1=rho1)
        state = sch.DualState.initial(2, 1.0)
        state.b = r
        state.r = np.full(2, r)
        _, l0, _, l1 = sch._branch_costs(state, sch._Scaled(inst), np.arange(2))
        assert l0[0] - l1[0] == pytest.approx(rho1 / 2 + r**2 / 2 - keep, abs=1e-12)
        return sch.admm_worker_subproblem(0, state, inst)[1]

    assert pick(2 * keep * 0.9, 1e-6) == 0
    assert pick(2 * keep * 1.1, 1e-6) == 1
    assert pick(2 * keep * 1.1, 1.0) == 1


def test_worker_subproblem_symmetry():
    inst = instance([0.8, 0.8, 0.8], [50, 50, 50])
    state = sch.DualState.initial(3, 1.0)
    state.xi = np.full(3, 0.1)
    state.vs = np.full(3, -0.2)
    out = [sch.admm_worker_subproblem(i, state, inst) for i in range(3)]
    assert out[0] == out[1] == out[2]


def test_admm_history_invariants():
    inst = sch.random_instance(np.random.default_rng(2), 8, BoundParams(sigma2=3.16))
    res = sch.solve_admm(inst, keep_history=True, max_iter=200)
    hist = res.history
    assert np.all(np.isfinite(hist["primal_rq"])) and np.all(np.isfinite(hist["primal_qb"]))
    assert np.all(hist["state"].nu >= 0)
    ch.check_feasible(inst.workers, res.decision, inst.gains)
    if res.converged:
        assert hist["primal_qb"][-1] < 1e-4


def test_admm_multipliers_stay_nonnegative_every_iteration():
    inst = sch.random_instance(np.random.default_rng(3), 6, BoundParams(sigma2=31.6))
    s = sch._Scaled(inst)
    state = sch.DualState.initial(6, 1.0)
    for _ in range(50):
        state.r, state.b = sch._rb_step(state, s)
        state.q, state.beta = sch._worker_step(state, s)
        state.nu = np.maximum(state.nu + state.step_c * ((state.r / s.cap) ** 2 - 1), 0)
        state.xi = state.xi + state.step_c * (state.r - state.beta * state.q)
        state.vs = state.vs + state.step_c * (state.q - state.b)
        assert np.all(state.nu >= 0)
        assert np.all(state.r >= sch.FLOOR) and state.b >= sch.FLOOR


def test_admm_rejects_bad_step():
    with pytest.raises(ParameterError):
        sch.solve_admm(instance([1.0], [1]), step_c=0.0)


def test_solve_dispatches_by_cap():
    inst = sch.random_instance(np.random.default_rng(0), 4)
    assert sch.solve(inst).solver is sch.Solver.ENUMERATION
    assert sch.solve(inst, cap=3).solver is sch.Solver.ADMM


def test_instance_round_trip():
    inst = sch.random_instance(np.random.default_rng(0), 4, BoundParams(sigma2=0.5))
    again = sch.SchedulerInstance.from_record(inst.to_record())
    np.testing.assert_array_equal(again.gains, inst.gains)
    assert again.params == inst.params
    rec = inst.to_record()
    rec["Pmax"] = 10.0
    assert sch.SchedulerInstance.from_record(rec).workers == inst.workers


def test_instance_validation():
    with pytest.raises(ChannelError):
        instance([0.0, 1.0], [1, 1])
    with pytest.raises(ParameterError):
        sch.SchedulerInstance(np.ones(2), (ch.WorkerProfile(1), ch.WorkerProfile(2)), BoundParams(K=(1, 1)))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**31), st.sampled_from([1e-4, 1.0, 3.16, 31.6]))
def test_every_result_is_feasible(u, seed, sigma2):
    inst = sch.random_instance(np.random.default_rng(seed), u, BoundParams(sigma2=sigma2))
    for res in (sch.solve_enumeration(inst), sch.solve_admm(inst, max_iter=100)):
        ch.check_feasible(inst.workers, res.decision, inst.gains)
        assert res.decision.count >= 1 and math.isfinite(res.objective)
        assert res.objective >= sch.solve_enumeration(inst).objective * (1 - 1e-12)
