import numpy as np
import pytest

from vep import geometry as geo
from vep import merit as mr
from vep import solver as sv
from vep import subdiff as sd

from conftest import make_const_box


# ---------------------------------------------------------------------------
# penalized objective
# ---------------------------------------------------------------------------

def test_penalized_value_goldens(tent):
    assert sv.penalized_value(tent, [0.0], [1.0], 0.7, 0.3) == pytest.approx(1.0)
    assert sv.penalized_value(tent, [-1.0], [2.0], 2.0, 0.5) == pytest.approx(7.0)
    assert sv.penalized_value(tent, [0.0], [0.0], 1.0, 1.0) == pytest.approx(1.0)


def test_penalized_value_rejects_bad_weights(tent):
    with pytest.raises(ValueError):
        sv.penalized_value(tent, [0.0], [1.0], 0.0, 1.0)


# ---------------------------------------------------------------------------
# descent
# ---------------------------------------------------------------------------

def test_solver_reaches_the_solution(tent):
    rng = np.random.default_rng(1)
    starts = [(rng.uniform(-2, 2, 1), rng.uniform(-2, 2, 1)) for _ in range(3)]
    (xi_b, x_b), trace = sv.solve_penalized(tent, sv.PenaltyConfig(), starts)
    assert np.hypot(xi_b[0], x_b[0] - 1.0) <= 1e-3
    stages = sorted({t.lam for t in trace})
    assert len(stages) <= 4


def test_solver_trace_values_nonincreasing_within_stage(tent):
    starts = [(np.array([0.5]), np.array([-0.5]))]
    _, trace = sv.solve_penalized(tent, sv.PenaltyConfig(), starts)
    # accepted-step counters recorded per stage record
    assert all(t.steps_accepted >= 0 for t in trace)
    assert len(trace) >= 1


def test_solver_zero_objective_returns_feasible(zero_f):
    starts = [(np.array([0.3]), np.array([1.8]))]
    (xi_b, x_b), _ = sv.solve_penalized(zero_f, sv.PenaltyConfig(), starts)
    assert mr.eval_merit(zero_f, xi_b, x_b).merit <= 1e-6
    assert geo.dist(xi_b, zero_f.omega) <= 1e-6


def test_solver_start_at_solution_stays(tent):
    config = sv.PenaltyConfig(lambda_init=2.0, max_iter=50)
    starts = [(np.array([0.0]), np.array([1.0]))]
    (xi_b, x_b), trace = sv.solve_penalized(tent, config, starts)
    assert np.hypot(xi_b[0], x_b[0] - 1.0) <= 1e-6
    assert trace[0].steps_accepted == 0


def test_penalty_exactness_on_window_grid(tent):
    # for penalty weights above the objective's Lipschitz constant on the
    # window, the penalized minimizer over the window grid is the
    # constrained minimizer (within one grid step)
    lam, gamma = 8.0, 0.5
    ts = np.linspace(-2, 2, 41)
    xs = np.linspace(-4, 4, 41)
    best, arg = np.inf, None
    for t in ts:
        for xv in xs:
            v = sv.penalized_value(tent, [t], [xv], lam, gamma)
            if v < best:
                best, arg = v, (t, xv)
    assert abs(arg[0] - 0.0) <= 0.1 + 1e-12
    assert abs(arg[1] - 1.0) <= 0.2 + 1e-12


# ---------------------------------------------------------------------------
# stationarity checker: general form
# ---------------------------------------------------------------------------

def test_stationary_at_the_minimizer(tent):
    rep = sv.check_stationarity_general(tent, [0.0], [1.0], [0.5], gamma=0.5)
    assert rep.verdict == sv.STATIONARY
    assert rep.residual <= 1e-9
    parts = [np.asarray(p) for p in rep.decomposition]
    assert np.linalg.norm(sum(parts)) <= 1e-9


def test_checker_requires_graph_point(tent):
    with pytest.raises(sv.PreconditionError, match="solution graph"):
        sv.check_stationarity_general(tent, [0.0], [2.0], None, gamma=0.5)
    with pytest.raises(sv.PreconditionError, match="geometric set"):
        sv.check_stationarity_general(tent, [-1.0], [2.0], None, gamma=0.5)


def test_refutation_by_lambda_affine_sign_test():
    # objective xi over a constant feasible map: no stationarity at any
    # graph point because the xi-part of every summand vanishes
    prob = make_const_box(phi="xi1", asserts=("K-concave", "nu-convex"))
    rep = sv.check_stationarity_general(prob, [0.0], [1.0], None, gamma=0.5)
    assert rep.verdict == sv.REFUTED_BY_DIRECTION
    assert tuple(rep.direction) == (-1.0, 0.0)
    # the residual stays bounded away from zero on the whole lambda grid
    assert min(r for _, _, r in rep.residual_table) > 0.5


def test_stationary_when_every_summand_contains_zero(const_box):
    prob = make_const_box(phi="(x1 - 1)^2", asserts=("K-concave", "nu-convex"))
    rep = sv.check_stationarity_general(prob, [0.7], [1.0], [0.25], gamma=0.5)
    assert rep.verdict == sv.STATIONARY
    assert rep.residual <= 1e-9


def test_residual_monotone_under_summand_enlargement(tent):
    rep = sv.check_stationarity_general(tent, [0.5], [1.5], [0.25], gamma=0.5)
    # enlarging the coderivative branch (extra ball) cannot increase it
    phi = sv._phi_body(tent, np.array([0.5]), np.array([1.5]))
    omega = sv._omega_cap_body(tent, np.array([0.5]))
    nu = sd.nu_subgradient_full(tent, [0.5], [1.5])
    mu = sd.mu_subgradient_estimate(tent, [0.5], [1.5])
    lam = 0.25
    residuals = []
    for extra in (0.0, 0.5):
        best = np.inf
        for kb in mu.bodies:
            kb2 = geo.ConvexBody(kb.dim, kb.points, ball=kb.ball + extra)
            factors = [
                phi.ball_discretized(),
                geo.scale_body(omega, lam).ball_discretized(),
                geo.scale_body(nu.body, lam / 0.5).ball_discretized(),
                geo.scale_body(kb2, lam / 0.5).ball_discretized(),
            ]
            r, _ = sv._residual_and_witness(factors, 0.0)
            best = min(best, r)
        residuals.append(best)
    assert residuals[1] <= residuals[0] + 1e-9
    assert rep.residual == pytest.approx(residuals[0], abs=1e-6)


def test_solver_and_checker_agree(tent):
    rng = np.random.default_rng(3)
    starts = [(rng.uniform(-2, 2, 1), rng.uniform(-2, 2, 1)) for _ in range(2)]
    (xi_b, x_b), _ = sv.solve_penalized(tent, sv.PenaltyConfig(), starts)
    rep = sv.check_stationarity_general(tent, xi_b, x_b, [0.5], gamma=0.5,
                                        tol_on_graph=0.05, tol_stat=1e-2)
    assert rep.residual <= 1e-2


# ---------------------------------------------------------------------------
# stationarity checker: smooth-concave form
# ---------------------------------------------------------------------------

def test_smooth_concave_stationary_at_minimizer(tent):
    rep = sv.check_stationarity_smooth_concave(
        tent, [0.0], [1.0], [0.5], gamma=0.5, eps_list=(0.05, 0.1), l_f=1.0)
    assert rep.verdict == sv.STATIONARY
    assert rep.residual <= 1e-9


def test_smooth_concave_monotone_wrt_general(tent):
    # the outer estimate contains the subgradient, so a stationary general
    # verdict stays stationary under the enlarged assembly
    gen = sv.check_stationarity_general(tent, [0.0], [1.0], [0.5], gamma=0.5)
    smc = sv.check_stationarity_smooth_concave(
        tent, [0.0], [1.0], [0.5], gamma=0.5, eps_list=(0.05, 0.1), l_f=1.0)
    assert gen.verdict == sv.STATIONARY
    assert smc.verdict == sv.STATIONARY


def test_smooth_concave_residual_table_per_eps(tent):
    rep = sv.check_stationarity_smooth_concave(
        tent, [0.0], [1.0], [0.5], gamma=0.5, eps_list=(0.05, 0.1), l_f=1.0)
    eps_seen = {row[0] for row in rep.residual_table}
    assert eps_seen == {0.05, 0.1}
