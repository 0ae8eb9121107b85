"""Penalization pipeline and stationarity checkers.

The solver minimizes objective + lambda * (distance to the geometric set +
merit/gamma) by subgradient descent with an increasing penalty schedule and
a pattern-search polish.  The checkers assemble the stationarity inclusion
right-hand side from structured subgradient bodies and either certify a
near-zero residual with a decomposition witness or refute the inclusion for
every penalty weight by a sign analysis that is affine in lambda.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from . import geometry as geo
from . import merit as mr
from . import problem as pb
from . import subdiff as sd

STATIONARY = "stationary-within-tol"
REFUTED_BY_DIRECTION = "refuted-by-direction"
INCONCLUSIVE = "inconclusive"


class SolverError(RuntimeError):
    pass


class PreconditionError(ValueError):
    pass


@dataclass(frozen=True)
class PenaltyConfig:
    lambda_init: float = 0.5
    growth: float = 2.0
    lambda_max: float = 64.0
    gamma: float = 0.5
    max_iter: int = 250
    restarts: int = 1
    tol_stat: float = 1e-4
    tol_merit: float = 1e-6
    step_scale: float | None = None  # default: window diameter / 10
    seed: int = 0

    def __post_init__(self):
        if self.lambda_init <= 0 or self.gamma <= 0 or self.tol_stat <= 0:
            raise ValueError("lambda_init, gamma and tol_stat must be positive")


@dataclass(frozen=True, eq=False)
class StageRecord:
    lam: float
    start_index: int
    steps_accepted: int
    best_value: float
    best_point: tuple
    merit: float


@dataclass(frozen=True, eq=False)
class StationarityReport:
    point: tuple
    lam: float
    gamma: float
    residual: float
    branch_id: int
    verdict: str
    direction: tuple | None = None
    decomposition: tuple = ()
    residual_table: tuple = ()
    flags: tuple = ()


# ---------------------------------------------------------------------------
# penalized objective
# ---------------------------------------------------------------------------

def penalized_value(prob: pb.VepProblem, xi, x, lam: float, gamma: float) -> float:
    """objective + lam * (dist(xi, Omega) + merit/gamma)."""
    if lam <= 0 or gamma <= 0:
        raise ValueError("lam and gamma must be positive")
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    phi = float(ex.eval_expr(prob.objective, xi=xi, x=x))
    pen = geo.dist(xi, prob.omega) + mr.eval_merit(prob, xi, x).merit / gamma
    return phi + lam * pen


def _penalized_subgradient(prob, xi, x, lam, gamma, h=1e-7) -> np.ndarray:
    """A subgradient of the penalized objective.

    Objective and Omega-distance parts are structured; the merit part uses
    central differences, which on piecewise-smooth data yields a convex
    combination of branch gradients (a valid subgradient wherever merit is
    convex along the probe)."""
    p = prob.p
    g_phi = ex.grad_hull(prob.objective, (xi, x, ()), "xix").generators[0]
    d_om = geo.dist(xi, prob.omega)
    g_om = np.zeros(p + len(x))
    if d_om > 1e-12:
        g_om[:p] = (xi - geo.project(xi, prob.omega)) / d_om
    q0 = np.concatenate([xi, x])

    def merit_at(q):
        return mr.eval_merit(prob, q[:p], q[p:]).merit

    g_mf = np.empty(len(q0))
    for i in range(len(q0)):
        e = np.zeros(len(q0))
        e[i] = h
        g_mf[i] = (merit_at(q0 + e) - merit_at(q0 - e)) / (2 * h)
    return g_phi + lam * g_om + (lam / gamma) * g_mf


def _compass_polish(fn, q0: np.ndarray, step: float, lo=None, up=None,
                    tol: float = 1e-7, max_iter: int = 400) -> tuple[np.ndarray, float]:
    q = q0.copy()
    v = fn(q)
    d = len(q)
    for _ in range(max_iter):
        improved = False
        for i in range(d):
            for s in (step, -step):
                cand = q.copy()
                cand[i] += s
                if lo is not None:
                    cand = np.clip(cand, lo, up)
                cv = fn(cand)
                if cv < v - 1e-15:
                    q, v, improved = cand, cv, True
        if not improved:
            step *= 0.5
            if step < tol:
                break
    return q, v


def _penalized_slope(prob, q, lam, gamma, p, radii=(1e-3, 1e-4)) -> float:
    """Sampled strong slope of the penalized objective at q."""
    base = penalized_value(prob, q[:p], q[p:], lam, gamma)
    dirs = _default_dirs(len(q))
    best = 0.0
    for r in radii:
        for u in dirs:
            w = q + r * np.asarray(u)
            v = penalized_value(prob, w[:p], w[p:], lam, gamma)
            best = max(best, (base - v) / r)
    return best


def solve_penalized(prob: pb.VepProblem, config: PenaltyConfig, starts):
    """Multi-start subgradient descent over an increasing penalty schedule.

    Returns (incumbent as (xi, x), trace of StageRecord).  A stage runs the
    descent plus a pattern-search polish until the sampled strong slope of
    the penalized objective at the incumbent drops under tol_stat; the
    schedule advances while the incumbent's merit stays above tol_merit and
    stops as soon as the incumbent is feasible with a small slope.
    """
    starts = [
        (np.atleast_1d(np.asarray(s[0], dtype=float)),
         np.atleast_1d(np.asarray(s[1], dtype=float)))
        for s in starts
    ]
    if not starts:
        raise ValueError("at least one start required")
    rng = np.random.default_rng(config.seed)
    wlo, wup = prob.xi_window()
    xlo, xup = prob.x_window()
    lo = np.concatenate([wlo, xlo])
    up = np.concatenate([wup, xup])
    diam = float(np.linalg.norm(up - lo))
    a0 = config.step_scale if config.step_scale is not None else diam / 10.0

    trace: list[StageRecord] = []
    incumbents = [np.concatenate(s) for s in starts]
    lam = config.lambda_init
    incumbent = incumbents[0]
    while lam <= config.lambda_max:
        def fn(w, _lam=lam):
            return penalized_value(prob, w[: prob.p], w[prob.p:], _lam, config.gamma)

        stage_incumbents = []
        for si, q_start in enumerate(incumbents):
            seeds = [q_start] + [
                np.clip(q_start + 0.05 * diam * rng.normal(size=len(q_start)), lo, up)
                for _ in range(config.restarts)
            ]
            best_local, best_local_val, accepted = None, math.inf, 0
            for q in seeds:
                q = q.copy()
                cur_best, cur_val = q.copy(), fn(q)
                steps = 0
                for k in range(1, config.max_iter + 1):
                    g = _penalized_subgradient(prob, q[: prob.p], q[prob.p:],
                                               lam, config.gamma)
                    ng = float(np.linalg.norm(g))
                    if ng <= 1e-14:
                        break
                    q = np.clip(q - (a0 / math.sqrt(k)) * g / ng, lo, up)
                    v = fn(q)
                    if v < cur_val - 1e-15:
                        cur_val, cur_best = v, q.copy()
                        steps += 1
                pol_q, pol_v = _compass_polish(fn, cur_best, a0 / 10.0, lo, up)
                if pol_v < cur_val:
                    cur_best, cur_val = pol_q, pol_v
                if cur_val < -1e12:
                    raise SolverError("penalized objective unbounded below")
                if cur_val < best_local_val:
                    best_local, best_local_val, accepted = cur_best, cur_val, steps
            stage_incumbents.append(best_local)
            me = mr.eval_merit(prob, best_local[: prob.p], best_local[prob.p:]).merit
            trace.append(StageRecord(lam, si, accepted, best_local_val,
                                     tuple(best_local.tolist()), me))
        incumbents = stage_incumbents
        j = int(np.argmin([fn(q) for q in incumbents]))
        incumbent = incumbents[j]
        inc_merit = mr.eval_merit(prob, incumbent[: prob.p], incumbent[prob.p:]).merit
        inc_omega = geo.dist(incumbent[: prob.p], prob.omega)
        slope = _penalized_slope(prob, incumbent, lam, config.gamma, prob.p)
        feasible = inc_merit <= config.tol_merit and inc_omega <= config.tol_merit
        if feasible and slope <= config.tol_stat:
            break
        lam *= config.growth
    return (incumbent[: prob.p].copy(), incumbent[prob.p:].copy()), tuple(trace)


# ---------------------------------------------------------------------------
# stationarity checkers
# ---------------------------------------------------------------------------

def _default_dirs(dim: int) -> list[np.ndarray]:
    dirs = []
    for i in range(dim):
        e = np.zeros(dim)
        e[i] = 1.0
        dirs.append(-e)
        dirs.append(e.copy())
    if dim == 2:
        for a in np.linspace(0, 2 * math.pi, 16, endpoint=False):
            dirs.append(np.array([math.cos(a), math.sin(a)]))
    return dirs


def _omega_cap_body(prob, xi_bar) -> geo.ConvexBody:
    """(N(xi; Omega) ∩ B) x {0} as a body in R^(p+n)."""
    cap = geo.truncated_normal(xi_bar, prob.omega)
    pts = cap.effective_points()
    padded = np.hstack([pts, np.zeros((len(pts), prob.n))])
    return geo.ConvexBody(prob.p + prob.n, padded, label="omega-normal-cap")


def _phi_body(prob, xi_bar, x_bar) -> geo.ConvexBody:
    hull = ex.grad_hull(prob.objective, (xi_bar, x_bar, ()), "xix")
    return geo.body_from_points(hull.as_matrix(), label="objective-subgradient")


def _check_preconditions(prob, xi_bar, x_bar, gamma, tol_on_graph):
    if gamma is None or gamma <= 0:
        raise PreconditionError("gamma must be positive")
    me = mr.eval_merit(prob, xi_bar, x_bar).merit
    if me > tol_on_graph:
        raise PreconditionError(
            f"point is not on the solution graph (merit {me:.3g} > {tol_on_graph:g})"
        )
    d_om = geo.dist(xi_bar, prob.omega)
    if d_om > tol_on_graph:
        raise PreconditionError(
            f"xi is not in the geometric set (distance {d_om:.3g})"
        )


def _sum_with_provenance(factors: list[np.ndarray]):
    """Pairwise-sum point sets keeping, per summed point, one point per factor."""
    pts = factors[0]
    prov = [(i,) for i in range(len(pts))]
    total = pts
    for F in factors[1:]:
        new_total = (total[:, None, :] + F[None, :, :]).reshape(-1, total.shape[1])
        new_prov = [p + (j,) for p in prov for j in range(len(F))]
        if len(new_total) > 20000:
            hull = geo._prune_hull(new_total)
            keep = []
            for h in hull:
                j = int(np.argmin(np.linalg.norm(new_total - h, axis=1)))
                keep.append(j)
            total = new_total[keep]
            prov = [new_prov[j] for j in keep]
        else:
            total, prov = new_total, new_prov
    return total, prov


def _residual_and_witness(factor_pts: list[np.ndarray], ball: float):
    total, prov = _sum_with_provenance(factor_pts)
    q, idx, w = geo.wolfe_min_norm(total)
    nq = float(np.linalg.norm(q))
    residual = max(nq - ball, 0.0)
    parts = []
    for fi, F in enumerate(factor_pts):
        part = np.zeros(F.shape[1])
        for j, weight in zip(idx, w):
            part = part + weight * F[prov[j][fi]]
        parts.append(part)
    if ball > 0 and nq > 1e-12:
        # absorb the ball along -q so the reported summands add up to ~residual
        direction = q / nq
        parts.append(-min(ball, nq) * direction)
    return residual, tuple(parts)


def _refutation_scan(prob, phi_body, omega_body, nu_bodies, k_bodies, gamma,
                     dirs, tol=1e-9):
    """lambda-affine sign test: a direction refutes when the support of the
    right-hand side stays negative for every lambda > 0."""
    for d in dirs:
        c0 = geo.support(phi_body, d)
        if not c0 < -tol:
            continue
        ok = True
        for nu_body in nu_bodies:
            for kb in k_bodies:
                c1 = geo.support(omega_body, d) + (
                    geo.support(nu_body, d) + geo.support(kb, d)
                ) / gamma
                if c1 > tol:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return np.asarray(d, dtype=float)
    return None


def check_stationarity_general(prob: pb.VepProblem, xi_bar, x_bar,
                               lambda_grid=None, gamma: float = 0.5,
                               refutation_dirs=None, tol_stat: float = 1e-9,
                               tol_on_graph: float = 1e-6) -> StationarityReport:
    """Inclusion test: 0 in subgrad(objective) + lam*(Omega normal cap x {0})
    + (lam/gamma)*(nu subgradient + coderivative-ball branch).

    Residuals are minimized over the lambda grid and branches; the
    refutation test is affine in lambda so a single sign analysis covers
    every positive penalty weight.
    """
    xi_bar = np.atleast_1d(np.asarray(xi_bar, dtype=float))
    x_bar = np.atleast_1d(np.asarray(x_bar, dtype=float))
    _check_preconditions(prob, xi_bar, x_bar, gamma, tol_on_graph)
    lambda_grid = tuple(lambda_grid) if lambda_grid is not None else (
        0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    phi_body = _phi_body(prob, xi_bar, x_bar)
    omega_body = _omega_cap_body(prob, xi_bar)
    nu_est = sd.nu_subgradient_full(prob, xi_bar, x_bar)
    mu_est = sd.mu_subgradient_estimate(prob, xi_bar, x_bar)
    flags = nu_est.qc_flags + mu_est.qc_flags
    if nu_est.lipschitz:
        flags = flags + ("qualification: singular-part-trivial",)
    else:
        flags = flags + ("qc-assumed",)
    if nu_est.exactness != sd.EXACT_CONVEX:
        flags = flags + (f"subgradient_model: {nu_est.exactness}",)
    dirs = refutation_dirs if refutation_dirs is not None else _default_dirs(
        prob.p + prob.n)
    refuting = _refutation_scan(prob, phi_body, omega_body, nu_est.bodies,
                                mu_est.bodies, gamma, dirs)
    table = []
    best = (math.inf, None, None, ())
    for lam in lambda_grid:
        for bi, kb in enumerate(mu_est.bodies):
            factors = [
                phi_body.ball_discretized(),
                geo.scale_body(omega_body, lam).ball_discretized(),
                geo.scale_body(nu_est.body, lam / gamma).ball_discretized(),
                geo.scale_body(kb, lam / gamma).ball_discretized(),
            ]
            residual, parts = _residual_and_witness(factors, 0.0)
            table.append((lam, bi, residual))
            if residual < best[0]:
                best = (residual, lam, bi, parts)
    residual, lam_best, branch, parts = best
    if refuting is not None:
        verdict = REFUTED_BY_DIRECTION
    elif residual <= tol_stat:
        verdict = STATIONARY
    else:
        verdict = INCONCLUSIVE
    return StationarityReport(
        point=(tuple(xi_bar.tolist()), tuple(x_bar.tolist())),
        lam=float(lam_best) if lam_best is not None else float("nan"),
        gamma=gamma,
        residual=float(residual),
        branch_id=int(branch) if branch is not None else -1,
        verdict=verdict,
        direction=tuple(refuting.tolist()) if refuting is not None else None,
        decomposition=tuple(tuple(p.tolist()) for p in parts)
        if verdict == STATIONARY else (),
        residual_table=tuple(table),
        flags=flags,
    )


def check_stationarity_smooth_concave(prob: pb.VepProblem, xi_bar, x_bar,
                                      lambda_grid=None, gamma: float = 0.5,
                                      eps_list=(0.05, 0.1), l_f: float = 1.0,
                                      refutation_dirs=None,
                                      tol_stat: float = 1e-9,
                                      tol_on_graph: float = 1e-6) -> StationarityReport:
    """Same assembly with the nu subgradient replaced by the per-enlargement
    outer estimate; stationary requires a small residual for EVERY
    enlargement, refutation a separating direction for a single one."""
    xi_bar = np.atleast_1d(np.asarray(xi_bar, dtype=float))
    x_bar = np.atleast_1d(np.asarray(x_bar, dtype=float))
    _check_preconditions(prob, xi_bar, x_bar, gamma, tol_on_graph)
    lambda_grid = tuple(lambda_grid) if lambda_grid is not None else (
        0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
    required = {"K-concave"}
    if not required <= prob.asserts:
        flags_pre = ("hypotheses-not-asserted",)
    else:
        flags_pre = ()
    phi_body = _phi_body(prob, xi_bar, x_bar)
    omega_body = _omega_cap_body(prob, xi_bar)
    outer = sd.nu_outer_estimate(prob, xi_bar, x_bar, eps_list, l_f)
    mu_est = sd.mu_subgradient_estimate(prob, xi_bar, x_bar)
    flags = flags_pre + outer.qc_flags + mu_est.qc_flags + (
        f"eps-list={tuple(e for e, _ in outer.per_eps)}", f"l_f={l_f:g}")
    dirs = refutation_dirs if refutation_dirs is not None else _default_dirs(
        prob.p + prob.n)
    refuting = None
    for _, body in outer.per_eps:
        refuting = _refutation_scan(prob, phi_body, omega_body, (body,),
                                    mu_est.bodies, gamma, dirs)
        if refuting is not None:
            break
    table = []
    worst_eps_residual = -math.inf
    best_overall = (math.inf, None, None, ())
    for eps, nu_body in outer.per_eps:
        best_eps = (math.inf, None, None, ())
        for lam in lambda_grid:
            for bi, kb in enumerate(mu_est.bodies):
                factors = [
                    phi_body.ball_discretized(),
                    geo.scale_body(omega_body, lam).ball_discretized(),
                    geo.scale_body(nu_body, lam / gamma).ball_discretized(),
                    geo.scale_body(kb, lam / gamma).ball_discretized(),
                ]
                residual, parts = _residual_and_witness(factors, 0.0)
                table.append((eps, lam, bi, residual))
                if residual < best_eps[0]:
                    best_eps = (residual, lam, bi, parts)
        worst_eps_residual = max(worst_eps_residual, best_eps[0])
        if best_eps[0] < best_overall[0]:
            best_overall = best_eps
    if refuting is not None:
        verdict = REFUTED_BY_DIRECTION
    elif worst_eps_residual <= tol_stat:
        verdict = STATIONARY
    else:
        verdict = INCONCLUSIVE
    residual, lam_best, branch, parts = best_overall
    return StationarityReport(
        point=(tuple(xi_bar.tolist()), tuple(x_bar.tolist())),
        lam=float(lam_best) if lam_best is not None else float("nan"),
        gamma=gamma,
        residual=float(worst_eps_residual),
        branch_id=int(branch) if branch is not None else -1,
        verdict=verdict,
        direction=tuple(refuting.tolist()) if refuting is not None else None,
        decomposition=tuple(tuple(p.tolist()) for p in parts)
        if verdict == STATIONARY else (),
        residual_table=tuple(table),
        flags=flags,
    )
