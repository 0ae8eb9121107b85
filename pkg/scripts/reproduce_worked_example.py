#!/usr/bin/env python3
"""Reproduce every number of the built-in worked instance end to end.

Prints the merit values, the solution map, the subgradient and coderivative
sets, the error-bound constant, the stationarity identity at the solution
and the penalization solve, each next to its expected closed-form value.
"""

import numpy as np

from vep import diagnostics as dg
from vep import merit as mr
from vep import problem as pb
from vep import solver as sv
from vep import subdiff as sd


def main():
    prob = pb.load("example:paper")
    print(f"problem: {prob.name}  (p={prob.p}, n={prob.n}, m={prob.m})")

    print("\n-- merit values (closed form: nu = max(|xi|+1-x, 0)) --")
    for t, xv in ((0.0, 0.0), (0.0, 1.0), (0.0, 2.0), (1.0, 0.0), (0.5, -1.0)):
        me = mr.eval_merit(prob, [t], [xv])
        closed = max(abs(t) + 1 - xv, 0.0)
        print(f"  nu({t:+.1f},{xv:+.1f}) = {me.nu:.12g}   expected {closed:.12g}"
              f"   (mu = {me.mu:.12g}, method {me.method})")

    print("\n-- solution map E(xi) = {|xi|+1} --")
    for t in (-1.0, 0.0, 0.5):
        sols = pb.oracle_solutions(prob, [t])
        print(f"  E({t:+.1f}) ~ {np.round(sols.ravel(), 6).tolist()}"
              f"   expected [{abs(t)+1}]")

    print("\n-- subgradient of the excess at the solution point --")
    full = sd.nu_subgradient_full(prob, [0.0], [1.0])
    verts = sorted(tuple(float(v) for v in p) for p in np.round(full.body.points, 9))
    print(f"  vertices: {verts}")
    print("  expected: [(-1.0, -1.0), (0.0, 0.0), (1.0, -1.0)]")

    print("\n-- coderivative of the feasible-set map at (0, 1) --")
    for v in (-1.0, -0.5, 0.0, 0.5):
        img = sd.coderivative_K(prob, [0.0], [1.0], [v])
        pts = sorted(round(float(p[0]), 9) for p in img.points)
        print(f"  D*K(0|1)({v:+.1f}) = {pts if pts else 'empty'}")

    print("\n-- error-bound constant over xi in [-1, 1] --")
    cert = dg.estimate_gamma(prob, [0.0], 1.0)
    print(f"  gamma estimate = {cert.constant:.9f}  ({cert.verdict})")
    eb = dg.verify_error_bound(prob, [0.0], 1.0, 0.9, x_check=(-4, 4, 161))
    print(f"  bound with gamma = 0.9: {eb.verdict}")

    print("\n-- stationarity at the solution (lambda = gamma = 1/2) --")
    rep = sv.check_stationarity_general(prob, [0.0], [1.0], [0.5], gamma=0.5)
    print(f"  verdict = {rep.verdict}, residual = {rep.residual:.3e}")
    print(f"  decomposition: {[[float(v) for v in np.round(p, 9)] for p in rep.decomposition]}")
    print("  reference identity: (0,2) + (0,0) + (0,-1) + (0,-1) = 0")

    print("\n-- stationarity off the solution at (0.5, 1.5) --")
    rep = sv.check_stationarity_general(prob, [0.5], [1.5], None, gamma=0.5)
    print(f"  verdict = {rep.verdict}, residual = {rep.residual:.3e}, "
          f"lambda = {rep.lam}")
    print("  (the inclusion admits a decomposition once lambda/gamma >= 2,"
          " so no direction refutes it for every penalty weight)")

    print("\n-- penalization solve from 5 random starts in [-2, 2]^2 --")
    rng = np.random.default_rng(0)
    starts = [(rng.uniform(-2, 2, 1), rng.uniform(-2, 2, 1)) for _ in range(5)]
    (xi_b, x_b), trace = sv.solve_penalized(prob, sv.PenaltyConfig(), starts)
    print(f"  incumbent = ({xi_b[0]:.6f}, {x_b[0]:.6f}),"
          f" stages used: {sorted({t.lam for t in trace})}")
    print("  expected minimizer: (0, 1)")


if __name__ == "__main__":
    main()
