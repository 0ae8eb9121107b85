#!/usr/bin/env python3
"""Sweep the certified constants of a problem over growing windows.

For each window radius rho the script estimates the error-bound constant
gamma, the Lipschitz constant of the bifunction and the openness rate of
its z-slices, then cross-checks the bound dist(x, E(xi)) <= merit/gamma
with a 10% safety margin.
"""

import argparse

from vep import diagnostics as dg
from vep import problem as pb


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("problem", nargs="?", default="example:paper")
    ap.add_argument("--xi-bar", type=float, default=0.0)
    ap.add_argument("--radii", type=float, nargs="+",
                    default=[0.25, 0.5, 1.0, 1.5])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    prob = pb.load(args.problem)
    lf = dg.estimate_lipschitz_f(prob, seed=args.seed)
    alpha = dg.estimate_openness_rate(prob, seed=args.seed)
    print(f"problem: {prob.name}")
    print(f"lipschitz constant of f in (xi, x): {lf:.6f}")
    print(f"openness rate of the z-slices:      {alpha:.6f}"
          f"   (lf < alpha: {lf < alpha})")
    print()
    print(f"{'rho':>6} {'gamma':>10} {'verdict':>22} {'bound@0.9g':>22}")
    spec = dg.SampleSpec(grid_shape=(21, 21), n_random=80, seed=args.seed)
    for rho in args.radii:
        cert = dg.estimate_gamma(prob, [args.xi_bar], rho, spec)
        if cert.verdict == dg.REFUTED:
            print(f"{rho:6.2f} {cert.constant:10.6f} {cert.verdict:>22} "
                  f"{'-':>22}")
            continue
        eb = dg.verify_error_bound(prob, [args.xi_bar], rho,
                                   0.9 * cert.constant, x_check=(-4, 4, 81))
        print(f"{rho:6.2f} {cert.constant:10.6f} {cert.verdict:>22} "
              f"{eb.verdict:>22}")


if __name__ == "__main__":
    main()
