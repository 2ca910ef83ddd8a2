#!/usr/bin/env python3
"""Sweep the L^p density bound: estimated norm vs a-priori bound per (p, t-s).

Usage: python scripts/density_bound_study.py [--field translate|ou_linear]
       [--trajectories N] [--seed S]
"""

import argparse

from flowlab.coefficients import builtin_coefficients
from flowlab.density import lp_norm_estimate, run_density_ensemble, theorem_bound_rhs
from flowlab.errors import BoundUnavailableError
from flowlab.gaussian import GaussianQuadrature


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--field", default="translate", choices=["translate", "ou_linear"])
    ap.add_argument("--trajectories", type=int, default=50_000)
    ap.add_argument("--dt", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--threads", type=int, default=4)
    args = ap.parse_args()

    field = builtin_coefficients(args.field, d=1)
    quad = GaussianQuadrature.gauss_hermite(1, 64)

    print(f"field={field.name}  n={args.trajectories}  dt={args.dt}  seed={args.seed}")
    print(f"{'t-s':>6} {'p':>4} {'norm est':>10} {'stderr':>9} {'bound':>10} {'status':>10}")
    for tau in (0.05, 0.1, 0.25):
        _, rec = run_density_ensemble(
            field, 0.0, tau, ("gaussian", args.trajectories), args.dt, args.seed,
            threads=args.threads,
        )
        for p in (1.5, 2.0, 3.0):
            est = lp_norm_estimate(rec, p)
            try:
                bound = theorem_bound_rhs(field, 0.0, tau, p, quad)
            except BoundUnavailableError:
                print(f"{tau:>6} {p:>4} {est.value:>10.5f} {est.stderr:>9.5f} {'—':>10} {'divergent':>10}")
                continue
            ok = est.value <= bound + 3 * est.stderr
            print(f"{tau:>6} {p:>4} {est.value:>10.5f} {est.stderr:>9.5f} {bound:>10.5f} "
                  f"{'ok' if ok else 'VIOLATED':>10}")


if __name__ == "__main__":
    main()
