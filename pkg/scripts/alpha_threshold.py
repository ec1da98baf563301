"""Bisect the largest alpha for which delta_1 - alpha delta_s0 keeps c0_gamma < 1.

    python3 scripts/alpha_threshold.py --s0 0.25 --n 256
"""
import argparse
import math

from musolve.assembly import DomainMesh, StiffnessFamily, assemble_operator
from musolve.spectral import coercivity_certificate, solve_spectrum


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--s0", type=float, default=0.25, help="exponent of the negative atom")
    p.add_argument("--s-bar", type=float, default=0.5)
    p.add_argument("--n", type=int, nargs="+", default=[128, 256, 512])
    p.add_argument("--iters", type=int, default=60)
    args = p.parse_args()

    for n in args.n:
        mesh = DomainMesh(0.0, math.pi, n)
        fam = StiffnessFamily(mesh)

        def op(alpha):
            return assemble_operator(mesh, [(1.0, 1.0), (args.s0, -alpha)], args.s_bar, family=fam)

        lo, hi = 0.0, 1.0
        while coercivity_certificate(op(hi)).passes:
            hi *= 2
        for _ in range(args.iters):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if coercivity_certificate(op(mid)).passes else (lo, mid)
        lam1 = solve_spectrum(op(lo), 1).eigenvalues[0]
        print(f"n={n:4d}  alpha*={lo:.10f}  lambda_1(alpha*)={lam1:.6g}")


if __name__ == "__main__":
    main()
