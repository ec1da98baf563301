"""Getoor convergence table for single-exponent operators on (-1, 1).

Solves A_s u = M 1 on a mesh ladder and compares with (1 - x^2)^s / Gamma(2s + 1).

    python3 scripts/convergence_study.py --s 0.25 0.5 0.75 --ladder 64 128 256 512
"""
import argparse
import math

import numpy as np

from musolve.assembly import DomainMesh, assemble_fractional_stiffness, assemble_mass
from musolve.pipeline import getoor_solution


def l2_error(s: float, n: int) -> tuple[float, float]:
    mesh = DomainMesh(-1.0, 1.0, n)
    A, M = assemble_fractional_stiffness(mesh, s), assemble_mass(mesh)
    u = np.linalg.solve(A, M @ np.ones(n))
    e = u - getoor_solution(mesh.nodes, -1.0, 1.0, s)
    return mesh.h, math.sqrt(e @ M @ e)


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--s", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    p.add_argument("--ladder", type=int, nargs="+", default=[64, 128, 256, 512])
    args = p.parse_args()
    print(f"{'s':>5} {'n':>5} {'h':>10} {'L2 error':>12} {'rate':>6}")
    for s in args.s:
        prev = None
        for n in args.ladder:
            h, err = l2_error(s, n)
            rate = "" if prev is None else f"{math.log(prev[1] / err) / math.log(prev[0] / h):6.3f}"
            print(f"{s:5.2f} {n:5d} {h:10.3e} {err:12.4e} {rate:>6}")
            prev = (h, err)
        # observed rates track min(s + 1/2, 1), set by the boundary singularity


if __name__ == "__main__":
    main()
