"""Run the pair search for a range of lambda_bar and compare found vs predicted pairs.

    python3 scripts/multiplicity_demo.py --lambda0 -7 --lambda-bar 6 10 14 --n 127
"""
import argparse
import math

from musolve.assembly import DomainMesh, assemble_operator
from musolve.minimax import Nonlinearity, find_pairs, lambda_window
from musolve.spectral import solve_spectrum


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--lambda0", type=float, default=-7.0)
    p.add_argument("--lambda-bar", type=float, nargs="+", default=[6.0, 10.0, 14.0])
    p.add_argument("--kind", default="rational_decay", choices=["rational_decay", "gaussian_decay"])
    p.add_argument("--n", type=int, default=127)
    p.add_argument("--budget", type=int, default=10_000)
    args = p.parse_args()

    op = assemble_operator(DomainMesh(0.0, math.pi, args.n), [(1.0, 1.0)], 0.5)
    spec = solve_spectrum(op, 12)
    for lb in args.lambda_bar:
        nl = Nonlinearity(args.kind, args.lambda0, lb)
        w = lambda_window(spec, nl)
        if not w.present:
            print(f"lambda_bar={lb:g}: empty window ({w.lower:g}, {w.upper:g})")
            continue
        rep = find_pairs(op, nl, spec, w, budget=args.budget)
        energies = sorted({round(s.energy, 8) for s in rep.solutions})
        band = f"[{rep.band.c0:.4g}, {rep.band.c_inf:.4g}]" if rep.band else "n/a"
        print(
            f"lambda_bar={lb:g}: window [{w.h},{w.k}] predicted={rep.pairs_predicted} "
            f"found={rep.pairs_found} energies={energies} band={band}"
        )


if __name__ == "__main__":
    main()
