"""Error of the exact radial instance against mesh size and final truncation level."""
import argparse

import numpy as np

from degsing.discretization import build_mesh
from degsing.oracles import exact_radial_solution
from degsing.solver import solve_continuation


def rel_error(field, ex, r_min=0.1):
    sel = (field.r >= r_min) & (field.r < 1)
    return float(np.max(np.abs(field.values[sel] - ex(field.r[sel])) / ex(field.r[sel])))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--meshes", type=int, nargs="+", default=[512, 1024, 2048, 4096, 8192])
    ap.add_argument("--tops", type=int, nargs="+", default=[16, 20, 24, 28, 32],
                    help="final level exponents j in n = 2^j")
    ap.add_argument("--grading", type=float, default=2.0)
    args = ap.parse_args()
    ex = exact_radial_solution(3, 0.5, 0.5, 0.5)
    print("M," + ",".join(f"n=2^{j}" for j in args.tops))
    for M in args.meshes:
        mesh = build_mesh(M, args.grading)
        errs = []
        for j in args.tops:
            fld, _ = solve_continuation(ex.problem(), mesh, [2.0 ** i for i in range(4, j + 1)],
                                        raise_on_divergence=False, stop_when_converged=False)
            errs.append(rel_error(fld, ex))
        print(f"{M}," + ",".join(f"{e:.4e}" for e in errs))


if __name__ == "__main__":
    main()
