"""Level-by-level trace of the continuation past the existence threshold.

Prints sup u, its growth and the truncated energy differences d_k with the
levels k that count toward the divergence signal.
"""
import argparse
import os

from degsing.config import load_config
from degsing.discretization import build_mesh
from degsing.scenarios import continuation, threshold_problem

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=os.path.join(HERE, os.pardir, "configs", "threshold.cfg"))
    args = ap.parse_args()
    c = load_config(args.config)
    spec = threshold_problem(c)
    _, diag = continuation(c, spec, build_mesh(c["mesh.M"], c["mesh.grading"]))
    print(f"theta = {spec.theta!r}, amplitude = {spec.source.amplitude!r}")
    print("n,sup_u,growth,d_1,d_10,d_100,active")
    growth = [None] + diag.sup_growth()
    for lv, g in zip(diag.levels, growth):
        d = [lv.energy_diffs.get(k) for k in diag.energy_levels]
        cells = ["" if x is None else f"{x:.3e}" for x in d]
        print(f"{lv.n:g},{lv.sup_u:.4e},{'' if g is None else f'{g:.3f}'},{','.join(cells)},"
              f"{' '.join(f'{k:g}' for k in lv.active)}")
    print(f"divergence signal: {diag.diverged}, blow-up indicator: {diag.blowup_indicator()}")


if __name__ == "__main__":
    main()
