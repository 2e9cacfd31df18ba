"""Round-trip error of Phi^-1(Phi(u)) in double and extended precision.

For theta > 1 Phi saturates at 1/(theta-1), so the inverse amplifies the
rounding of v by (1+u)^theta v / u.
"""
import argparse

import numpy as np

from degsing.scalar import phi_forward, phi_inverse


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--thetas", type=float, nargs="+", default=[0.0, 0.3, 1.0, 1.3, 1.7, 2.0])
    ap.add_argument("--umax", type=float, default=1e6)
    args = ap.parse_args()
    print("theta,dtype,max_rel_error,frac_above_1e-12,eps_x_conditioning")
    for theta in args.thetas:
        for dtype in (np.float64, np.longdouble):
            u = np.concatenate([[0.0], np.geomspace(1e-12, args.umax, 2000)]).astype(dtype)
            v = phi_forward(theta, u)
            err = np.abs(phi_inverse(theta, v) - u) / np.maximum(u, 1e-300)
            cond = 1.0 + (1.0 + u) ** theta * v / np.maximum(u, 1e-300)
            bound = np.max(np.finfo(dtype).eps * cond)
            print(f"{theta:g},{np.dtype(dtype).name},{float(np.max(err)):.3e},"
                  f"{float(np.mean(err > 1e-12)):.4f},{float(bound):.3e}")


if __name__ == "__main__":
    main()
