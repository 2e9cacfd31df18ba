"""Run every shipped config (sweeps included) and print one status line per run."""
import argparse
import glob
import os

from degsing.cli import run_experiment, run_sweep
from degsing.config import load_config

HERE = os.path.dirname(os.path.abspath(__file__))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--configs", default=os.path.join(HERE, os.pardir, "configs"))
    ap.add_argument("--out", default="runs")
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    for path in sorted(glob.glob(os.path.join(args.configs, "*.cfg"))):
        cfg = load_config(path)
        name = os.path.basename(path)
        if cfg.sweep:
            rows, sweep_dir = run_sweep(cfg, args.out, workers=args.workers)
            passed = sum(r["status"] == "pass" for r in rows)
            print(f"{name:28s} sweep {passed}/{len(rows)} pass  {sweep_dir}")
        else:
            rec = run_experiment(cfg, args.out)
            print(f"{name:28s} status {rec.status}  failed {rec.failed}  {rec.run_dir}")


if __name__ == "__main__":
    main()
