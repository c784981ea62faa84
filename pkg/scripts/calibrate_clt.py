"""Surrogate-CLT statistics along an orbit-length schedule.

Used to calibrate the frozen finite-N thresholds: prints KS distance,
mean, variance and the mean's standard error for each N.

    python scripts/calibrate_clt.py --samples 5000 --N 100 500 2000 8000
"""
import argparse
import math
import time

from unimodal_clt.clt import CltConfig, resolve_threads, run_surrogate_clt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=5000)
    ap.add_argument("--N", type=int, nargs="+", default=[100, 500, 2000, 8000])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--observable", default="identity")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    print(f"{'N':>6} {'KS':>8} {'mean':>8} {'se':>7} {'var':>7} {'excl':>5} {'sec':>6}")
    for N in args.N:
        cfg = CltConfig(samples=args.samples, N=N, seed=args.seed, observable=args.observable,
                        threads=resolve_threads(args.threads))
        t0 = time.perf_counter()
        _, st = run_surrogate_clt(cfg)
        se = math.sqrt(st.variance / st.count)
        print(f"{N:>6} {st.ks:8.4f} {st.mean:8.4f} {se:7.4f} {st.variance:7.4f} {st.excluded:5d} {time.perf_counter() - t0:6.1f}")


if __name__ == "__main__":
    main()
