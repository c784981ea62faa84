"""Tabulate L, S, J, sigma, Psi and R over a parameter grid (CSV on stdout).

    python scripts/psi_sweep.py --tmin 1.45 --tmax 2.0 --points 111 > psi.csv
"""
import argparse
import sys
import warnings

import numpy as np

from unimodal_clt.maps import TentFamily
from unimodal_clt.quantities import QuantityConfig, dyn_quantities


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--tmin", type=float, default=1.45)
    ap.add_argument("--tmax", type=float, default=2.0)
    ap.add_argument("--points", type=int, default=111)
    ap.add_argument("--n", type=int, default=2**14)
    ap.add_argument("--observable", default="identity")
    args = ap.parse_args()
    fam = TentFamily()
    cfg = QuantityConfig(n=args.n)
    out = sys.stdout
    out.write("t,L,S,J,sigma,psi,response\n")
    for t in np.linspace(args.tmin, args.tmax, args.points):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            q = dyn_quantities(fam, float(t), args.observable, cfg)
        out.write(",".join(f"{v:.17g}" for v in (q.t, q.L, q.S, q.J, q.sigma, q.psi, q.response)) + "\n")


if __name__ == "__main__":
    main()
