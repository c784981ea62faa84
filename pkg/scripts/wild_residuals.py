"""Distribution of the wild-part residual and of N(t,h) - N3(t,h) for several h.

    python scripts/wild_residuals.py --samples 300 --h 1e-6 1e-8 1e-10
"""
import argparse
import math
import warnings

import numpy as np

from unimodal_clt.clt import sample_parameters
from unimodal_clt.maps import TentFamily
from unimodal_clt.quantities import transversality_J
from unimodal_clt.symbolic import n_of
from unimodal_clt.transfer import build_ulam, invariant_density, saltus_weights
from unimodal_clt.wild import birkhoff_surrogate, n3_estimate, wild_integral


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=300)
    ap.add_argument("--h", type=float, nargs="+", default=[1e-6, 1e-8, 1e-10])
    ap.add_argument("--n", type=int, default=2**14)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    fam = TentFamily()
    ts = sample_parameters(args.seed, args.samples, 1.5, 1.9 - max(args.h))
    prepared = []
    for t in ts:
        d = invariant_density(build_ulam(fam, t, args.n))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            J = transversality_J(fam, t)
        prepared.append((t, d, saltus_weights(fam, t, d), J))
    print(f"{'h':>8} {'env':>6} {'median|res|':>11} {'p90|res|':>9} {'max|res|':>9} {'median N-N3':>11} {'frac<=5logN':>11}")
    for h in args.h:
        res, gap, ok = [], [], 0
        for t, d, s, J in prepared:
            N, n3 = n_of(fam, t, h), n3_estimate(fam, t, h)
            w = wild_integral(fam, t, h, "identity", d, saltus=s)
            sur = birkhoff_surrogate(fam, t, n3, "identity", d) if n3 else 0.0
            res.append(abs(w / (s.s1 * J) - sur))
            gap.append(N - n3)
            ok += N - n3 <= 5 * math.log(N)
        res = np.array(res)
        env = 3 * math.log(math.log(1 / h)) + 10
        print(f"{h:8.0e} {env:6.2f} {np.median(res):11.4f} {np.quantile(res, 0.9):9.4f} {res.max():9.4f} "
              f"{np.median(gap):11.1f} {ok / len(ts):11.3f}")


if __name__ == "__main__":
    main()
