"""Descent and covering experiments on analytic manifolds.

    python3 scripts/theory_lab.py --seeds 20

Prints contraction ratios, noise-floor scaling, basin radii, covering slopes
and the covering-vs-descent cost table.
"""

import argparse

import numpy as np

from tpopt.families import AnalyticCurve, TorusFamily
from tpopt.riemannian import (basin_probe, covering_count, loglog_slope, measure_contraction,
                              noisy_trace, plateau_scaling, theory_noise, tradeoff_table)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kappas", type=float, nargs="+", default=[1.0, 2.0, 4.0])
    ap.add_argument("--ambient", type=int, default=16)
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    D = args.ambient

    print("kappa  sigma     max_ratio  plateau   doubled   ratio  basin")
    for kappa in args.kappas:
        curve = AnalyticCurve.small_circle(kappa, D)
        sigma = theory_noise(kappa, D)
        traces = [noisy_trace(curve, sigma, s, 0.5 / kappa, side=side)
                  for s in range(args.seeds) for side in (1.0, -1.0)]
        rep = measure_contraction(traces)
        ps = plateau_scaling(curve, sigma, range(args.seeds))
        basin = basin_probe(curve, np.linspace(0, 1.5, 7) / kappa).basin
        print(f"{kappa:5g}  {sigma:.5f}  {rep.max_ratio:.6f}   {ps['plateau']:.2e}  "
              f"{ps['plateau_doubled']:.2e}  {ps['ratio']:.3f}  {basin:.3f}")

    radii = [1.0, 0.5, 0.25, 0.1]
    for name, fam, budget in (("curve", AnalyticCurve.great_circle(D), 20000),
                              ("torus", TorusFamily(0.6, D), 40000)):
        counts = [covering_count(fam, r, budget).count for r in radii]
        print(f"{name}: N_r {counts} slope {loglog_slope(radii, counts):.3f}")

    print("r         N_r  iters  T_MF    T_TpopT")
    for e in tradeoff_table(AnalyticCurve.great_circle(D), [2.0 ** -j for j in range(0, 9)]):
        print(f"{e.radius:<9.5f} {e.covering:4d} {e.iterations:6d} {e.t_mf:7d} {e.t_tpopt:7d}")


if __name__ == "__main__":
    main()
