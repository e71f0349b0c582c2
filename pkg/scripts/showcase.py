"""QoI-aware compression vs the uniform-bound bisection baseline on every fixture.

    python3 scripts/showcase.py [--qoi x^2] [--eb-rel 1e-2] [--qoi-tol-rel 1e-3]
"""

import argparse

from qoipress import Bounds, baseline_search, compress_fields
from qoipress.fixtures import FIELDS, catalog, make_fields, seed_from_env


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--qoi", default="x^2", choices=list(catalog()))
    ap.add_argument("--eb-rel", type=float, default=1e-2)
    ap.add_argument("--qoi-tol-rel", type=float, default=1e-3)
    args = ap.parse_args()
    spec = catalog()[args.qoi]
    bounds = Bounds(eb_rel=args.eb_rel, tau_rel=args.qoi_tol_rel)
    print(f"{'fixture':<10} {'CR':>8} {'CR base':>8} {'gain':>6} {'probes':>6} {'corr':>7}")
    for name in FIELDS:
        fields = make_fields(name, spec.arity, seed=seed_from_env())
        nbytes = sum(f.nbytes for f in fields)
        res = compress_fields(fields, spec, bounds)
        base = baseline_search(fields, spec, bounds)
        cr = nbytes / res.archive_bytes
        cr_b = base.cr(nbytes)
        gain = f"{cr / cr_b:6.2f}" if cr_b else "     -"
        print(f"{name:<10} {cr:8.2f} {cr_b or float('nan'):8.2f} {gain} {base.probes:6d} {res.n_corrections:7d}")


if __name__ == "__main__":
    main()
