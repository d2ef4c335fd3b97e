#!/usr/bin/env python3
"""Residue-density comparison between uniform and adaptive sampling:
histograms of |kappa| after each of the first few epochs, as CSV."""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from adfsdca import SolverConfig, load_dataset, make_loss, run, synthetic_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data")
    ap.add_argument("--synthetic", default="800,80,0.15,1")
    ap.add_argument("--loss", default="quadratic", choices=["quadratic", "logistic"])
    ap.add_argument("--lambda", dest="lam", type=float, default=None)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--bins", type=int, default=50)
    ap.add_argument("--out", default="residue_out")
    args = ap.parse_args()

    if args.data:
        ds = load_dataset(args.data)
    else:
        n, d, density, seed = args.synthetic.split(",")
        ds = synthetic_dataset(int(n), int(d), float(density), int(seed))
    lam = args.lam if args.lam is not None else 1.0 / np.sqrt(ds.n)
    loss = make_loss(args.loss)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    snapshots = tuple(range(args.epochs + 1))
    results = {}
    for variant in ("dfsdca", "adfsdca"):
        cfg = SolverConfig(variant=variant, lam=lam, epochs=args.epochs, seed=args.seed, residue_epochs=snapshots)
        results[variant] = run(cfg, ds, loss)

    print(f"{'epoch':>5s} {'p90 dfsdca':>12s} {'p90 adfsdca':>12s}")
    for epoch in snapshots:
        p90 = {}
        for variant, result in results.items():
            kap = result.residue_snapshots[epoch]
            p90[variant] = np.percentile(kap, 90)
            top = kap.max() if kap.max() > 0 else 1.0
            edges = np.linspace(0.0, top, args.bins + 1)
            counts, _ = np.histogram(kap, bins=edges)
            lines = ["bin_lo,bin_hi,count"]
            lines += [f"{lo!r},{hi!r},{c}" for lo, hi, c in zip(edges[:-1], edges[1:], counts)]
            (out / f"residue_{variant}_epoch{epoch}.csv").write_text("\n".join(lines) + "\n")
        print(f"{epoch:5d} {p90['dfsdca']:12.4e} {p90['adfsdca']:12.4e}")
    print(f"histograms in {out}/")


if __name__ == "__main__":
    main()
