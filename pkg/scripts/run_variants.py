#!/usr/bin/env python3
"""Compare solver variants on one dataset: epochs and wall time to target
suboptimality, one trace CSV per run plus a summary table on stdout."""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from adfsdca import SolverConfig, load_dataset, make_loss, run, run_reference, synthetic_dataset, trace_to_csv

VARIANTS = [
    ("dfsdca", {}),
    ("adfsdca", {}),
    ("adfsdca_plus", {"shrink": 10.0}),
    ("adfsdca_plus", {"shrink": 20.0}),
    ("minibatch", {"batch": 4}),
]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", help="LIBSVM file; synthetic instance when omitted")
    ap.add_argument("--synthetic", default="800,80,0.15,1", help="n,d,density,seed")
    ap.add_argument("--loss", default="quadratic", choices=["quadratic", "logistic"])
    ap.add_argument("--lambda", dest="lam", type=float, default=None)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seeds", type=int, default=4)
    ap.add_argument("--out", default="variants_out")
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

    print(f"n={ds.n} d={ds.d} loss={loss.kind} lambda={lam:.5g}")
    reference = run_reference(ds, loss, lam)
    print(f"reference primal {reference.primal:.12g} (grad_inf {reference.grad_inf:.2e})")

    print(f"{'variant':24s} {'med ep@1e-4':>12s} {'med ep@1e-6':>12s} {'sec/run':>9s}")
    for variant, kw in VARIANTS:
        label = variant + "".join(f"_{k}{v:g}" for k, v in kw.items())
        e4, e6, secs = [], [], []
        for seed in range(args.seeds):
            cfg = SolverConfig(variant=variant, lam=lam, epochs=args.epochs, seed=seed, **kw)
            t0 = time.perf_counter()
            result = run(cfg, ds, loss, reference)
            secs.append(time.perf_counter() - t0)
            e4.append(result.epochs_to(1e-4))
            e6.append(result.epochs_to(1e-6))
            (out / f"{label}_seed{seed}.csv").write_text(trace_to_csv(result.trace))
        med = lambda xs: np.median([x for x in xs if x is not None]) if any(x is not None for x in xs) else float("nan")
        print(f"{label:24s} {med(e4):12.1f} {med(e6):12.1f} {np.mean(secs):9.2f}")
    print(f"traces in {out}/")


if __name__ == "__main__":
    main()
