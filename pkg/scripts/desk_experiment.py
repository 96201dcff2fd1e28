"""Desk-scale robustness experiment on the synthetic sign fixture.

Trains the CNN, sweeps FGSM and PGD over epsilon and writes attack grids,
then prints the two accuracy tables. Everything lands in ``--workdir``.

    python3 scripts/desk_experiment.py --workdir runs/desk
"""

import argparse
import os
import sys
import time
from pathlib import Path

from signrobust import cli
from signrobust import eval as ev

EPS = "0,0.05,0.1,0.2,0.3"
VIS_EPS = "0,0.1,0.3,0.6"


def run(argv):
    print("$ signrobust " + " ".join(argv), flush=True)
    if cli.main(argv) != 0:
        sys.exit(f"command failed: {argv}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--workdir", default="runs/desk")
    ap.add_argument("--seed", default="42")
    ap.add_argument("--epochs", default="10")
    args = ap.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    os.chdir(work)
    start = time.perf_counter()
    run(["train", "--synth", "classes=4", "per-class=200", "--side", "32", "--seed", args.seed,
         "--epochs", args.epochs, "--out", "model.gsgn"])
    for kind in ev.ATTACKS:
        run(["evaluate", "--model", "model.gsgn", "--synth-test", "--seed", args.seed,
             "--attack", kind, "--eps", EPS, "--out", f"{kind}.csv"])
        run(["visualize", "--model", "model.gsgn", "--synth-test", "--seed", args.seed,
             "--attack", kind, "--eps", VIS_EPS, "--out", f"grid_{kind}.ppm"])
    elapsed = time.perf_counter() - start

    clean = cli.read_manifest("model.gsgn.manifest")["clean_test_accuracy"]
    print(f"\nclean test accuracy: {clean}%   wall time: {elapsed:.0f}s")
    fg = ev.read_report_csv("fgsm.csv")
    pg = ev.read_report_csv("pgd.csv")
    print(f"{'epsilon':>8} {'FGSM %':>8} {'PGD %':>8}")
    for (e, a, _), (_, b, _) in zip(fg, pg):
        print(f"{e:8.2f} {a:8.2f} {b:8.2f}")


if __name__ == "__main__":
    main()
