"""Full-scale protocol on a real 47-class sign-crop tree.

Expects ``<root>/<class_name>/<images>`` with 47 class directories. Images
are resized to 128x128, split 80/20 per class, trained for 10 epochs with
Adam (lr 1e-3, batch 32) and evaluated with the default FGSM and PGD
epsilon grids (PGD: 10 steps of 0.02, random start).

    python3 scripts/full_scale.py /data/lisa_crops --workdir runs/full
"""

import argparse
import sys
from pathlib import Path

from signrobust import cli
from signrobust import eval as ev


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("data")
    ap.add_argument("--workdir", default="runs/full")
    ap.add_argument("--epochs", default="10")
    args = ap.parse_args()

    work = Path(args.workdir)
    work.mkdir(parents=True, exist_ok=True)
    common = ["--data", args.data, "--side", "128", "--classes", "47"]
    model = str(work / "model.gsgn")
    steps = [["train", *common, "--epochs", args.epochs, "--out", model]]
    for kind in ev.ATTACKS:
        steps.append(["evaluate", "--model", model, *common, "--attack", kind,
                      "--out", str(work / f"{kind}.csv")])
        steps.append(["visualize", "--model", model, *common, "--attack", kind,
                      "--out", str(work / f"grid_{kind}.ppm")])
    for argv in steps:
        print("$ signrobust " + " ".join(argv), flush=True)
        if cli.main(argv) != 0:
            sys.exit(1)
    for kind in ev.ATTACKS:
        print(f"\n{kind.upper()}")
        for e, acc, n in ev.read_report_csv(work / f"{kind}.csv"):
            print(f"  eps={e:.2f}  accuracy={acc:6.2f}%  (n={n})")


if __name__ == "__main__":
    main()
