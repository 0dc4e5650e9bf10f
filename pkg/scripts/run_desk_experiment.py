"""Run the seeded desk pipeline and print a short summary.

    python3 scripts/run_desk_experiment.py --out runs/desk --seed 7

Writes the corpus, checkpoints, logs, scores, report and heatmaps under --out.
"""
import argparse
import csv
import json
import time
from pathlib import Path

import numpy as np

from stan.cli import main as stan


def _column(path, name):
    with open(path, newline="") as fh:
        return np.array([float(r[name]) for r in csv.DictReader(fh)])


def summarize_training(out: Path) -> None:
    pre = _column(out / "pretrain_log.csv", "heldout_l_pixel")
    steps = _column(out / "pretrain_log.csv", "step")
    print(f"pretrain: {int(steps[-1])} steps, held-out pixel loss {pre[0]:.3f} -> {pre[-1]:.3f} (min {pre.min():.3f})")
    for name in ("l_real", "l_pixel", "L_D"):
        v = _column(out / "train_log.csv", name)
        chunks = np.array_split(v, 4)
        print(f"adversarial {name:>7}: " + "  ".join(f"{c.mean():.3f}" for c in chunks) + "  (quarter means)")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--config")
    ap.add_argument("--skip-visualize", action="store_true")
    args = ap.parse_args()

    out = Path(args.out)
    data = out / "data"
    extra = ["--config", args.config] if args.config else []
    steps = [
        ["synth", "--seed", str(args.seed), "--out", str(data)],
        ["train", "--seed", str(args.seed), "--data", str(data), "--out", str(out), "-v"],
        ["score", "--seed", str(args.seed), "--data", str(data), "--out", str(out)],
        ["eval", "--data", str(data), "--out", str(out), "--mode", "event"],
    ]
    if not args.skip_visualize:
        steps.append(["visualize", "--data", str(data), "--out", str(out)])
    for argv in steps:
        t0 = time.perf_counter()
        code = stan(argv + extra)
        print(f"stan {argv[0]}: exit {code} in {time.perf_counter() - t0:.1f}s")
        if code:
            raise SystemExit(code)

    summarize_training(out)
    report = json.loads((out / "report.json").read_text())
    print("per-clip AUC:", {k: None if v is None else round(v, 4) for k, v in report["per_clip_auc"].items()})
    print("lambda_s range: %.4f .. %.4f" % (min(report["lambda_s"].values()), max(report["lambda_s"].values())))


if __name__ == "__main__":
    main()
