"""Overfit sanity run: the full residual-50 model on four synthetic images at 64 x 64.

Trains 200 optimizer steps and reports the exudate Dice on the training images.

    python scripts/run_overfit.py --out runs/overfit
"""

import argparse
import tempfile
import time
from pathlib import Path

from lanet.config import AugmentConfig, ExperimentConfig, ModelVariant, OptimConfig, SegLossConfig
from lanet.data import make_synthetic_ddr
from lanet.training import train_segmentation


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default=None)
    parser.add_argument("--steps", type=int, default=200)
    parser.add_argument("--alpha", type=float, default=1.0)
    parser.add_argument("--lr", type=float, default=1e-3)
    args = parser.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        root = make_synthetic_ddr(Path(tmp) / "data", seg_counts=(4, 2, 2), scr_counts=((2, 2),) * 3, size=80, seed=0)
        cfg = ExperimentConfig(
            name="overfit", dataset="DDR-Seg", root=str(root), input_size=64, batch_size=4,
            seg_epochs=args.steps, max_steps=args.steps, eval_split="train", eval_every=50,
            variant=ModelVariant(backbone="resnet50", pretrained=False),
            augment=AugmentConfig(enabled=False),
            seg_optim=OptimConfig(name="adamw", lr=args.lr, weight_decay=0.0, schedule="poly"),
            seg_loss=SegLossConfig(alpha=args.alpha, full_res_final=True),
        )
        start = time.perf_counter()
        run = train_segmentation(cfg, out_dir=args.out)
        elapsed = time.perf_counter() - start
    for rec in run.history:
        if rec["kind"] == "epoch" and "dice" in rec:
            print(f"epoch {rec['epoch'] + 1:4d}  loss {rec['loss']:.4f}  EX Dice {rec['dice']['EX']:.3f}")
    print(f"final EX Dice {run.best_report.per_lesion['EX'].dice:.3f} in {elapsed:.0f}s")


if __name__ == "__main__":
    main()
