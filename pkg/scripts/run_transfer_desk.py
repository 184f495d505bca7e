"""Screening convergence from a segmentation checkpoint versus from scratch (desk scale).

Prints validation accuracy per epoch for both initialisations and the first
epoch at which each reaches the accuracy threshold.

    python scripts/run_transfer_desk.py --seeds 0 1 2
"""

import argparse
import dataclasses
import tempfile
from pathlib import Path

from lanet.config import ExperimentConfig, ModelVariant, OptimConfig, SegLossConfig
from lanet.data import build_manifest, make_synthetic_ddr
from lanet.training import epochs_to_accuracy, finetune_screening, train_segmentation


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0])
    parser.add_argument("--epochs", type=int, default=8)
    parser.add_argument("--threshold", type=float, default=0.75)
    args = parser.parse_args()
    with tempfile.TemporaryDirectory() as tmp:
        root = make_synthetic_ddr(Path(tmp), seg_counts=(8, 4, 4), scr_counts=((12, 12), (8, 8), (8, 8)),
                                  size=80, seed=1)
        for seed in args.seeds:
            cfg = ExperimentConfig(
                dataset="DDR-Seg", root=str(root), input_size=64, batch_size=4, seed=seed,
                seg_epochs=15, scr_epochs=args.epochs, scratch_epochs=args.epochs,
                variant=ModelVariant(backbone="tiny", pretrained=False),
                seg_optim=OptimConfig(name="adamw", lr=1e-3, weight_decay=0.0, schedule="fixed"),
                seg_loss=SegLossConfig(alpha=1.0, full_res_final=True),
            )
            seg = train_segmentation(cfg, build_manifest(root, "DDR-Seg"))
            scr_cfg = dataclasses.replace(cfg, dataset="DDR-Scr")
            manifest = build_manifest(root, "DDR-Scr")
            for name, ckpt in (("pretrained", seg.best), ("scratch", None)):
                run = finetune_screening(scr_cfg, ckpt, manifest)
                accs = [r["val_accuracy"] for r in run.history if r["kind"] == "epoch"]
                first = epochs_to_accuracy(run.history, args.threshold)
                print(f"seed {seed} {name:10s} epochs-to-{args.threshold}: {first}  acc: "
                      + " ".join(f"{a:.2f}" for a in accs))


if __name__ == "__main__":
    main()
