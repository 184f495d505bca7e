"""Desk-scale ablation matrix and positive-weight sweep on synthetic data (small encoder).

The four variants see identical batches; Dice per lesion is reported on the
test split. Numbers at this scale only exercise the protocol; they are not
comparable with full-dataset training.

    python scripts/run_ablation_desk.py --out runs/ablation_desk
"""

import argparse
from pathlib import Path

from lanet.config import ExperimentConfig, ModelVariant, OptimConfig, SegLossConfig
from lanet.data import make_synthetic_ddr
from lanet.training import alpha_sweep, run_ablation
from lanet.training.experiments import sweep_to_text


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", default="runs/ablation_desk")
    parser.add_argument("--epochs", type=int, default=20)
    parser.add_argument("--skip-sweep", action="store_true")
    args = parser.parse_args()
    out = Path(args.out)
    root = out / "data"
    if not root.exists():
        make_synthetic_ddr(root, seg_counts=(8, 4, 4), scr_counts=((2, 2),) * 3, size=80, seed=1)
    cfg = ExperimentConfig(
        name="ablation-desk", dataset="DDR-Seg", root=str(root), input_size=64, batch_size=4,
        seg_epochs=args.epochs, eval_every=5,
        variant=ModelVariant(backbone="tiny", pretrained=False),
        seg_optim=OptimConfig(name="adamw", lr=1e-3, weight_decay=0.0, schedule="fixed"),
        seg_loss=SegLossConfig(alpha=10.0, full_res_final=True),
    )
    report = run_ablation(cfg, out_dir=out / "ablation")
    print(report.to_text(), end="")
    if not args.skip_sweep:
        print(sweep_to_text(alpha_sweep(cfg, out_dir=out / "alpha_sweep")), end="")


if __name__ == "__main__":
    main()
