"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are repeated
in the "acceptance criteria" section of the terminal summary.
"""

import dataclasses
import time

import numpy as np
import pytest
import torch

from lanet.config import (
    AugmentConfig,
    ExperimentConfig,
    ModelVariant,
    OptimConfig,
    SegLossConfig,
    SmoothingConfig,
)
from lanet.data import build_manifest, make_synthetic_ddr
from lanet.losses import screening_ce, smooth_labels, weighted_bce
from lanet.metrics import auc, average_precision, dice_single, map_score
from lanet.model import (
    Checkpoint,
    FeatureFusionBlock,
    FeaturePreserveBlock,
    HeadAttention,
    LANet,
    LesionAwareModule,
    load_weights,
)
from lanet.training import build_screening_model, epochs_to_accuracy, finetune_screening, train_segmentation
from oracles import (
    ap_bruteforce,
    auc_pairs,
    central_difference_grad,
    dice_counts,
    module_grad_error,
    softmax_dot_ce,
    weighted_bce_loop,
)


def test_01_loss_oracle_equivalence(acceptance):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        h, w = rng.integers(1, 9, size=2)
        pred = rng.random((h, w))
        pred[rng.random((h, w)) < 0.05] = 0.0  # exercise the clamp
        gt = (rng.random((h, w)) < rng.uniform(0.05, 0.5)).astype(float)
        alpha = float(rng.choice([1.0, 5.0, 10.0, 15.0]))
        ours = weighted_bce(torch.tensor(pred, dtype=torch.float64), torch.tensor(gt, dtype=torch.float64),
                            SegLossConfig(alpha=alpha)).item()
        worst = max(worst, abs(ours - weighted_bce_loop(pred, gt, alpha)))
    assert acceptance(1, "weighted BCE matches per-pixel loop on 50 maps", worst <= 1e-12, f"max |diff| {worst:.1e}")


def test_02_gradient_checks(acceptance):
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    torch.manual_seed(0)
    errors = {
        "LAM": module_grad_error(LesionAwareModule(8, 8), [rng.normal(size=(2, 8, 6, 6))]),
        "FPB": module_grad_error(FeaturePreserveBlock(8, 8, 8),
                                 [rng.normal(size=(2, 8, 2, 2)), rng.normal(size=(2, 8, 4, 4))]),
        "FFB": module_grad_error(FeatureFusionBlock(4, 8, 8),
                                 [rng.normal(size=(2, 4, 8, 8)), rng.normal(size=(2, 8, 4, 4)),
                                  rng.uniform(0.1, 0.9, size=(2, 8))]),
        "HAM": module_grad_error(HeadAttention(8, 8), [rng.normal(size=(2, 8, 6, 6))]),
    }
    pred = rng.uniform(0.05, 0.95, (6, 6))
    gt = (rng.random((6, 6)) < 0.3).astype(float)
    x = torch.tensor(pred, requires_grad=True)
    weighted_bce(x, torch.tensor(gt), SegLossConfig(alpha=10)).backward()
    fd = central_difference_grad(lambda p: weighted_bce_loop(p, gt, 10), pred)
    errors["weighted_bce"] = float(np.linalg.norm(x.grad.numpy() - fd) / np.linalg.norm(fd))
    logits0, target = np.array([0.7, -0.4]), [0.1, 0.9]
    z = torch.tensor(logits0[None], requires_grad=True)
    screening_ce(z, torch.tensor([target], dtype=torch.float64)).backward()
    fd = central_difference_grad(lambda v: softmax_dot_ce(v, target), logits0)
    errors["screening_ce"] = float(np.linalg.norm(z.grad.numpy()[0] - fd) / np.linalg.norm(fd))
    elapsed = time.perf_counter() - start
    ok = max(errors.values()) < 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errors.items()) + f"; {elapsed:.1f}s"
    assert acceptance(2, "analytic gradients match central differences", ok, detail)


def test_03_metric_oracles(acceptance):
    rng = np.random.default_rng(99)
    ap_ok = auc_ok = True
    for _ in range(100):
        n = int(rng.integers(2, 80))
        scores = rng.integers(0, int(rng.integers(2, 20)), size=n) / 20.0
        labels = rng.random(n) < rng.uniform(0.1, 0.9)
        labels[0], labels[-1] = True, False
        ap_ok &= average_precision(scores, labels) == ap_bruteforce(scores, labels)
        auc_ok &= abs(auc(scores, labels) - auc_pairs(scores, labels)) <= 1e-12
    dice_ok = dice_single(np.zeros((4, 4)), np.zeros((4, 4))) == 1.0
    for _ in range(100):
        p = rng.random((5, 7)) < rng.uniform(0, 0.5)
        g = rng.random((5, 7)) < rng.uniform(0, 0.5)
        dice_ok &= dice_single(p, g) == dice_counts(p, g)
    ok = bool(ap_ok and auc_ok and dice_ok)
    assert acceptance(3, "AP / Dice / AUC equal their brute-force oracles", ok,
                      f"AP {ap_ok}, Dice {dice_ok}, AUC {auc_ok}")


def test_04_label_smoothing(acceptance):
    sums = [smooth_labels(c, SmoothingConfig(eps, 2)).sum().item() for eps in (0.0, 0.1, 0.2, 0.5) for c in (0, 1)]
    exact = smooth_labels(0, SmoothingConfig(0.2, 2)).tolist() == [0.9, 0.1]
    ok = all(s == 1.0 for s in sums) and exact
    assert acceptance(4, "smoothed labels sum to 1; eps=0.2 gives (0.9, 0.1)", ok)


def test_05_shape_algebra(acceptance):
    failures = []
    for size in (64, 128, 512):
        shapes = set()
        for use_lam, use_fpm in ((False, False), (True, False), (False, True), (True, True)):
            torch.manual_seed(0)
            model = LANet(ModelVariant(use_lam=use_lam, use_fpm=use_fpm, input_size=size, pretrained=False)).eval()
            with torch.no_grad():
                x = torch.randn(1, 3, size, size)
                feats = model.encoder(x)
                out = model(x)
            enc = [tuple(f.shape[1:]) for f in feats]
            if enc != [(c, size // s, size // s) for c, s in zip((256, 512, 1024, 2048), (4, 8, 16, 32))]:
                failures.append(f"encoder {size}")
            sides = [size // 32, size // 16, size // 8, size // 4]
            if [tuple(f.shape[1:]) for f in out.features] != [(w, s, s) for w, s in zip((256, 128, 64, 64), sides)]:
                failures.append(f"decoder {size}")
            if [tuple(m.shape) for m in out.stages] != [(1, 4, s, s) for s in sides]:
                failures.append(f"heads {size}")
            shapes.add(tuple(tuple(m.shape) for m in out.stages + [out.final]))
        if len(shapes) != 1:
            failures.append(f"variants differ at {size}")
    assert acceptance(5, "stride table holds for 64/128/512; variants share output shapes", not failures,
                      "; ".join(failures))


def test_06_attention_gating(acceptance):
    torch.manual_seed(0)
    lam = LesionAwareModule(8, 8).eval()
    x = torch.randn(2, 8, 6, 6)
    x_ort, _ = lam.parts(x)
    one_hot = torch.zeros(1, 8)
    one_hot[0, 5] = 1.0
    y = lam(x, attention=one_hot)
    lam_ok = torch.equal(y[:, 5], x_ort[:, 5]) and bool((y[:, torch.arange(8) != 5] == 0).all())
    lam_ok &= torch.equal(lam(x, attention=torch.ones(1, 8)), x_ort)

    ffb = FeatureFusionBlock(6, 8, 4).eval()
    skip, prev = torch.randn(2, 6, 8, 8), torch.randn(2, 8, 4, 4)
    gated = ffb.branches(skip, prev, one_hot.expand(2, 8))
    ungated = ffb.branches(skip, prev, torch.ones(2, 8))
    ffb_ok = all(torch.equal(g[:, 5], u[:, 5]) and bool((g[:, torch.arange(8) != 5] == 0).all())
                 for g, u in zip(gated, ungated))
    ok = bool(lam_ok and ffb_ok)
    assert acceptance(6, "one-hot gates zero other channels; all-ones passes x_ort through", ok,
                      f"x_att {lam_ok}, x_fpb {ffb_ok}")


@pytest.mark.slow
def test_07_overfit_sanity(acceptance, tmp_path):
    root = make_synthetic_ddr(tmp_path / "data", seg_counts=(4, 2, 2), scr_counts=((2, 2),) * 3, size=80, seed=0)
    cfg = ExperimentConfig(
        dataset="DDR-Seg", root=str(root), input_size=64, batch_size=4, seg_epochs=200, max_steps=200,
        eval_split="train", eval_every=1000,
        variant=ModelVariant(backbone="resnet50", pretrained=False),
        augment=AugmentConfig(enabled=False),
        seg_optim=OptimConfig(name="adamw", lr=1e-3, weight_decay=0.0, schedule="poly"),
        seg_loss=SegLossConfig(alpha=1.0, full_res_final=True),
    )
    start = time.perf_counter()
    run = train_segmentation(cfg)
    elapsed = time.perf_counter() - start
    steps = sum(1 for r in run.history if r["kind"] == "step")
    ex = run.best_report.per_lesion["EX"].dice
    ok = ex >= 0.8 and steps <= 200 and elapsed < 600
    assert acceptance(7, "full model overfits 4 images to EX Dice >= 0.8 in 200 steps", ok,
                      f"EX Dice {ex:.3f}, {steps} steps, {elapsed:.0f}s")


@pytest.mark.slow
def test_08_transfer_protocol(acceptance, synthetic_root):
    cfg = ExperimentConfig(
        dataset="DDR-Seg", root=str(synthetic_root), input_size=64, batch_size=4, seed=0,
        seg_epochs=15, scr_epochs=8, scratch_epochs=8,
        variant=ModelVariant(backbone="tiny", pretrained=False),
        seg_optim=OptimConfig(name="adamw", lr=1e-3, weight_decay=0.0, schedule="fixed"),
        seg_loss=SegLossConfig(alpha=1.0, full_res_final=True),
    )
    seg = train_segmentation(cfg, build_manifest(synthetic_root, "DDR-Seg"))
    scr_cfg = dataclasses.replace(cfg, dataset="DDR-Scr")
    init = build_screening_model(scr_cfg, seg.best).state_dict()
    exact = all(torch.equal(init[k], v) for k, v in seg.best.weights.items())

    manifest = build_manifest(synthetic_root, "DDR-Scr")
    threshold = 0.75
    pre = finetune_screening(scr_cfg, seg.best, manifest)
    scratch = finetune_screening(scr_cfg, None, manifest)
    e_pre = epochs_to_accuracy(pre.history, threshold)
    e_scratch = epochs_to_accuracy(scratch.history, threshold)
    ok = exact and np.isfinite(e_pre) and e_pre <= e_scratch
    assert acceptance(8, "shared weights copied bit-exactly; pretrained init converges no slower", ok,
                      f"bit-exact {exact}; epochs to val acc {threshold}: pretrained {e_pre}, scratch {e_scratch}")


def test_09_checkpoint_round_trip(acceptance, tmp_path):
    torch.manual_seed(0)
    variant = ModelVariant(backbone="tiny", input_size=64, pretrained=False)
    model = LANet(variant)
    opt = torch.optim.SGD(model.parameters(), lr=0.01, momentum=0.9)
    model(torch.randn(2, 3, 64, 64)).final.mean().backward()
    opt.step()
    model.eval()
    first = Checkpoint.from_model(model, variant, epoch=4, optimizer=opt, best={"metric": "mAP", "value": 0.3})
    first.save(tmp_path / "a.pt")
    loaded = Checkpoint.load(tmp_path / "a.pt")
    loaded.save(tmp_path / "b.pt")
    same_bytes = (tmp_path / "a.pt").read_bytes() == (tmp_path / "b.pt").read_bytes()
    twin = LANet(loaded.variant()).eval()
    load_weights(twin, loaded, loaded.variant())
    x = torch.randn(2, 3, 64, 64)
    with torch.no_grad():
        a, b = model(x), twin(x)
    same_out = torch.equal(a.final, b.final) and all(torch.equal(p, q) for p, q in zip(a.stages, b.stages))
    assert acceptance(9, "save/load/save byte-identical; reloaded outputs bit-identical", same_bytes and same_out,
                      f"bytes {same_bytes}, outputs {same_out}")


def test_10_map_aggregation(acceptance):
    value, _ = map_score([0.641, 0.476, 0.167, 0.713])
    assert acceptance(10, "mAP of the reference per-lesion APs is 0.499", abs(value - 0.499) <= 1e-3,
                      f"{value:.4f}")


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.2, 0.5])
def test_04_smoothing_each_eps(eps):
    for c in (0, 1):
        assert smooth_labels(c, SmoothingConfig(eps, 2)).sum().item() == 1.0
