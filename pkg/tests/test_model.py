import dataclasses

import numpy as np
import pytest
import torch
from torch.profiler import ProfilerActivity, profile

from lanet.config import ModelVariant
from lanet.model import (
    Checkpoint,
    FeatureFusionBlock,
    FeaturePreserveBlock,
    HeadAttention,
    IncompatibleCheckpointError,
    LANet,
    LesionAwareModule,
    build_variant,
    count_parameters,
    gate,
    load_weights,
)
from oracles import module_grad_error

VARIANTS = [(False, False), (True, False), (False, True), (True, True)]


def _variant(backbone="tiny", size=64, **kw):
    return ModelVariant(backbone=backbone, input_size=size, pretrained=False, **kw)


def _model(**kw):
    torch.manual_seed(0)
    return LANet(_variant(**kw)).eval()


class TestShapes:
    @pytest.mark.parametrize("size", [64, 128, 512])
    def test_stride_table_resnet50(self, size):
        model = _model(backbone="resnet50", size=size)
        x = torch.randn(1, 3, size, size)
        with torch.no_grad():
            feats = model.encoder(x)
            out = model(x)
        assert [tuple(f.shape[1:]) for f in feats] == [
            (256, size // 4, size // 4), (512, size // 8, size // 8),
            (1024, size // 16, size // 16), (2048, size // 32, size // 32)]
        widths = model.variant.decoder_channels
        sides = [size // 32, size // 16, size // 8, size // 4]
        assert [tuple(f.shape[1:]) for f in out.features] == [(w, s, s) for w, s in zip(widths, sides)]
        assert [tuple(m.shape) for m in out.stages] == [(1, 4, s, s) for s in sides]
        assert tuple(out.final.shape) == (1, 4, size, size)

    def test_maps_are_probabilities(self):
        out = _model()(torch.randn(2, 3, 64, 64))
        for m in out.stages + [out.final]:
            assert m.min() >= 0 and m.max() <= 1

    @pytest.mark.parametrize("backbone", ["tiny", "resnet50"])
    def test_variants_share_output_shapes(self, backbone):
        x = torch.randn(1, 3, 64, 64)
        shapes = set()
        for lam, fpm in VARIANTS:
            with torch.no_grad():
                out = _model(backbone=backbone, use_lam=lam, use_fpm=fpm)(x)
            shapes.add(tuple(tuple(m.shape) for m in out.stages + [out.final]))
        assert len(shapes) == 1

    def test_parameter_ordering(self):
        counts = [count_parameters(LANet(_variant(use_lam=lam, use_fpm=fpm))) for lam, fpm in VARIANTS]
        assert counts[0] < counts[1] < counts[3] and counts[0] < counts[2] < counts[3]

    def test_rejects_bad_sizes(self):
        with pytest.raises(ValueError, match="divisible by 32"):
            LANet(_variant(size=70))
        with pytest.raises(ValueError, match="divisible by 32"):
            _model()(torch.randn(1, 3, 48, 40))
        with pytest.raises(ValueError, match="backbone"):
            LANet(_variant(backbone="vgg"))

    def test_deterministic_eval(self):
        model = _model()
        x = torch.randn(1, 3, 64, 64)
        with torch.no_grad():
            assert torch.equal(model(x).final, model(x).final)


class TestScreeningHead:
    def test_parameter_delta_is_linear_layer(self):
        base = LANet(_variant())
        scr = LANet(_variant(screening_head=True))
        widths = sum(base.variant.decoder_channels)
        assert count_parameters(scr) - count_parameters(base) == widths * 2 + 2
        assert scr.head_parameter_names() == ["classifier.weight", "classifier.bias"]

    def test_screen_outputs(self):
        out, logits = _model(screening_head=True).screen(torch.randn(3, 3, 64, 64))
        assert logits.shape == (3, 2) and out.final.shape == (3, 4, 64, 64)

    def test_screen_without_head(self):
        with pytest.raises(RuntimeError):
            _model().screen(torch.randn(1, 3, 64, 64))


class TestGating:
    def test_gate_one_hot_and_ones(self):
        x = torch.randn(2, 5, 3, 3)
        w = torch.zeros(2, 5)
        w[:, 2] = 1
        y = gate(x, w)
        assert torch.equal(y[:, 2], x[:, 2])
        assert (y[:, [0, 1, 3, 4]] == 0).all()
        assert torch.equal(gate(x, torch.ones(2, 5)), x)

    def test_lam_attention_override(self):
        torch.manual_seed(0)
        lam = LesionAwareModule(8, 8).eval()
        x = torch.randn(2, 8, 6, 6)
        x_ort, x_att = lam.parts(x)
        assert x_att.shape == (2, 8) and ((x_att > 0) & (x_att < 1)).all()
        assert torch.equal(lam(x, attention=torch.ones(1, 8)), x_ort)
        one_hot = torch.zeros(1, 8)
        one_hot[0, 3] = 1
        y = lam(x, attention=one_hot)
        assert torch.equal(y[:, 3], x_ort[:, 3]) and (y[:, torch.arange(8) != 3] == 0).all()
        assert torch.allclose(lam(x), x_ort * x_att[:, :, None, None])

    def test_ffb_zero_gate(self):
        torch.manual_seed(0)
        ffb = FeatureFusionBlock(6, 8, 4).eval()
        skip, prev = torch.randn(1, 6, 8, 8), torch.randn(1, 8, 4, 4)
        branches = ffb.branches(skip, prev, torch.zeros(1, 8))
        assert all((b == 0).all() for b in branches)
        ones = ffb.branches(skip, prev, torch.ones(1, 8))
        z3 = torch.nn.functional.interpolate(prev, size=(8, 8), mode="bilinear", align_corners=False)
        assert torch.equal(ones[2], z3)

    def test_ffb_spatial_mismatch(self):
        ffb = FeatureFusionBlock(6, 8, 4)
        with pytest.raises(ValueError, match="twice"):
            ffb(torch.randn(1, 6, 8, 8), torch.randn(1, 8, 3, 3), torch.ones(1, 8))

    def test_fpb_attention_is_live(self):
        torch.manual_seed(0)
        model = _model(use_fpm=True)
        x = torch.randn(1, 3, 64, 64)
        captured = []
        hooks = [f.register_forward_hook(lambda m, i, o: captured.append(o)) for f in model.fpbs]
        with torch.no_grad():
            model(x)
        for h in hooks:
            h.remove()
        assert len(captured) == 3
        for v in captured:
            assert v.min() > 0 and v.max() < 1 and v.std() > 0
        # different stages produce different gates
        assert not torch.allclose(captured[1][:, :64], captured[2][:, :64])


def _check_grad(module, inputs, rtol=1e-4):
    assert module_grad_error(module, inputs) < rtol


class TestGradients:
    rng = np.random.default_rng(7)

    def test_lam(self):
        torch.manual_seed(0)
        _check_grad(LesionAwareModule(8, 8), [self.rng.normal(size=(2, 8, 6, 6))])

    def test_fpb(self):
        torch.manual_seed(0)
        _check_grad(FeaturePreserveBlock(8, 8, 8),
                    [self.rng.normal(size=(2, 8, 2, 2)), self.rng.normal(size=(2, 8, 3, 3))])

    def test_ffb(self):
        torch.manual_seed(0)
        _check_grad(FeatureFusionBlock(4, 8, 8),
                    [self.rng.normal(size=(2, 4, 6, 6)), self.rng.normal(size=(2, 8, 3, 3)),
                     self.rng.uniform(0.1, 0.9, size=(2, 8))])

    def test_ham(self):
        torch.manual_seed(0)
        _check_grad(HeadAttention(8, 8), [self.rng.normal(size=(2, 8, 6, 6))])


def _allocated_bytes(module, x):
    with torch.no_grad(), profile(activities=[ProfilerActivity.CPU], profile_memory=True) as prof:
        module(x)
    return sum(e.self_cpu_memory_usage for e in prof.key_averages() if e.self_cpu_memory_usage > 0)


def test_ham_memory_grows_linearly():
    torch.manual_seed(0)
    ham = HeadAttention(64, 32).eval()
    small = _allocated_bytes(ham, torch.randn(1, 64, 16, 16))
    large = _allocated_bytes(ham, torch.randn(1, 64, 32, 32))
    # 4x the positions: linear growth gives ~4x, a position-affinity matrix ~16x
    assert 2.0 < large / small < 6.0


class TestCheckpoint:
    def test_round_trip_bytes_and_outputs(self, tmp_path):
        model = _model()
        ckpt = Checkpoint.from_model(model, model.variant, epoch=3, best={"metric": "mAP", "value": 0.5})
        a = ckpt.save(tmp_path / "a.pt")
        loaded = Checkpoint.load(a)
        b = loaded.save(tmp_path / "sub" / "b.pt")
        assert a.read_bytes() == b.read_bytes()
        twin = LANet(loaded.variant()).eval()
        load_weights(twin, loaded, loaded.variant())
        x = torch.randn(1, 3, 64, 64)
        with torch.no_grad():
            assert torch.equal(model(x).final, twin(x).final)
        assert loaded.epoch == 3 and loaded.best["value"] == 0.5

    def test_full_into_base_raises(self):
        full = _model()
        ckpt = Checkpoint.from_model(full, full.variant)
        base_variant = _variant(use_lam=False, use_fpm=False)
        with pytest.raises(IncompatibleCheckpointError, match="use_lam"):
            load_weights(LANet(base_variant), ckpt, base_variant)

    def test_segmentation_into_screening_model(self):
        seg = _model()
        ckpt = Checkpoint.from_model(seg, seg.variant)
        variant = dataclasses.replace(seg.variant, screening_head=True)
        scr = LANet(variant)
        with pytest.raises(IncompatibleCheckpointError):
            load_weights(scr, ckpt, variant)
        missing = load_weights(scr, ckpt, variant, allow_new_head=True)
        assert missing == ["classifier.weight", "classifier.bias"]
        for k, v in seg.state_dict().items():
            assert torch.equal(scr.state_dict()[k], v)

    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "x.pt"
        torch.save({"weights": {}}, path)
        with pytest.raises(IncompatibleCheckpointError, match="format"):
            Checkpoint.load(path)


def test_build_variant_matches_constructor():
    v = _variant(use_lam=False)
    assert count_parameters(build_variant(v)) == count_parameters(LANet(v))
