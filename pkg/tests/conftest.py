import pytest

from lanet.config import ExperimentConfig, ModelVariant, OptimConfig, SegLossConfig
from lanet.data import make_synthetic_ddr


@pytest.fixture(scope="session")
def synthetic_root(tmp_path_factory):
    """Small DDR-layout dataset: 8/4/4 segmentation images, 12+12 / 8+8 / 8+8 screening images."""
    return make_synthetic_ddr(tmp_path_factory.mktemp("ddr"), seg_counts=(8, 4, 4),
                              scr_counts=((12, 12), (8, 8), (8, 8)), size=80, seed=1)


@pytest.fixture
def desk_cfg(synthetic_root):
    """Desk-scale segmentation config on the synthetic dataset with the small encoder."""
    return ExperimentConfig(
        name="desk", dataset="DDR-Seg", root=str(synthetic_root), input_size=64, batch_size=2,
        seg_epochs=1, scr_epochs=1, scratch_epochs=1,
        variant=ModelVariant(backbone="tiny", pretrained=False),
        seg_optim=OptimConfig(name="adamw", lr=1e-3, weight_decay=0.0, schedule="fixed"),
        seg_loss=SegLossConfig(alpha=1.0, full_res_final=True),
    )



_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion; echoed in the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
        lines.append((number, line))
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
