import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from deskdiff.netgraph.denoiser import DenoiserConfig, DenoiserModel  # noqa: E402

CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return DenoiserConfig(data_dim=3, hidden_widths=(8, 6), time_embed_dim=4, n_classes=4,
                          n_styles=2, cond_embed_dim=3, cond_dim=5, n_cond_tokens=2)


@pytest.fixture
def small_model(small_config):
    return DenoiserModel.init(small_config, np.random.default_rng(7))


@pytest.fixture
def config_dir():
    return CONFIG_DIR


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    results = getattr(acceptance, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        passed, detail = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
