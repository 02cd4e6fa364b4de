import numpy as np
import pytest
import torch
from hypothesis import settings

from vvo.tensorio import RandomStream, RunConfig

torch.set_num_threads(1)
settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return RandomStream(0)


@pytest.fixture
def small_cfg():
    return RunConfig(n_train=24, n_val=8, pretrain_steps=30, epoch_steps=10, train_steps=20, eval_every=10, batch_size=8)


@pytest.fixture
def sprite_dir(tmp_path, small_cfg):
    from vvo.scenegen import generate_dataset

    data = tmp_path / "data"
    generate_dataset(data, small_cfg, seed=5)
    return data


def np_rng(seed):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
