import numpy as np
import pytest

from dbae.bridge import BridgeKernel
from dbae.model import ModelBundle, make_cfgs
from dbae.schedule import VpSchedule


@pytest.fixture
def sched():
    return VpSchedule()


@pytest.fixture
def kernel(sched):
    return BridgeKernel(sched)


def small_bundle(seed=0, mode="deterministic", dtype=np.float64, data_dim=2, latent_dim=2,
                 hidden=(16,), score_hidden=(32, 32), use_z=True):
    enc, dec, sc = make_cfgs(data_dim=data_dim, latent_dim=latent_dim, encoder_mode=mode,
                             enc_hidden=hidden, dec_hidden=hidden, score_hidden=score_hidden,
                             time_dim=8, use_z_condition=use_z)
    return ModelBundle.create(enc, dec, sc, BridgeKernel(VpSchedule()),
                              np.random.default_rng(seed), dtype=dtype)


@pytest.fixture
def bundle64():
    return small_bundle()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, ok, detail in sorted(results):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:2d} {name}: {detail}")
