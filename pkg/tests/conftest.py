import os
import random

import pytest

from compverify.assumptions import build_assume
from compverify import taxinet


@pytest.fixture(scope="session", autouse=True)
def isolated_environment(tmp_path_factory):
    """Keep logs, artifacts and the run ledger out of the working tree"""
    root = tmp_path_factory.mktemp("compverify")
    saved = {k: os.environ.get(k) for k in ("COMPVERIFY_LOG_DIR", "COMPVERIFY_OUTPUT_DIR", "DATABASE_URL")}
    os.environ["COMPVERIFY_LOG_DIR"] = str(root / "logs")
    os.environ["COMPVERIFY_OUTPUT_DIR"] = str(root / "artifacts")
    os.environ["DATABASE_URL"] = f"sqlite:///{root / 'runs.db'}"
    yield root
    for key, value in saved.items():
        if value is None:
            os.environ.pop(key, None)
        else:
            os.environ[key] = value


@pytest.fixture(scope="session")
def cfg2():
    return taxinet.DiscretizationConfig(2)


@pytest.fixture(scope="session")
def m1(cfg2):
    return taxinet.gen_m1(cfg2)


@pytest.fixture(scope="session")
def est_iface(cfg2):
    return taxinet.interface_alphabet(cfg2)


@pytest.fixture(scope="session")
def full_iface(cfg2):
    return taxinet.interface_alphabet(cfg2, with_actuals=True)


@pytest.fixture(scope="session")
def w_est(m1, est_iface):
    return build_assume(m1, taxinet.safety_property(), est_iface)


@pytest.fixture(scope="session")
def w_full(m1, full_iface):
    return build_assume(m1, taxinet.safety_property(), full_iface)


@pytest.fixture
def rng():
    return random.Random(20240611)
