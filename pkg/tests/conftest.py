import os
import pickle
import warnings

import mpmath
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

SEED = int(os.environ.get("IMPLODE_CERT_SEED", "20240607"))

settings.register_profile(
    "implode",
    max_examples=60,
    deadline=None,
    database=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("implode")

_ACCEPTANCE = []


@pytest.hookimpl(tryfirst=True)
def pytest_configure(config):
    # hypothesis draws from IMPLODE_CERT_SEED unless --hypothesis-seed is given
    if getattr(config.option, "hypothesis_seed", None) is None:
        config.option.hypothesis_seed = SEED


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line, flush=True)
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


@pytest.fixture(autouse=True)
def _mp_guard():
    # every test starts and ends at mpmath's default precision
    mpmath.mp.dps = 15
    yield
    mpmath.mp.dps = 15


# ------------------------------------------------------------------ shared data


@pytest.fixture(scope="session")
def exact_params():
    from implode_cert.parameters import Config, derive_params

    return derive_params(Config())


@pytest.fixture(scope="session")
def exact_series(exact_params):
    from implode_cert.taylor_series import compute_series

    return compute_series(exact_params, 460)


@pytest.fixture(scope="session")
def shoot():
    """Matched kappa for n = 101.  IMPLODE_CERT_SHOOT_CACHE names a pickle to reuse."""
    from implode_cert import shooting_solver as ss

    cache = os.environ.get("IMPLODE_CERT_SHOOT_CACHE")
    if cache and os.path.exists(cache):
        with open(cache, "rb") as fh:
            return pickle.load(fh)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = ss.find_kappa(101, ss.ShootConfig(n=101))
    if cache:
        with open(cache, "wb") as fh:
            pickle.dump(res, fh)
    return res


@pytest.fixture(scope="session")
def profile(shoot):
    from implode_cert import profile_builder as pb

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return pb.build_profile(shoot)
