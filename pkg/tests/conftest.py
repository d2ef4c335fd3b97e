import numpy as np
import pytest

from adfsdca import SolverConfig, make_loss, run_reference, synthetic_dataset
from adfsdca.data import make_dataset

LAM = 1.0 / np.sqrt(500.0)


def heavy_norm_instance(n=500, d=50, density=0.2, seed=7, heavy_frac=0.05, factor=5.0):
    """Synthetic stand-in with heterogeneous example norms (a few heavy rows),
    the regime where adaptive sampling visibly separates from per-epoch and
    uniform sampling."""
    ds = synthetic_dataset(n, d, density, seed)
    rng = np.random.Generator(np.random.Philox(seed + 1))
    scale = np.where(rng.random(n) < heavy_frac, factor, 1.0)
    data = ds.data * np.repeat(scale, np.diff(ds.indptr))
    return make_dataset(ds.indptr.copy(), ds.indices.copy(), data, ds.labels.copy(), ds.d)


@pytest.fixture(scope="session")
def synth500():
    return synthetic_dataset(500, 50, 0.2, seed=7)


@pytest.fixture(scope="session")
def heavy500():
    return heavy_norm_instance()


@pytest.fixture(scope="session")
def synth500_unit(synth500):
    from adfsdca import scale_features

    return scale_features(synth500, "unit_norm")


@pytest.fixture(scope="session")
def quad():
    return make_loss("quadratic")


@pytest.fixture(scope="session")
def logi():
    return make_loss("logistic")


@pytest.fixture(scope="session")
def lam500():
    return LAM


@pytest.fixture(scope="session")
def ref500_quad(synth500, quad):
    return run_reference(synth500, quad, LAM)


@pytest.fixture(scope="session")
def ref500_logi(synth500, logi):
    return run_reference(synth500, logi, LAM)


@pytest.fixture(scope="session")
def ref_heavy_quad(heavy500, quad):
    return run_reference(heavy500, quad, LAM)


@pytest.fixture(scope="session")
def ref500_unit_quad(synth500_unit, quad):
    return run_reference(synth500_unit, quad, LAM)


def base_config(**kw):
    return SolverConfig(lam=LAM, **kw)


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    outcome = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {outcome}", flush=True)
