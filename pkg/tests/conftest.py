import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mgsim.spectral_core import Lattice, SpectralField, forward_transform

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")


def random_field(lattice: Lattice, seed: int, band: int | None = None) -> SpectralField:
    """Real random field, optionally band-limited to |k|_inf <= band."""
    rng = np.random.default_rng(seed)
    f = forward_transform(rng.standard_normal(lattice.dims), lattice)
    if band is not None:
        f = SpectralField(lattice, np.where(lattice.kinf <= band, f.coeffs, 0))
    return f


@pytest.fixture(scope="session")
def lat8():
    return Lattice.cubic(8)


@pytest.fixture(scope="session")
def lat16():
    return Lattice.cubic(16)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
