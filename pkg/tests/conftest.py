import pytest

from cczsim.calibration import GateSimulator

# zero-ZZ coupler frequencies of the bundled device in the RWA model (GHz)
IDLE_RWA = (6.641059887646973, 6.361088002510636)


@pytest.fixture(scope="session")
def sim():
    return GateSimulator(idle=IDLE_RWA)


@pytest.fixture(scope="session")
def cz_backend(sim):
    from cczsim.circuits import PulseBackend

    backend = PulseBackend(sim)
    backend.cz_schedule((1, 2))
    backend.cz_schedule((2, 3))
    return backend
