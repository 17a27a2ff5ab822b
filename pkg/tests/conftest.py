import os

import hypothesis
import numpy as np
import pytest

from src.app.models.lattice_model import ModelSpec
from src.app.services.automaton_service import AutomatonService
from src.app.services.basis_service import BasisService
from src.app.services.dynamics_service import DynamicsService
from src.app.services.entanglement_service import EntanglementService
from src.app.services.fragmentation_service import FragmentationService
from src.app.services.hamiltonian_service import HamiltonianService
from src.app.services.spectral_service import SpectralService

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.register_profile("ci", max_examples=100, deadline=None)
hypothesis.settings.register_profile("debugger", report_multiple_bugs=False)
hypothesis.settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "fast"))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run slow tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def spec():
    return ModelSpec(r=2)


@pytest.fixture(scope="session")
def basis_service():
    return BasisService()


@pytest.fixture(scope="session")
def hamiltonian_service():
    return HamiltonianService(n_jobs=1)


@pytest.fixture(scope="session")
def fragmentation_service(basis_service, hamiltonian_service):
    return FragmentationService(basis_service, hamiltonian_service)


@pytest.fixture(scope="session")
def spectral_service(hamiltonian_service):
    return SpectralService(hamiltonian_service)


@pytest.fixture(scope="session")
def entanglement_service(fragmentation_service, spectral_service):
    return EntanglementService(fragmentation_service, spectral_service, n_jobs=1)


@pytest.fixture(scope="session")
def dynamics_service(hamiltonian_service, entanglement_service):
    return DynamicsService(hamiltonian_service, entanglement_service)


@pytest.fixture
def automaton_service():
    return AutomatonService()


@pytest.fixture(scope="session")
def sector13(fragmentation_service, hamiltonian_service, spec):
    """Domain-wall sector at L=13, Np=5 and its Hamiltonian."""
    basis = fragmentation_service.largest_sector(13, 5, spec)
    return basis, hamiltonian_service.build_hamiltonian(basis, spec)


@pytest.fixture(scope="session")
def eigensystem13(sector13, spectral_service):
    basis, H = sector13
    return spectral_service.diagonalize(H, basis)
