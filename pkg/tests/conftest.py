"""
Shared fixtures. Catalog, outputs and logs go to a throwaway directory that
is set up before any ``app`` module is imported.
"""

import os
import tempfile

_SANDBOX = tempfile.mkdtemp(prefix="ratchet-tests-")
os.environ["RATCHET_DATA_DIR"] = os.path.join(_SANDBOX, "data")
os.environ["RATCHET_OUTPUT_DIR"] = os.path.join(_SANDBOX, "outputs")
os.environ["RATCHET_LOG_DIR"] = os.path.join(_SANDBOX, "logs")
os.environ["DATABASE_URL"] = f"sqlite:///{os.path.join(_SANDBOX, 'runs.db')}"

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from app.fem.beam import BeamSection, SoilLayerTable, SpringLayout  # noqa: E402
from app.fem.mesh import plate_with_hole  # noqa: E402
from app.models.material import MaterialParams  # noqa: E402
from app.services.problem import PileProblem, PlateProblem  # noqa: E402


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the full benchmark reproductions")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full benchmark runs, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def plate_material():
    return MaterialParams(E=205.0, nu=0.3, sigma_p=100.0, H_iso=1140.0, H_kin=21640.0, beta=0.4)


@pytest.fixture
def elastic_material():
    return MaterialParams(E=205.0, nu=0.3, sigma_p=1e12)


@pytest.fixture
def small_plate(plate_material):
    """Coarse perforated plate, 24 nodes."""
    return PlateProblem(plate_with_hole(n_tangential=2, n_radial=2), plate_material, thickness=0.2)


@pytest.fixture
def small_elastic_plate(elastic_material):
    return PlateProblem(plate_with_hole(n_tangential=2, n_radial=2), elastic_material, thickness=0.2)


def soil(E, sigma_p, H_kin, beta=0.01):
    return MaterialParams(E=E, nu=0.3, sigma_p=sigma_p, H_kin=H_kin, beta=beta)


@pytest.fixture
def small_pile():
    """Monopile with three layers and nine beam elements."""
    section = BeamSection(n_elements=9)
    layers = SoilLayerTable(
        [
            (0.0, 5.0, soil(266.67, 2.0, 1466.7)),
            (5.0, 10.0, soil(1000.0, 2.67, 2666.7)),
            (10.0, 15.0, soil(1333.3, 3.33, 4666.7)),
        ]
    )
    return PileProblem(section, SpringLayout.build(section, layers))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def pile_scenario_data():
    """Small PGD scenario on the monopile: warm-up of two cycles, then a 2 x 2 window."""
    return {
        "name": "pile-small",
        "kind": "winkler-beam",
        "solver": "pgd",
        "pile": {
            "n_elements": 9,
            "layers": [
                {"top": 0.0, "bottom": 5.0, "material": {"E": 266.67, "sigma_p": 2.0, "H_kin": 1466.7, "beta": 0.01}},
                {"top": 5.0, "bottom": 10.0, "material": {"E": 1000.0, "sigma_p": 2.67, "H_kin": 2666.7, "beta": 0.01}},
                {"top": 10.0, "bottom": 15.0, "material": {"E": 1333.3, "sigma_p": 3.33, "H_kin": 4666.7, "beta": 0.01}},
            ],
        },
        "load": {
            "shape": [[0.0, 0.0], [0.5, 1.0], [1.0, 0.0]],
            "p_min": 30.0,
            "p_max": 130.0,
            "n_tau": 11,
            "cycles": 6,
            "scales": [2, 2],
            "warmup_cycles": 2,
        },
        "pgd": {"max_modes": 2},
        "probe_depths": [0.0, 5.0, 10.0],
    }
