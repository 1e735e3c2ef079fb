import numpy as np
import pytest

from nlmodal.beam import BeamParams, assemble_beam, limit_models, linear_modes
from nlmodal.epmc import solve_backbone
from nlmodal.identify import make_sensor_set


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("reference_cache")
    return path


@pytest.fixture(autouse=True)
def _cache_env(cache_dir, monkeypatch):
    monkeypatch.setenv("NLMODAL_CACHE", str(cache_dir))


@pytest.fixture(scope="session")
def params():
    return BeamParams()


@pytest.fixture(scope="session")
def model(params):
    return assemble_beam(params)


@pytest.fixture(scope="session")
def stick_slip(model):
    return limit_models(model)


@pytest.fixture(scope="session")
def basis(stick_slip):
    stick, _ = stick_slip
    return linear_modes(stick, 3)


@pytest.fixture(scope="session")
def sensors(model, basis):
    return make_sensor_set(basis, model.translation_dofs)


@pytest.fixture(scope="session")
def x_slip(params):
    return params.slip_limit / params.tangential_stiffness


def _tip_range_to_a(basis, model, mode, lo, hi):
    phi_tip = abs(basis.shapes[model.tip_dof, mode - 1])
    return lo / phi_tip, hi / phi_tip


@pytest.fixture(scope="session")
def backbone_mode1(model, basis, x_slip):
    """Dense mode-1 EPMC reference reused across the suite."""
    phif = abs(basis.shapes[model.friction_dof, 0])
    return solve_backbone(
        model, 1, (0.05 * x_slip / phif, 400 * x_slip / phif), points_per_decade=20
    )


@pytest.fixture(scope="session")
def backbone_mode2(model, basis, x_slip):
    phif = abs(basis.shapes[model.friction_dof, 1])
    return solve_backbone(
        model, 2, (0.05 * x_slip / phif, 300 * x_slip / phif), points_per_decade=20
    )


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
