import numpy as np
import pytest

from cureuq import presets
from cureuq.core.coverage import generate_pipeline_data
from cureuq.schemas.calibration import StepSpec
from cureuq.schemas.simulation import SolverOptions


@pytest.fixture(scope="session")
def faker_seed():
    return 20241016


@pytest.fixture
def reference():
    return presets.reference_material()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def pipeline_steps():
    return [StepSpec.model_validate(s) for s in presets.default_pipeline_steps()]


@pytest.fixture(scope="session")
def clean_pipeline_files():
    """Точные данные всех шагов при эталонных параметрах."""
    return generate_pipeline_data(presets.reference_material(), noise_scale=0.0)


@pytest.fixture(scope="session")
def noisy_pipeline_files():
    return generate_pipeline_data(
        presets.reference_material(), np.random.default_rng(7), noise_scale=1.0
    )


@pytest.fixture
def loose_solver():
    return SolverOptions(rel_tol=1e-3, abs_tol_theta=1e-2, abs_tol_c=1e-4)
