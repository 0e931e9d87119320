import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, derandomize=True)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def default_schedule():
    from latentedit.schedule import make_linear_schedule

    return make_linear_schedule(1000, 1e-4, 0.02)


@pytest.fixture(scope="session")
def two_component_family():
    """Well-separated 2-D mixture; condition 1 selects component 0, 2 selects 1."""
    from latentedit.mixture import ConditionedMixtureFamily, GaussianMixture

    base = GaussianMixture(
        weights=np.array([0.5, 0.5]),
        means=np.array([[-3.0, 0.0], [3.0, 0.5]]),
        variances=np.array([[0.25, 0.25], [0.25, 0.25]]),
    )
    return ConditionedMixtureFamily(
        base=base,
        weights_by_condition={
            0: np.array([0.5, 0.5]),
            1: np.array([1.0, 0.0]),
            2: np.array([0.0, 1.0]),
            3: np.array([0.3, 0.7]),
        },
    )
