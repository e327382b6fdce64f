from fractions import Fraction

import pytest

from agreetensor.models import materialize, sample_params


def model_tensors(family, n, seeds):
    """Exact tensors of sampled parameter points, one per seed."""
    return [materialize(sample_params(family, n, seed)) for seed in seeds]


@pytest.fixture
def half():
    return Fraction(1, 2)
