import pytest

from fabmix.datagen import GeneratorSpec, sample_dataset, sample_ground_truth


def table1_style_model(dim=2, seed=123):
    """A 4-component ground truth with weights (0.1, 0.2, 0.3, 0.4); the
    stock fixture most tests sample from."""
    spec = GeneratorSpec(n=100, k_true=4, weights=(0.1, 0.2, 0.3, 0.4), dim=dim, seed=seed)
    return sample_ground_truth(spec)


def sample_from_model(model, n, seed=0):
    return sample_dataset(model, n, seed)


@pytest.fixture
def gmm4_2d():
    return table1_style_model(dim=2)
