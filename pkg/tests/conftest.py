import numpy as np
import pytest

from orthoview.cloud_io import generate_shape

# Shapes whose covariance eigenvalues are well separated (ratios >= 1.15).
ANISOTROPIC_SHAPES = {
    "box": ("box", (4.0, 2.0, 1.0)),
    "cylinder": ("cylinder", (1.0, 3.0)),
    "lshape": ("lshape", (1.0, 0.2)),
}


@pytest.fixture(scope="session")
def box_cloud():
    return generate_shape("box", (4, 2, 1), n_points=3000, noise_sigma=0.0, seed=7)


@pytest.fixture(scope="session")
def shape_clouds():
    return {
        name: generate_shape(kind, dims, n_points=3000, noise_sigma=0.005, seed=i)
        for i, (name, (kind, dims)) in enumerate(ANISOTROPIC_SHAPES.items())
    }


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def synthetic_features():
    """10 categories x 30 instances of precomputed global features."""
    from orthoview.cloud_io import synthetic_category_dataset
    from orthoview.descriptor import global_feature

    clouds = synthetic_category_dataset(n_categories=10, n_instances=30, seed=0)
    return {label: [global_feature(c) for c in items] for label, items in clouds.items()}


def confusion_dataset(n_categories=3, n_instances=150):
    """Every instance of every category is the same cloud."""
    from orthoview.descriptor import global_feature

    feature = global_feature(generate_shape("box", (4, 2, 1), n_points=2000, seed=3))
    return {f"c{i}": [feature] * n_instances for i in range(n_categories)}


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
