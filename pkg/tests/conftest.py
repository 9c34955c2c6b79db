import numpy as np
import pytest

from luresim import build_example

EXAMPLES = {}


@pytest.fixture(scope="session")
def entry():
    """Catalog entries, built once per session."""
    def get(name, **params):
        key = (name, tuple(sorted(params.items())))
        if key not in EXAMPLES:
            EXAMPLES[key] = build_example(name, **params)
        return EXAMPLES[key]
    return get


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
