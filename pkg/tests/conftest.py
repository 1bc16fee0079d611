import pathlib

import pytest

from treealign.bench import gaussian_blobs
from treealign.core import RngConfig, load_domain

DATA_DIR = pathlib.Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def iris():
    return load_domain(DATA_DIR / "iris.csv", "species")


@pytest.fixture()
def rng():
    return RngConfig(1234)


@pytest.fixture(scope="session")
def small_blobs():
    return gaussian_blobs(120, 4, 5, RngConfig(99).child("fixture"))
