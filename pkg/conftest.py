import numpy as np
import pytest


@pytest.fixture(autouse=True)
def add_numpy(doctest_namespace):
    doctest_namespace['np'] = np
