import numpy as np
import pytest

from ddcisenet.tensor_core import make_rng


def random_complex(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


@pytest.fixture
def rng():
    return make_rng(1234)


def fd_rel_error(analytic, numeric, floor=1e-8):
    """Relative error with a floor so exactly-zero gradients compare sensibly."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
