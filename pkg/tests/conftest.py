import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from loewner_kufarev.driving import (Composed, Constant, HalfPlane, Measure, PointKernel, Sector,
                                     SpectralMeasure, Strip)

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def catalogue_terms():
    """One representative per built-in family."""
    return [
        HalfPlane(0.3),
        Strip(0.5, 2.0),
        Sector(1.0),
        PointKernel(0.7),
        Measure(SpectralMeasure.from_weights([0.0, 2.0, 4.0], [1.0, 2.0, 3.0])),
        Composed(HalfPlane(0.3), rotation=1.0, scale=0.9, zero=0.3 + 0.2j),
        Constant(1.0),
    ]


@pytest.fixture(params=catalogue_terms(), ids=lambda t: t.family)
def term(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_disc(rng, n, r_max=0.95):
    r = r_max * np.sqrt(rng.uniform(0.0, 1.0, n))
    return r * np.exp(2j * math.pi * rng.uniform(0.0, 1.0, n))
