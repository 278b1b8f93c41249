"""Shared fixtures and parameter sampling for the test suite."""

import numpy as np
import pytest

from microswim.model import PhysParams

PSTAR = PhysParams(1.0, 1.0, 2.0, 1.0, 1.0, 2.0)


@pytest.fixture
def pstar():
    return PSTAR


def random_params(rng, nondegenerate=True):
    """Draw a valid parameter set; optionally bounded away from degeneracy.

    Lengths, drag coefficients, and stiffness are log-uniform in [0.5, 2];
    the normal drag exceeds the tangential one as for a slender body.  With
    nondegenerate=True the magnetizations stay away from 0, from each
    other, and from summing to zero, so every derived constant exists.
    """
    while True:
        ell, xi, kappa = np.exp(rng.uniform(np.log(0.5), np.log(2.0), 3))
        eta = xi * rng.uniform(1.2, 3.0)
        m1, m2 = rng.uniform(-2.0, 2.0, 2)
        p = PhysParams(float(ell), float(xi), float(eta), float(kappa),
                       float(m1), float(m2))
        if not nondegenerate:
            if min(abs(m1), abs(m2)) > 1e-6:
                return p
            continue
        if (min(abs(m1), abs(m2)) > 0.3 and abs(m1 - m2) > 0.3
                and abs(m1 + m2) > 0.3):
            return p
