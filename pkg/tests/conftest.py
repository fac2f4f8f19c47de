from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from principal_actions.groups import HEISENBERG, Lattice
from principal_actions.ring import RingElement

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GROUPS = [Lattice(1), Lattice(2), HEISENBERG]


def exponents(group, radius=2):
    return st.tuples(*[st.integers(-radius, radius)] * group.rank)


def ring_elements(group, max_terms=4, radius=2):
    coeff = st.fractions(min_value=-3, max_value=3, max_denominator=4)
    return st.dictionaries(exponents(group, radius), coeff, max_size=max_terms).map(
        lambda d: RingElement(group, d)
    )


@pytest.fixture(params=GROUPS, ids=str)
def group(request):
    return request.param


def rational(v) -> Fraction:
    return Fraction(v)
