import os

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def bm():
    from levy_penalize.levy_models import brownian
    return brownian()


@pytest.fixture(scope="session")
def cauchy():
    from levy_penalize.levy_models import stable
    return stable(1.0, 0.5)
