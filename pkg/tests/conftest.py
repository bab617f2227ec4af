import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default",
    deadline=None,
    max_examples=100,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(params=sorted(__import__("gazetrack.kernels", fromlist=["x"]).available_backends()))
def backend(request):
    """Each importable kernel module in turn."""
    from gazetrack.kernels import available_backends

    return available_backends()[request.param]
