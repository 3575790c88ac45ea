import numpy as np
import pytest

from hv3d import kernels
from hv3d.synthetic import stereo_clip

BACKENDS = kernels.available_backends()

_acceptance_lines = []


def pytest_configure(config):
    config._hv3d_acceptance = _acceptance_lines


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[2].rstrip(":"))):
        terminalreporter.write_line(line)


@pytest.fixture
def acceptance():
    """Record ``(number, description, passed, detail)`` for the summary table."""

    def record(number, desc, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number}: {desc}" + (f" ({detail})" if detail else "")
        print(line)
        _acceptance_lines.append(line)
        return passed

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def small_clip():
    return stereo_clip(width=96, height=64, frames=4, seed=3, kind="noise", strength=8.0)


def textured(rng, h, w, sigma=1.0):
    from scipy import ndimage

    t = ndimage.gaussian_filter(rng.standard_normal((h, w)), sigma)
    t = (t - t.min()) / (t.max() - t.min())
    return np.rint(16 + 219 * t)
