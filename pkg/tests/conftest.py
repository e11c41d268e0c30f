import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dirbench.imaging import ScalarImage, blob_spec, generate_phantom
from dirbench.objectives import RegistrationProblem

settings.register_profile("dirbench", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dirbench")


@pytest.fixture(scope="session")
def blob_pair():
    spec = blob_spec((32, 32))
    return generate_phantom(spec, "source"), generate_phantom(spec, "target")


@pytest.fixture(scope="session")
def blob_problem(blob_pair):
    source, target = blob_pair
    return RegistrationProblem.from_images(source, target, 600, seed=5, name="blob32")


@pytest.fixture(scope="session")
def smooth_problem():
    """Smooth (quadratic-ish) images so interior derivatives are well defined."""
    axes = np.meshgrid(np.arange(24.0), np.arange(24.0), indexing="ij")
    src = ScalarImage(np.sin(axes[0] / 5.0) * np.cos(axes[1] / 7.0) * 10.0)
    tgt = ScalarImage(np.sin((axes[0] - 1.5) / 5.0) * np.cos((axes[1] + 1.0) / 7.0) * 10.0)
    return RegistrationProblem.from_images(src, tgt, 400, seed=3, name="smooth")


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion; echoed in the terminal summary."""

    def record(criterion: int, ok: bool, detail: str, soft: bool = False) -> bool:
        tag = "PASS" if ok else ("FAIL (soft, non-fatal)" if soft else "FAIL")
        line = f"{tag} criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
