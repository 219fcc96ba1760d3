import numpy as np
import pytest

from papilledema.losses import LossWeights
from papilledema.model import BackboneSpec
from papilledema.synthgen import SynthParams, generate_dataset
from papilledema.trainer import TrainConfig

SMALL = SynthParams(image_size=128)
TINY_SPEC = BackboneSpec(input_size=32)


def short_config(seed=0, epochs=4, switch=2, patience=5, batch_size=4):
    return TrainConfig(batch_size=batch_size, seed=seed, patience=patience,
                       loss=LossWeights(phase_switch_epoch=switch, total_epochs=epochs))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """12 subjects x 2 images of 128 px: fast plumbing tests."""
    out = tmp_path_factory.mktemp("small")
    manifest = generate_dataset(3, 12, 2, SMALL, out)
    return out, manifest


@pytest.fixture(scope="session")
def default_images():
    """A handful of default-size synthetic images with ground truth."""
    from papilledema.synthgen import generate_fundus
    from papilledema.types import Label
    return [generate_fundus(s, SynthParams(), Label(s % 2)) for s in range(4)]


def random_image(rng, h=24, w=20):
    return rng.random((h, w, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance summary: one line per criterion

CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        num = int(report.nodeid.split("test_criterion_")[1].split("_")[0])
        CRITERIA[num] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    from test_acceptance import DETAILS, TITLES
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        status = "PASS" if CRITERIA[num] == "passed" else "FAIL"
        detail = DETAILS.get(num, "")
        terminalreporter.write_line(f"criterion {num:2d} {status}  {TITLES[num]}" + (f"  [{detail}]" if detail else ""))
