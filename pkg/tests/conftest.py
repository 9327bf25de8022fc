import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from adaptive_rbm import RbmModel  # noqa: E402
from adaptive_rbm import data as datamod  # noqa: E402

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        reason = ""
        if report.outcome == "skipped" and isinstance(report.longrepr, tuple):
            reason = report.longrepr[2].removeprefix("Skipped: ")
        _ACCEPTANCE[name] = (report.outcome, reason)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=_criterion_number):
        outcome, reason = _ACCEPTANCE[name]
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}.get(outcome, outcome)
        line = f"{verdict:5s} {name}"
        terminalreporter.write_line(f"{line}  ({reason})" if reason else line)


def _criterion_number(name):
    digits = "".join(ch for ch in name.split("_")[1] if ch.isdigit()) if "_" in name else ""
    return (int(digits) if digits else 99, name)


@pytest.fixture
def random_model():
    def make(I, J, seed=0, scale=1.0):
        rng = np.random.default_rng(seed)
        return RbmModel(rng.normal(0, 0.5 * scale, I), rng.normal(0, 0.5 * scale, J),
                        rng.normal(0, scale, (I, J)))
    return make


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory):
    """IDX files built from the 5,000 MNIST digits bundled with mlxtend.

    The digits are split into two disjoint class-balanced halves written as
    the ``train-*`` and ``t10k-*`` files, so the normal MNIST loader reads
    them.  A real MNIST directory given in ``ADAPTIVE_RBM_MNIST`` is used
    instead when set.
    """
    real = os.environ.get("ADAPTIVE_RBM_MNIST")
    if real:
        return Path(real)
    mlxtend_data = pytest.importorskip("mlxtend.data")
    X, y = mlxtend_data.mnist_data()
    images = X.reshape(-1, 28, 28).astype(np.uint8)
    first = datamod.stratified_subset(y, 2500, seed=1234)
    second = np.setdiff1d(np.arange(len(y)), first)
    out = tmp_path_factory.mktemp("mnist")
    for prefix, idx in (("train", first), ("t10k", second)):
        (out / f"{prefix}-images-idx3-ubyte").write_bytes(datamod.idx_images_bytes(images[idx]))
        (out / f"{prefix}-labels-idx1-ubyte").write_bytes(datamod.idx_labels_bytes(y[idx]))
    return out
