import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import toy  # noqa: E402
from newscam.encoder import save_weights  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def toy_vocab_words():
    return toy.vocab()


@pytest.fixture(scope="session")
def toy_config():
    return toy.config()


@pytest.fixture(scope="session")
def toy_weights():
    return toy.weights()


@pytest.fixture(scope="session")
def toy_resources(tmp_path_factory, toy_vocab_words, toy_weights):
    d = tmp_path_factory.mktemp("toy")
    toy_vocab_words.save(d / "vocab.txt")
    save_weights(d / "weights.bin", toy_weights)
    return d


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria report: (name, passed, detail); passed is None when skipped
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}: {detail}")
