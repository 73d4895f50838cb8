import sys

import pytest

from rhotica.synth import make_rhotic_corpus


@pytest.fixture(scope="session")
def mini_corpus(tmp_path_factory):
    """The two-system synthetic rhoticity corpus (20 utterances each)."""
    return make_rhotic_corpus(tmp_path_factory.mktemp("mini"), n_utterances=20, seed=0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
