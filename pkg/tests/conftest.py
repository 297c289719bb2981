import pytest

from entangled_interferometer.config import bundled_path, load_config


@pytest.fixture(scope="session")
def paper_config_path():
    return bundled_path("paper.json")


@pytest.fixture(scope="session")
def paper_config(paper_config_path):
    return load_config(paper_config_path)


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])
    return lines.append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for text in sorted(lines, key=lambda t: int(t.split()[1].rstrip(":"))):
            terminalreporter.write_line(text)
