import pytest

from iosac import config as cf


@pytest.fixture(scope="session")
def cfg():
    return cf.load_config()


@pytest.fixture(scope="session")
def devices(cfg):
    return cf.build_devices(cfg)


# acceptance lines, keyed like "3b"; printed once at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record():
    def _record(key: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[key] = (bool(ok), detail)
        print(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    groups: dict[str, list[bool]] = {}
    for key in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[key]
        groups.setdefault(key[0], []).append(ok)
        tr.write_line(f"  {key:<3} {'PASS' if ok else 'FAIL'}  {detail}")
    for crit in sorted(groups):
        tr.write_line(f"criterion {crit}: {'PASS' if all(groups[crit]) else 'FAIL'}")
