import numpy as np
import pytest

from deeplas import ElabConfig, InputSpec, LAS, Vocabulary


def make_micro(seed, chars="", arch="L + P/2 + L", scale=1.5, dtype=np.float64):
    """A tiny LAS with weights spread wide enough that decoding choices are not flat."""
    m = LAS(arch, Vocabulary(chars), InputSpec(4, 1), ElabConfig(hidden=3), dec_hidden=3, seed=seed).to_dtype(dtype)
    rng = np.random.default_rng([seed, 17])
    for _, p in m.named_parameters():
        p.data = rng.uniform(-scale, scale, size=p.shape).astype(dtype)
    return m


@pytest.fixture
def micro():
    return make_micro


_CRITERIA: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA.setdefault(mark.args[0], []).append((item.name, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_CRITERIA):
        runs = _CRITERIA[n]
        ok = all(passed for _, passed, _ in runs)
        details = "; ".join(d for _, _, d in runs if d) or ", ".join(name for name, _, _ in runs)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {details}")
