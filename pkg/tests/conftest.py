import time
from dataclasses import dataclass

import pytest

from mealmeter.config import RunConfig
from mealmeter.synthgen import SynthConfig, simulate, zero_gain
from mealmeter.workflow import Featurized, evaluate, featurize_records


@dataclass
class SyntheticRun:
    dataset: object
    feats: Featurized
    pooled: object
    seconds: float


def _run(synth: SynthConfig, config: RunConfig = RunConfig()) -> SyntheticRun:
    t0 = time.perf_counter()
    ds = simulate(synth)
    feats = featurize_records(ds.records(), config)
    pooled = evaluate(feats.features, config, skipped=len(feats.skipped))
    return SyntheticRun(ds, feats, pooled, time.perf_counter() - t0)


# The default design is 12 subjects x 3 days; BVP is left out because the
# default signal set never reads it.
DEFAULT_SYNTH = SynthConfig(emit_bvp=False)


@pytest.fixture(scope="session")
def default_run() -> SyntheticRun:
    return _run(DEFAULT_SYNTH)


@pytest.fixture(scope="session")
def glucose_only_run() -> SyntheticRun:
    return _run(zero_gain(DEFAULT_SYNTH, keep=("glucose_per_carb_g",)))


@pytest.fixture(scope="session")
def null_run() -> SyntheticRun:
    return _run(zero_gain(DEFAULT_SYNTH))


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """Two subjects x two days on disk, for CLI tests."""
    from mealmeter.synthgen import write_dataset

    out = tmp_path_factory.mktemp("synth") / "data"
    write_dataset(simulate(SynthConfig(n_subjects=2, days_per_subject=2, emit_bvp=False)), out)
    return out


# --------------------------------------------------------------------------
# acceptance summary: one line per criterion, printed after the run

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    prev = _CRITERIA.get(number)
    passed = report.passed and (prev is None or prev[1])
    details = [d for d in ((prev[2] if prev else ""), detail) if d]
    _CRITERIA[number] = (title, passed, "; ".join(details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, passed, detail = _CRITERIA[number]
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
