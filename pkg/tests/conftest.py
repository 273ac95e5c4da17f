"""Shared fixtures: small planted-structure cohorts and hypothesis settings."""

import hypothesis
import pytest

from shazam.features import SynthConfig, synth_teacher_set
from shazam.tasks import TaskKind

hypothesis.settings.register_profile(
    "shazam", deadline=None, max_examples=50, print_blob=True
)
hypothesis.settings.load_profile("shazam")


@pytest.fixture(scope="session")
def tile_fs():
    """Classification cohort: 3 teachers, 3 classes, 10 patients."""
    return synth_teacher_set(
        SynthConfig(
            task=TaskKind.CLASSIFICATION,
            n_teachers=3,
            n_samples=120,
            num_classes=3,
            n_patients=10,
            seed=11,
        )
    )


@pytest.fixture(scope="session")
def expr_fs():
    """Expression cohort: spots grouped into slides, 6-gene panel."""
    return synth_teacher_set(
        SynthConfig(
            task=TaskKind.EXPRESSION,
            n_teachers=3,
            n_samples=90,
            num_genes=6,
            spots_per_slide=15,
            seed=12,
        )
    )


@pytest.fixture(scope="session")
def surv_fs():
    """Survival cohort: 24 slides with small tile bags."""
    return synth_teacher_set(
        SynthConfig(
            task=TaskKind.SURVIVAL,
            n_teachers=3,
            n_samples=24,
            tiles_per_slide=(4, 8),
            censor_rate=0.25,
            seed=13,
        )
    )


# --------------------------------------------------------------------------
# Acceptance summary: one line per criterion at the end of the run.

_ACCEPTANCE_RESULTS: dict[tuple[int, str], str] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(num, title): end-to-end acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    num, title = marker.args
    if report.when == "call":
        _ACCEPTANCE_RESULTS[(num, title)] = "PASS" if report.passed else "FAIL"
    elif report.when == "setup" and report.outcome != "passed":
        _ACCEPTANCE_RESULTS[(num, title)] = "SKIP" if report.skipped else "FAIL"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for (num, title), status in sorted(_ACCEPTANCE_RESULTS.items()):
        terminalreporter.write_line(f"[{status}] criterion {num}: {title}")
