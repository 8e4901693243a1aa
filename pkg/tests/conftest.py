import pytest

from icshunt.classifier import ModelHyperparams, train
from icshunt.knowledge import (
    Domain,
    Granularity,
    build_dataset,
    load_packaged_bundle,
    matrix_knowledge_base,
)
from icshunt.signatures import load_default_rules
from icshunt.trafficlab import ScenarioSpec, generate_scenario

# The worked 4-group example matrix used throughout: group label -> tactic
# membership bits in ICS matrix column order.
TACTIC_NAMES = (
    "Initial Access",
    "Execution",
    "Persistence",
    "Privilege Escalation",
    "Evasion",
    "Discovery",
    "Lateral Movement",
    "Collection",
    "Command and Control",
    "Inhibit Response Function",
    "Impair Process Control",
    "Impact",
)

REFERENCE_ROWS = {
    "1": (1, 0, 1, 0, 0, 0, 0, 0, 1, 0, 0, 0),
    "2": (0, 1, 1, 0, 1, 1, 1, 0, 0, 1, 0, 0),
    "3": (1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0),
    "4": (0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 1),
}


@pytest.fixture(scope="session")
def toy_kb():
    return matrix_knowledge_base(REFERENCE_ROWS, TACTIC_NAMES)


@pytest.fixture(scope="session")
def toy_model(toy_kb):
    return train(build_dataset(toy_kb, Granularity.TACTIC), ModelHyperparams(seed=0))


@pytest.fixture(scope="session")
def ics_kb():
    return load_packaged_bundle(Domain.ICS)


@pytest.fixture(scope="session")
def enterprise_kb():
    return load_packaged_bundle(Domain.ENTERPRISE)


@pytest.fixture(scope="session")
def default_rules(ics_kb):
    return load_default_rules(ics_kb)


@pytest.fixture(scope="session")
def ics_model(ics_kb):
    return train(build_dataset(ics_kb, Granularity.TECHNIQUE), ModelHyperparams(seed=0))


@pytest.fixture(scope="session")
def scenario(tmp_path_factory):
    """Seed-42 four-step attack capture: (path, ground truth, raw bytes)."""
    data, truth = generate_scenario(ScenarioSpec())
    path = tmp_path_factory.mktemp("scenario") / "attack.pcap"
    path.write_bytes(data)
    return str(path), truth, data


@pytest.fixture(scope="session")
def benign_capture(tmp_path_factory):
    """Background-only capture: same honeypot, no attack steps."""
    data, truth = generate_scenario(
        ScenarioSpec(steps=(), background_traffic=20, seed=42)
    )
    path = tmp_path_factory.mktemp("benign") / "benign.pcap"
    path.write_bytes(data)
    return str(path), truth


# --------------------------------------------------------------------------
# Acceptance reporting: tests marked @pytest.mark.acceptance("<criterion>")
# roll up into a one-line pass/fail summary per criterion.

ACCEPTANCE_ORDER = [
    "end-to-end scenario reproduction (seed 42, benign floor, < 5 s)",
    "ICS accuracy 1.0 on clean technique profiles",
    "Enterprise noisy held-out accuracy >= 0.90, clean = 1.0, < 60 s",
    "oracle equivalences: candidates / nearest-neighbor / engine replay",
    "reference matrix fidelity: profiles and lifecycle prediction",
    "codec round-trip x10k and fuzz x100k without failure",
    "knowledge ingestion: 12 tactics, integrity, < 10 s",
    "hypothesis invariants over randomized detection sequences",
    "store durability: 1,000 events, reopen, query equals scan",
]

_acceptance_results: dict[str, list[bool]] = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(name): acceptance criterion this test verifies"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    name = marker.args[0]
    if report.when == "call":
        _acceptance_results.setdefault(name, []).append(report.passed)
    elif report.when == "setup" and (report.failed or report.skipped):
        _acceptance_results.setdefault(name, []).append(False)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    known = [n for n in ACCEPTANCE_ORDER if n in _acceptance_results]
    extra = [n for n in _acceptance_results if n not in ACCEPTANCE_ORDER]
    for name in known + extra:
        verdict = "PASS" if all(_acceptance_results[name]) else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {name}")
