import pytest

from sensorcal import synthetic

ACCEPTANCE_KEY = "acceptance"


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): numbered acceptance criterion")


@pytest.fixture(autouse=True)
def _tag_acceptance(request):
    marker = request.node.get_closest_marker("acceptance")
    if marker is not None:
        request.node.user_properties.append((ACCEPTANCE_KEY, tuple(marker.args)))


_results: dict = {}


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if ACCEPTANCE_KEY not in props:
        return
    if report.when != "call" and not report.failed:
        return
    number, title = props[ACCEPTANCE_KEY]
    detail = props.get("detail", "")
    ok = report.passed
    prev = _results.get(number)
    if prev is not None:
        ok = ok and prev[1]
        detail = "; ".join(d for d in (prev[2], detail) if d)
    _results[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, ok, detail = _results[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number}. {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


# ---------------------------------------------------------------------------
# shared data
# ---------------------------------------------------------------------------
@pytest.fixture(scope="session")
def canon():
    return synthetic.preset("canon400d-approx")


@pytest.fixture(scope="session")
def noise_set(canon):
    dark = synthetic.simulate_stack(canon, [0.0], 64, "dark", seed_base=0)
    flat = synthetic.simulate_stack(canon, [synthetic.default_flat_exposure(canon)], 64, "flat",
                                    seed_base=100_000)
    return dark, flat


@pytest.fixture(scope="session")
def sweep_set(canon):
    exposures = synthetic.default_sweep(canon, 20)
    sweep = synthetic.simulate_stack(canon, exposures, 4, "flat", seed_base=200_000)
    dark = synthetic.simulate_stack(canon, [0.0], 16, "dark", seed_base=0)
    return exposures, sweep, dark


@pytest.fixture(scope="session")
def sve_set():
    model = synthetic.preset("sve-633nm")
    sweep = synthetic.simulate_stack(model, synthetic.default_sweep(model, 24), 4, "flat",
                                     seed_base=200_000)
    dark = synthetic.simulate_stack(model, [0.0], 16, "dark", seed_base=0)
    return model, sweep, dark

