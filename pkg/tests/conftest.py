from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from singlab.geometry import (
    build_bounded_domain,
    build_cone,
    build_cusp_interval,
    build_domain_with_holes,
    build_heston_strip,
    build_pipe,
    build_punctured_domain,
)

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"


def _annulus(n=(16, 24), r=0.1, eps=0.025):
    return build_domain_with_holes({"disk": 1.0}, [((0.0, 0.0), 0.5)], n, r, eps, "auto")


# one representative per constructor; cheap enough to rebuild per test
CONSTRUCTORS = {
    "cusp_interval": lambda: build_cusp_interval("arctan", 48, 0.0625, "auto"),
    "pipe": lambda: build_pipe("log", 20, 12, 0.0625, "auto"),
    "cone": lambda: build_cone(20, 12, 0.0625, "auto"),
    "domain_with_holes": _annulus,
    "punctured_domain": lambda: build_punctured_domain([(0.0, 0.0)], 0.05, 31),
    "heston_strip": lambda: build_heston_strip(1.0, 0.5, 0.03, 21, 14, "auto"),
    "bounded_domain": lambda: build_bounded_domain("interval", 0.01, 64, 0.1, "auto"),
}


@pytest.fixture(params=sorted(CONSTRUCTORS))
def any_manifold(request):
    return CONSTRUCTORS[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cusp():
    return build_cusp_interval("linear", 64, 0.0625, "auto")


@pytest.fixture
def annulus():
    return _annulus()


def compact_field(manifold, rng, complex_data=False):
    """Random field vanishing on boundary and truncation nodes."""
    u = rng.standard_normal(manifold.grid.n_nodes)
    if complex_data:
        u = u + 1j * rng.standard_normal(manifold.grid.n_nodes)
    u[~manifold.grid.interior] = 0.0
    return u


# {{{ acceptance summary

# criterion number -> (title, passed, failing test names, details)
_ACCEPTANCE: dict[int, tuple[str, bool, list[str], list[str]]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    number, title = mark.args
    _, ok, failing, details = _ACCEPTANCE.get(number, (title, True, [], []))
    if not rep.passed:
        failing = failing + [item.name]
    details = details + [str(v) for k, v in rep.user_properties if k == "detail"]
    _ACCEPTANCE[number] = (title, ok and rep.passed, failing, details)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, failing, details = _ACCEPTANCE[number]
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}"
        if details:
            line += "  [" + "; ".join(details) + "]"
        if failing:
            line += "  failing: " + ", ".join(failing)
        tr.write_line(line)


# }}}
