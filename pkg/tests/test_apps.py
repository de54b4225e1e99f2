import copy
import json
import math

import numpy as np
import pytest

from conftest import CONFIGS
from singlab.apps import (
    CertificationError,
    ProblemConfig,
    build_problem,
    load_config,
    run,
    run_hypotheses,
    run_mms,
    validate_config,
)
from singlab.apps.cli import main
from singlab.apps.config import RunConfig, build_manifold, refine_geometry
from singlab.apps.mms import continuum_apply, manufactured_solution
from singlab.geometry import ConfigurationError, UnsupportedParameterError

CONFIG_FILES = sorted(p for p in CONFIGS.glob("*.json") if p.name != "batch.json")


def raw(name):
    with open(CONFIGS / f"{name}.json") as fh:
        return json.load(fh)


def quick(data, **run):
    """Shrink the run block so drivers finish in a fraction of a second."""
    data = copy.deepcopy(data)
    data["run"].update({"trials": 2, "probe_steps": 5, "T": 0.05, "dt": 0.01, **run})
    return data


# {{{ configuration


@pytest.mark.parametrize("path", CONFIG_FILES, ids=lambda p: p.stem)
def test_shipped_configs_validate(path):
    cfg = load_config(path)
    assert cfg.name == path.stem


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("name"),
        lambda d: d["run"].update(probes=["nope"]),
        lambda d: d["operator"].update(omega="sometimes"),
        lambda d: d["geometry"].update(kind="torus"),
        lambda d: d["run"].update(monitors=[[0.5, 0]]),
    ],
)
def test_schema_rejects_malformed_configs(mutate):
    d = raw("cusp_lb")
    mutate(d)
    with pytest.raises(ConfigurationError):
        validate_config(d)


def test_run_config_defaults():
    rc = RunConfig.from_dict(None)
    assert rc.scheme == "implicit-euler" and rc.trials == 20 and rc.probe_steps == 200
    assert (math.inf, 0.0) not in rc.monitors


def test_monitor_inf_is_parsed():
    cfg = load_config(CONFIGS / "cusp_lb.json")
    assert (math.inf, 0.0) in cfg.run.monitors


def _heston(**hp):
    d = raw("heston")
    d["operator"]["heston"].update(hp)
    return d


@pytest.mark.parametrize(
    "data,exc",
    [
        (_heston(alpha=1.0), UnsupportedParameterError),
        (_heston(correlation=1.0), ConfigurationError),
        (_heston(correlation=-1.2), ConfigurationError),
        (_heston(sigma=0.0), ConfigurationError),
    ],
)
def test_heston_parameter_invariants(data, exc):
    with pytest.raises(exc):
        ProblemConfig.from_dict(data)


def test_heston_lambda_must_match_alpha():
    d = raw("heston")
    d["operator"]["lambda"] = 1.0
    with pytest.raises(ConfigurationError):
        ProblemConfig.from_dict(d)


def test_degenerate_lambda_one_rejected():
    d = raw("degenerate_weak")
    d["operator"]["lambda"] = 1.0
    with pytest.raises(UnsupportedParameterError):
        ProblemConfig.from_dict(d)


def test_punctured_heat_lambda_two_rejected():
    d = {
        "name": "p", "application": "heat",
        "geometry": {"kind": "punctured_domain", "points": [[0, 0]], "eps": 0.05, "n": 21},
        "operator": {"preset": "laplace-beltrami", "lambda": 2, "route": "hlambda"},
    }
    with pytest.raises(UnsupportedParameterError):
        ProblemConfig.from_dict(d)


def test_refine_geometry_splits_cells():
    g = {"kind": "pipe", "R": "log", "n_t": 20, "n_theta": 12, "eps": 0.0625, "grading": 0.3}
    assert refine_geometry(g, 2) == {**g, "n_t": 39, "n_theta": 24}
    h = {"kind": "domain_with_holes", "n": [16, 24]}
    assert refine_geometry(h, 4)["n"] == [61, 96]
    with pytest.raises(ConfigurationError):
        refine_geometry({"kind": "klein"}, 2)


def test_refinement_samples_nearly_the_same_node_map():
    g = raw("cusp_lb")["geometry"] | {"grading": 0.3}
    x0 = build_manifold(g).grid.axes[0]
    x1 = build_manifold(g, 2).grid.axes[0]
    d0, d1 = np.diff(x0), np.diff(x1)
    assert d1.min() / d1.max() == pytest.approx(0.3, rel=1e-9)
    shift = np.abs(x1[::2] - x0)[1:-1]
    assert np.all(shift <= 0.2 * np.minimum(d0[:-1], d0[1:]))


# }}}


# {{{ hypotheses


def test_cusp_certifies_with_auto_omega():
    cfg = load_config(CONFIGS / "cusp_lb.json")
    prob = build_problem(cfg)
    rep = run_hypotheses(cfg, prob)
    assert rep.passed and list(rep.conditions) == ["A1", "A2", "A3", "A4", "A5"]
    thr = rep.omega["thresholds"]
    assert prob.omega == pytest.approx(max(max(v.values()) for v in thr.values()) + 0.1)


def test_zero_omega_fails_at_first_threshold():
    d = raw("cusp_lb")
    d["operator"]["omega"] = 0.0
    rep = run_hypotheses(ProblemConfig.from_dict(d))
    assert not rep.passed and rep.first_failure == "A3"
    assert rep.active_nodes["A3"]


def test_zero_diffusion_fails_ellipticity(tmp_path):
    d = raw("cusp_lb")
    man = build_manifold(d["geometry"])
    np.save(tmp_path / "K.npy", np.zeros(man.grid.n_nodes))
    d["operator"] = {"preset": "tabulated", "lambda": 2, "omega": "auto", "tabulated": {"K": "K.npy"}}
    cfg = ProblemConfig.from_dict(d, base_dir=tmp_path)
    rep = run_hypotheses(cfg)
    assert rep.conditions["A2"] is False and rep.first_failure == "A2"
    assert any("single level" in n for n in rep.notes)
    with pytest.raises(CertificationError) as info:
        run(cfg)
    assert info.value.condition == "A2"


def test_hlambda_route_reports_window():
    cfg = load_config(CONFIGS / "heat_annulus.json")
    rep = run_hypotheses(cfg)
    assert [k for k in rep.conditions] == ["A1", "A2", "H1", "H2", "H3"]
    assert rep.conditions["H1"] and rep.conditions["H2"]
    # lambda' = +-1 has no window at omega = 0
    assert rep.conditions["H3"] is False and rep.first_failure == "H3"


# }}}


# {{{ drivers


def test_quick_cusp_run_report(tmp_path):
    cfg = ProblemConfig.from_dict(quick(raw("cusp_lb"), probes=["contractivity", "stationary"]))
    rep = run(cfg, seed=1)
    assert rep.passed, rep.first_failure
    paths = rep.write(tmp_path)
    data = json.loads(paths["report"].read_text())
    assert data["passed"] and data["flags"]["A5"]
    header = paths["trace"].read_text().splitlines()[0]
    assert header.startswith("time,p=2;lp=-1")


def test_time_dependent_degenerate_run():
    d = quick(raw("degenerate_weak"), probes=["contractivity"])
    d["operator"]["time_dependence"] = {"amplitude": 0.2, "frequency": 6.283185307179586, "holder_s": 1.0}
    rep = run(ProblemConfig.from_dict(d))
    assert rep.flags["evolution"]
    assert any("frozen" in n for n in rep.notes)
    assert rep.probes["equivalence"]["relative_change"] <= 0.1


def test_seed_reproducibility():
    cfg = ProblemConfig.from_dict(quick(raw("cusp_lb"), probes=["contractivity"], initial="random"))
    a, b = run(cfg, seed=5), run(cfg, seed=5)
    assert a.evolution == b.evolution


# }}}


# {{{ manufactured solutions


def test_continuum_operator_on_segment_is_second_derivative():
    prob = build_problem(load_config(CONFIGS / "heat_segment.json"))
    us = manufactured_solution(prob)
    X = np.linspace(0.1, 0.9, 9)[:, None]
    out = continuum_apply(prob, us.phi, X)
    ref = (np.pi**2 + prob.omega) * np.sin(np.pi * X[:, 0])
    np.testing.assert_allclose(out, ref, rtol=1e-8)


def test_mms_segment_second_order():
    table = run_mms(load_config(CONFIGS / "heat_segment.json"), 3)
    assert table.monotone and table.min_order >= 1.8
    assert len(table.as_dict()["levels"]) == 3


def test_mms_rejects_masked_grid():
    d = raw("cusp_lb")
    d["application"] = "heat"
    d["geometry"] = {"kind": "punctured_domain", "points": [[0, 0]], "eps": 0.05, "n": 21}
    d["operator"] = {"preset": "laplace-beltrami", "lambda": 0, "omega": 1.0}
    with pytest.raises(UnsupportedParameterError):
        run_mms(ProblemConfig.from_dict(d), 3)


def test_mms_needs_three_levels():
    with pytest.raises(ValueError):
        run_mms(load_config(CONFIGS / "heat_segment.json"), 2)


# }}}


# {{{ cli


def test_cli_check_exit_codes(capsys):
    assert main(["check", str(CONFIGS / "cusp_lb.json")]) == 0
    assert "A5: ok" in capsys.readouterr().out
    assert main(["check", str(CONFIGS / "heat_annulus.json")]) == 1
    assert "first failing condition H3" in capsys.readouterr().out


def test_cli_input_errors_exit_two(tmp_path, capsys):
    assert main(["check", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    d = _heston(alpha=1.0)
    bad.write_text(json.dumps(d))
    assert main(["run", str(bad)]) == 2
    assert "alpha = 1" in capsys.readouterr().err


def test_cli_run_and_mms_write_outputs(tmp_path):
    cfg = tmp_path / "seg.json"
    d = quick(raw("heat_segment"))
    cfg.write_text(json.dumps(d))
    assert main(["run", str(cfg), "--out", str(tmp_path), "--seed", "3"]) == 0
    assert (tmp_path / "heat_segment.report.json").exists()
    assert (tmp_path / "heat_segment.trace.csv").exists()
    assert main(["mms", str(cfg), "--levels", "3", "--out", str(tmp_path)]) == 0
    table = json.loads((tmp_path / "heat_segment.mms.json").read_text())
    assert table["min_order"] >= 1.8


def test_cli_run_certification_failure_writes_report(tmp_path):
    d = raw("cusp_lb")
    d["operator"]["omega"] = 0.0
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(d))
    assert main(["run", str(cfg), "--out", str(tmp_path)]) == 1
    data = json.loads((tmp_path / "cusp_lb.report.json").read_text())
    assert data["first_failure"] == "A3" and not data["passed"]


def test_cli_sweep(tmp_path):
    a = tmp_path / "a.json"
    a.write_text(json.dumps(quick(raw("heat_segment"))))
    batch = tmp_path / "batch.json"
    batch.write_text(json.dumps({"configs": ["a.json"]}))
    assert main(["sweep", str(batch), "--out", str(tmp_path), "--threads", "1"]) == 0


# }}}
