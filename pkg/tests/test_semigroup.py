import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from singlab.geometry import build_cusp_interval, build_segment
from singlab.operators import OperatorSpec, assemble, laplace_beltrami
from singlab.semigroup import (
    EvolutionTrace,
    ResolventError,
    StepperConfig,
    contractivity_certificates,
    contractivity_probe,
    evolve,
    linf_oracle,
    monitor_norm,
    resolvent_apply,
    sector_probe,
    stationary_solve,
)
from singlab.spaces import DiscreteCalculus


def _op(man, lam=2.0, lp=0.0, omega=0.0):
    calc = DiscreteCalculus(man)
    return assemble(OperatorSpec(laplace_beltrami(man, lam, calc.rho.rho), lam, lp, omega), man, calc)


@pytest.fixture(scope="module")
def seg():
    # -u'' on (0, 1) with Dirichlet ends; eigenvalues (2/h^2)(1 - cos(k pi h))
    return _op(build_segment(33, 1.0), lam=0.0)


@pytest.fixture(scope="module")
def cusp_op():
    return _op(build_cusp_interval("linear", 48, 0.0625, "auto"), omega=10.14)


# {{{ resolvent


@pytest.mark.parametrize("mu", [0.0, 1.0, 2.5 + 3j])
def test_resolvent_solves_shifted_system(cusp_op, rng, mu):
    f = rng.standard_normal(cusp_op.n)
    u = resolvent_apply(cusp_op, mu, f)
    res = cusp_op.matrix @ u + mu * u - f
    assert np.linalg.norm(res) <= 1e-10 * np.linalg.norm(f)


def test_resolvent_complex_rhs_against_real_operator(cusp_op, rng):
    f = rng.standard_normal(cusp_op.n) + 1j * rng.standard_normal(cusp_op.n)
    u = resolvent_apply(cusp_op, 1.0, f)
    ref = resolvent_apply(cusp_op, 1.0, f.real) + 1j * resolvent_apply(cusp_op, 1.0, f.imag)
    np.testing.assert_allclose(u, ref, rtol=1e-13)


def test_resolvent_singular_system_raises(seg):
    lam1 = (2 / (1 / 32) ** 2) * (1 - math.cos(math.pi / 32))
    with pytest.raises(ResolventError):
        resolvent_apply(seg, -lam1, np.ones(seg.n))


def test_segment_spectrum_matches_closed_form(seg):
    h = 1 / 32
    k = np.arange(1, 32)
    ref = (2 / h**2) * (1 - np.cos(k * np.pi * h))
    ev = np.sort(np.linalg.eigvals(seg.matrix.toarray()).real)
    np.testing.assert_allclose(ev, ref, rtol=1e-10)


# }}}


# {{{ time stepping


def test_stepper_config_validation():
    with pytest.raises(ValueError):
        StepperConfig("rk4")
    with pytest.raises(ValueError):
        StepperConfig(dt=2.0, T=1.0)
    with pytest.raises(ValueError):
        StepperConfig(monitors=())
    assert StepperConfig(dt=0.1, T=1.0).steps == 10


@pytest.mark.parametrize("scheme,factor", [
    ("implicit-euler", lambda z: 1 / (1 + z)),
    ("crank-nicolson", lambda z: (1 - z / 2) / (1 + z / 2)),
])
def test_evolve_matches_scalar_amplification(seg, scheme, factor):
    # first sine mode is an eigenvector; one step multiplies it by R(dt lambda_1)
    x = seg.manifold.grid.coords[seg.interior, 0]
    v = np.sin(np.pi * x)
    h = 1 / 32
    lam1 = (2 / h**2) * (1 - math.cos(math.pi * h))
    cfg = StepperConfig(scheme, 0.01, 0.05, ((2.0, 0.0),))
    tr = evolve(seg, v, None, cfg)
    np.testing.assert_allclose(tr.final, factor(0.01 * lam1) ** 5 * v, rtol=1e-12, atol=1e-14)
    assert not tr.violations


def test_evolve_records_monitors_and_snapshots(seg, tmp_path):
    cfg = StepperConfig("implicit-euler", 0.01, 0.1, ((2.0, 0.0), (math.inf, 0.0)))
    tr = evolve(seg, np.ones(seg.n), None, cfg, snapshot_every=5)
    assert isinstance(tr, EvolutionTrace)
    assert tr.times.size == 11 and len(tr.snapshots) == 3
    assert tr.norms[(math.inf, 0.0)][0] == 1.0
    assert np.all(np.diff(tr.norms[(2.0, 0.0)]) <= 0)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    head = path.read_text().splitlines()[0]
    assert head == "time,p=2;lp=0,p=inf;lp=0"


def test_evolve_flags_growth():
    # negative diagonal operator grows every norm
    man = build_segment(9, 1.0)
    op = _op(man, lam=0.0)
    grow = op.__class__(**{**op.__dict__, "matrix": -sp.identity(op.n, format="csr")})
    tr = evolve(grow, np.ones(op.n), None, StepperConfig(dt=0.1, T=0.3))
    assert [v["step"] for v in tr.violations] == [1, 2, 3]


def test_evolve_rejects_nonfinite_datum(seg):
    u = np.ones(seg.n)
    u[3] = np.nan
    with pytest.raises(ValueError):
        evolve(seg, u, None, StepperConfig(dt=0.1, T=0.2))


def test_forced_evolution_reaches_stationary_state(seg):
    f = np.ones(seg.n)
    u_inf = resolvent_apply(seg, 0.0, f)
    tr = evolve(seg, np.zeros(seg.n), lambda t: f, StepperConfig("implicit-euler", 0.01, 2.0))
    np.testing.assert_allclose(tr.final, u_inf, rtol=1e-6)


# }}}


# {{{ contractivity


def test_certificates_hold_for_m_matrix(cusp_op):
    cert = contractivity_certificates(cusp_op, [-1.0, 0.0, 1.0])
    assert cert["z_matrix"]
    for k in ("-1", "0", "1"):
        assert cert[k]["inf"] and cert[k]["1"] and cert[k]["2"]


def test_certificate_fails_without_compensation():
    # zero potential on the cusp: rho^lp A rho^-lp loses nonnegative row sums at lp = 1
    op = _op(build_cusp_interval("linear", 48, 0.0625, "auto"))
    cert = contractivity_certificates(op, [1.0])
    assert not cert["1"]["inf"]


@given(dt=st.floats(1e-4, 10.0))
def test_linf_oracle_on_m_matrix(dt):
    A = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    rep = linf_oracle(A, dt)
    assert rep["nonnegative_inverse"] and rep["z_matrix"] and rep["row_sums_nonnegative"]
    assert rep["inf_norm"] <= 1.0 + 1e-12


def test_linf_oracle_detects_expansion():
    A = np.array([[1.0, 2.0], [2.0, 1.0]])
    rep = linf_oracle(A, 0.5)
    assert not rep["z_matrix"]
    assert rep["inf_norm"] > 1.0


def test_contractivity_probe_is_reproducible(cusp_op):
    cfg = StepperConfig("implicit-euler", 0.01, 0.2)
    a = contractivity_probe(cusp_op, 4, (2.0, math.inf), (0.0, 1.0), cfg, rng=np.random.default_rng(3))
    b = contractivity_probe(cusp_op, 4, (2.0, math.inf), (0.0, 1.0), cfg,
                            rng=np.random.default_rng(3), threads=2)
    assert a["violations"] == [] and a["m_matrix"]
    assert a["max_step_ratio"] == b["max_step_ratio"]
    assert all(r <= 1.0 for r in a["max_step_ratio"].values())


def test_monitor_norm_weighting(cusp_op):
    u = np.ones(cusp_op.n)
    assert monitor_norm(cusp_op, u, math.inf, 1.0) == pytest.approx(cusp_op.rho.max())
    assert monitor_norm(cusp_op, u, 1.0, 0.0) == pytest.approx(cusp_op.weights.sum())


# }}}


# {{{ sector and stationary


def test_sector_probe_on_symmetric_operator(seg):
    rep = sector_probe(seg, 0.0)
    assert rep.passed and rep.theta == pytest.approx(math.pi / 2 + 6 * math.pi / 16)
    assert rep.min_real > 0
    # self-adjoint and positive: |mu| ||R(mu)|| <= 1 / sin(theta) off the real axis
    d = rep.as_dict()
    assert len(d["eigenvalues"]) == seg.n


def test_sector_probe_degrades_for_large_systems(seg):
    rep = sector_probe(seg, 0.0, max_dense=10)
    assert rep.degraded and not rep.passed


def test_stationary_solve_ratio_positive(cusp_op):
    u, ratio = stationary_solve(cusp_op, np.ones(cusp_op.n))
    np.testing.assert_allclose(cusp_op.matrix @ u, 1.0, rtol=1e-9)
    assert 0 < ratio < math.inf


# }}}


# {{{ cross-checks


def test_crank_nicolson_and_implicit_euler_agree_first_order(cusp_op):
    x = cusp_op.manifold.grid.coords[cusp_op.interior, 0]
    u0 = np.sin(np.pi * (x - 0.0625) / (1 - 0.0625))
    diffs = []
    for dt in (0.01, 0.005, 0.0025):
        ends = [evolve(cusp_op, u0, None, StepperConfig(s, dt, 0.1)).final
                for s in ("implicit-euler", "crank-nicolson")]
        diffs.append(monitor_norm(cusp_op, ends[0] - ends[1], 2.0, 0.0))
    orders = [math.log2(diffs[k] / diffs[k + 1]) for k in range(2)]
    assert min(orders) >= 0.9, orders


@pytest.mark.parametrize("name", ["cusp_lb", "heston"])
def test_spectrum_bounded_below_by_coercivity_gap(name):
    # Au = mu u gives Re mu |u|_W^2 = Re a(u, u) >= (omega - omega_A) |rho^(-lam/2) u|_W^2
    from conftest import CONFIGS
    from singlab.apps import build_problem, load_config
    from singlab.operators import omega_bound

    cfg = load_config(CONFIGS / f"{name}.json")
    prob = build_problem(cfg)
    b = omega_bound(prob.spec(0.0, omega=0.0), prob.manifold, 1.99, prob.calc)
    gap = prob.omega - max(0.0, b["A3"], b["A4"], b["A5"])
    A = prob.operator(0.0)
    bound = gap * float(np.min(A.rho ** -cfg.lam))
    min_real = float(np.linalg.eigvals(A.matrix.toarray()).real.min())
    assert gap > 0 and min_real >= bound


# }}}
