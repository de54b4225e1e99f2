import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from singlab.geometry import (
    BoundaryKind,
    CollarBlend,
    ConfigurationError,
    GeometryError,
    Grading,
    NormalizationError,
    UnsupportedParameterError,
    build_bounded_domain,
    build_cone,
    build_cusp_interval,
    build_domain_with_holes,
    build_heston_strip,
    build_pipe,
    build_punctured_domain,
    build_segment,
    check_cusp_characteristic,
    check_hlambda,
    finite_difference_rho,
    graded_axis,
    h_witness,
    puncture_expansion,
    singularity_function,
    smoothstep,
)
from singlab.spaces import DiscreteCalculus


# {{{ grading


@given(
    lo=st.floats(0.001, 0.5),
    length=st.floats(0.1, 5.0),
    n=st.integers(3, 200),
    ratio=st.floats(0.01, 1.0),
    toward=st.sampled_from(["low", "high", "both"]),
)
def test_graded_axis_endpoints_and_ratio(lo, length, n, ratio, toward):
    x = graded_axis(lo, lo + length, n, Grading(ratio, toward))
    assert x.size == n
    assert x[0] == lo and x[-1] == lo + length
    dx = np.diff(x)
    assert np.all(dx > 0)
    if n > 3:
        assert dx.min() / dx.max() == pytest.approx(ratio, rel=1e-9)


def test_graded_axis_refines_toward_requested_end():
    x = graded_axis(0.0, 1.0, 21, Grading(0.1, "low"))
    dx = np.diff(x)
    assert np.all(np.diff(dx) > 0)
    y = graded_axis(0.0, 1.0, 21, Grading(0.1, "high"))
    np.testing.assert_allclose(np.diff(y), dx[::-1], rtol=1e-12)


@pytest.mark.parametrize("ratio", [0.0, -0.5, 1.5])
def test_grading_rejects_bad_ratio(ratio):
    with pytest.raises(ConfigurationError):
        Grading(ratio)


def test_auto_grading_keeps_rho_comparable():
    man = build_cusp_interval("linear", 32, 0.01, "auto")
    assert man.summary()["max_adjacent_rho_ratio"] <= 2.0
    x = man.grid.axes[0]
    assert x[1] - x[0] <= 0.9 * 0.01 * (1 + 1e-9)


# }}}


# {{{ constructors


# exact integrals of the volume density over the truncated domains; the
# dual-width rule is exact for densities linear in each coordinate
VOLUMES = [
    (lambda: build_cusp_interval("arctan", 40, 0.1, "auto"), 1.0 - 0.1),
    (lambda: build_pipe("log", 20, 12, 0.0625, "auto"), 2 * math.pi * (1 - 0.0625)),
    (lambda: build_cone(20, 12, 0.0625, "auto"), math.pi * (1 - 0.0625**2)),
    (
        lambda: build_domain_with_holes({"disk": 1.0}, [((0.0, 0.0), 0.5)], (16, 24), 0.1, 0.025, "auto"),
        math.pi * (1 - 0.525**2),
    ),
    (lambda: build_heston_strip(1.0, 0.5, 0.03, 21, 14, "auto"), 2.0 * (0.5 - 0.03)),
    (lambda: build_bounded_domain("interval", 0.01, 64, 0.1, "auto"), 1.0 - 0.02),
    (lambda: build_segment(11, 2.0), 2.0),
]


@pytest.mark.parametrize("make,volume", VOLUMES)
def test_volume_matches_exact_integral(make, volume):
    man = make()
    assert man.summary()["volume"] == pytest.approx(volume, rel=1e-12)


def test_constructors_flag_boundaries(any_manifold):
    grid = any_manifold.grid
    assert np.any(grid.boundary == BoundaryKind.INTERIOR)
    assert np.all(any_manifold.rho_values > 0)
    if any_manifold.kind != "pipe" and any_manifold.kind != "cone":
        assert np.any(grid.boundary != BoundaryKind.INTERIOR)
    s = any_manifold.summary()
    assert s["n_nodes"] == grid.n_nodes
    assert s["rho_max"] <= 1.0 + 1e-12


def test_lexicographic_numbering_last_axis_fastest():
    man = build_heston_strip(1.0, 0.5, 0.1, 5, 4, "auto")
    ijk = man.grid.ijk
    assert ijk[0].tolist() == [0, 0] and ijk[1].tolist() == [0, 1]
    assert man.grid.lattice_index[1, 2] == 6


def test_cusp_truncation_node_is_at_eps(cusp):
    x = cusp.grid.coords[:, 0]
    k = int(np.argmin(x))
    assert x[k] == pytest.approx(0.0625)
    assert cusp.grid.boundary[k] == BoundaryKind.TRUNCATION


def test_periodic_axis_has_no_boundary():
    man = build_pipe("linear", 16, 8, 0.1, "auto")
    b = man.grid.boundary.reshape(man.grid.shape)
    assert np.all(b[1:-1, :] == BoundaryKind.INTERIOR)
    assert np.all(b[0, :] == BoundaryKind.TRUNCATION)


@pytest.mark.parametrize(
    "make,exc",
    [
        (lambda: build_cusp_interval("linear", 8, 0.1), ConfigurationError),
        (lambda: build_cusp_interval("linear", 32, 0.5), ConfigurationError),
        (lambda: build_cusp_interval("square", 32, 0.1), ConfigurationError),
        (lambda: build_cusp_interval("linear", 16, 0.001, 1.0), ConfigurationError),
        (lambda: build_cusp_interval("nope", 32, 0.1), ConfigurationError),
        (lambda: build_heston_strip(1.0, 0.5, 0.2, 10, 10), ConfigurationError),
        (
            lambda: build_domain_with_holes(
                {"box": [-1, 1, -1, 1]}, [((-0.3, 0), 0.1), ((0.3, 0), 0.1)], 41, 0.1
            ),
            GeometryError,
        ),
        (
            lambda: build_domain_with_holes({"disk": 1.0}, [((0, 0), 0.5)], 16, 0.2),
            GeometryError,
        ),
        (lambda: build_punctured_domain([(0.9, 0.0)], 0.05, 21), GeometryError),
        (lambda: build_punctured_domain([(0.0, 0.0)], 0.3, 21), ConfigurationError),
        (lambda: build_bounded_domain("triangle", 0.01, 32), ConfigurationError),
        (lambda: build_bounded_domain("interval", 0.01, 32, 0.15), GeometryError),
    ],
)
def test_invalid_geometry_rejected(make, exc):
    with pytest.raises(exc):
        make()


# }}}


# {{{ cusp characteristics


@pytest.mark.parametrize(
    "name,C,sup2,cls",
    [
        ("linear", 1.0, 0.0, "uniformly-mild"),
        ("arctan", math.pi / 2, 9 / (2 * math.pi * math.sqrt(3)), "uniformly-mild"),
        ("log", math.e - 1, (math.e - 1) ** 2, "uniformly-mild"),
        ("sine", 1.5, math.pi**2 / 12, "uniformly-mild"),
    ],
)
def test_cusp_characteristic_constants(name, C, sup2, cls):
    rep = check_cusp_characteristic(name)
    assert rep.C == pytest.approx(C, rel=1e-6)
    assert rep.sup_d2R == pytest.approx(sup2, rel=1e-5, abs=1e-12)
    assert rep.classification == cls
    assert rep.divergent_integral


def test_cusp_square_is_general():
    assert check_cusp_characteristic("square").classification == "general"


def test_cusp_normalization_enforced():
    with pytest.raises(NormalizationError):
        check_cusp_characteristic({"poly": [0.0, 2.0]})


def test_cusp_polynomial_spec():
    rep = check_cusp_characteristic({"poly": [0.0, 0.5, 0.5]})
    # R' = 0.5 + t ranges over [0.5, 1.5]
    assert rep.C == pytest.approx(2.0, rel=1e-9)


# }}}


# {{{ collar blend


def test_smoothstep_values_and_derivatives():
    s = np.linspace(0, 1, 101)
    v, d1, d2 = smoothstep(s)
    assert v[0] == 0 and v[-1] == 1
    h = 1e-5
    inner = s[1:-1]
    fd1 = (smoothstep(inner + h)[0] - smoothstep(inner - h)[0]) / (2 * h)
    fd2 = (smoothstep(inner + h)[1] - smoothstep(inner - h)[1]) / (2 * h)
    np.testing.assert_allclose(d1[1:-1], fd1, atol=1e-7)
    np.testing.assert_allclose(d2[1:-1], fd2, atol=1e-6)
    # C^3: the second derivative vanishes at both ends
    assert d2[0] == 0 and d2[-1] == 0


@given(r=st.floats(0.01, 0.2), d=st.lists(st.floats(0.0, 2.0), min_size=2, max_size=20))
def test_blend_is_monotone_and_matches_distance_on_collar(r, d):
    blend = CollarBlend(r)
    d = np.sort(np.asarray(d))
    b, b1, _ = blend(d)
    assert np.all(np.diff(b) >= -1e-15)
    assert np.all(b1 >= -1e-15)
    near = d <= r
    np.testing.assert_allclose(b[near], d[near], rtol=1e-15)
    far = d >= blend.reach
    np.testing.assert_allclose(b[far], 1.0)


def test_blend_reach():
    assert CollarBlend(0.1).reach == pytest.approx(0.4)
    assert CollarBlend(0.1, 0.05).reach == pytest.approx(0.15)


# }}}


# {{{ singularity function


def _fd_lap_error(man):
    fd = finite_difference_rho(man)
    an = singularity_function(man)
    ok = np.isfinite(fd.lap) & man.grid.interior
    e = np.where(ok, np.abs(fd.lap - an.lap), 0.0)
    w = man.grid.cell_volumes * man.metric.sqrt_det
    return math.sqrt(np.sum(w * e**2))


@pytest.mark.parametrize(
    "make",
    [
        lambda n: build_cusp_interval("arctan", n, 0.0625, 0.3),
        lambda n: build_domain_with_holes({"disk": 1.0}, [((0, 0), 0.5)], (n, 8), 0.1, 0.025, 0.2),
    ],
)
def test_analytic_rho_agrees_with_finite_differences_second_order(make):
    errs = [_fd_lap_error(make(n)) for n in (33, 65, 129)]
    orders = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    assert min(orders) >= 1.8, orders


def test_cone_rho_finite_differences_exact():
    # rho = t is linear in the coordinates, so central differences are exact
    assert _fd_lap_error(build_cone(33, 8, 0.0625, 0.3)) < 1e-12


def test_rho_equals_distance_on_collar(annulus):
    d = annulus.rho_model.distance(annulus.grid.coords)
    near = d <= 0.1
    np.testing.assert_allclose(annulus.rho_values[near], d[near], rtol=1e-14)


def test_heston_rho_is_y():
    man = build_heston_strip(1.0, 0.5, 0.03, 9, 9, "auto")
    np.testing.assert_array_equal(man.rho_values, man.grid.coords[:, 1])


# }}}


# {{{ witnesses


@pytest.mark.parametrize("lam,v2", [(0.0, 1.0), (0.5, 0.5), (2.0, 1.0), (3.0, 2.0)])
def test_cusp_witness_fields_closed_form(cusp, lam, v2):
    # rho = t, h = sign(1 - lam) log t: rho|h'| = 1 and rho^lam (rho^(2-lam) h')' = |1 - lam|
    h = h_witness(cusp, lam)
    rep = check_hlambda(cusp, singularity_function(cusp), h, lam)
    assert rep.ok
    assert rep.v1_range == pytest.approx((1.0, 1.0), rel=1e-12)
    assert rep.v2_range == pytest.approx((v2, v2), rel=1e-12)
    assert rep.c == pytest.approx(math.sqrt(max(1.0, v2) / min(1.0, v2)), rel=1e-12)


def test_witness_excludes_pivot_lambda(cusp):
    with pytest.raises(UnsupportedParameterError):
        h_witness(cusp, 1.0)
    punct = build_punctured_domain([(0.0, 0.0)], 0.05, 21)
    with pytest.raises(UnsupportedParameterError):
        h_witness(punct, 2.0)
    with pytest.raises(UnsupportedParameterError):
        h_witness(cusp, -0.5)


def test_hlambda_reports_violating_node(cusp):
    h = h_witness(cusp, 0.0)
    bad = h.flux_div.copy()
    bad[10] = -1.0
    rep = check_hlambda(cusp, singularity_function(cusp), h, 0.0, v2=bad)
    assert not rep.ok and rep.violating_node == 10


@pytest.mark.parametrize("lam", [0.0, 1.0, 3.0])
def test_puncture_expansion_leading_term(lam):
    man = build_punctured_domain([(0.0, 0.0)], 0.05, 41)
    lead, K = puncture_expansion(man, lam)
    assert lead == pytest.approx(2.0 - lam, abs=1e-10)
    # on a flat plane rho = |x| exactly on the collar, so the rho^2 term vanishes
    assert K == 0.0


def test_hole_collar_pinching_close_to_one():
    man = build_domain_with_holes({"disk": 1.0}, [((0, 0), 0.5)], (24, 24), 0.05, None, "auto")
    h = h_witness(man, 0.0)
    rep = check_hlambda(man, singularity_function(man), h, 0.0, man.region & man.grid.interior)
    assert rep.ok and rep.c <= 1.06


def test_discrete_calculus_builds_on_every_constructor(any_manifold):
    calc = DiscreteCalculus(any_manifold)
    assert calc.weights.shape == (any_manifold.grid.n_nodes,)
    assert np.all(calc.weights > 0)


# }}}
