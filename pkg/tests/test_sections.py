import json
import math

import numpy as np
import pytest

from monofam import (
    NormedNode,
    ResolutionError,
    Section,
    SimpleSection,
    TimeGrid,
    WindowError,
    approximate_by_simple,
    build_nested_lq,
    build_sup_counterexample,
    build_weighted_hilbert,
    constant_family,
    constant_section,
    lebesgue_point_residual,
    local_integral,
    lp_direct_norm,
    section_from_function,
    smooth_Mh,
    zero_section,
)
from monofam.errors import DimensionError
from monofam.sections import (
    bochner_chain,
    is_simple,
    node_norms,
    norms_csv,
    section_from_json,
    section_to_json,
    sectional_limit,
)

from conftest import shrinking


def smooth(t, x):
    return np.sin(x) * np.exp(-t)


@pytest.fixture(scope="module")
def nested():
    return build_nested_lq(shrinking, 2.0, 96, TimeGrid.uniform(64))


@pytest.fixture(scope="module")
def cex():
    return build_sup_counterexample(100, TimeGrid.uniform(64))


def test_section_shape_checked(nested):
    with pytest.raises(DimensionError):
        Section(nested, np.zeros((nested.n, 5)))


def test_zero_sampler_gives_zero_section(nested):
    u = section_from_function(nested, lambda t, x: 0.0 * x)
    assert np.all(np.asarray(u.values) == 0)
    for p in (1, 2, 3.5, math.inf):
        assert lp_direct_norm(u, p).value == 0.0
        assert lp_direct_norm(zero_section(nested), p).value == 0.0


def test_identity_sampler_node_norms_match_integral():
    g = TimeGrid.uniform(16)
    fam = build_nested_lq(shrinking, 3.0, 400, g)
    u = section_from_function(fam, lambda t, x: x)
    ell = 1 - g.nodes / 2
    assert np.allclose(node_norms(u), (ell**4 / 4) ** (1 / 3), rtol=1e-3)


def test_counterexample_sup_in_time_is_one(cex):
    u = section_from_function(cex, lambda t, x: x)
    assert lp_direct_norm(u, math.inf).value == 1.0


@pytest.mark.parametrize("eps", [0.05, 0.1])
def test_counterexample_l1_norm_on_shifted_interval(eps):
    n = 2000
    g = TimeGrid.uniform(n, eps, 1 - eps)
    u = section_from_function(build_sup_counterexample(50, g), lambda t, x: x)
    exact = 0.5 * (0.5 - eps) + 1.0 * (0.5 - eps)
    # trapezoid over [t_0, t_{n-1}] misses one cell at each end and smears the jump
    assert lp_direct_norm(u, 1).value == pytest.approx(exact, abs=3.0 / n)
    assert exact == pytest.approx(0.75 - 1.5 * eps)


def test_lp_norm_window(nested, rng):
    u = Section(nested, rng.standard_normal((nested.n, 96)))
    whole = lp_direct_norm(u, 2).value ** 2
    a = lp_direct_norm(u, 2, (0, 30)).value ** 2
    b = lp_direct_norm(u, 2, (30, nested.n - 1)).value ** 2
    assert a + b == pytest.approx(whole, rel=1e-12)


# local integral


def test_local_integral_of_zero(nested):
    k, v = local_integral(zero_section(nested), (3, 20))
    assert k == 20 and np.all(v == 0)


def test_local_integral_of_constant_is_length_times_vector(rng):
    node = NormedNode.lq(rng.uniform(0.5, 1.5, 6))
    g = TimeGrid.uniform(33)
    fam = constant_family(g, node)
    v = rng.standard_normal(6)
    _, x = local_integral(constant_section(fam, v), (4, 25))
    assert np.allclose(x, (g.nodes[25] - g.nodes[4]) * v, rtol=1e-13)


@pytest.mark.parametrize("builder", ["nested", "hilbert", "sup"])
def test_bochner_inequality_on_random_sections(builder, rng):
    g = TimeGrid.uniform(40)
    fam = {"nested": build_nested_lq(shrinking, 2.0, 32, g),
           "hilbert": build_weighted_hilbert(32, g),
           "sup": build_sup_counterexample(32, g)}[builder]
    for _ in range(50):
        u = Section(fam, [nd.canonical(rng.standard_normal(nd.dim)) for nd in fam.nodes])
        lo, hi = sorted(rng.integers(0, fam.n, size=2))
        a, b, c = bochner_chain(u, (lo, hi))
        _, x = local_integral(u, (lo, hi))
        assert a == pytest.approx(fam.nodes[hi].norm(x), rel=1e-14)
        assert a <= b + 1e-12 * max(1, b)
        assert b <= c + 1e-12 * max(1, c)
        assert a <= lp_direct_norm(u, 1, (lo, hi)).value + 1e-12


def test_local_integral_additivity(rng):
    fam = build_weighted_hilbert(32, TimeGrid.uniform(40))
    u = Section(fam, [nd.canonical(rng.standard_normal(nd.dim)) for nd in fam.nodes])
    _, whole = local_integral(u, (2, 37))
    _, left = local_integral(u, (2, 19))
    _, right = local_integral(u, (19, 37))
    assert np.allclose(fam.push(19, 37, left) + right, whole, atol=1e-12)


def test_window_outside_grid_rejected(nested):
    with pytest.raises(WindowError):
        local_integral(zero_section(nested), (3, nested.n))


# simple sections


def test_simple_section_returned_unchanged(nested):
    s = SimpleSection(nested, ((0, np.ones(96), 0, 10), (20, np.ones(96), 20, 30)))
    assert approximate_by_simple(s, (0, nested.n - 1), 1e-3) is s
    assert s.residual == 0


def test_piecewise_constant_section_is_reproduced(nested):
    u = SimpleSection(nested, ((0, np.cos(nested.coords), 0, 31), (32, np.sin(nested.coords), 32, 63))).to_section()
    assert is_simple(u, (0, 31)) and not is_simple(u)
    s = approximate_by_simple(u, (0, nested.n - 1), 1e-12)
    assert s.residual == 0.0


def test_smooth_section_meets_tolerance_at_512():
    fam = build_nested_lq(shrinking, 2.0, 128, TimeGrid.uniform(512))
    u = section_from_function(fam, smooth)
    s = approximate_by_simple(u, (0, fam.n - 1), 1e-3)
    assert s.residual <= 1e-3
    # direct recomputation of the residual
    diff = node_norms(u - s.to_section())
    assert float(fam.grid.trapezoid_weights() @ diff) == pytest.approx(s.residual, rel=1e-12)


def test_simple_approximants_bounded_by_twice_the_section(rng):
    fam = build_nested_lq(shrinking, 2.0, 64, TimeGrid.uniform(128))
    for _ in range(20):
        a, b, c = rng.uniform(0.3, 3.0, size=3)
        u = section_from_function(fam, lambda t, x: a * np.sin(b * x - c * t) + t * x)
        s = approximate_by_simple(u, (0, fam.n - 1), 5e-2)
        nu, ns = node_norms(u), node_norms(s.to_section())
        assert np.all(ns <= 2 * nu + 1e-12)


def test_unreachable_tolerance_reports_floor(nested):
    u = section_from_function(nested, smooth)
    with pytest.raises(ResolutionError) as err:
        approximate_by_simple(u, (0, nested.n - 1), 1e-9)
    assert err.value.achievable > 1e-9
    # the reported floor is attainable
    s = approximate_by_simple(u, (0, nested.n - 1), err.value.achievable * (1 + 1e-12))
    assert s.residual <= err.value.achievable * (1 + 1e-12)


# smoothing


def test_mh_leaves_constants_alone(nested):
    u = constant_section(nested, np.cos(nested.coords))
    out = smooth_Mh(u, 0.2)
    assert np.allclose(np.asarray(out.values), np.asarray(u.values), atol=1e-12)


def test_mh_converges_at_first_order():
    fam = build_nested_lq(shrinking, 2.0, 128, TimeGrid.uniform(512))
    u = section_from_function(fam, smooth)
    dt = fam.grid.widths[0]
    hs = np.array([64, 32, 16, 8]) * dt
    errs = [lp_direct_norm(smooth_Mh(u, h) - u, 2).value for h in hs]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.3)


def test_mh_full_span_gives_pushed_mean(nested, rng):
    u = section_from_function(nested, lambda t, x: np.cos(3 * x + t))
    span = nested.t[-1] - nested.t[0]
    out = smooth_Mh(u, span)
    _, integral = local_integral(u, (0, nested.n - 1))
    assert np.allclose(out.values[-1], integral / span, atol=1e-13)
    _, part = local_integral(u, (0, 10))
    assert np.allclose(out.values[10], part / (nested.t[10] - nested.t[0]), atol=1e-13)


# Lebesgue points


def test_lebesgue_residual_zero_for_constant(nested):
    u = constant_section(nested, np.ones(96))
    assert lebesgue_point_residual(u, 40, 0.1) == 0.0


def test_lebesgue_residual_linear_in_h():
    fam = build_nested_lq(shrinking, 2.0, 128, TimeGrid.uniform(512))
    u = section_from_function(fam, smooth)
    dt = fam.grid.widths[0]
    for h in (8 * dt, 32 * dt, 128 * dt):
        r = lebesgue_point_residual(u, 300, h)
        # |d/dt u| <= 1 in the node norm, so the average distance is at most h/2
        assert r <= 0.5 * h + 1e-12


def test_lebesgue_residual_zero_across_the_jump(cex):
    u = section_from_function(cex, lambda t, x: x)
    jump = int(np.searchsorted(cex.t, 0.5))
    for node in range(jump - 1, jump + 4):
        assert lebesgue_point_residual(u, node, 0.1) == 0.0


def test_lebesgue_window_exiting_grid_rejected(nested):
    with pytest.raises(WindowError):
        lebesgue_point_residual(zero_section(nested), 2, 0.2)


# coordinatewise limits


def test_sectional_limit_bound(nested):
    u = section_from_function(nested, smooth)
    seq = [(1 + (-0.5) ** k) * u for k in range(1, 60)]
    lim, C, norm = sectional_limit(seq, 2.0)
    assert norm <= C
    assert np.allclose(np.asarray(lim.values), np.asarray(u.values), atol=1e-15)
    with pytest.raises(ValueError):
        sectional_limit([u, 2 * u], 2.0)


# interchange


def test_section_json_roundtrip(nested, rng):
    u = Section(nested, rng.standard_normal((nested.n, 96)))
    back = section_from_json(json.loads(json.dumps(section_to_json(u))), nested)
    assert np.array_equal(np.asarray(back.values), np.asarray(u.values))
    with pytest.raises(ValueError):
        section_from_json({"family_ref": "other", "values": []}, nested)


def test_norms_csv(cex):
    u = section_from_function(cex, lambda t, x: x)
    lines = norms_csv(u).strip().splitlines()
    assert lines[0] == "t,norm"
    assert len(lines) == cex.n + 1
    assert float(lines[1].split(",")[1]) == 1.0 and float(lines[-1].split(",")[1]) == 0.5
