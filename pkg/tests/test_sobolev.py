import math

import numpy as np
import pytest

from monofam import (
    MonofamError,
    NormedNode,
    Section,
    TimeGrid,
    build_nested_lq,
    build_sup_counterexample,
    build_weighted_hilbert,
    constant_family,
    constant_section,
    difference_quotient,
    ftc_reconstruct,
    lp_direct_norm,
    minimal_gradient_oracle,
    minimal_upper_gradient,
    reshetnyak_check,
    scalar_characterization_check,
    section_from_function,
    sobolev_norm,
    verify_upper_gradient,
    weak_derivative,
    zero_section,
)
from monofam.sections import local_integral, node_norms
from monofam.sobolev import (
    UpperGradient,
    frozen_norm_quotients,
    integration_by_parts_residual,
    linf_ratio,
    pair_distances,
    raised_cosine_bumps,
)
from monofam.suite import oracle_instance

from conftest import shrinking


def smooth(t, x):
    return np.sin(x) * np.exp(-t)


def nested(n, mesh=128):
    return build_nested_lq(shrinking, 2.0, mesh, TimeGrid.uniform(n))


def counterexample(n, mesh=64):
    fam = build_sup_counterexample(mesh, TimeGrid.uniform(n))
    return section_from_function(fam, lambda t, x: x)


# upper gradients


def test_constant_section_zero_gradient_passes():
    fam = nested(32)
    u = constant_section(fam, np.cos(fam.coords))
    rep = verify_upper_gradient(u, UpperGradient.from_cells(fam.grid, np.zeros(31), 2))
    assert rep.passed and rep.worst_residual == 0


def test_counterexample_zero_gradient_passes():
    u = counterexample(64)
    rep = verify_upper_gradient(u, UpperGradient.from_cells(u.family.grid, np.zeros(63), 2))
    assert rep.passed and rep.worst_residual == 0


def test_half_minimal_gradient_fails_with_witness():
    u = section_from_function(nested(64), smooth)
    g = minimal_upper_gradient(u, 2)
    half = UpperGradient.from_cells(u.family.grid, 0.5 * g.cell_values, 2)
    rep = verify_upper_gradient(u, half)
    assert rep.status == "fail" and rep.worst_residual > 0
    assert rep.witness["s"] <= rep.witness["t"]


def test_negative_gradient_rejected():
    with pytest.raises(ValueError):
        UpperGradient.from_cells(TimeGrid.uniform(3), [-1.0, 0.0], 2)


def test_minimal_gradient_of_constant_and_counterexample():
    fam = nested(32)
    assert minimal_upper_gradient(constant_section(fam, np.ones(128)), 2).lp_norm == 0
    for p in (1, 2, math.inf):
        g = minimal_upper_gradient(counterexample(128), p)
        assert g.lp_norm == 0 and np.all(g.cell_values == 0)


def test_minimal_gradient_closed_form_cells():
    u = section_from_function(nested(16), smooth)
    g = minimal_upper_gradient(u, 2)
    D = pair_distances(u)
    assert np.allclose(g.cell_values, np.diag(D, 1) / u.family.grid.widths, rtol=1e-13)


@pytest.mark.parametrize("kind", ["nested", "hilbert"])
def test_minimal_gradient_is_feasible_for_all_pairs(kind, rng):
    g = TimeGrid.uniform(48)
    fam = nested(48, 40) if kind == "nested" else build_weighted_hilbert(40, g)
    u = Section(fam, [nd.canonical(rng.standard_normal(nd.dim)) for nd in fam.nodes])
    for p in (1, 2, math.inf):
        rep = verify_upper_gradient(u, minimal_upper_gradient(u, p))
        assert rep.passed, rep.witness


def test_minimal_gradient_beats_perturbations(rng):
    u = section_from_function(nested(64), smooth)
    for p in (1, 2, 3.0, math.inf):
        g = minimal_upper_gradient(u, p)
        for _ in range(100):
            bumped = UpperGradient.from_cells(u.family.grid, g.cell_values + np.abs(rng.normal(0, 0.1, 63)), p)
            assert g.lp_norm <= bumped.lp_norm


# oracle


@pytest.mark.parametrize("p", [1.0, 2.0, math.inf])
def test_oracle_matches_closed_form(p):
    rng = np.random.default_rng(7)
    for _ in range(20):
        u = oracle_instance(rng)
        a = minimal_upper_gradient(u, p).lp_norm
        b = minimal_gradient_oracle(u, p).lp_norm
        assert a == pytest.approx(b, rel=1e-9, abs=1e-9)


def test_oracle_other_p():
    rng = np.random.default_rng(11)
    for _ in range(5):
        u = oracle_instance(rng)
        a = minimal_upper_gradient(u, 3.0).lp_norm
        b = minimal_gradient_oracle(u, 3.0).lp_norm
        assert b == pytest.approx(a, rel=1e-6)


def test_oracle_feasible_and_below_hand_fed_gradients(rng):
    fam = build_weighted_hilbert(12, TimeGrid.uniform(6))
    u = Section(fam, [nd.canonical(rng.standard_normal(nd.dim)) for nd in fam.nodes])
    for p in (1.0, 2.0, math.inf):
        o = minimal_gradient_oracle(u, p)
        assert verify_upper_gradient(u, o, 1e-8).passed
        # a feasible g: the largest pair quotient on every cell
        D = pair_distances(u)
        big = D.max() / fam.grid.widths.min()
        feasible = UpperGradient.from_cells(fam.grid, np.full(5, big), p)
        assert verify_upper_gradient(u, feasible).passed
        assert o.lp_norm <= feasible.lp_norm + 1e-12


def test_oracle_of_constant_is_zero():
    fam = nested(6, 8)
    u = constant_section(fam, np.ones(8))
    for p in (1.0, 2.0, math.inf):
        assert minimal_gradient_oracle(u, p).lp_norm == pytest.approx(0, abs=1e-12)


def test_oracle_rejects_large_grids():
    with pytest.raises(MonofamError):
        minimal_gradient_oracle(zero_section(nested(17, 8)), 2)


# derivatives


def test_quotient_of_constant_is_zero():
    fam = nested(32)
    u = constant_section(fam, np.cos(fam.coords))
    for h in (1, 3):
        q = difference_quotient(u, h)
        assert np.all(np.asarray(q.values) == 0)
        assert q.flagged == tuple(range(h))


def test_quotient_of_linear_in_time_sampler():
    fam = nested(128)
    u = section_from_function(fam, lambda t, x: t * x)
    q = difference_quotient(u, 1)
    expected = section_from_function(fam, lambda t, x: x)
    err = lp_direct_norm(q - expected, 2).value
    assert err <= fam.grid.widths[0]


def test_quotient_rejects_long_shift():
    with pytest.raises(MonofamError):
        difference_quotient(zero_section(nested(8, 8)), 8)


def test_quotient_norm_below_verified_gradient():
    fam = nested(256)
    u = section_from_function(fam, smooth)
    g = minimal_upper_gradient(u, 2)
    dt = fam.grid.widths[0]
    for h in (1, 2, 4):
        q = lp_direct_norm(difference_quotient(u, h), 2).value
        assert q <= g.lp_norm + 2 * dt


def test_weak_derivative_matches_analytic_at_512():
    fam = nested(512)
    u = section_from_function(fam, smooth)
    du = weak_derivative(u)
    exact = section_from_function(fam, lambda t, x: -np.sin(x) * np.exp(-t))
    rel = lp_direct_norm(du - exact, 2).value / lp_direct_norm(exact, 2).value
    assert rel <= 2e-2


def test_integration_by_parts_residuals():
    for n in (128, 256, 512):
        fam = nested(n)
        u = section_from_function(fam, smooth)
        assert integration_by_parts_residual(u, weak_derivative(u)) <= 1e-12
        exact = section_from_function(fam, lambda t, x: -np.sin(x) * np.exp(-t))
        # the analytic derivative satisfies the identity up to the grid error
        assert integration_by_parts_residual(u, exact) <= fam.grid.widths[0]
    const = constant_section(fam, np.ones(128))
    assert integration_by_parts_residual(const, weak_derivative(const)) <= 1e-12


def test_bumps_lie_inside_the_grid():
    g = TimeGrid.uniform(64)
    bumps = raised_cosine_bumps(g)
    assert len(bumps) == 10
    for c, r in bumps:
        assert g.nodes[0] <= c - r and c + r <= g.nodes[-1]


def test_counterexample_derivative_is_zero():
    du = weak_derivative(counterexample(64))
    assert np.all(np.asarray(du.values) == 0)


# reconstruction


def test_ftc_of_constant_is_exact():
    fam = nested(64)
    res = ftc_reconstruct(constant_section(fam, np.sin(fam.coords)))
    assert res.max_error <= 1e-12


def test_ftc_error_first_order():
    errs = []
    for n in (64, 128, 256, 512):
        u = section_from_function(nested(n), smooth)
        res = ftc_reconstruct(u)
        assert res.max_error <= 0.2 * u.family.grid.widths[0]
        errs.append(res.max_error)
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 2) <= 0.6)


def test_ftc_from_interior_start():
    u = section_from_function(nested(64), smooth)
    res = ftc_reconstruct(u, start=20)
    assert np.all(res.errors[:21] == 0)
    with pytest.raises(MonofamError):
        ftc_reconstruct(u, start=64)


def test_zero_derivative_reconstructs_pushed_initial_value():
    u = counterexample(64)
    res = ftc_reconstruct(u)
    fam = u.family
    for i in range(fam.n):
        assert np.array_equal(res.section.values[i], fam.push(0, i, u.values[0]))


def test_zero_gradient_window_means_constant():
    fam = nested(64)
    a = constant_section(fam, np.cos(fam.coords))
    b = section_from_function(fam, smooth)
    vals = [a.values[i] if i < 30 else b.values[i] for i in range(fam.n)]
    u = Section(fam, vals)
    g = minimal_upper_gradient(u, 2)
    assert np.all(g.cell_values[:29] == 0)
    for i in range(30):
        for j in range(i, 30):
            assert np.array_equal(u.values[j], fam.push(i, j, u.values[i]))


# Sobolev norm


def test_sobolev_norm_of_zero():
    s = sobolev_norm(zero_section(nested(16)), 2)
    assert s.total == 0 and s.lp_part == 0 and s.gradient_part == 0


def test_sobolev_norm_of_counterexample():
    u = counterexample(128)
    s = sobolev_norm(u, 2)
    assert s.gradient_part == 0
    assert s.total == s.lp_part == lp_direct_norm(u, 2).value


def test_sobolev_norm_gap_small_and_halving():
    gaps = []
    for n in (256, 512):
        s = sobolev_norm(section_from_function(nested(n), smooth), 2)
        assert s.total == pytest.approx(s.lp_part + s.gradient_part)
        gaps.append(s.gap)
    assert gaps[1] <= 2e-2
    assert gaps[0] / gaps[1] == pytest.approx(2.0, rel=0.3)


# scalar characterization


def _analytic_majorant():
    """max over s, ell of |d/dt N(t, sin(x) e^-s)| for ell(t) = 1 - t/2."""
    ell = np.linspace(0.5, 1.0, 2001)
    integral = ell / 2 - np.sin(2 * ell) / 4
    return float(np.max(0.5 * np.sin(ell) ** 2 / (2 * np.sqrt(integral))))


def test_scalar_check_constant_family_trivial(rng):
    fam = constant_family(TimeGrid.uniform(32), NormedNode.lq(np.ones(5)))
    u = constant_section(fam, rng.standard_normal(5))
    rep = scalar_characterization_check(u, 2, 0.0)
    assert rep.passed and rep.worst_residual == 0


def test_scalar_check_nested_with_analytic_majorant():
    H = 1.05 * _analytic_majorant()
    for n in (64, 256):
        u = section_from_function(nested(n, 256), smooth)
        assert frozen_norm_quotients(u).max() <= H
        rep = scalar_characterization_check(u, 2, H)
        assert rep.passed, rep.details


def test_scalar_check_counterexample_violates_hypothesis():
    quots = []
    for n in (64, 128, 256):
        u = counterexample(n)
        rep = scalar_characterization_check(u, 2, 10.0)
        assert rep.status == "hypothesis-violated"
        cell = rep.witness["cell"]
        t = u.family.t
        assert t[cell] < 0.5 <= t[cell + 1]
        quots.append(rep.details["max_norm_quotient"])
        assert rep.details["max_norm_quotient"] >= 0.9 * n * 0.5
    assert quots[2] / quots[1] == pytest.approx(2.0, rel=0.05)


def test_linf_bound_grid_independent():
    H = _analytic_majorant()
    vals = [linf_ratio(section_from_function(nested(n), smooth), 2, H) for n in (64, 128, 256, 512)]
    assert max(vals) <= 1.0
    assert max(vals) - min(vals) <= 0.05


# probe distances


def test_probe_check_constant_section():
    fam = constant_family(TimeGrid.uniform(32), NormedNode.lq(np.ones(4), 3.0))
    u = constant_section(fam, np.arange(4.0))
    rep = reshetnyak_check(u, 2, np.eye(4))
    assert rep.passed and rep.worst_residual == 0


def test_probe_check_smooth_section():
    u = section_from_function(nested(256), smooth)
    probes = np.asarray(u.values)[::16]
    rep = reshetnyak_check(u, 2, probes)
    assert rep.passed, rep.details


def test_probe_check_counterexample_jump():
    for n in (64, 128):
        u = counterexample(n)
        rep = reshetnyak_check(u, 2, np.zeros((1, 64)))
        assert rep.status == "hypothesis-violated"
        assert rep.details["max_relative_jump"] == pytest.approx(0.25)
        assert rep.details["max_probe_quotient"] == pytest.approx(0.5 / u.family.grid.widths[0])
