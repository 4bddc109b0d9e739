import math

import numpy as np
import pytest

from monofam import (
    NormedNode,
    ResolutionError,
    TimeGrid,
    build_affine_composition,
    build_nested_lq,
    build_sup_counterexample,
    build_weighted_hilbert,
    composition_blowup_demo,
    constant_family,
    difference_quotient_criterion,
    edge_spaces,
    embed_from_x0,
    estimate_M,
    estimate_operator_norm,
    identity_isomorphism,
    lift_bound,
    lift_section,
    lp_direct_norm,
    minimal_upper_gradient,
    project_to_xT,
    section_from_function,
    verify_upper_gradient,
    weak_derivative,
    weight_isomorphism,
)
from monofam.isomorphism import blowup_profile, isomorphism_from_json, x0_family
from monofam.suite import weierstrass_sampler

from conftest import shrinking


def affine(n, mesh=64):
    return build_affine_composition(mesh, TimeGrid.uniform(n))


# edge spaces


def test_edge_spaces_are_the_grid_endpoints(families):
    for fam in families.values():
        e = edge_spaces(fam)
        assert e.x0 is fam.nodes[0] and e.xT is fam.nodes[-1]
        assert "not extrapolated" in e.extrapolation_note


def test_edge_norms_bracket_every_node(families, rng):
    for fam in families.values():
        X = fam.nodes[0].canonical(rng.standard_normal((20, fam.nodes[0].dim)))
        top, bottom = fam.nodes[0].norms(X), fam.nodes[-1].norms(X)
        for nd in fam.nodes:
            N = nd.norms(X)
            assert np.all(N <= top + 1e-12) and np.all(N >= bottom - 1e-12)


def test_embedding_does_not_increase_gradient(families):
    for fam in families.values():
        u0 = section_from_function(x0_family(fam), lambda t, x: np.sin(3 * x + t) * (1 + t))
        out = embed_from_x0(fam, u0)
        for p in (1.0, 2.0, math.inf):
            assert minimal_upper_gradient(out, p).lp_norm <= minimal_upper_gradient(u0, p).lp_norm + 1e-12


def test_embed_rejects_other_grids(families):
    fam = families["nested_lq"]
    other = x0_family(build_nested_lq(shrinking, 2.0, 48, TimeGrid.uniform(16)))
    with pytest.raises(ValueError):
        embed_from_x0(fam, section_from_function(other, lambda t, x: x))


def test_projection_keeps_upper_gradients(families):
    for fam in families.values():
        u = section_from_function(fam, lambda t, x: np.cos(2 * x) * np.exp(t))
        proj = project_to_xT(u)
        assert all(nd is fam.nodes[-1] for nd in proj.family.nodes)
        g = minimal_upper_gradient(u, 2)
        assert verify_upper_gradient(proj, g, 1e-12).passed


# operator norms


def test_identity_has_norm_one():
    nd = NormedNode.lq(np.ones(6))
    r = estimate_operator_norm(np.eye(6), nd, nd)
    assert r.exact and r.value == pytest.approx(1.0, abs=1e-14)


def test_diagonal_map():
    nd = NormedNode.lq(np.ones(2))
    assert estimate_operator_norm(np.diag([2.0, 1.0]), nd, nd).value == pytest.approx(2.0, abs=1e-14)


def test_weighted_l2_against_svd(rng):
    for k in range(10):
        w1, w2 = rng.uniform(0.2, 2.0, size=(2, 8))
        A = rng.standard_normal((8, 8))
        exact = np.linalg.norm(np.diag(np.sqrt(w2)) @ A @ np.diag(1 / np.sqrt(w1)), 2)
        src, dst = NormedNode.lq(w1), NormedNode.lq(w2)
        assert estimate_operator_norm(A, src, dst).value == pytest.approx(exact, rel=1e-12)
        sampled = estimate_operator_norm(A, src, dst, seed=k, method="sample")
        assert not sampled.exact
        assert exact * (1 - 1e-6) <= sampled.value <= exact * (1 + 1e-12)


def test_l1_norm_is_max_column_sum(rng):
    nd = NormedNode.lq(np.ones(6), 1.0)
    for _ in range(5):
        A = rng.standard_normal((6, 6))
        r = estimate_operator_norm(A, nd, nd)
        assert not r.exact
        assert r.value == pytest.approx(np.abs(A).sum(axis=0).max(), rel=1e-6)
        assert r.value <= np.abs(A).sum(axis=0).max() * (1 + 1e-12)


def test_linf_norm_is_max_row_sum(rng):
    nd = NormedNode.lq(np.ones(6), math.inf)
    for _ in range(5):
        A = rng.standard_normal((6, 6))
        r = estimate_operator_norm(A, nd, nd)
        assert r.value == pytest.approx(np.abs(A).sum(axis=1).max(), rel=1e-6)


def test_map_not_vanishing_on_kernel_is_unbounded():
    src = NormedNode.h1(5, 0.2, np.array([1, 1, 0, 0, 0], bool))
    dst = NormedNode.h1(5, 0.2)
    assert estimate_operator_norm(np.eye(5), src, dst).value == math.inf


def test_operator_norm_shape_check():
    nd = NormedNode.lq(np.ones(3))
    with pytest.raises(ValueError):
        estimate_operator_norm(np.eye(4), nd, nd)


# isomorphism constants


def test_identity_isomorphism_on_constant_family(rng):
    fam = constant_family(TimeGrid.uniform(32), NormedNode.lq(rng.uniform(0.5, 2, 10)))
    iso = identity_isomorphism(fam)
    rep = estimate_M(fam, iso)
    assert rep.M_forward == 0 and rep.M_inverse == 0
    assert rep.sup_forward == pytest.approx(1.0) and rep.sup_inverse == pytest.approx(1.0)


def test_affine_weight_constants_closed_form():
    for n in (32, 128):
        fam = affine(n)
        t = fam.t
        rep = estimate_M(fam, weight_isomorphism(fam, "affine"))
        # |(w(t)-w(s)) I|_{X_s -> Y} / (t-s) = sqrt((1+s)/2) / 2, largest at s = t_{n-2}
        assert rep.M_forward == pytest.approx(0.5 * math.sqrt((1 + t[-2]) / 2), rel=1e-10)
        for s, e, fwd, inv in rep.per_pair_ratios:
            assert fwd == pytest.approx(0.5 * math.sqrt((1 + s) / 2), rel=1e-10)
            expect = abs(1 / (1 + e / 2) - 1 / (1 + s / 2)) / (e - s) * math.sqrt(2 / (1 + e))
            assert inv == pytest.approx(expect, rel=1e-10)
        assert rep.sup_forward == pytest.approx((1 + t[-1] / 2) * math.sqrt((1 + t[-1]) / 2), rel=1e-10)


def test_affine_weight_M_near_half_and_stable():
    a = estimate_M(affine(128), weight_isomorphism(affine(128), "affine"))
    b = estimate_M(affine(256), weight_isomorphism(affine(256), "affine"))
    assert abs(a.M_forward - 0.5) <= 0.05
    assert abs(b.M_forward - a.M_forward) / a.M_forward <= 0.1


def test_step_weight_ratio_doubles():
    Ms = []
    for n in (64, 128, 256):
        fam = affine(n)
        Ms.append(estimate_M(fam, weight_isomorphism(fam, "step")).M_forward)
    for a, b in zip(Ms, Ms[1:]):
        assert b / a == pytest.approx(2.0, abs=0.2)


def test_weight_validation():
    fam = affine(8)
    with pytest.raises(ValueError):
        weight_isomorphism(fam, np.zeros(8))
    with pytest.raises(ValueError):
        weight_isomorphism(fam, "cubic")
    with pytest.raises(ValueError):
        weight_isomorphism(fam, np.ones(3))


def test_isomorphism_json():
    fam = affine(16)
    a = isomorphism_from_json(fam, {"kind": "weight", "w": "affine"})
    b = weight_isomorphism(fam, lambda t: 1 + t / 2)
    assert estimate_M(fam, a).M_forward == pytest.approx(estimate_M(fam, b).M_forward, rel=1e-14)
    ident = isomorphism_from_json(fam, {"kind": "identity", "reference": fam.nodes[-1].to_json()})
    assert ident.reference.to_json() == fam.nodes[-1].to_json()
    with pytest.raises(ValueError):
        isomorphism_from_json(fam, {"kind": "rotation"})


def test_ratio_table_csv():
    fam = affine(8)
    rep = estimate_M(fam, weight_isomorphism(fam, "affine"), distant=0)
    lines = rep.ratios_csv().splitlines()
    assert lines[0] == "s,t,forward_ratio,inverse_ratio"
    assert len(lines) == 1 + 7


def test_lift_and_sufficiency_bound():
    fam = affine(128)
    iso = weight_isomorphism(fam, "affine")
    rep = estimate_M(fam, iso)
    u = section_from_function(fam, lambda t, x: np.sin(np.pi * x) * (1 + t * t))
    lifted = lift_section(iso, u)
    assert np.allclose(np.asarray(lifted.values), (1 + fam.t / 2)[:, None] * np.asarray(u.values))
    for p in (2.0, 4.0):
        lhs, rhs = lift_bound(iso, u, p, rep)
        assert 0 < lhs <= rhs


# difference-quotient criterion


def test_dq_criterion_of_smooth_section():
    fam = build_nested_lq(shrinking, 2.0, 128, TimeGrid.uniform(512))
    u = section_from_function(fam, lambda t, x: np.sin(x) * np.exp(-t))
    rep = difference_quotient_criterion(u, 2)
    assert rep.status == "pass"
    target = lp_direct_norm(weak_derivative(u), 2).value
    assert rep.details["C"] == pytest.approx(target, rel=0.05)


def test_dq_criterion_flags_rough_section():
    fam = build_nested_lq(shrinking, 2.0, 128, TimeGrid.uniform(512))
    rep = difference_quotient_criterion(section_from_function(fam, weierstrass_sampler()), 2)
    assert rep.status == "divergent" and rep.details["slope"] < -0.25


def test_dq_criterion_constant_and_bad_input():
    fam = build_sup_counterexample(32, TimeGrid.uniform(64))
    u = section_from_function(fam, lambda t, x: x)
    rep = difference_quotient_criterion(u, 2)
    assert rep.status == "pass" and rep.details["C"] == 0
    with pytest.raises(ValueError):
        difference_quotient_criterion(u, 1)
    with pytest.raises(ValueError):
        difference_quotient_criterion(u, 2, h_cells=(1, 64))


# composition blow-up


def _bruteforce_ratio(n, s, step, a, mesh, exponent):
    """Independent evaluation of one table entry on the same reference mesh."""
    ell = (1 + s) / 2
    delta = 0.25 * min(a, ell - a)

    def bump(z):
        # C-infinity transition written with math.exp, pointwise
        def psi(r):
            return math.exp(-1 / r) if r > 0 else 0.0

        def step_(r):
            return psi(r) / (psi(r) + psi(1 - r))

        if not 0 < z < ell:
            return 0.0
        return abs(z - a) ** exponent * step_(z / delta) * step_((ell - z) / delta) * step_(n * abs(z - a) - 1)

    x = [k / mesh for k in range(1, mesh)]
    base = [bump((1 + s) * xi / 2) for xi in x]
    moved = [bump((1 + s + step) * xi / 2) for xi in x]

    def semi(v):
        w = [0.0] + v + [0.0]
        return math.sqrt(sum((w[k + 1] - w[k]) ** 2 for k in range(len(w) - 1)) * mesh)

    norm_base = math.sqrt(2 / (1 + s)) * semi(base)
    return semi([m - b for m, b in zip(moved, base)]) / norm_base / step


def test_blowup_entries_match_bruteforce():
    table = composition_blowup_demo([16, 32], 0.2, 0.4, 0.3, 1024)
    for n, r, h in table.rows():
        assert r == pytest.approx(_bruteforce_ratio(n, 0.2, h, 0.3, 1024, 2 / 3), rel=1e-9)
        # the tabulated step is the best of the ladder
        assert _bruteforce_ratio(n, 0.2, 0.2, 0.3, 1024, 2 / 3) <= r * (1 + 1e-12)


def test_blowup_profile_vanishes_near_a_and_outside():
    x = np.linspace(-0.1, 0.7, 801)
    f = blowup_profile(x, 32, 0.3, 0.6, 0.075, 2 / 3)
    assert np.all(f[np.abs(x - 0.3) <= 1 / 32] == 0)
    assert np.all(f[(x <= 0) | (x >= 0.6)] == 0)
    assert np.all(f >= 0)


def test_blowup_ratios_increase_for_singular_exponent():
    table = composition_blowup_demo([16, 32, 64, 128], 0.2, 0.4, 0.3, 8192)
    r = table.ratios
    assert all(b > a for a, b in zip(r, r[1:]))
    assert r[-1] / r[-2] >= 1.5


def test_blowup_bounded_for_smooth_exponent():
    r = np.array(composition_blowup_demo([16, 32, 64, 128], 0.2, 0.4, 0.3, 8192, exponent=2.0).ratios)
    assert r.max() / r.min() - 1 <= 0.1


def test_blowup_equal_times_gives_zero():
    table = composition_blowup_demo([16], 0.3, 0.3, 0.3, 2048)
    assert table.ratios == (0.0,)


def test_blowup_resolution_error():
    with pytest.raises(ResolutionError) as err:
        composition_blowup_demo([16, 128], 0.2, 0.4, 0.3, 512)
    assert err.value.required == math.ceil(16 * 128 * 0.6)


def test_blowup_input_validation():
    with pytest.raises(ValueError):
        composition_blowup_demo([16], 0.4, 0.2, 0.3, 2048)
    with pytest.raises(ValueError):
        composition_blowup_demo([16], 0.2, 0.4, 0.7, 2048)
    with pytest.raises(ValueError):
        composition_blowup_demo([4], 0.2, 0.4, 0.3, 2048)


def test_blowup_csv():
    text = composition_blowup_demo([16], 0.2, 0.4, 0.3, 1024).to_csv()
    assert text.splitlines()[0] == "n,ratio,best_step"
