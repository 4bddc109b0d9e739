"""Named properties, the suite runner and convergence studies.

A suite config is JSON::

    {"seed": 42, "n": 128, "mesh": 256, "workers": 4,
     "tolerances": {"exact": 1e-12, "quadrature": 1e-9},
     "properties": [{"name": "bochner_inequality", "expect": "pass", "params": {}}],
     "report": "report.json"}

Each property gets its own generator seeded from the suite seed and its
name, so results do not depend on scheduling. Reports are ordered by name
and, unless ``"timings": true``, carry no wall-clock fields.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import time
import traceback
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import family as fm
from . import isomorphism as iso_mod
from . import sections as sec
from . import sobolev as sob
from .kernels import BACKEND
from .report import STATUSES, ConvergenceStudy, VerificationReport, _plain, judge, loglog_slope

DEFAULT_TOLERANCES = {"exact": 1e-12, "quadrature": 1e-9}


class ConfigError(ValueError):
    pass


@dataclass
class Context:
    seed: int
    n: int
    mesh: int
    tolerances: dict
    params: dict = field(default_factory=dict)

    def rng(self, name: str) -> np.random.Generator:
        return np.random.default_rng([self.seed, zlib.crc32(name.encode())])

    def tol(self, key: str) -> float:
        return float(self.tolerances.get(key, DEFAULT_TOLERANCES.get(key, 1e-9)))

    def get(self, key, default):
        return self.params.get(key, default)


# --------------------------------------------------------------------------
# shared fixtures


def builder_family(kind: str, n: int, mesh: int, **kw) -> fm.MonotoneFamily:
    grid = fm.TimeGrid.uniform(n)
    if kind == "nested_lq":
        return fm.build_nested_lq(kw.get("lengths", lambda t: 1.0 - t / 2.0), kw.get("q", 2.0), mesh, grid)
    if kind == "sup_counterexample":
        return fm.build_sup_counterexample(mesh, grid)
    if kind == "affine_composition":
        return fm.build_affine_composition(mesh, grid)
    if kind == "weighted_hilbert":
        return fm.build_weighted_hilbert(mesh, grid)
    raise ConfigError(f"unknown builder {kind!r}")


BUILDERS = ("nested_lq", "sup_counterexample", "affine_composition", "weighted_hilbert")


def smooth_sampler(t, x):
    return np.sin(x) * np.exp(-t)


def smooth_section(n: int, mesh: int = 256) -> sec.Section:
    """``sin(x) e^-t`` on the nested L^2 family over ``(0, 1 - t/2)``."""
    return sec.section_from_function(builder_family("nested_lq", n, mesh), smooth_sampler)


def weierstrass_sampler(terms: int = 40):
    """Space profile ``sin(x)`` times ``sum 2^(-k/2) cos(2^k pi t)``, Hoelder-1/2 in ``t``."""
    k = np.arange(terms)

    def sampler(t, x):
        return float(np.sum(2.0 ** (-k / 2) * np.cos(2.0**k * np.pi * t))) * np.sin(x)

    return sampler


def random_section(family: fm.MonotoneFamily, rng: np.random.Generator) -> sec.Section:
    return sec.Section(family, [nd.canonical(rng.standard_normal(nd.dim)) for nd in family.nodes])


def _rel(a, b):
    return abs(a - b) / max(1.0, abs(b))


# --------------------------------------------------------------------------
# properties


REGISTRY: dict = {}


def prop(name):
    def deco(fn):
        REGISTRY[name] = fn
        return fn
    return deco


def _family_axioms(kind):
    def run(ctx: Context):
        fam = builder_family(kind, ctx.n, ctx.mesh)
        rep = fm.check_family(fam, ctx.get("samples", 100), ctx.seed, ctx.tol("exact"))
        rep.property_name = f"family_axioms_{kind}"
        return rep
    return run


for _kind in BUILDERS:
    REGISTRY[f"family_axioms_{_kind}"] = _family_axioms(_kind)


@prop("norm_axioms")
def _norm_axioms(ctx):
    rng = ctx.rng("norm_axioms")
    worst, witness = 0.0, None
    for kind in BUILDERS:
        fam = builder_family(kind, ctx.n, ctx.mesh)
        for _ in range(ctx.get("samples", 100)):
            i = int(rng.integers(fam.n))
            nd = fam.nodes[i]
            x, y = rng.standard_normal((2, nd.dim))
            a = float(rng.normal() * 3)
            nx, ny = nd.norm(x), nd.norm(y)
            r1 = abs(nd.norm(a * x) - abs(a) * nx) / max(1.0, abs(a) * nx)
            r2 = max(0.0, nd.norm(x + y) - nx - ny) / max(1.0, nx + ny)
            if max(r1, r2) > worst:
                worst, witness = max(r1, r2), {"family": kind, "node": i}
    return judge("norm_axioms", worst, ctx.tol("exact"), witness)


@prop("cross_time_add_algebra")
def _cross_time_add(ctx):
    rng = ctx.rng("cross_time_add_algebra")
    fam = builder_family(ctx.get("family", "weighted_hilbert"), ctx.n, ctx.mesh)
    worst, witness = 0.0, None
    for _ in range(ctx.get("samples", 100)):
        idx = [int(v) for v in rng.integers(fam.n, size=3)]
        xs = [fam.nodes[i].canonical(rng.standard_normal(fam.nodes[i].dim)) for i in idx]
        (i, x), (j, y), (k, z) = zip(idx, xs)
        a1, s1 = fm.cross_time_add(fam, i, x, j, y)
        a2, s2 = fm.cross_time_add(fam, j, y, i, x)
        l1, left = fm.cross_time_add(fam, *fm.cross_time_add(fam, i, x, j, y), k, z)
        r1, right = fm.cross_time_add(fam, i, x, *fm.cross_time_add(fam, j, y, k, z))
        scale = max(1.0, float(np.abs(left).max(initial=0.0)))
        res = max(float(np.abs(s1 - s2).max(initial=0.0)), float(np.abs(left - right).max(initial=0.0)) / scale)
        if a1 != a2 or l1 != r1:
            res = math.inf
        if res > worst:
            worst, witness = res, {"nodes": idx}
    return judge("cross_time_add_algebra", worst, ctx.tol("exact"), witness)


def _bochner_samples(ctx, name):
    rng = ctx.rng(name)
    fams = [builder_family(k, ctx.n, ctx.mesh) for k in ("nested_lq", "weighted_hilbert", "sup_counterexample")]
    for k in range(ctx.get("samples", 200)):
        fam = fams[k % len(fams)]
        u = random_section(fam, rng)
        lo, hi = sorted(int(v) for v in rng.integers(fam.n, size=2))
        yield fam, u, lo, hi, rng


@prop("bochner_inequality")
def _bochner(ctx):
    worst, witness = 0.0, None
    for fam, u, lo, hi, _ in _bochner_samples(ctx, "bochner_inequality"):
        a, b, c = sec.bochner_chain(u, (lo, hi))
        res = max(a - b, b - c, 0.0) / max(1.0, c)
        if res > worst:
            worst, witness = res, {"family": fam.label, "window": [lo, hi]}
    return judge("bochner_inequality", worst, ctx.tol("exact"), witness)


@prop("local_integral_additivity")
def _additivity(ctx):
    worst, witness = 0.0, None
    for fam, u, lo, hi, rng in _bochner_samples(ctx, "local_integral_additivity"):
        if hi - lo < 2:
            continue
        mid = int(rng.integers(lo + 1, hi))
        _, whole = sec.local_integral(u, (lo, hi))
        _, left = sec.local_integral(u, (lo, mid))
        _, right = sec.local_integral(u, (mid, hi))
        res = float(np.abs(fam.push(mid, hi, left) + right - whole).max()) / max(1.0, float(np.abs(whole).max()))
        if res > worst:
            worst, witness = res, {"family": fam.label, "window": [lo, mid, hi]}
    return judge("local_integral_additivity", worst, ctx.tol("exact"), witness)


@prop("lp_norm_axioms")
def _lp_axioms(ctx):
    rng = ctx.rng("lp_norm_axioms")
    worst, witness = 0.0, None
    for kind in ("nested_lq", "weighted_hilbert", "sup_counterexample"):
        fam = builder_family(kind, ctx.n, ctx.mesh)
        for p in (1.0, 2.0, 3.5, math.inf):
            u, v = random_section(fam, rng), random_section(fam, rng)
            a = float(rng.normal() * 2)
            nu, nv = sec.lp_direct_norm(u, p).value, sec.lp_direct_norm(v, p).value
            r1 = abs(sec.lp_direct_norm(a * u, p).value - abs(a) * nu) / max(1.0, abs(a) * nu)
            r2 = max(0.0, sec.lp_direct_norm(u + v, p).value - nu - nv) / max(1.0, nu + nv)
            if max(r1, r2) > worst:
                worst, witness = max(r1, r2), {"family": kind, "p": p}
    return judge("lp_norm_axioms", worst, ctx.tol("exact"), witness)


@prop("simple_approximation")
def _simple(ctx):
    rng = ctx.rng("simple_approximation")
    tol = ctx.get("tol", 2e-2)
    fam = builder_family("nested_lq", ctx.n, ctx.mesh)
    worst_ratio, worst_res = 0.0, 0.0
    for _ in range(ctx.get("sections", 20)):
        a, b, c = rng.uniform(0.5, 2.0, size=3)
        u = sec.section_from_function(fam, lambda t, x: a * np.sin(b * x + c * t) + np.cos(c * x) * t)
        s = sec.approximate_by_simple(u, (0, fam.n - 1), tol)
        nu = sec.node_norms(u)
        ns = sec.node_norms(s.to_section())
        ratio = float(np.max(np.where(nu > 0, ns / np.where(nu > 0, nu, 1.0), 0.0)))
        worst_ratio = max(worst_ratio, ratio)
        worst_res = max(worst_res, s.residual)
    res = max(worst_res - tol, worst_ratio - 2.0, 0.0)
    return judge("simple_approximation", res, ctx.tol("exact"), None,
                 max_residual=worst_res, max_norm_ratio=worst_ratio, approximation_tol=tol)


@prop("mh_convergence")
def _mh(ctx):
    u = smooth_section(ctx.n, ctx.mesh)
    dt = float(np.mean(u.family.grid.widths))
    hs = [dt * k for k in (32, 16, 8, 4)]
    errs = [sec.lp_direct_norm(sec.smooth_Mh(u, h) - u, 2).value for h in hs]
    slope = loglog_slope(hs, errs)
    res = abs(slope - 1.0)
    rep = judge("mh_convergence", res, ctx.get("order_tol", 0.3), {"slope": slope}, h=hs, errors=errs, order=slope)
    const = sec.constant_section(u.family, u.values[0])
    drift = sec.lp_direct_norm(sec.smooth_Mh(const, hs[0]) - const, 2).value
    if drift > ctx.tol("exact"):
        rep = judge("mh_convergence", drift, ctx.tol("exact"), {"constant_drift": drift})
    return rep


@prop("lebesgue_point_counterexample")
def _lebesgue(ctx):
    fam = builder_family("sup_counterexample", ctx.n, ctx.mesh)
    u = sec.section_from_function(fam, lambda t, x: x)
    jump = int(np.searchsorted(fam.t, 0.5))
    h = 8 * float(np.mean(fam.grid.widths))
    worst = max(sec.lebesgue_point_residual(u, i, h) for i in range(jump - 2, min(jump + 8, fam.n)))
    return judge("lebesgue_point_counterexample", worst, ctx.tol("exact"), {"nodes": [jump - 2, jump + 8]})


@prop("minimal_gradient_feasible")
def _mug_feasible(ctx):
    rng = ctx.rng("minimal_gradient_feasible")
    worst, witness = 0.0, None
    for kind in ("nested_lq", "weighted_hilbert", "affine_composition"):
        fam = builder_family(kind, ctx.n, ctx.mesh)
        for p in (1.0, 2.0, math.inf):
            u = random_section(fam, rng)
            rep = sob.verify_upper_gradient(u, sob.minimal_upper_gradient(u, p), ctx.tol("exact"))
            if rep.worst_residual > worst:
                worst, witness = rep.worst_residual, {"family": kind, "p": p, **(rep.witness or {})}
    return judge("minimal_gradient_feasible", worst, ctx.tol("exact"), witness)


def oracle_instance(rng: np.random.Generator):
    """A random small instance: random family kind, 3-8 nodes, random section."""
    n = int(rng.integers(3, 9))
    kind = ["nested_lq", "weighted_hilbert", "sup_counterexample", "affine_composition"][int(rng.integers(4))]
    mesh = int(rng.integers(6, 12))
    fam = builder_family(kind, n, mesh)
    return random_section(fam, rng)


@prop("minimal_gradient_oracle")
def _mug_oracle(ctx):
    rng = ctx.rng("minimal_gradient_oracle")
    worst, witness = 0.0, None
    for k in range(ctx.get("instances", 50)):
        u = oracle_instance(rng)
        for p in (1.0, 2.0, math.inf):
            a = sob.minimal_upper_gradient(u, p).lp_norm
            b = sob.minimal_gradient_oracle(u, p).lp_norm
            r = abs(a - b) / max(1.0, abs(b))
            if r > worst:
                worst, witness = r, {"instance": k, "p": p, "closed_form": a, "oracle": b}
    return judge("minimal_gradient_oracle", worst, ctx.tol("quadrature"), witness)


@prop("minimal_gradient_minimality")
def _mug_min(ctx):
    rng = ctx.rng("minimal_gradient_minimality")
    u = smooth_section(ctx.n, ctx.mesh)
    worst, witness = 0.0, None
    for p in (1.0, 2.0, math.inf):
        g = sob.minimal_upper_gradient(u, p)
        for k in range(ctx.get("perturbations", 100)):
            noise = np.abs(rng.standard_normal(g.cell_values.size)) * rng.uniform(0, 1)
            other = sob.UpperGradient.from_cells(u.family.grid, g.cell_values + noise, p)
            r = max(0.0, g.lp_norm - other.lp_norm)
            if r > worst:
                worst, witness = r, {"p": p, "perturbation": k}
    return judge("minimal_gradient_minimality", worst, ctx.tol("exact"), witness)


@prop("derivative_gradient_gap")
def _gap(ctx):
    n = ctx.get("grid_n", 512)
    u = smooth_section(n, ctx.mesh)
    s = sob.sobolev_norm(u, 2)
    rel = s.gap
    return judge("derivative_gradient_gap", rel, ctx.get("rel_tol", 2e-2), {"n": n}, gradient_norm=s.gradient_part,
                 derivative_norm=s.derivative_norm, n=n)


@prop("zero_gradient_constant")
def _zero_grad(ctx):
    fam = builder_family("sup_counterexample", ctx.n, ctx.mesh)
    u = sec.section_from_function(fam, lambda t, x: x)
    g = sob.minimal_upper_gradient(u, 2)
    if g.lp_norm != 0:
        return judge("zero_gradient_constant", g.lp_norm, 0.0, {"gradient": g.lp_norm})
    worst = max(float(np.abs(fam.push(0, j, u.values[0]) - u.values[j]).max()) for j in range(fam.n))
    rec = sob.ftc_reconstruct(u)
    return judge("zero_gradient_constant", max(worst, rec.max_error), ctx.tol("exact"), None)


@prop("weak_derivative_ibp")
def _ibp(ctx):
    u = smooth_section(ctx.n, ctx.mesh)
    dt = float(np.max(u.family.grid.widths))
    res = sob.integration_by_parts_residual(u, sob.weak_derivative(u))
    C = ctx.get("C", 1.0)
    const = sec.constant_section(u.family, u.values[0])
    res0 = sob.integration_by_parts_residual(const, sob.weak_derivative(const))
    bad = max(res - C * dt, res0 - ctx.tol("exact"), 0.0)
    return judge("weak_derivative_ibp", bad, 0.0, None, ibp_residual=res, bound=C * dt, constant_residual=res0)


@prop("ftc_reconstruction")
def _ftc(ctx):
    u = smooth_section(ctx.n, ctx.mesh)
    dt = float(np.max(u.family.grid.widths))
    err = sob.ftc_reconstruct(u).max_error
    C = ctx.get("C", 0.1)
    return judge("ftc_reconstruction", max(0.0, err - C * dt), 0.0, None, max_error=err, bound=C * dt)


@prop("counterexample_gradient_zero")
def _cex_grad(ctx):
    fam = builder_family("sup_counterexample", ctx.n, ctx.mesh)
    u = sec.section_from_function(fam, lambda t, x: x)
    worst = max(sob.minimal_upper_gradient(u, p).lp_norm for p in (1.0, 2.0, math.inf))
    N = sec.node_norms(u)
    norm_err = float(np.max(np.abs(N - np.where(fam.t < 0.5, 1.0, 0.5))))
    return judge("counterexample_gradient_zero", max(worst, norm_err), ctx.tol("exact"), None,
                 gradient_norm=worst, node_norm_error=norm_err)


@prop("counterexample_scalar_check")
def _cex_scalar(ctx):
    fam = builder_family("sup_counterexample", ctx.n, ctx.mesh)
    u = sec.section_from_function(fam, lambda t, x: x)
    rep = sob.scalar_characterization_check(u, 2, ctx.get("H", 1.0))
    rep.property_name = "counterexample_scalar_check"
    return rep


NESTED_H = 0.5  # |dN/dt| <= |l'| v(l)^2 / (2N) <= 0.34 for sin(x) e^-s frozen vectors


@prop("scalar_characterization_nested")
def _scalar_nested(ctx):
    u = smooth_section(ctx.n, ctx.mesh)
    rep = sob.scalar_characterization_check(u, 2, ctx.get("H", NESTED_H), tol=ctx.tol("quadrature"))
    rep.property_name = "scalar_characterization_nested"
    return rep


@prop("linf_embedding")
def _linf(ctx):
    vals = []
    for n in (ctx.n, 2 * ctx.n):
        u = smooth_section(n, ctx.mesh)
        vals.append(sob.linf_ratio(u, 2, NESTED_H))
    C = ctx.get("C", 1.0)
    return judge("linf_embedding", max(0.0, max(vals) - C), 0.0, None, ratios=vals, C=C)


@prop("reshetnyak_smooth")
def _resh_smooth(ctx):
    u = smooth_section(ctx.n, ctx.mesh)
    idx = np.linspace(0, u.n - 1, 16).round().astype(int)
    rep = sob.reshetnyak_check(u, 2, np.asarray(u.values)[idx], tol=ctx.tol("quadrature"))
    rep.property_name = "reshetnyak_smooth"
    return rep


@prop("reshetnyak_counterexample")
def _resh_cex(ctx):
    fam = builder_family("sup_counterexample", ctx.n, ctx.mesh)
    u = sec.section_from_function(fam, lambda t, x: x)
    rep = sob.reshetnyak_check(u, 2, np.zeros((1, fam.nodes[0].dim)))
    rep.property_name = "reshetnyak_counterexample"
    return rep


@prop("edge_embeddings")
def _edges(ctx):
    worst, witness = 0.0, None
    for kind in ("nested_lq", "weighted_hilbert", "sup_counterexample"):
        fam = builder_family(kind, ctx.n, ctx.mesh)
        base = iso_mod.x0_family(fam)
        u0 = sec.section_from_function(base, lambda t, x: np.sin(3 * x + t) * (1 + t))
        out = iso_mod.embed_from_x0(fam, u0)
        for p in (1.0, 2.0, math.inf):
            r = sob.minimal_upper_gradient(out, p).lp_norm - sob.minimal_upper_gradient(u0, p).lp_norm
            if r > worst:
                worst, witness = r, {"family": kind, "map": "embed", "p": p}
        u = sec.section_from_function(fam, lambda t, x: np.cos(2 * x) * np.exp(t))
        proj = iso_mod.project_to_xT(u)
        for p in (1.0, 2.0, math.inf):
            g = sob.minimal_upper_gradient(u, p)
            r = sob.minimal_upper_gradient(proj, p).lp_norm - g.lp_norm
            rep = sob.verify_upper_gradient(proj, g, ctx.tol("quadrature"))
            r = max(r, rep.worst_residual)
            if r > worst:
                worst, witness = r, {"family": kind, "map": "project", "p": p}
    return judge("edge_embeddings", worst, ctx.tol("quadrature"), witness)


@prop("edge_space_limits")
def _edge_limits(ctx):
    rng = ctx.rng("edge_space_limits")
    worst, witness = 0.0, None
    for kind in BUILDERS:
        fam = builder_family(kind, ctx.n, ctx.mesh)
        e = iso_mod.edge_spaces(fam)
        X = e.x0.canonical(rng.standard_normal((ctx.get("samples", 20), e.x0.dim)))
        top, bottom = e.x0.norms(X), e.xT.norms(X)
        for i in range(fam.n):
            N = fam.nodes[i].norms(X)
            r = max(float(np.max(N - top)), float(np.max(bottom - N)), 0.0) / max(1.0, float(top.max()))
            if r > worst:
                worst, witness = r, {"family": kind, "node": i}
    return judge("edge_space_limits", worst, ctx.tol("exact"), witness)


@prop("operator_norm_crosscheck")
def _opnorm(ctx):
    rng = ctx.rng("operator_norm_crosscheck")
    worst, witness = 0.0, None
    for k in range(ctx.get("maps", 10)):
        w1, w2 = rng.uniform(0.2, 2.0, size=(2, 8))
        src, dst = fm.NormedNode.lq(w1), fm.NormedNode.lq(w2)
        A = rng.standard_normal((8, 8))
        exact = iso_mod.estimate_operator_norm(A, src, dst).value
        approx = iso_mod.estimate_operator_norm(A, src, dst, seed=k, method="sample").value
        r = max(exact - approx, (approx - exact) * 1e6, 0.0) / exact
        if r > worst:
            worst, witness = r, {"map": k, "exact": exact, "sampled": approx}
    return judge("operator_norm_crosscheck", worst, ctx.get("tol", 1e-6), witness)


def _weight_M(n, mesh, w):
    fam = builder_family("affine_composition", n, mesh)
    iso = iso_mod.weight_isomorphism(fam, w)
    return iso_mod.estimate_M(fam, iso, seed=0)


@prop("weight_isomorphism_M")
def _weight(ctx):
    a = _weight_M(ctx.n, ctx.mesh, "affine")
    b = _weight_M(2 * ctx.n, ctx.mesh, "affine")
    err = abs(a.M_forward - 0.5) / 0.5
    drift = abs(b.M_forward - a.M_forward) / a.M_forward
    return judge("weight_isomorphism_M", max(err, drift), ctx.get("rel_tol", 0.1), None,
                 M_forward=[a.M_forward, b.M_forward], M_inverse=[a.M_inverse, b.M_inverse],
                 sup_forward=a.sup_forward, sup_inverse=a.sup_inverse)


@prop("step_weight_divergence")
def _step(ctx):
    a = _weight_M(ctx.n, ctx.mesh, "step")
    b = _weight_M(2 * ctx.n, ctx.mesh, "step")
    factor = b.M_forward / a.M_forward
    ok = abs(factor - 2.0) <= ctx.get("factor_tol", 0.2)
    return VerificationReport("step_weight_divergence", "divergent" if ok else "fail", factor,
                              {"M_forward": [a.M_forward, b.M_forward]},
                              details={"growth_factor": factor, "expected_factor": 2.0})


@prop("lift_sufficiency")
def _lift(ctx):
    fam = builder_family("affine_composition", ctx.n, ctx.mesh)
    iso = iso_mod.weight_isomorphism(fam, "affine")
    rep = iso_mod.estimate_M(fam, iso, seed=0)
    u = sec.section_from_function(fam, lambda t, x: np.sin(np.pi * x) * (1 + t * t))
    worst = 0.0
    for p in (2.0, 4.0):
        lhs, rhs = iso_mod.lift_bound(iso, u, p, rep)
        worst = max(worst, (lhs - rhs) / rhs)
    return judge("lift_sufficiency", max(worst, 0.0), 0.0, None, margin=-worst)


@prop("identity_isomorphism_constant")
def _ident(ctx):
    rng = ctx.rng("identity_isomorphism_constant")
    node = fm.NormedNode.lq(rng.uniform(0.5, 2.0, 16), 2.0)
    fam = fm.constant_family(fm.TimeGrid.uniform(ctx.n), node)
    iso = iso_mod.identity_isomorphism(fam)
    rep = iso_mod.estimate_M(fam, iso)
    u = random_section(fam, rng)
    lifted = iso_mod.lift_section(iso, u)
    diff = float(np.abs(np.asarray(lifted.values) - np.asarray(u.values)).max())
    return judge("identity_isomorphism_constant", max(rep.M_forward, rep.M_inverse, diff), 0.0, None)


@prop("difference_quotient_smooth")
def _dq_smooth(ctx):
    n = ctx.n
    u = smooth_section(n, ctx.mesh)
    rep = iso_mod.difference_quotient_criterion(u, 2)
    target = sec.lp_direct_norm(sob.weak_derivative(u), 2).value
    rel = abs(rep.details["C"] - target) / target
    if rep.status != "pass":
        return rep
    return judge("difference_quotient_smooth", rel, ctx.get("rel_tol", 0.05), None,
                 C=rep.details["C"], derivative_norm=target, slope=rep.details["slope"])


@prop("difference_quotient_holder")
def _dq_holder(ctx):
    n = ctx.get("grid_n", 512)
    fam = builder_family("nested_lq", n, ctx.mesh)
    u = sec.section_from_function(fam, weierstrass_sampler())
    rep = iso_mod.difference_quotient_criterion(u, 2)
    rep.property_name = "difference_quotient_holder"
    return rep


@prop("composition_blowup")
def _blowup(ctx):
    table = iso_mod.composition_blowup_demo(ctx.get("n_values", [16, 32, 64, 128]), ctx.get("s", 0.2),
                                            ctx.get("t", 0.4), ctx.get("a", 0.3), ctx.get("blowup_mesh", 8192))
    r = table.ratios
    increasing = all(b > a for a, b in zip(r, r[1:]))
    top = r[-1] / r[-2]
    ok = increasing and top >= ctx.get("min_factor", 1.5)
    return VerificationReport("composition_blowup", "divergent" if ok else "fail", top,
                              None if ok else {"ratios": list(r)},
                              details={"n": list(table.n_values), "ratios": list(r), "top_factor": top,
                                       "order": loglog_slope(table.n_values, r)})


@prop("composition_smooth_bounded")
def _blowup_smooth(ctx):
    table = iso_mod.composition_blowup_demo(ctx.get("n_values", [16, 32, 64, 128]), 0.2, 0.4, 0.3,
                                            ctx.get("blowup_mesh", 8192), exponent=2.0)
    r = np.array(table.ratios)
    spread = float(r.max() / r.min() - 1.0)
    return judge("composition_smooth_bounded", spread, ctx.get("rel_tol", 0.1), None, ratios=r.tolist())


def cauchy_completeness_probe(generator: str, p: float = 2.0, n: int = 128, mesh: int = 256,
                              k: int = 30, cauchy_tol: float = 1e-6, tol: float = 1e-9) -> VerificationReport:
    """Cauchy sequences in the discrete W^{1,p} norm and their limits.

    Generators: ``"constant"`` (``u, u, ...``), ``"geometric"``
    (``(1 - 2^-j) u``) and ``"non_cauchy"`` (geometric, then alternating
    between ``u`` and ``u/2`` over the last third). Consecutive distances
    over the last third must fall below ``cauchy_tol``; the first pair that
    does not is the witness. The limit's norm must match the limit of norms.
    """
    u = smooth_section(n, mesh)
    j = np.arange(1, k + 1)
    if generator == "constant":
        seq, limit = [u for _ in j], u
    elif generator == "geometric":
        seq, limit = [(1.0 - 2.0 ** -int(m)) * u for m in j], u
    elif generator == "non_cauchy":
        seq = [(1.0 - 2.0 ** -int(m)) * u if m <= 2 * k // 3 else (1.0 if m % 2 else 0.5) * u for m in j]
        limit = None
    else:
        raise ValueError(f"unknown generator {generator!r}")
    name = f"completeness_{generator}"
    dists = [sob.sobolev_norm(b - a, p).total for a, b in zip(seq, seq[1:])]
    start = 2 * len(dists) // 3
    for m in range(start, len(dists)):
        if dists[m] > cauchy_tol:
            return VerificationReport(name, "fail", dists[m], {"pair": [m, m + 1]},
                                      details={"cauchy_tol": cauchy_tol})
    last, C, _ = sec.sectional_limit(seq, p, tol=cauchy_tol)
    limit = last if limit is None else limit
    norms = [sob.sobolev_norm(s, p).total for s in seq]
    lim_norm = sob.sobolev_norm(limit, p).total
    gap = abs(norms[-1] - lim_norm)
    return judge(name, gap, tol, {"gap": gap}, limit_norm=lim_norm, last_norm=norms[-1], bound=C)


for _gen in ("constant", "geometric", "non_cauchy"):
    REGISTRY[f"completeness_{_gen}"] = (lambda g: lambda ctx: cauchy_completeness_probe(
        g, 2.0, ctx.n, ctx.mesh, tol=ctx.tol("quadrature")))(_gen)


@prop("sectional_limit")
def _sectional(ctx):
    u = smooth_section(ctx.n, ctx.mesh)
    seq = [(1.0 + (-0.5) ** m) * u for m in range(1, 60)]
    lim, C, norm = sec.sectional_limit(seq, 2.0)
    excess = max(0.0, norm - C)
    err = sec.lp_direct_norm(lim - u, 2).value
    return judge("sectional_limit", max(excess, err), ctx.tol("quadrature"), None, bound=C, limit_norm=norm)


# --------------------------------------------------------------------------
# runner


def _parse_config(text: str) -> dict:
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _entries(cfg: dict) -> list[dict]:
    out = []
    for k, e in enumerate(cfg.get("properties", [])):
        if isinstance(e, str):
            e = {"name": e}
        if not isinstance(e, dict) or "name" not in e:
            raise ConfigError(f"property entry {k} needs a name")
        if e["name"] not in REGISTRY:
            raise ConfigError(f"unknown property {e['name']!r}; known: {', '.join(sorted(REGISTRY))}")
        expect = e.get("expect", "pass")
        if expect not in STATUSES:
            raise ConfigError(f"property {e['name']!r}: expected status must be one of {STATUSES}")
        out.append({"name": e["name"], "label": e.get("label", e["name"]), "expect": expect,
                    "params": dict(e.get("params", {}))})
    labels = [e["label"] for e in out]
    if len(set(labels)) != len(labels):
        raise ConfigError("property labels must be unique")
    return out


def _seed(cfg: dict) -> int:
    env = os.environ.get("MONOFAM_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MONOFAM_SEED must be an integer, got {env!r}") from None
    return int(cfg.get("seed", 42))


def _run_one(entry, cfg, seed):
    ctx = Context(seed, int(entry["params"].get("grid_n", cfg.get("n", 128))), int(cfg.get("mesh", 256)),
                  {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})}, entry["params"])
    t0 = time.perf_counter()
    try:
        rep = REGISTRY[entry["name"]](ctx)
    except Exception as exc:  # a crashing property is a failure, not a crash of the suite
        rep = VerificationReport(entry["name"], "fail", math.inf, {"error": repr(exc)},
                                 details={"traceback": traceback.format_exc(limit=3)})
    rep.runtime_ms = (time.perf_counter() - t0) * 1e3
    rep.property_name = entry["label"]
    return rep


def run_suite_config(cfg: dict, workers: int | None = None) -> tuple[int, dict]:
    """Run a parsed config; returns ``(exit_code, report_dict)``."""
    entries = _entries(cfg)
    seed = _seed(cfg)
    workers = int(cfg.get("workers", 4) if workers is None else workers)
    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(lambda e: _run_one(e, cfg, seed), entries))
    else:
        reports = [_run_one(e, cfg, seed) for e in entries]
    timings = bool(cfg.get("timings", False))
    rows = []
    for e, rep in sorted(zip(entries, reports), key=lambda er: er[0]["label"]):
        d = rep.to_dict(timings=timings)
        d["expected"] = e["expect"]
        d["matched"] = rep.status == e["expect"]
        rows.append(d)
    mismatched = [r["property_name"] for r in rows if not r["matched"]]
    report = {
        "seed": seed,
        "n": int(cfg.get("n", 128)),
        "mesh": int(cfg.get("mesh", 256)),
        "tolerances": {**DEFAULT_TOLERANCES, **cfg.get("tolerances", {})},
        "properties": rows,
        "summary": {"total": len(rows), "matched": len(rows) - len(mismatched), "mismatched": mismatched},
    }
    return (1 if mismatched else 0), _plain(report)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _report_path(config_path: Path, cfg: dict, out) -> Path:
    if out is not None:
        return Path(out)
    if "report" in cfg:
        p = Path(cfg["report"])
        return p if p.is_absolute() else config_path.parent / p
    return config_path.with_suffix(".report.json")


def run_suite(config_path, out=None, workers: int | None = None) -> int:
    """Run the suite described by a config file and write its JSON report."""
    path = Path(config_path)
    cfg = _parse_config(path.read_text())
    code, report = run_suite_config(cfg, workers)
    _report_path(path, cfg, out).write_text(dumps_report(report))
    return code


def default_config_path() -> Path:
    return Path(__file__).parent / "configs" / "default_suite.json"


# --------------------------------------------------------------------------
# convergence studies


def _metric_main1_gap(n, params):
    s = sob.sobolev_norm(smooth_section(n, params.get("mesh", 256)), params.get("p", 2.0))
    return s.gap


def _metric_ftc_error(n, params):
    return sob.ftc_reconstruct(smooth_section(n, params.get("mesh", 256))).max_error


def _metric_mh_error(n, params):
    u = smooth_section(n, params.get("mesh", 256))
    h = params.get("cells", 8) * float(np.mean(u.family.grid.widths))
    return sec.lp_direct_norm(sec.smooth_Mh(u, h) - u, params.get("p", 2.0)).value


def _metric_M_stability(n, params):
    return _weight_M(n, params.get("mesh", 256), params.get("weight", "affine")).M_forward


def _metric_blowup_ratio(n, params):
    table = iso_mod.composition_blowup_demo([n], params.get("s", 0.2), params.get("t", 0.4), params.get("a", 0.3),
                                            params.get("mesh", 8192), params.get("exponent", 2.0 / 3.0))
    return table.ratios[0]


# name -> (function, sign applied to the log-log slope)
METRICS = {
    "main1_gap": (_metric_main1_gap, -1.0),
    "ftc_error": (_metric_ftc_error, -1.0),
    "mh_error": (_metric_mh_error, -1.0),
    "M_stability": (_metric_M_stability, 1.0),
    "blowup_ratio": (_metric_blowup_ratio, 1.0),
}


def run_convergence_config(cfg: dict) -> ConvergenceStudy:
    metric = cfg.get("metric")
    if metric not in METRICS:
        raise ConfigError(f"unknown metric {metric!r}; registered metrics: {', '.join(METRICS)}")
    grids = [int(g) for g in cfg.get("grids", [64, 128, 256, 512])]
    if len(grids) < 2:
        raise ConfigError("a convergence study needs at least two grids")
    fn, sign = METRICS[metric]
    params = dict(cfg.get("params", {}))
    values = [float(fn(n, params)) for n in grids]
    if any(v <= 0 for v in values):
        order = 0.0 if all(v == 0 for v in values) else math.nan
    else:
        order = sign * loglog_slope(grids, values)
    return ConvergenceStudy(grids, metric, values, order)


def study_csv(study: ConvergenceStudy) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", study.metric])
    for n, v in zip(study.grids, study.values):
        w.writerow([n, repr(float(v))])
    return buf.getvalue()


def run_convergence(config_path, out_dir=None) -> ConvergenceStudy:
    """Run a convergence config; writes ``<stem>.csv`` and ``<stem>.json``."""
    path = Path(config_path)
    cfg = _parse_config(path.read_text())
    study = run_convergence_config(cfg)
    target = Path(out_dir) if out_dir is not None else path.parent
    stem = cfg.get("output", path.stem + ".convergence")
    (target / f"{stem}.csv").write_text(study_csv(study))
    (target / f"{stem}.json").write_text(json.dumps(study.to_dict(), indent=2, sort_keys=True) + "\n")
    return study


__all__ = [
    "BACKEND",
    "REGISTRY",
    "METRICS",
    "ConfigError",
    "Context",
    "builder_family",
    "cauchy_completeness_probe",
    "run_suite",
    "run_suite_config",
    "run_convergence",
    "run_convergence_config",
    "smooth_section",
    "weierstrass_sampler",
]
