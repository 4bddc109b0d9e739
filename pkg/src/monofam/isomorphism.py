"""Edge spaces, node isomorphisms into a reference space, and their constants.

Operator norms between Hilbert-type nodes are exact (largest singular value
after factoring both Gram matrices); between other nodes they are sampled
lower bounds refined by coordinate ascent.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ResolutionError
from .family import MonotoneFamily, NormedNode, TimeGrid, constant_family
from .report import VerificationReport
from .sections import Section, lp_direct_norm, node_norms
from .sobolev import cell_lp_norm, minimal_upper_gradient


@dataclass(frozen=True)
class EdgeSpaces:
    x0: NormedNode
    xT: NormedNode
    extrapolation_note: str


def edge_spaces(family: MonotoneFamily) -> EdgeSpaces:
    g = family.grid
    return EdgeSpaces(
        family.nodes[0], family.nodes[-1],
        f"grid endpoints t={g.nodes[0]:.6g} and t={g.nodes[-1]:.6g} stand in for the limits "
        f"t->{g.t_start:g}+ and t->{g.t_end:g}-; the true limit norms are not extrapolated",
    )


def embed_from_x0(family: MonotoneFamily, u0: Section) -> Section:
    """``u(t) -> P(0, t) u(t)`` for a section valued in the first node's space."""
    if u0.n != family.n:
        raise ValueError("input section must share the family's grid")
    return Section(family, [family.push(0, i, u0.values[i]) for i in range(family.n)])


def project_to_xT(u: Section) -> Section:
    """``u(t) -> P(t, T) u(t)``, valued in the last node's space."""
    fam = u.family
    last = fam.n - 1
    target = constant_family(fam.grid, fam.nodes[-1], label=f"{fam.label}:xT", coords=fam.coords)
    return Section(target, [fam.push(i, last, u.values[i]) for i in range(fam.n)])


def x0_family(family: MonotoneFamily) -> MonotoneFamily:
    return constant_family(family.grid, family.nodes[0], label=f"{family.label}:x0", coords=family.coords)


# --------------------------------------------------------------------------
# operator norms


@dataclass(frozen=True)
class OperatorNorm:
    value: float
    exact: bool

    def __float__(self):
        return self.value


_PINV_CACHE: dict = {}


def _structure(node: NormedNode):
    """``(key, factor)`` with ``|x|_node = factor * |x|_unit`` and ``key`` naming the unit norm."""
    if node.kind == "h1":
        return ("h1", node.dim, node.h, node.mask.tobytes()), math.sqrt(node.scale)
    if node.kind == "lq":
        return ("lq", node.q, node.weights.tobytes()), 1.0
    return ("sup", node.mask.tobytes()), 1.0


def _pinv_and_null(node: NormedNode):
    key, factor = _structure(node)
    hit = _PINV_CACHE.get(key)
    if hit is None:
        R = node.gram_factor / factor
        U, s, Vt = np.linalg.svd(R, full_matrices=True)
        rank = int(np.sum(s > s.max(initial=0.0) * 1e-12))
        hit = ((Vt[:rank].T / s[:rank]) @ U[:, :rank].T, Vt[rank:].T)
        if len(_PINV_CACHE) > 1024:
            _PINV_CACHE.clear()
        _PINV_CACHE[key] = hit
    return hit[0] / factor, hit[1]


def _ratio(A, src, dst, x):
    den = src.norm(x)
    return dst.norm(A @ x) / den if den > 0 else 0.0


def _ascend(A, src, dst, x, sweeps=400):
    """Coordinate ascent on ``|A x| / |x|`` over 2-planes ``span{x, e_j}``."""
    coords = np.flatnonzero(src.active)
    best = _ratio(A, src, dst, x)
    thetas = np.linspace(-np.pi / 2, np.pi / 2, 33)
    for _ in range(sweeps):
        start = best
        for j in coords:
            y = x / np.linalg.norm(x)
            e = np.zeros_like(x)
            e[j] = 1.0

            def f(th):
                return -_ratio(A, src, dst, np.cos(th) * y + np.sin(th) * e)

            vals = [f(th) for th in thetas]
            k = int(np.argmin(vals))
            lo = thetas[max(k - 1, 0)]
            hi = thetas[min(k + 1, len(thetas) - 1)]
            res = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                           options={"xatol": 1e-13})
            th, val = (res.x, -res.fun) if -res.fun >= -vals[k] else (thetas[k], -vals[k])
            if val > best:
                best = val
                x = np.cos(th) * y + np.sin(th) * e
        if best - start <= 1e-15 * max(1.0, best):
            break
    return best


def estimate_operator_norm(A, src: NormedNode, dst: NormedNode, samples: int = 64, seed: int = 0,
                           method: str = "auto") -> OperatorNorm:
    """``sup |A x|_dst / |x|_src``.

    ``method="auto"`` is exact when both nodes are Hilbert-type (largest
    singular value of ``R_dst A R_src^+``; infinite if ``A`` does not vanish
    on the kernel of the source norm) and otherwise a certified lower bound:
    the best of ``samples`` random directions, refined by coordinate ascent.
    """
    A = np.asarray(A, dtype=float)
    if A.shape != (dst.dim, src.dim):
        raise ValueError(f"map of shape {A.shape} does not go from dim {src.dim} to dim {dst.dim}")
    if method == "auto" and src.is_hilbert and dst.is_hilbert:
        pinv, null = _pinv_and_null(src)
        Rd = dst.gram_factor
        if null.size and np.linalg.norm(Rd @ A @ null) > 1e-9 * max(1.0, np.linalg.norm(Rd @ A)):
            return OperatorNorm(math.inf, True)
        M = Rd @ A @ pinv
        return OperatorNorm(float(np.linalg.norm(M, 2)) if M.size else 0.0, True)
    rng = np.random.default_rng(seed)
    X = src.canonical(rng.standard_normal((max(samples, 1), src.dim)))
    num = dst.norms(X @ A.T)
    den = src.norms(X)
    r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    order = np.argsort(r)[::-1][:3]
    best = float(r[order[0]])
    for k in order:
        best = max(best, _ascend(A, src, dst, X[k].copy()))
    return OperatorNorm(best, False)


# --------------------------------------------------------------------------
# isomorphisms


@dataclass(frozen=True, eq=False)
class NodeMap:
    """``scalar * base`` with ``base`` a dense matrix, or the identity when ``None``."""

    scalar: float
    base: np.ndarray | None = None

    def dense(self, dim_out: int, dim_in: int) -> np.ndarray:
        B = np.eye(dim_out, dim_in) if self.base is None else self.base
        return self.scalar * B

    def apply(self, x):
        x = np.asarray(x, dtype=float)
        return self.scalar * (x if self.base is None else x @ self.base.T)


@dataclass(frozen=True, eq=False)
class FamilyIsomorphism:
    reference: NormedNode
    maps: tuple
    inverse_maps: tuple
    forward_bounds: np.ndarray
    inverse_bounds: np.ndarray
    label: str = ""
    _norm_cache: dict = field(default_factory=dict, repr=False)


def _identity_like(P) -> bool:
    return P.diagonal is not None and np.all(P.diagonal == 1.0)


def _difference_norm(cache, a_scalar, a_map, P, b_scalar, b_map, src, dst, forward):
    """Operator norm of ``a_scalar*A o P - b_scalar*B`` (forward) or ``a*A - P o b*B``.

    When both node maps are scalar identities and ``P`` is the identity, the
    difference is ``(a - b) I`` and ``|I|`` is cached per pair of unscaled norms.
    """
    if a_map.base is None and b_map.base is None and _identity_like(P):
        (ks, fs), (kd, fd) = _structure(src), _structure(dst)
        if (ks, kd) not in cache:
            unit_src = src if fs == 1.0 else NormedNode.h1(src.dim, src.h, src.mask)
            unit_dst = dst if fd == 1.0 else NormedNode.h1(dst.dim, dst.h, dst.mask)
            cache[(ks, kd)] = estimate_operator_norm(np.eye(dst.dim, src.dim), unit_src, unit_dst).value
        return abs(a_scalar - b_scalar) * cache[(ks, kd)] * fd / fs
    Pd = P.dense()
    if forward:
        D = a_map.dense(dst.dim, Pd.shape[0]) @ Pd - b_map.dense(dst.dim, src.dim)
    else:
        D = a_map.dense(dst.dim, src.dim) - Pd @ b_map.dense(Pd.shape[1], src.dim)
    return estimate_operator_norm(D, src, dst).value


def weight_isomorphism(family: MonotoneFamily, w="affine", reference: NormedNode | None = None) -> FamilyIsomorphism:
    """``Phi_t = w(t) I`` into a fixed reference space.

    ``w`` is a callable, an array of node values, ``"affine"`` (``1 + t/2``)
    or ``"step"`` (1 before t = 0.5, 2 after). The default reference is the
    plain H^1_0 norm of the reference mesh for the affine-composition family
    and the last node's norm otherwise.
    """
    t = family.t
    if isinstance(w, str):
        if w == "affine":
            wv = 1.0 + t / 2.0
        elif w == "step":
            wv = np.where(t < 0.5, 1.0, 2.0)
        elif w == "identity":
            wv = np.ones_like(t)
        else:
            raise ValueError(f"unknown weight {w!r}")
    elif callable(w):
        wv = np.array([float(w(ti)) for ti in t])
    else:
        wv = np.asarray(w, dtype=float)
    if wv.shape != t.shape or np.any(wv == 0):
        raise ValueError("weights must be nonzero, one per node")
    if reference is None:
        last = family.nodes[-1]
        if family.builder and family.builder.get("kind") == "affine_composition":
            reference = NormedNode.h1(last.dim, last.h, None, 1.0)
        else:
            reference = last
    maps = tuple(NodeMap(float(c)) for c in wv)
    inv = tuple(NodeMap(1.0 / float(c)) for c in wv)
    cache: dict = {}
    fwd = np.array([_difference_norm(cache, c, NodeMap(1.0), family.transition(i, i), 0.0,
                                     NodeMap(1.0), nd, reference, True) for i, (c, nd) in enumerate(zip(wv, family.nodes))])
    inv_b = np.array([_difference_norm(cache, 1.0 / c, NodeMap(1.0), family.transition(i, i), 0.0,
                                       NodeMap(1.0), reference, nd, False) for i, (c, nd) in enumerate(zip(wv, family.nodes))])
    return FamilyIsomorphism(reference, maps, inv, fwd, inv_b, label=f"weight:{w if isinstance(w, str) else 'custom'}",
                             _norm_cache=cache)


def identity_isomorphism(family: MonotoneFamily, reference: NormedNode | None = None) -> FamilyIsomorphism:
    return weight_isomorphism(family, np.ones(family.n), reference)


def isomorphism_from_json(family: MonotoneFamily, d: dict) -> FamilyIsomorphism:
    kind = d.get("kind", "weight")
    ref = NormedNode.from_json(d["reference"]) if "reference" in d else None
    if kind == "identity":
        return identity_isomorphism(family, ref)
    if kind != "weight":
        raise ValueError(f"unknown isomorphism kind {kind!r}")
    return weight_isomorphism(family, d.get("w", "affine"), ref)


@dataclass
class IsomorphismReport:
    sup_forward: float
    sup_inverse: float
    M_forward: float
    M_inverse: float
    per_pair_ratios: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"sup_forward": self.sup_forward, "sup_inverse": self.sup_inverse,
                "M_forward": self.M_forward, "M_inverse": self.M_inverse,
                "per_pair_ratios": [list(r) for r in self.per_pair_ratios]}

    def ratios_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "t", "forward_ratio", "inverse_ratio"])
        for row in self.per_pair_ratios:
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def estimate_M(family: MonotoneFamily, iso: FamilyIsomorphism, seed: int = 0, distant: int | None = None) -> IsomorphismReport:
    """Tabulate ``|Phi_t P(s,t) - Phi_s| / (t - s)`` and ``|Phi_t^-1 - P(s,t) Phi_s^-1| / (t - s)``.

    All adjacent pairs plus ``ceil(n log n)`` random distant pairs (fixed
    seed); the M values are the largest ratios found.
    """
    n = family.n
    t = family.t
    pairs = [(k, k + 1) for k in range(n - 1)]
    if n > 2:
        count = math.ceil(n * math.log(n)) if distant is None else distant
        rng = np.random.default_rng(seed)
        for _ in range(count):
            s, e = sorted(rng.choice(n, size=2, replace=False))
            if e - s >= 2:
                pairs.append((int(s), int(e)))
    cache = iso._norm_cache
    rows = []
    for s, e in pairs:
        P = family.transition(s, e)
        fwd = _difference_norm(cache, iso.maps[e].scalar, NodeMap(1.0, iso.maps[e].base), P,
                               iso.maps[s].scalar, NodeMap(1.0, iso.maps[s].base),
                               family.nodes[s], iso.reference, True)
        inv = _difference_norm(cache, iso.inverse_maps[e].scalar,
                               NodeMap(1.0, iso.inverse_maps[e].base), P,
                               iso.inverse_maps[s].scalar, NodeMap(1.0, iso.inverse_maps[s].base),
                               iso.reference, family.nodes[e], False)
        dt = t[e] - t[s]
        rows.append((float(t[s]), float(t[e]), fwd / dt, inv / dt))
    M_f = max((r[2] for r in rows), default=0.0)
    M_i = max((r[3] for r in rows), default=0.0)
    return IsomorphismReport(float(np.max(iso.forward_bounds)), float(np.max(iso.inverse_bounds)),
                             float(M_f), float(M_i), rows)


def lift_section(iso: FamilyIsomorphism, u: Section) -> Section:
    """``(Phi u)(t) = Phi_t u(t)`` as a section of the constant reference family."""
    ref_family = constant_family(u.family.grid, iso.reference, label=f"{iso.label}:Y", coords=u.family.coords)
    return Section(ref_family, [iso.maps[i].apply(u.values[i]) for i in range(u.n)])


def lift_bound(iso: FamilyIsomorphism, u: Section, p: float, report: IsomorphismReport) -> tuple[float, float]:
    """Both sides of the sufficiency estimate for the lifted section.

    Left: the cellwise L^p norm of ``|Phi_{t+} u(t+) - Phi_t u(t)|_Y / dt``.
    Right: ``sup_forward |g|_p + M_forward |u|_p`` with the minimal gradient
    and the left-endpoint L^p norm of ``u``.
    """
    grid = u.family.grid
    lifted = lift_section(iso, u)
    V = np.asarray(lifted.values)
    quot = iso.reference.norms(np.diff(V, axis=0)) / grid.widths
    lhs = cell_lp_norm(grid.widths, quot, p)
    g = minimal_upper_gradient(u, p)
    left = cell_lp_norm(grid.widths, node_norms(u)[:-1], p)
    rhs = report.sup_forward * g.lp_norm + report.M_forward * left
    return lhs, rhs


# --------------------------------------------------------------------------
# difference-quotient criterion


def difference_quotient_criterion(u: Section, p: float, h_cells=(1, 2, 4, 8),
                                  slope_tol: float = 0.25) -> VerificationReport:
    """Ratios ``|tau_h u - u|_{L^p(J)} / h`` on a common interior window.

    ``tau_h u - u`` at node ``i`` is ``u(t_{i+h}) - P(t_i, t_{i+h}) u(t_i)``,
    measured in the later space; ``J`` is the node range that admits the
    largest shift. Bounded ratios report ``pass`` with ``C`` their maximum;
    a log-log slope of the ratios against ``h`` below ``-slope_tol`` reports
    ``divergent``.
    """
    if not p > 1:
        raise ValueError("the criterion needs p > 1")
    fam = u.family
    grid = fam.grid
    t = grid.nodes
    hmax = max(h_cells)
    if hmax >= fam.n:
        raise ValueError("grid too short for the requested shifts")
    hi_J = fam.n - 1 - hmax
    ratios, steps = [], []
    for h in h_cells:
        vals = np.array([
            fam.nodes[i + h].norm(u.values[i + h] - fam.push(i, i + h, u.values[i]))
            for i in range(0, hi_J + 1)
        ])
        step = float(np.mean(t[h : hi_J + 1 + h] - t[: hi_J + 1]))
        if math.isinf(p):
            norm = float(vals.max(initial=0.0))
        else:
            norm = float(grid.trapezoid_weights(0, hi_J) @ vals**p) ** (1.0 / p)
        ratios.append(norm / step)
        steps.append(step)
    ratios = np.array(ratios)
    C = float(ratios.max(initial=0.0))
    if C == 0 or np.any(ratios <= 0):
        slope = 0.0
    else:
        slope = float(np.polyfit(np.log(steps), np.log(ratios), 1)[0])
    status = "divergent" if slope < -slope_tol else "pass"
    return VerificationReport("difference_quotient_criterion", status, C,
                              {"slope": slope} if status != "pass" else None,
                              details={"C": C, "ratios": ratios.tolist(), "steps": steps, "slope": slope,
                                       "h_cells": list(h_cells)})


# --------------------------------------------------------------------------
# negative composition example


def _smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        a = np.where(x > 0, np.exp(-1.0 / np.where(x > 0, x, 1.0)), 0.0)
        b = np.where(x < 1, np.exp(-1.0 / np.where(x < 1, 1.0 - x, 1.0)), 0.0)
    return a / (a + b)


def blowup_profile(x, n: int, a: float, ell: float, delta: float, exponent: float):
    """``|x - a|^exponent * eta_0(x) * eta_n(x)`` on ``(0, ell)``, zero elsewhere.

    ``eta_0`` rises from 0 to 1 on ``(0, delta)`` and falls back on
    ``(ell - delta, ell)``; ``eta_n`` vanishes within ``1/n`` of ``a`` and
    is 1 beyond ``2/n``.
    """
    x = np.asarray(x, dtype=float)
    eta0 = _smooth_step(x / delta) * _smooth_step((ell - x) / delta)
    etan = _smooth_step(n * np.abs(x - a) - 1.0)
    f = np.abs(x - a) ** exponent * eta0 * etan
    return np.where((x > 0) & (x < ell), f, 0.0)


@dataclass(frozen=True)
class BlowupTable:
    n_values: tuple
    ratios: tuple
    best_steps: tuple
    s: float
    t: float
    a: float
    mesh: int
    exponent: float

    def rows(self):
        return list(zip(self.n_values, self.ratios, self.best_steps))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "ratio", "best_step"])
        for n, r, h in self.rows():
            w.writerow([n, repr(float(r)), repr(float(h))])
        return buf.getvalue()


def composition_blowup_demo(n_values, s: float, t: float, a: float, mesh: int,
                            exponent: float = 2.0 / 3.0, min_step: float = 1e-6,
                            cells_per_cutoff: int = 16) -> BlowupTable:
    """Lower bounds for ``M`` in the forward condition, from the profiles ``f_n``.

    Each ``f_n`` is scaled to unit discrete H^1_0(Q_s) norm. For each ``n`` the
    tabulated ratio is the largest of
    ``|f_n(phi(t', .)) - f_n(phi(s, .))|_{H^1_0(0,1)} / (t' - s)`` over steps
    ``t' - s = (t - s) 2^-k`` down to ``min_step``: the forward condition
    must hold for every pair, and the growth in ``n`` lives at steps below
    the cutoff scale ``1/n``.
    """
    n_values = tuple(int(n) for n in n_values)
    if not 0 < s <= t < 1:
        raise ValueError("need 0 < s <= t < 1")
    ell = (1.0 + s) / 2.0
    if not 0 < a < ell:
        raise ValueError(f"a must lie in (0, {ell})")
    delta = 0.25 * min(a, ell - a)
    room = min(a, ell - a) - delta
    if 2.0 / min(n_values) > room:
        raise ValueError(f"n={min(n_values)} cutoff does not fit around a={a}; need n >= {math.ceil(2 / room)}")
    required = math.ceil(cells_per_cutoff * max(n_values) * ell)
    if mesh < required:
        raise ResolutionError(f"mesh {mesh} does not resolve 1/{max(n_values)}; need mesh >= {required}",
                              required=required)
    h = 1.0 / mesh
    x = np.arange(1, mesh) * h
    steps = []
    if t > s:
        k = 0
        while (t - s) * 2.0**-k >= min_step:
            steps.append((t - s) * 2.0**-k)
            k += 1

    def h1(v):
        dv = np.diff(np.concatenate([[0.0], v, [0.0]]))
        return math.sqrt(float(dv @ dv) / h)

    ratios, best = [], []
    for n in n_values:
        base = blowup_profile((1 + s) * x / 2, n, a, ell, delta, exponent)
        C = 1.0 / (math.sqrt(2.0 / (1.0 + s)) * h1(base))
        r_best, h_best = 0.0, 0.0
        for step in steps:
            moved = blowup_profile((1 + s + step) * x / 2, n, a, ell, delta, exponent)
            r = C * h1(moved - base) / step
            if r > r_best:
                r_best, h_best = r, step
        ratios.append(r_best)
        best.append(h_best)
    return BlowupTable(n_values, tuple(ratios), tuple(best), s, t, a, mesh, exponent)
