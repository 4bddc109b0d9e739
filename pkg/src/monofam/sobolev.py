"""Upper gradients, weak derivatives and the W^{1,p} norm on a grid.

Upper gradients are piecewise constant on grid cells. The minimal one has a
closed form: the adjacent-node increments divided by the cell widths. The
all-pairs convex program is kept as a small-n oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import kernels
from .errors import MonofamError
from .report import VerificationReport
from .sections import (
    Section,
    lp_direct_norm,
    local_integral,
    node_norms,
    pushed_values,
)

EXACT_TOL = 1e-12


def cell_lp_norm(widths, cells, p: float) -> float:
    cells = np.asarray(cells, dtype=float)
    if cells.size == 0:
        return 0.0
    if math.isinf(p):
        return float(np.max(cells))
    return float(np.dot(widths, cells**p) ** (1.0 / p))


@dataclass(frozen=True, eq=False)
class UpperGradient:
    cell_values: np.ndarray
    p: float
    lp_norm: float
    widths: np.ndarray

    def __post_init__(self):
        if np.any(self.cell_values < 0):
            raise ValueError("upper gradients are nonnegative")

    @classmethod
    def from_cells(cls, grid, cells, p: float) -> "UpperGradient":
        cells = np.asarray(cells, dtype=float)
        w = grid.widths
        if cells.shape != w.shape:
            raise ValueError(f"expected {w.size} cell values, got {cells.size}")
        return cls(cells, float(p), cell_lp_norm(w, cells, p), w)

    def cumulative(self) -> np.ndarray:
        """``G[i] = int_{t_0}^{t_i} g``."""
        return np.concatenate([[0.0], np.cumsum(self.cell_values * self.widths)])


@dataclass(frozen=True)
class SobolevNorm:
    lp_part: float
    gradient_part: float
    total: float
    derivative_norm: float

    @property
    def gap(self) -> float:
        """Relative gap between the minimal gradient norm and the derivative norm."""
        if self.gradient_part == 0:
            return abs(self.derivative_norm)
        return abs(self.gradient_part - self.derivative_norm) / self.gradient_part


def adjacent_increments(u: Section) -> np.ndarray:
    """``d_k = |u(t_{k+1}) - P(t_k, t_{k+1}) u(t_k)|_{t_{k+1}}``."""
    fam = u.family
    if fam.lq_stack is not None:
        W, q = fam.lq_stack
        D = np.diff(np.asarray(u.values), axis=0)
        return kernels.weighted_lq_rows(D, W[1:], q)
    return np.array([
        fam.nodes[k + 1].norm(u.values[k + 1] - fam.push(k, k + 1, u.values[k]))
        for k in range(fam.n - 1)
    ])


def minimal_upper_gradient(u: Section, p: float) -> UpperGradient:
    """Cellwise ``d_k / dt_k``.

    Adjacent pairs force ``g_k >= d_k / dt_k``; this choice already satisfies
    every pair because transitions contract and node norms obey the triangle
    inequality, so it is minimal pointwise and hence in every L^p.
    """
    grid = u.family.grid
    return UpperGradient.from_cells(grid, adjacent_increments(u) / grid.widths, p)


def pair_distances(u: Section) -> np.ndarray:
    """Matrix ``D[s, t] = |u(t) - P(s,t) u(s)|_t`` for ``s <= t`` (zero below)."""
    fam = u.family
    n = fam.n
    D = np.zeros((n, n))
    pushed = None
    for t in range(n):
        if pushed is None:
            pushed = np.asarray(u.values[0], dtype=float)[None]
        else:
            pushed = np.vstack([fam.push(t - 1, t, pushed), np.asarray(u.values[t])[None]])
        D[: t + 1, t] = fam.nodes[t].norms(np.asarray(u.values[t]) - pushed)
    return D


def verify_upper_gradient(u: Section, g: UpperGradient, tol: float = EXACT_TOL) -> VerificationReport:
    """Check ``|u(t) - P(s,t) u(s)|_t <= int_s^t g`` for every node pair.

    The residual is ``(lhs - rhs) / max(1, rhs)``, clipped below at zero.
    """
    fam = u.family
    G = g.cumulative()
    if fam.lq_stack is not None:
        W, q = fam.lq_stack
        worst, s, t = kernels.pair_gradient_violation(np.asarray(u.values), W, q, G)
    else:
        D = pair_distances(u)
        R = (D - (G[None, :] - G[:, None])) / np.maximum(1.0, G[None, :] - G[:, None])
        R[np.tril_indices(fam.n, -1)] = -np.inf
        s, t = np.unravel_index(int(np.argmax(R)), R.shape)
        worst = float(R[s, t])
    worst = max(0.0, float(worst))
    ok = worst <= tol
    return VerificationReport(
        "upper_gradient", "pass" if ok else "fail", worst,
        None if ok else {"s": int(s), "t": int(t)},
        details={"tolerance": tol, "gradient_norm": g.lp_norm},
    )


# --------------------------------------------------------------------------
# oracle


def _ldp(G, h):
    """Least-distance program ``min |x|_2  s.t.  G x >= h`` via its bounded least-squares dual."""
    m, n = G.shape
    E = np.vstack([G.T, h[None, :]])
    f = np.zeros(n + 1)
    f[-1] = 1.0
    y = optimize.lsq_linear(E, f, bounds=(0, np.inf), method="bvls", tol=1e-14).x
    r = E @ y - f
    if abs(r[-1]) < 1e-14:
        raise MonofamError("least-distance program is infeasible")
    return -r[:-1] / r[-1]


def minimal_gradient_oracle(u: Section, p: float, max_nodes: int = 16) -> UpperGradient:
    """Minimize the L^p norm of ``g >= 0`` under all ``n(n-1)/2`` pair constraints.

    Linear programs for ``p = 1`` and ``p = inf``, a least-distance program
    solved through its BVLS dual for ``p = 2``, and SLSQP for other ``p``. Validation
    use only.
    """
    fam = u.family
    n = fam.n
    if n > max_nodes:
        raise MonofamError(f"oracle is limited to {max_nodes} nodes, got {n}")
    grid = fam.grid
    dt = grid.widths
    m = n - 1
    if m == 0:
        return UpperGradient.from_cells(grid, np.zeros(0), p)
    D = pair_distances(u)
    rows, rhs = [], []
    for s in range(n):
        for t in range(s + 1, n):
            a = np.zeros(m)
            a[s:t] = dt[s:t]
            rows.append(a)
            rhs.append(D[s, t])
    A = np.array(rows)
    b = np.array(rhs)
    p = float(p)
    if p == 1.0:
        res = optimize.linprog(dt, A_ub=-A, b_ub=-b, bounds=[(0, None)] * m, method="highs")
        g = res.x
    elif math.isinf(p):
        c = np.zeros(m + 1)
        c[-1] = 1.0
        A_ub = np.vstack([np.hstack([-A, np.zeros((len(b), 1))]),
                          np.hstack([np.eye(m), -np.ones((m, 1))])])
        b_ub = np.concatenate([-b, np.zeros(m)])
        res = optimize.linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(0, None)] * (m + 1), method="highs")
        g = res.x[:m]
    elif p == 2.0:
        sq = np.sqrt(dt)
        Gm = np.vstack([A / sq, np.eye(m)])
        hv = np.concatenate([b, np.zeros(m)])
        g = _ldp(Gm, hv) / sq
    else:
        def obj(g):
            return float(np.dot(dt, np.abs(g) ** p))

        def jac(g):
            return p * dt * np.abs(g) ** (p - 1) * np.sign(g)

        g0 = np.linalg.lstsq(A, b, rcond=None)[0].clip(0) + 1.0
        res = optimize.minimize(
            obj, g0, jac=jac, method="SLSQP", bounds=[(0, None)] * m,
            constraints=[{"type": "ineq", "fun": lambda g: A @ g - b, "jac": lambda g: A}],
            options={"ftol": 1e-15, "maxiter": 1000},
        )
        g = res.x
    return UpperGradient.from_cells(grid, np.maximum(g, 0.0), p)


# --------------------------------------------------------------------------
# derivatives


def difference_quotient(u: Section, h_cells: int) -> Section:
    """Backward quotient ``(u(t_i) - P(t_{i-h}, t_i) u(t_{i-h})) / (t_i - t_{i-h})``.

    Nodes ``i < h_cells`` have no backward partner; they carry the value at
    node ``h_cells`` (when dimensions allow) and are listed in ``flagged``.
    """
    fam = u.family
    n = fam.n
    if h_cells < 1:
        raise ValueError("h_cells must be at least 1")
    if h_cells >= n:
        raise MonofamError(f"h_cells={h_cells} needs more than {n} nodes")
    t = fam.t
    vals = [None] * n
    for i in range(h_cells, n):
        j = i - h_cells
        vals[i] = (u.values[i] - fam.push(j, i, u.values[j])) / (t[i] - t[j])
    first = vals[h_cells]
    for i in range(h_cells):
        vals[i] = first.copy() if fam.nodes[i].dim == first.size else np.zeros(fam.nodes[i].dim)
    return Section(fam, vals, flagged=tuple(range(h_cells)))


def weak_derivative(u: Section) -> Section:
    """One-cell backward difference quotient."""
    return difference_quotient(u, 1)


def raised_cosine_bumps(grid, count: int = 10):
    """Deterministic test functions ``(center, radius)`` strictly inside the grid."""
    a, b = grid.nodes[0], grid.nodes[-1]
    span = b - a
    out = []
    for k in range(count):
        r = span * (0.08 + 0.12 * ((k * 7) % count) / count)
        c = a + r + (span - 2 * r) * (k + 0.5) / count
        out.append((c, r))
    return out


def _bump(t, c, r):
    z = (t - c) / r
    inside = np.abs(z) < 1
    phi = np.where(inside, 0.5 * (1 + np.cos(np.pi * z)), 0.0)
    dphi = np.where(inside, -0.5 * np.pi / r * np.sin(np.pi * z), 0.0)
    return phi, dphi


def integration_by_parts_residual(u: Section, du: Section, count: int = 10) -> float:
    """Worst ``|sum phi' u + sum phi u'|_{t*}`` over the fixed bumps.

    Bumps are sampled at the nodes. ``phi'`` is their forward difference
    paired with ``u`` on each cell's left node, ``phi`` is paired with the
    backward quotient ``u'`` on each cell's right node, so summation by parts
    makes the residual vanish when ``u'`` is the one-cell quotient of ``u``.
    Every term is pushed to ``t*``, the last node inside the bump's support.
    """
    fam = u.family
    grid = fam.grid
    t = grid.nodes
    dt = grid.widths
    worst = 0.0
    for c, r in raised_cosine_bumps(grid, count):
        phi, _ = _bump(t, c, r)
        inside = np.flatnonzero(phi > 0)
        if inside.size == 0:
            continue
        lo, hi = int(inside[0]), int(inside[-1])
        if lo == 0 or hi == fam.n - 1:
            continue
        U = pushed_values(u, lo - 1, hi, hi)
        dU = pushed_values(du, lo, hi, hi)
        dphi = np.diff(phi[lo - 1 : hi + 2])
        total = dphi @ U + (phi[lo : hi + 1] * dt[lo - 1 : hi]) @ dU
        worst = max(worst, fam.nodes[hi].norm(total))
    return worst


@dataclass(frozen=True)
class FTCResult:
    section: Section
    errors: np.ndarray
    max_error: float


def ftc_reconstruct(u: Section, start: int = 0) -> FTCResult:
    """Rebuild ``u(t_i) = P(start, i) u(t_start) + int_{start}^{i} u'`` for ``i >= start``.

    Nodes before ``start`` are copied from ``u``. The integrals are
    accumulated window by window, which is exact for the trapezoid rule.
    """
    fam = u.family
    n = fam.n
    if not 0 <= start < n:
        raise MonofamError(f"start node {start} outside 0..{n - 1}")
    du = weak_derivative(u)
    vals = [np.array(v, dtype=float) for v in u.values]
    errors = np.zeros(n)
    integral = np.zeros(fam.nodes[start].dim)
    for i in range(start + 1, n):
        _, step = local_integral(du, (i - 1, i))
        integral = fam.push(i - 1, i, integral) + step
        vals[i] = fam.push(start, i, u.values[start]) + integral
        errors[i] = fam.nodes[i].norm(vals[i] - u.values[i])
    return FTCResult(Section(fam, vals), errors, float(errors.max(initial=0.0)))


def sobolev_norm(u: Section, p: float) -> SobolevNorm:
    """``|u|_{L^p} + inf_g |g|_{L^p}``, with the weak-derivative norm alongside."""
    lp_part = lp_direct_norm(u, p).value
    g = minimal_upper_gradient(u, p)
    deriv = lp_direct_norm(weak_derivative(u), p).value if u.n > 1 else 0.0
    return SobolevNorm(lp_part, g.lp_norm, lp_part + g.lp_norm, deriv)


# --------------------------------------------------------------------------
# scalar characterization


def frozen_norm_quotients(u: Section, frozen=None) -> np.ndarray:
    """Per-cell ``max_v |N(t_{k+1}, v) - N(t_k, v)| / dt_k`` over frozen vectors.

    ``frozen`` defaults to the section's own values (up to 64, evenly spread,
    always including the first node); each is read as a core vector.
    """
    fam = u.family
    if not fam.uniform_dim:
        raise MonofamError("frozen-vector quotients need a common coordinate space")
    if frozen is None:
        idx = np.unique(np.linspace(0, fam.n - 1, min(fam.n, 64)).round().astype(int))
        frozen = np.asarray(u.values)[idx]
    frozen = np.atleast_2d(np.asarray(frozen, dtype=float))
    N = np.stack([nd.norms(frozen) for nd in fam.nodes])
    return np.abs(np.diff(N, axis=0)).max(axis=1) / fam.grid.widths


def scalar_characterization_check(u: Section, p: float, majorant_H, frozen=None,
                                  tol: float = 1e-9) -> VerificationReport:
    """Check ``| |u(t)|_t - |u(s)|_s | <= int_s^t (g_u + H)`` for every node pair.

    The majorant must dominate the per-cell norm quotients of the frozen
    vectors; otherwise the report is ``hypothesis-violated`` at the worst cell
    and the pair check is skipped.
    """
    fam = u.family
    grid = fam.grid
    H = np.broadcast_to(np.asarray(majorant_H, dtype=float), grid.widths.shape)
    quot = frozen_norm_quotients(u, frozen)
    excess = (quot - H) / np.maximum(1.0, H)
    k = int(np.argmax(excess)) if excess.size else 0
    details = {"max_norm_quotient": float(quot.max(initial=0.0)),
               "jump_cell": k, "tolerance": tol}
    if excess.size and excess[k] > tol:
        return VerificationReport("scalar_characterization", "hypothesis-violated", float(excess[k]),
                                  {"cell": k, "quotient": float(quot[k]), "majorant": float(H[k])},
                                  details=details)
    g = minimal_upper_gradient(u, p)
    G = np.concatenate([[0.0], np.cumsum((g.cell_values + H) * grid.widths)])
    N = node_norms(u)
    worst, s, t = kernels.scalar_pair_violation(N, G)
    worst = max(0.0, float(worst))
    ok = worst <= tol
    return VerificationReport("scalar_characterization", "pass" if ok else "fail", worst,
                              None if ok else {"s": s, "t": t}, details=details)


def linf_ratio(u: Section, p: float, majorant_H) -> float:
    """``max_t |u(t)|_t / (|u|_{W^{1,p}} + int H)``; bounded under the scalar hypotheses."""
    H = np.broadcast_to(np.asarray(majorant_H, dtype=float), u.family.grid.widths.shape)
    denom = sobolev_norm(u, p).total + float(np.dot(H, u.family.grid.widths))
    return float(node_norms(u).max()) / denom


def reshetnyak_check(u: Section, p: float, probe_vectors, jump_tol: float = 0.1,
                     tol: float = 1e-9) -> VerificationReport:
    """Probe distances ``psi_v(t) = |u(t) - v|_t`` and the conclusion they imply.

    The majorant is the per-cell max over probes of ``|psi_v'|``. A cell where
    some ``psi_v`` moves by more than ``jump_tol * (1 + max psi_v)`` is a jump
    that refinement cannot smooth out, so hypothesis (A) is reported violated.
    Otherwise ``|u(t) - P(s,t) u(s)|_t <= int_s^t psi'`` is checked for every
    pair; the residual is relative to ``max(1, rhs)``.
    """
    fam = u.family
    grid = fam.grid
    probes = np.atleast_2d(np.asarray(probe_vectors, dtype=float))
    U = np.asarray(u.values)
    psi = np.stack([nd.norms(U[i] - probes) for i, nd in enumerate(fam.nodes)])  # (n, probes)
    jumps = np.abs(np.diff(psi, axis=0))
    dpsi = (jumps / grid.widths[:, None]).max(axis=1)
    scale = 1.0 + psi.max(axis=0)
    rel_jump = (jumps / scale).max(axis=1)
    k = int(np.argmax(rel_jump)) if rel_jump.size else 0
    details = {"max_probe_quotient": float(dpsi.max(initial=0.0)),
               "max_relative_jump": float(rel_jump.max(initial=0.0)),
               "jump_cell": k, "tolerance": tol}
    if rel_jump.size and rel_jump[k] > jump_tol:
        return VerificationReport("reshetnyak", "hypothesis-violated", float(rel_jump[k]),
                                  {"cell": k, "quotient": float(dpsi[k])}, details=details)
    g = UpperGradient(dpsi, float(p), cell_lp_norm(grid.widths, dpsi, p), grid.widths)
    rep = verify_upper_gradient(u, g, tol)
    details["majorant_norm"] = g.lp_norm
    return VerificationReport("reshetnyak", rep.status, rep.worst_residual, rep.witness, details=details)
