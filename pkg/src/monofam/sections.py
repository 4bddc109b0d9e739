"""Sections, direct-integral norms and the local Bochner integral.

All time integrals use the composite trapezoid rule on grid nodes. A local
integral over a node window lands in the space of the window's last node;
every term is pushed there before summing.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, ResolutionError, WindowError
from .family import MonotoneFamily


@dataclass(frozen=True, eq=False)
class Section:
    """One vector per grid node, ``values[i]`` in the space of node ``i``.

    ``flagged`` lists nodes whose value was filled in rather than computed
    (leading nodes of a difference quotient).
    """

    family: MonotoneFamily
    values: object
    flagged: tuple = ()

    def __post_init__(self):
        fam = self.family
        if fam.uniform_dim:
            V = np.array(self.values, dtype=float)
            if V.shape != (fam.n, fam.nodes[0].dim):
                raise DimensionError(f"section values have shape {V.shape}, expected {(fam.n, fam.nodes[0].dim)}")
            V.setflags(write=False)
        else:
            V = tuple(np.asarray(v, dtype=float) for v in self.values)
            if len(V) != fam.n or any(v.shape != (nd.dim,) for v, nd in zip(V, fam.nodes)):
                raise DimensionError("every value must have its node's dimension")
        object.__setattr__(self, "values", V)

    @property
    def n(self) -> int:
        return self.family.n

    def __getitem__(self, i):
        return self.values[i]

    def _combine(self, other, op):
        if other.family is not self.family:
            raise ValueError("sections live on different families")
        return Section(self.family, [op(a, b) for a, b in zip(self.values, other.values)])

    def __add__(self, other):
        return self._combine(other, np.add)

    def __sub__(self, other):
        return self._combine(other, np.subtract)

    def __mul__(self, a: float):
        return Section(self.family, [a * v for v in self.values])

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0


def zero_section(family: MonotoneFamily) -> Section:
    return Section(family, [np.zeros(nd.dim) for nd in family.nodes])


def section_from_function(family: MonotoneFamily, sampler) -> Section:
    """Sample ``sampler(t, x)`` at every node on the family's coordinates.

    ``sampler`` is called once per node with the node time and the array of
    spatial coordinates; values outside the node's active set are dropped.
    """
    vals = []
    for i, (t, node) in enumerate(zip(family.t, family.nodes)):
        coords = family.coords if family.coords is not None else np.arange(node.dim, dtype=float)
        v = np.broadcast_to(np.asarray(sampler(t, coords), dtype=float), (node.dim,))
        vals.append(np.where(node.active, v, 0.0))
    return Section(family, vals)


def constant_section(family: MonotoneFamily, v) -> Section:
    """The section ``t -> P(0, t) v`` of a node-0 vector."""
    v = family.nodes[0].canonical(np.asarray(v, dtype=float))
    return Section(family, [family.represent(i, v) for i in range(family.n)])


def node_norms(u: Section, lo: int = 0, hi: int | None = None) -> np.ndarray:
    fam = u.family
    hi = fam.n - 1 if hi is None else hi
    if fam.lq_stack is not None:
        W, q = fam.lq_stack
        return kernels.weighted_lq_rows(u.values[lo : hi + 1], W[lo : hi + 1], q)
    if fam.uniform_dim and all(nd.same_norm(fam.nodes[lo]) for nd in fam.nodes[lo : hi + 1]):
        return fam.nodes[lo].norms(u.values[lo : hi + 1])
    return np.array([fam.nodes[i].norm(u.values[i]) for i in range(lo, hi + 1)])


@dataclass(frozen=True)
class DirectNorm:
    p: float
    value: float

    def __float__(self):
        return self.value


def _lp_quadrature(grid, vals, p, lo, hi) -> float:
    if math.isinf(p):
        return float(np.max(vals)) if len(vals) else 0.0
    w = grid.trapezoid_weights(lo, hi)
    return float(np.dot(w, vals**p) ** (1.0 / p))


def lp_direct_norm(u: Section, p: float, window: tuple[int, int] | None = None) -> DirectNorm:
    """Trapezoid L^p norm of ``t -> |u(t)|_t``; max over nodes for ``p = inf``."""
    p = float(p)
    if not p >= 1:
        raise ValueError("p must be in [1, inf]")
    lo, hi = (0, u.n - 1) if window is None else window
    vals = node_norms(u, lo, hi)
    return DirectNorm(p, _lp_quadrature(u.family.grid, vals, p, lo, hi))


def _check_window(u: Section, window) -> tuple[int, int]:
    lo, hi = int(window[0]), int(window[1])
    if not 0 <= lo <= hi < u.n:
        raise WindowError(f"window {window} outside node range 0..{u.n - 1}")
    return lo, hi


def pushed_values(u: Section, lo: int, hi: int, target: int) -> np.ndarray:
    """Rows ``P(i, target) u(t_i)`` for ``i`` in ``lo..hi``."""
    fam = u.family
    if fam.uniform_dim and fam.diagonal:
        return u.values[lo : hi + 1] * np.stack([fam.transition(i, target).diagonal for i in range(lo, hi + 1)])
    return np.stack([fam.push(i, target, u.values[i]) for i in range(lo, hi + 1)])


def local_integral(u: Section, window: tuple[int, int]) -> tuple[int, np.ndarray]:
    """Trapezoid integral of ``u`` over a node window, in the last node's space."""
    lo, hi = _check_window(u, window)
    w = u.family.grid.trapezoid_weights(lo, hi)
    return hi, w @ pushed_values(u, lo, hi, hi)


def bochner_chain(u: Section, window: tuple[int, int]) -> tuple[float, float, float]:
    """The three members of the Bochner inequality chain on a window.

    ``|int u|_{t*}``, ``sum w_i |P(i,t*) u_i|_{t*}`` and ``sum w_i |u_i|_{t_i}``.
    """
    lo, hi = _check_window(u, window)
    fam = u.family
    w = fam.grid.trapezoid_weights(lo, hi)
    pushed = pushed_values(u, lo, hi, hi)
    top = fam.nodes[hi]
    lhs = top.norm(w @ pushed)
    mid = float(w @ top.norms(pushed))
    rhs = float(w @ node_norms(u, lo, hi))
    return lhs, mid, rhs


# --------------------------------------------------------------------------
# simple sections


@dataclass(frozen=True, eq=False)
class SimpleSection:
    """``sum_k chi_{A_k} v_k`` with node-index intervals ``A_k``.

    Each piece is ``(anchor, vector, lo, hi)``: ``vector`` lives at node
    ``anchor <= lo`` and stands for its images ``P(anchor, i) vector`` on
    ``lo..hi``. Nodes covered by no piece carry zero.
    """

    family: MonotoneFamily
    pieces: tuple
    residual: float = 0.0

    def __post_init__(self):
        spans = sorted((lo, hi) for _, _, lo, hi in self.pieces)
        for (a0, b0), (a1, b1) in zip(spans, spans[1:]):
            if a1 <= b0:
                raise ValueError("simple-section intervals must be disjoint")
        for anchor, _, lo, hi in self.pieces:
            if not anchor <= lo <= hi:
                raise ValueError("piece vector must be representable on its interval")

    def to_section(self) -> Section:
        fam = self.family
        vals = [np.zeros(nd.dim) for nd in fam.nodes]
        for anchor, v, lo, hi in self.pieces:
            for i in range(lo, hi + 1):
                vals[i] = fam.push(anchor, i, v)
        return Section(fam, vals)


def _blocks(lo, hi, size):
    a = lo
    while a <= hi:
        b = min(a + size - 1, hi)
        yield a, b
        a = b + 1


def _simple_from_blocks(u: Section, lo: int, hi: int, size: int):
    fam = u.family
    pieces = []
    unorms = node_norms(u)
    approx = [np.zeros(nd.dim) for nd in fam.nodes]
    for a, b in _blocks(lo, hi, size):
        v = u.values[a]
        run = None
        for i in range(a, b + 1):
            s_i = fam.push(a, i, v)
            ok = fam.nodes[i].norm(s_i) <= 2.0 * unorms[i]
            if ok:
                approx[i] = s_i
                run = (run[0], i) if run else (i, i)
            if run and (not ok or i == b):
                pieces.append((a, v, run[0], run[1]))
                run = None
    diff = [fam.nodes[i].norm(u.values[i] - approx[i]) for i in range(lo, hi + 1)]
    res = float(fam.grid.trapezoid_weights(lo, hi) @ np.array(diff))
    return pieces, res


def approximate_by_simple(u: Section | SimpleSection, window: tuple[int, int], tol: float, min_block: int = 2) -> SimpleSection:
    """Piecewise-constant-in-time approximation of ``u`` on a window.

    Blocks of nodes share the block's first value, pushed forward; nodes where
    that would exceed twice ``|u(t)|_t`` are left at zero. Block sizes halve
    until the trapezoid L^1 residual is at most ``tol``. ``min_block`` is the
    finest block allowed; below the residual it achieves the grid cannot help.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if isinstance(u, SimpleSection):
        return u
    lo, hi = _check_window(u, window)
    size = hi - lo + 1
    floor = None
    while True:
        pieces, res = _simple_from_blocks(u, lo, hi, max(size, 1))
        if res <= tol:
            return SimpleSection(u.family, tuple(pieces), res)
        if size <= min_block:
            floor = res
            break
        size = max(min_block, size // 2)
    raise ResolutionError(
        f"residual {floor:.3e} at the finest block size {min_block} exceeds tol {tol:.3e}",
        achievable=floor,
    )


def is_simple(u: Section, window=None, tol: float = 0.0) -> bool:
    lo, hi = (0, u.n - 1) if window is None else window
    fam = u.family
    for i in range(lo, hi):
        d = fam.nodes[i + 1].norm(u.values[i + 1] - fam.push(i, i + 1, u.values[i]))
        if d > tol:
            return False
    return True


# --------------------------------------------------------------------------
# smoothing and Lebesgue points


def _backward_start(grid, i: int, h: float) -> int:
    t = grid.nodes
    return int(np.searchsorted(t, t[i] - h - 1e-12 * max(1.0, abs(h)), side="left"))


def smooth_Mh(u: Section, h: float) -> Section:
    """Backward running average ``(1/h) int_{t-h}^t u``, window cut at the grid start.

    Each node's window snaps to the nodes inside ``[t_i - h, t_i]`` and the
    integral is divided by the window's actual length; a window of a single
    node returns that node's value.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    grid = u.family.grid
    out = []
    for i in range(u.n):
        j = min(_backward_start(grid, i, h), i)
        if j == i:
            out.append(np.array(u.values[i], dtype=float))
            continue
        _, integral = local_integral(u, (j, i))
        out.append(integral / (grid.nodes[i] - grid.nodes[j]))
    return Section(u.family, out)


def lebesgue_point_residual(u: Section, node: int, h: float) -> float:
    """``(1/h) int_{t-h}^t |P(s,t) u(s) - u(t)|_t ds`` on the node window."""
    grid = u.family.grid
    t = grid.nodes
    if h <= 0:
        raise ValueError("h must be positive")
    if t[node] - h < t[0] - 1e-12 * max(1.0, h):
        raise WindowError(f"window of width {h} at node {node} exits the grid")
    j = _backward_start(grid, node, h)
    if j == node:
        return 0.0
    fam = u.family
    diffs = pushed_values(u, j, node, node) - u.values[node]
    vals = fam.nodes[node].norms(diffs)
    w = grid.trapezoid_weights(j, node)
    return float(w @ vals) / (t[node] - t[j])


# --------------------------------------------------------------------------
# coordinatewise limits


def sectional_limit(sequence: list[Section], p: float, tol: float = 1e-10):
    """Coordinatewise limit of a bounded sequence and the norm bound it inherits.

    In finite dimensions sectional weak convergence is convergence of
    coordinates. Returns ``(limit, C, limit_norm)`` where ``C`` bounds the
    direct norms of the sequence; raises if the last two terms still differ by
    more than ``tol`` at some node.
    """
    last, prev = sequence[-1], sequence[-2]
    gap = max(float(np.max(np.abs(np.asarray(a) - np.asarray(b)), initial=0.0))
              for a, b in zip(last.values, prev.values))
    if gap > tol:
        raise ValueError(f"sequence has not settled: last step moves coordinates by {gap:.3e}")
    C = max(lp_direct_norm(s, p).value for s in sequence)
    return last, C, lp_direct_norm(last, p).value


# --------------------------------------------------------------------------
# interchange


def section_to_json(u: Section, family_ref: str | None = None) -> dict:
    return {"family_ref": family_ref if family_ref is not None else u.family.label,
            "values": [np.asarray(v).tolist() for v in u.values]}


def section_from_json(d: dict, family: MonotoneFamily) -> Section:
    ref = d.get("family_ref")
    if ref not in (None, "", family.label):
        raise ValueError(f"section refers to family {ref!r}, got {family.label!r}")
    return Section(family, d["values"])


def norms_csv(u: Section) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "norm"])
    for t, v in zip(u.family.t, node_norms(u)):
        w.writerow([repr(float(t)), repr(float(v))])
    return buf.getvalue()
