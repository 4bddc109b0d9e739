"""Discrete monotone families of finite-dimensional normed spaces.

A family is a time grid with one normed space per node and forward
transition maps between nodes. Builder families share one ambient coordinate
space across nodes; the kernel of each node norm is handled by keeping
vectors in canonical form (zero outside the active mask, or projected onto
the active subspace for the H^1 nodes).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, MonotonicityError, OrderError
from .report import VerificationReport

EXACT_TOL = 1e-12


# --------------------------------------------------------------------------
# grid


@dataclass(frozen=True, eq=False)
class TimeGrid:
    t_start: float
    t_end: float
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size == 0:
            raise ValueError("grid needs at least one node")
        if not (self.t_start < self.t_end):
            raise ValueError("t_start must be below t_end")
        if np.any(np.diff(nodes) <= 0) or not np.all(np.isfinite(nodes)):
            raise ValueError("nodes must be finite and strictly increasing")
        if nodes[0] <= self.t_start or nodes[-1] >= self.t_end:
            raise ValueError("nodes must lie strictly inside (t_start, t_end)")
        object.__setattr__(self, "nodes", nodes)
        nodes.setflags(write=False)

    @classmethod
    def uniform(cls, n: int, t_start: float = 0.0, t_end: float = 1.0) -> "TimeGrid":
        """``n`` equispaced nodes ``t_start + (i + 1) (t_end - t_start) / (n + 1)``."""
        step = (t_end - t_start) / (n + 1)
        return cls(t_start, t_end, t_start + step * np.arange(1, n + 1))

    @property
    def n(self) -> int:
        return self.nodes.size

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    def trapezoid_weights(self, lo: int = 0, hi: int | None = None) -> np.ndarray:
        """Composite trapezoid weights on nodes ``lo..hi`` (inclusive)."""
        hi = self.n - 1 if hi is None else hi
        dt = np.diff(self.nodes[lo : hi + 1])
        w = np.zeros(hi - lo + 1)
        w[:-1] += dt / 2
        w[1:] += dt / 2
        return w

    def to_json(self) -> dict:
        return {"t_start": self.t_start, "t_end": self.t_end, "nodes": self.nodes.tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "TimeGrid":
        if "nodes" in d:
            return cls(float(d["t_start"]), float(d["t_end"]), np.asarray(d["nodes"], dtype=float))
        return cls.uniform(int(d["n"]), float(d["t_start"]), float(d["t_end"]))


# --------------------------------------------------------------------------
# node spaces


def _difference_matrix(dim: int) -> np.ndarray:
    """Forward differences of interior values with zero boundary values."""
    D = np.zeros((dim + 1, dim))
    idx = np.arange(dim)
    D[idx, idx] = 1.0
    D[idx + 1, idx] = -1.0
    return D


@dataclass(frozen=True, eq=False)
class NormedNode:
    """One node space.

    kind ``"lq"``: ``(sum w_m |x_m|^q)^(1/q)``, or the max over ``w > 0`` when
    ``q`` is infinite. kind ``"sup"``: max of ``|x_m|`` over ``mask``.
    kind ``"h1"``: ``sqrt(scale)`` times the discrete H^1_0 seminorm (forward
    differences, mesh width ``h``, zero boundary values) of the H^1-orthogonal
    projection onto vectors supported in ``mask``.
    """

    kind: str
    dim: int
    weights: np.ndarray | None = None
    q: float = 2.0
    mask: np.ndarray | None = None
    h: float | None = None
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("lq", "sup", "h1"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.kind == "lq":
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (self.dim,) or np.any(w < 0) or not np.all(np.isfinite(w)):
                raise ValueError("lq weights must be finite, nonnegative, of length dim")
            if not self.q >= 1:
                raise ValueError("q must be in [1, inf]")
            object.__setattr__(self, "weights", w)
        else:
            m = np.ones(self.dim, bool) if self.mask is None else np.asarray(self.mask, bool)
            if m.shape != (self.dim,):
                raise ValueError("mask must have length dim")
            object.__setattr__(self, "mask", m)
        if self.kind == "h1" and not (self.h and self.h > 0 and self.scale > 0):
            raise ValueError("h1 node needs positive mesh width and scale")

    # constructors
    @classmethod
    def lq(cls, weights, q: float = 2.0) -> "NormedNode":
        weights = np.asarray(weights, dtype=float)
        return cls("lq", weights.size, weights=weights, q=float(q))

    @classmethod
    def sup(cls, mask) -> "NormedNode":
        mask = np.asarray(mask, bool)
        return cls("sup", mask.size, mask=mask)

    @classmethod
    def h1(cls, dim: int, h: float, mask=None, scale: float = 1.0) -> "NormedNode":
        return cls("h1", dim, mask=mask, h=float(h), scale=float(scale))

    @cached_property
    def active(self) -> np.ndarray:
        if self.kind == "lq":
            return self.weights > 0
        return self.mask

    @property
    def is_hilbert(self) -> bool:
        return self.kind == "h1" or (self.kind == "lq" and self.q == 2.0)

    @property
    def diagonal_quotient(self) -> bool:
        """True when the norm kernel is a set of coordinates."""
        return self.kind in ("lq", "sup")

    # h1 machinery
    @cached_property
    def _projector(self) -> np.ndarray | None:
        if self.kind != "h1" or self.mask.all():
            return None
        A = np.flatnonzero(self.mask)
        D = _difference_matrix(self.dim)
        K = D.T @ D
        P = np.zeros((self.dim, self.dim))
        if A.size:
            P[A] = sla.solve(K[np.ix_(A, A)], K[A], assume_a="pos")
        return P

    def canonical(self, x):
        """Representative of ``x`` modulo the norm kernel (works on rows)."""
        x = np.asarray(x, dtype=float)
        if self.kind == "h1":
            P = self._projector
            return x.copy() if P is None else x @ P.T
        return np.where(self.active, x, 0.0)

    @cached_property
    def gram_factor(self) -> np.ndarray | None:
        """``R`` with ``|x| = |R x|_2`` for Hilbert nodes, else ``None``."""
        if self.kind == "lq" and self.q == 2.0:
            return np.diag(np.sqrt(self.weights))
        if self.kind == "h1":
            R = math.sqrt(self.scale / self.h) * _difference_matrix(self.dim)
            P = self._projector
            return R if P is None else R @ P
        return None

    def norms(self, X) -> np.ndarray:
        """Norms of the rows of ``X``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[-1] != self.dim:
            raise DimensionError(f"vector length {X.shape[-1]} != node dimension {self.dim}")
        if self.kind == "lq":
            A = np.abs(X)
            if math.isinf(self.q):
                return np.where(self.active, A, 0.0).max(axis=1, initial=0.0)
            if self.q == 2.0:
                return np.sqrt((self.weights * A * A).sum(axis=1))
            return (self.weights * A**self.q).sum(axis=1) ** (1.0 / self.q)
        if self.kind == "sup":
            return np.where(self.mask, np.abs(X), 0.0).max(axis=1, initial=0.0)
        Y = self.canonical(X)
        pad = np.zeros((Y.shape[0], 1))
        dY = np.diff(np.hstack([pad, Y, pad]), axis=1)
        return np.sqrt(self.scale / self.h * (dY * dY).sum(axis=1))

    def norm(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError("norm expects a single vector")
        return float(self.norms(x[None])[0])

    def same_norm(self, other: "NormedNode") -> bool:
        if self is other:
            return True
        if self.kind != other.kind or self.dim != other.dim:
            return False
        if self.kind == "lq":
            return self.q == other.q and np.array_equal(self.weights, other.weights)
        if self.kind == "sup":
            return np.array_equal(self.mask, other.mask)
        return (self.h == other.h and self.scale == other.scale
                and np.array_equal(self.mask, other.mask))

    def to_json(self) -> dict:
        if self.kind == "lq":
            q = "inf" if math.isinf(self.q) else self.q
            return {"kind": "lq", "weights": self.weights.tolist(), "q": q}
        if self.kind == "sup":
            return {"kind": "sup", "mask": self.mask.astype(int).tolist()}
        return {"kind": "h1", "dim": self.dim, "h": self.h, "scale": self.scale,
                "mask": self.mask.astype(int).tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "NormedNode":
        kind = d["kind"]
        if kind == "lq":
            return cls.lq(d["weights"], float(d.get("q", 2.0)))
        if kind == "sup":
            return cls.sup(d["mask"])
        if kind == "h1":
            mask = d.get("mask")
            dim = int(d["dim"]) if "dim" in d else len(mask)
            return cls.h1(dim, float(d["h"]), mask, float(d.get("scale", 1.0)))
        raise ValueError(f"unknown norm kind {kind!r}")


# --------------------------------------------------------------------------
# transitions


@dataclass(frozen=True, eq=False)
class TransitionMap:
    """Linear map from node ``from_index`` to node ``to_index``.

    Stored either as a dense ``matrix`` (target dim x source dim) or as a
    ``diagonal`` when source and target share coordinates.
    """

    from_index: int
    to_index: int
    matrix: np.ndarray | None = None
    diagonal: np.ndarray | None = None

    def __post_init__(self):
        if self.to_index < self.from_index:
            raise OrderError("transitions only go forward in time")
        if (self.matrix is None) == (self.diagonal is None):
            raise ValueError("give exactly one of matrix or diagonal")

    @classmethod
    def identity(cls, i: int, dim: int) -> "TransitionMap":
        return cls(i, i, diagonal=np.ones(dim))

    @property
    def shape(self) -> tuple[int, int]:
        if self.matrix is not None:
            return self.matrix.shape
        return (self.diagonal.size, self.diagonal.size)

    def dense(self) -> np.ndarray:
        return self.matrix if self.matrix is not None else np.diag(self.diagonal)

    def apply(self, x):
        """Apply to a vector or to each row of a 2-D array."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.shape[1]:
            raise DimensionError(f"vector length {x.shape[-1]} != source dimension {self.shape[1]}")
        if self.diagonal is not None:
            return x * self.diagonal
        return x @ self.matrix.T

    def then(self, later: "TransitionMap") -> "TransitionMap":
        """``later o self``."""
        if later.from_index != self.to_index:
            raise ValueError("transitions do not chain")
        if self.diagonal is not None and later.diagonal is not None:
            return TransitionMap(self.from_index, later.to_index, diagonal=self.diagonal * later.diagonal)
        return TransitionMap(self.from_index, later.to_index, matrix=later.dense() @ self.dense())


# --------------------------------------------------------------------------
# families


@dataclass(frozen=True, eq=False)
class MonotoneFamily:
    """Grid, node spaces and forward transitions.

    ``adjacent[k]`` maps node k to node k+1. ``direct`` (builders) returns a
    closed-form map for any ordered pair; ``overrides`` (hand-built families)
    pins explicit maps for given pairs. Otherwise non-adjacent maps are
    composed from adjacent ones.
    """

    grid: TimeGrid
    nodes: tuple
    adjacent: tuple
    label: str = ""
    orientation: str = "forward"
    coords: np.ndarray | None = None
    builder: dict | None = None
    direct: Callable[[int, int], TransitionMap] | None = field(default=None, repr=False)
    overrides: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "adjacent", tuple(self.adjacent))
        if len(self.nodes) != self.grid.n:
            raise ValueError("one node space per grid node")
        if len(self.adjacent) != self.grid.n - 1:
            raise ValueError("need a transition between every pair of adjacent nodes")
        for k, P in enumerate(self.adjacent):
            if (P.from_index, P.to_index) != (k, k + 1):
                raise ValueError(f"adjacent transition {k} has indices {P.from_index}->{P.to_index}")
            if P.shape != (self.nodes[k + 1].dim, self.nodes[k].dim):
                raise DimensionError(f"adjacent transition {k} has shape {P.shape}")
        if self.coords is None and self.uniform_dim:
            object.__setattr__(self, "coords", np.arange(self.nodes[0].dim, dtype=float))

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    @cached_property
    def uniform_dim(self) -> bool:
        return len({node.dim for node in self.nodes}) == 1

    @cached_property
    def diagonal(self) -> bool:
        """All node kernels are coordinate sets and all transitions diagonal."""
        return (self.uniform_dim and all(nd.diagonal_quotient for nd in self.nodes)
                and all(self.transition(i, j).diagonal is not None
                        for i, j in [(k, k + 1) for k in range(self.n - 1)]))

    @cached_property
    def lq_stack(self):
        """``(W, q)`` when every node is weighted-l^q with one ``q`` (sup nodes
        count as ``q = inf`` with 0/1 weights) and transitions are diagonal;
        the all-pairs kernels run on this form. ``None`` otherwise."""
        if not self.diagonal:
            return None
        qs = {math.inf if nd.kind == "sup" else nd.q for nd in self.nodes}
        if len(qs) != 1:
            return None
        W = np.stack([nd.weights if nd.kind == "lq" else nd.mask.astype(float) for nd in self.nodes])
        return W, qs.pop()

    def _check_index(self, i: int):
        if not 0 <= i < self.n:
            raise IndexError(f"node index {i} outside 0..{self.n - 1}")

    def transition(self, i: int, j: int) -> TransitionMap:
        self._check_index(i)
        self._check_index(j)
        if i > j:
            raise OrderError(f"transition {i}->{j} goes backwards in time")
        key = (i, j)
        if key in self.overrides:
            return self.overrides[key]
        if i == j:
            return TransitionMap.identity(i, self.nodes[i].dim)
        if j == i + 1:
            return self.adjacent[i]
        if self.direct is not None:
            return self.direct(i, j)
        if key in self._cache:
            P = self._cache[key]
        else:
            P = self.transition(i, i + 1)
            for k in range(i + 1, j):
                P = P.then(self.transition(k, k + 1))
                self._cache.setdefault((i, k + 1), P)
        self._cache[key] = P
        return P

    def push(self, i: int, j: int, x):
        return self.transition(i, j).apply(x)

    def represent(self, i: int, v):
        """Image at node ``i`` of a core vector (a vector of node 0)."""
        return self.push(0, i, v)

    def norm(self, i: int, x) -> float:
        self._check_index(i)
        return self.nodes[i].norm(x)


def eval_norm(family: MonotoneFamily, node: int, x) -> float:
    """``|x|`` in the space of ``node``."""
    return family.norm(node, x)


def apply_transition(family: MonotoneFamily, i: int, j: int, x):
    """Push ``x`` from node ``i`` forward to node ``j``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (family.nodes[i].dim,):
        raise DimensionError(f"vector of shape {x.shape} is not in node {i}")
    return family.push(i, j, x)


def cross_time_add(family: MonotoneFamily, i: int, x_i, j: int, x_j):
    """Sum of vectors living at different nodes; lands at the later node."""
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if x_i.shape != (family.nodes[i].dim,) or x_j.shape != (family.nodes[j].dim,):
        raise DimensionError("summands must live in their stated node spaces")
    if i <= j:
        return j, family.push(i, j, x_i) + x_j
    return i, x_i + family.push(j, i, x_j)


# --------------------------------------------------------------------------
# builders


def _lengths_on_grid(lengths, grid: TimeGrid) -> np.ndarray:
    if callable(lengths):
        ell = np.array([float(lengths(t)) for t in grid.nodes])
    else:
        ell = np.broadcast_to(np.asarray(lengths, dtype=float), (grid.n,)).copy()
    if np.any(ell <= 0):
        raise ValueError("domain lengths must be positive")
    if np.any(np.diff(ell) > 0):
        k = int(np.argmax(np.diff(ell) > 0))
        raise MonotonicityError(
            f"domain lengths increase between nodes {k} and {k + 1}; the family would not be monotone"
        )
    return ell


def _diagonal_direct(nodes):
    def direct(i, j):
        return TransitionMap(i, j, diagonal=nodes[j].active.astype(float))
    return direct


def build_nested_lq(lengths, q: float, mesh: int, grid: TimeGrid, label: str = "nested_lq") -> MonotoneFamily:
    """Discrete L^q over shrinking intervals ``(0, lengths(t))``.

    The spatial mesh has ``mesh`` cells on ``(0, lengths(t_0))``; each node
    weights a cell by its overlap with the node's interval, so the norm of an
    indicator is exact. Transitions restrict to the node's active cells.
    """
    ell = _lengths_on_grid(lengths, grid)
    L0 = ell[0]
    dx = L0 / mesh
    left = dx * np.arange(mesh)
    nodes = []
    for e in ell:
        w = np.clip(e - left, 0.0, dx)
        nodes.append(NormedNode.lq(w, q))
    adjacent = [TransitionMap(k, k + 1, diagonal=nodes[k + 1].active.astype(float)) for k in range(grid.n - 1)]
    qj = "inf" if math.isinf(q) else q
    return MonotoneFamily(
        grid, nodes, adjacent, label=label, coords=left + dx / 2,
        builder={"kind": "nested_lq", "params": {"q": qj, "mesh": mesh, "lengths": ell.tolist()}},
        direct=_diagonal_direct(nodes),
    )


def build_sup_counterexample(mesh: int, grid: TimeGrid, label: str = "sup_counterexample") -> MonotoneFamily:
    """Sup norm over (0,1) before t = 0.5 and over (0,1/2) from t = 0.5 on.

    Sample points are ``s_m = m / mesh`` for ``m = 1..mesh``; for a continuous
    function the sup over the open interval is the max over its closure, so
    including the right endpoints makes the norms of ``s -> s`` exactly 1 and
    0.5.
    """
    if grid.t_start < 0 or grid.t_end > 1:
        raise ValueError("grid must lie inside (0, 1)")
    s = np.arange(1, mesh + 1) / mesh
    half = s <= 0.5
    full = np.ones(mesh, bool)
    nodes = [NormedNode.sup(full if t < 0.5 else half) for t in grid.nodes]
    adjacent = [TransitionMap(k, k + 1, diagonal=nodes[k + 1].active.astype(float)) for k in range(grid.n - 1)]
    return MonotoneFamily(
        grid, nodes, adjacent, label=label, coords=s,
        builder={"kind": "sup_counterexample", "params": {"mesh": mesh}},
        direct=_diagonal_direct(nodes),
    )


def affine_phi(t, x):
    """``phi(t, x) = (1 + t) x / 2``: maps (0,1) onto (0, 1/2 + t/2)."""
    return (1.0 + t) * np.asarray(x, dtype=float) / 2.0


def build_affine_composition(mesh: int, grid: TimeGrid, label: str = "affine_composition") -> MonotoneFamily:
    """H^1_0 on ``Q_t = (0, 1/2 + t/2)`` pulled back to a reference mesh of (0,1).

    A reference vector ``v`` stands for ``v o phi(t,.)^{-1}`` on ``Q_t``. For
    the affine map the discrete chain rule is exact: the squared seminorm on
    ``Q_t`` is ``2 / (1 + t)`` times the reference one. In reference
    coordinates every transition is the identity.

    The pulled-back norms shrink as ``Q_t`` grows, so forward time already
    satisfies the monotonicity requirement; ``orientation`` records whichever
    direction the norms were found to decrease in.
    """
    if grid.t_start < 0 or grid.t_end > 1:
        raise ValueError("grid must lie inside (0, 1)")
    dim = mesh - 1
    h = 1.0 / mesh
    scales = 2.0 / (1.0 + grid.nodes)
    orientation = "forward" if np.all(np.diff(scales) <= 0) else "reversed"
    nodes = [NormedNode.h1(dim, h, None, s) for s in scales]
    adjacent = [TransitionMap(k, k + 1, diagonal=np.ones(dim)) for k in range(grid.n - 1)]

    def direct(i, j):
        return TransitionMap(i, j, diagonal=np.ones(dim))

    return MonotoneFamily(
        grid, nodes, adjacent, label=label, orientation=orientation,
        coords=np.arange(1, mesh) * h,
        builder={"kind": "affine_composition", "params": {"mesh": mesh}},
        direct=direct,
    )


def build_weighted_hilbert(mesh: int, grid: TimeGrid, lengths=None, label: str = "weighted_hilbert") -> MonotoneFamily:
    """H^1_0 subspaces of functions supported in shrinking ``(0, lengths(t))``.

    The underlying construction has growing domains ``Q`` with norms
    ``|pi(Q) v|`` for the H^1-orthogonal projection ``pi``; it is stored with
    reversed time so the norms decrease, with the default
    ``lengths(t) = 1 - t/2`` standing for ``Q = (0, 1/2 + (1 - t)/2)``.
    Transitions are the orthogonal projections onto the later subspace.
    """
    if lengths is None:
        lengths = lambda t: 1.0 - t / 2.0  # noqa: E731
    ell = _lengths_on_grid(lengths, grid)
    dim = mesh - 1
    h = 1.0 / mesh
    x = np.arange(1, mesh) * h
    nodes = [NormedNode.h1(dim, h, x < e - 1e-12) for e in ell]

    def direct(i, j):
        if np.array_equal(nodes[i].mask, nodes[j].mask):
            return TransitionMap(i, j, diagonal=np.ones(dim))
        P = nodes[j]._projector
        return TransitionMap(i, j, matrix=np.eye(dim) if P is None else P)

    adjacent = [direct(k, k + 1) for k in range(grid.n - 1)]
    return MonotoneFamily(
        grid, nodes, adjacent, label=label, orientation="reversed", coords=x,
        builder={"kind": "weighted_hilbert", "params": {"mesh": mesh, "lengths": ell.tolist()}},
        direct=direct,
    )


def constant_family(grid: TimeGrid, node: NormedNode, label: str = "constant", coords=None) -> MonotoneFamily:
    """Every node carries ``node``; every transition is the identity."""
    adjacent = [TransitionMap(k, k + 1, diagonal=np.ones(node.dim)) for k in range(grid.n - 1)]

    def direct(i, j):
        return TransitionMap(i, j, diagonal=np.ones(node.dim))

    return MonotoneFamily(grid, [node] * grid.n, adjacent, label=label, coords=coords,
                          builder={"kind": "constant", "params": {"node": node.to_json()}},
                          direct=direct)


# --------------------------------------------------------------------------
# checks


def check_family(family: MonotoneFamily, samples: int = 100, seed: int = 42,
                 tol: float = EXACT_TOL) -> VerificationReport:
    """Fuzz the family axioms.

    Residuals are scaled by ``max(1, magnitude)``: monotonicity of node norms
    on core vectors, contraction of transitions, and the semigroup law
    (including ``P(i,i) = I``).
    """
    rng = np.random.default_rng(seed)
    n = family.n
    d0 = family.nodes[0].dim

    # monotonicity on core vectors
    V = rng.standard_normal((samples, d0))
    N = np.empty((n, samples))
    for i, node in enumerate(family.nodes):
        X = V if family.uniform_dim else family.represent(i, V)
        N[i] = node.norms(X)
    runmin = np.minimum.accumulate(N, axis=0)
    argmin = np.zeros_like(N, dtype=int)
    for i in range(1, n):
        argmin[i] = np.where(N[i] <= runmin[i - 1], i, argmin[i - 1])
    viol = (N - runmin) / np.maximum(1.0, runmin)
    j, s = np.unravel_index(int(np.argmax(viol)), viol.shape)
    mono = float(viol[j, s])
    mono_pair = (int(argmin[j, s]), int(j))

    # contraction: all adjacent pairs with every sample, plus random distant pairs
    contr, contr_pair = 0.0, None
    pairs = [(k, k + 1) for k in range(n - 1)]
    if n > 1:
        a = rng.integers(0, n, size=samples)
        b = rng.integers(0, n, size=samples)
        pairs += [(int(min(x, y)), int(max(x, y))) for x, y in zip(a, b)]
    for i, j2 in pairs:
        X = family.nodes[i].canonical(rng.standard_normal((samples, family.nodes[i].dim)))
        before = family.nodes[i].norms(X)
        after = family.nodes[j2].norms(family.push(i, j2, X))
        r = float(np.max((after - before) / np.maximum(1.0, before)))
        if r > contr:
            contr, contr_pair = r, (i, j2)

    # semigroup, with identity at repeated indices
    semi, semi_triple = 0.0, None
    triples = [(i, i, i) for i in range(n)]
    for _ in range(samples):
        i, j2, k = sorted(int(v) for v in rng.integers(0, n, size=3))
        triples.append((i, j2, k))
    for i, j2, k in triples:
        x = family.nodes[i].canonical(rng.standard_normal(family.nodes[i].dim))
        if i == j2 == k:
            lhs, rhs = family.push(i, i, x), x
        else:
            lhs, rhs = family.push(i, k, x), family.push(j2, k, family.push(i, j2, x))
        r = float(np.max(np.abs(lhs - rhs)) / max(1.0, float(np.max(np.abs(x)))))
        if r > semi:
            semi, semi_triple = r, (i, j2, k)

    worst = max(mono, contr, semi)
    witness = None
    if worst > tol:
        witness = {}
        if mono > tol:
            witness["monotonicity_pair"] = mono_pair
        if contr > tol:
            witness["contraction_pair"] = contr_pair
        if semi > tol:
            witness["semigroup_triple"] = semi_triple
    return VerificationReport(
        f"family_axioms[{family.label}]",
        "pass" if worst <= tol else "fail",
        worst,
        witness,
        details={"monotonicity": mono, "contraction": contr, "semigroup": semi,
                 "samples": samples, "seed": seed, "tolerance": tol},
    )


# --------------------------------------------------------------------------
# JSON descriptors


def _named_function(desc) -> Callable[[float], float]:
    if isinstance(desc, (int, float)):
        return lambda t: float(desc)
    kind = desc["kind"]
    if kind == "constant":
        return lambda t: float(desc["value"])
    if kind == "linear":
        a, b = float(desc["a"]), float(desc["b"])
        return lambda t: a + b * t
    raise ValueError(f"unknown function kind {kind!r}")


def _lengths_param(desc, grid):
    if desc is None:
        return None
    if isinstance(desc, list):
        return np.asarray(desc, dtype=float)
    return _named_function(desc)


def family_from_json(d: dict) -> MonotoneFamily:
    grid = TimeGrid.from_json(d["grid"])
    label = d.get("label", "")
    builder = d.get("builder")
    if builder is not None:
        kind, params = builder["kind"], builder.get("params", {})
        label = label or kind
        if kind == "nested_lq":
            q = params.get("q", 2.0)
            q = math.inf if q in ("inf", "infinity") else float(q)
            lengths = _lengths_param(params.get("lengths", {"kind": "linear", "a": 1.0, "b": -0.5}), grid)
            return build_nested_lq(lengths, q, int(params.get("mesh", 256)), grid, label)
        if kind == "sup_counterexample":
            return build_sup_counterexample(int(params.get("mesh", 256)), grid, label)
        if kind == "affine_composition":
            return build_affine_composition(int(params.get("mesh", 256)), grid, label)
        if kind == "weighted_hilbert":
            return build_weighted_hilbert(int(params.get("mesh", 256)), grid,
                                          _lengths_param(params.get("lengths"), grid), label)
        if kind == "constant":
            return constant_family(grid, NormedNode.from_json(params["node"]), label)
        raise ValueError(f"unknown builder {kind!r}")
    nodes = [NormedNode.from_json(nd) for nd in d["nodes"]]
    maps = {}
    for tr in d.get("transitions", []):
        i, j = int(tr["from"]), int(tr["to"])
        M = np.asarray(tr["matrix"], dtype=float)
        maps[(i, j)] = TransitionMap(i, j, matrix=M.reshape(nodes[j].dim, nodes[i].dim))
    try:
        adjacent = [maps[(k, k + 1)] for k in range(grid.n - 1)]
    except KeyError as exc:
        raise ValueError(f"hand-built family is missing adjacent transition {exc.args[0]}") from None
    overrides = {k: v for k, v in maps.items() if k[1] != k[0] + 1}
    return MonotoneFamily(grid, nodes, adjacent, label=label, overrides=overrides,
                          builder=None)


def family_to_json(family: MonotoneFamily) -> dict:
    out = {"label": family.label, "grid": family.grid.to_json()}
    if family.builder is not None:
        out["builder"] = family.builder
        return out
    out["nodes"] = [nd.to_json() for nd in family.nodes]
    maps = [family.adjacent[k] for k in range(family.n - 1)] + list(family.overrides.values())
    out["transitions"] = [{"from": P.from_index, "to": P.to_index, "matrix": P.dense().tolist()} for P in maps]
    return out


def load_family(path) -> MonotoneFamily:
    with open(path) as fh:
        return family_from_json(json.load(fh))
