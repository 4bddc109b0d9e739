"""Pure numpy versions of the hot all-pairs kernels.

Same signatures and semantics as the compiled ``_kernels`` module. Rows of
``U`` are node values, rows of ``W`` are the per-node coordinate weights of a
weighted-l^q (or, for ``q = inf``, masked sup) norm.
"""
import numpy as np


def weighted_lq_rows(U, W, q):
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    A = np.abs(U)
    if np.isinf(q):
        return np.where(W > 0, A, 0.0).max(axis=1, initial=0.0)
    return (W * A**q).sum(axis=1) ** (1.0 / q)


def pair_gradient_violation(U, W, q, G):
    """Worst scaled violation of ``|u_t - u_s|_t <= G[t] - G[s]`` over s <= t.

    Returns ``(worst, s, t)``; ``worst`` is ``(lhs - rhs) / max(1, rhs)`` and
    is ``-inf`` only for an empty grid.
    """
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    G = np.asarray(G, dtype=float)
    n = U.shape[0]
    worst, ws, wt = -np.inf, -1, -1
    for t in range(n):
        D = np.abs(U[t] - U[: t + 1])
        if np.isinf(q):
            lhs = np.where(W[t] > 0, D, 0.0).max(axis=1, initial=0.0)
        else:
            lhs = (W[t] * D**q).sum(axis=1) ** (1.0 / q)
        rhs = G[t] - G[: t + 1]
        r = (lhs - rhs) / np.maximum(1.0, rhs)
        k = int(np.argmax(r))
        if r[k] > worst:
            worst, ws, wt = float(r[k]), k, t
    return worst, ws, wt


def scalar_pair_violation(N, G):
    """Worst scaled violation of ``|N[t] - N[s]| <= G[t] - G[s]`` over s <= t."""
    N = np.asarray(N, dtype=float)
    G = np.asarray(G, dtype=float)
    lhs = np.abs(N[None, :] - N[:, None])
    rhs = G[None, :] - G[:, None]
    r = np.triu((lhs - rhs) / np.maximum(1.0, rhs))
    r[np.tril_indices(len(N), -1)] = -np.inf
    s, t = np.unravel_index(int(np.argmax(r)), r.shape)
    return float(r[s, t]), int(s), int(t)
