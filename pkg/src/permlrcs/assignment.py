"""Exact solution of the block-decoupled linear assignment problems.

Minimizing ||Y - P Yhat||_F^2 over s-local permutations decouples into one
s x s assignment problem per block: maximize sum_j M[j, sigma(j)] where
M[a, b] = <row a of the Y block, row b of the Yhat block>. Each block is
solved exactly with a potential-based shortest-augmenting-path method
(Kuhn-Munkres / Jonker-Volgenant family, O(s^3)) on the negated score
matrix. Ties are broken toward the lexicographically smallest assignment
vector, which keeps reruns deterministic and returns the identity when
Yhat equals Y.
"""

from __future__ import annotations

import math

import numpy as np

from .core_model import BlockPermutation
from .errors import DegenerateInputError, InvalidDimsError, ShapeMismatchError

# A score matrix is a plain s x s float ndarray; entry (a, b) scores matching
# output row a to source row b.
ScoreMatrix = np.ndarray

_INF = math.inf


def _jv_min(cost, n):
    """Min-cost perfect assignment on an n x n cost matrix (list of rows).

    Returns (col_of_row, u, v): the assignment and the dual potentials,
    1-indexed with a virtual 0 slot, satisfying u[i] + v[j] <= cost[i-1][j-1]
    with equality on matched edges.
    """
    u = [0.0] * (n + 1)
    v = [0.0] * (n + 1)
    p = [0] * (n + 1)      # p[j] = row matched to column j, 0 if free
    way = [0] * (n + 1)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = [_INF] * (n + 1)
        used = [False] * (n + 1)
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = _INF
            j1 = 0
            row = cost[i0 - 1]
            ui0 = u[i0]
            for j in range(1, n + 1):
                if not used[j]:
                    cur = row[j - 1] - ui0 - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = [0] * n
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row, u, v


def _fold_tail(M, sigma, start, n):
    """Right-folded sum of M[j][sigma[j]] for j = start..n-1.

    All tie comparisons in the refinement use this one association so that
    mathematically equal totals built from identical entries compare equal
    as floats.
    """
    acc = 0.0
    for j in range(n - 1, start - 1, -1):
        acc = M[j][sigma[j]] + acc
    return acc


def _lex_refine(M, cost, sigma, u, v, n):
    """Replace sigma by the lexicographically smallest optimal assignment.

    Any edge used by some optimal assignment is tight under the optimal
    duals (zero reduced cost), so only tight candidate columns need a
    subproblem solve; on generic score matrices the optimum is unique and
    this loop does no extra work.
    """
    sigma = list(sigma)
    avail = [True] * n
    for j in range(n):
        cur = sigma[j]
        row_cost = cost[j]
        uj = u[j + 1]
        cands = [c for c in range(cur)
                 if avail[c] and row_cost[c] - uj - v[c + 1] <= 0.0]
        if cands:
            best_val = M[j][cur] + _fold_tail(M, sigma, j + 1, n)
            for c in cands:  # ascending: the first candidate reaching the
                # optimum is the lexicographically smallest choice for row j
                rows = list(range(j + 1, n))
                cols = [cc for cc in range(n) if avail[cc] and cc != c]
                if rows:
                    sub = [[cost[rr][cc] for cc in cols] for rr in rows]
                    sub_assign, _, _ = _jv_min(sub, len(rows))
                    tail = [cols[sub_assign[t]] for t in range(len(rows))]
                else:
                    tail = []
                acc = 0.0
                for t in range(len(rows) - 1, -1, -1):
                    acc = M[rows[t]][tail[t]] + acc
                val = M[j][c] + acc
                if val >= best_val:
                    sigma[j] = c
                    for t, jj in enumerate(range(j + 1, n)):
                        sigma[jj] = tail[t]
                    break
        avail[sigma[j]] = False
    return sigma


def _lap_max_assignment(M_rows, n):
    """Max-sum assignment with lexicographic tie-break; M_rows is a list of rows."""
    if n == 1:
        return [0]
    cost = [[-x for x in row] for row in M_rows]
    sigma, u, v = _jv_min(cost, n)
    return _lex_refine(M_rows, cost, sigma, u, v, n)


def solve_lap_max(scores: ScoreMatrix):
    """Exact maximizer of sum_j M[j, perm[j]] over permutations of [0, s).

    Equivalently maximizes trace(M P^T) over s x s permutation matrices with
    P[j, perm[j]] = 1. Returns (perm, value); among maximizers the
    lexicographically smallest index vector is returned.
    """
    M = np.asarray(scores, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeMismatchError(f"score matrix must be square, got shape {M.shape}")
    if M.shape[0] == 0:
        raise ShapeMismatchError("score matrix must be nonempty")
    if not np.isfinite(M).all():
        raise DegenerateInputError("score matrix has non-finite entries")
    n = M.shape[0]
    sigma = _lap_max_assignment(M.tolist(), n)
    value = float(M[np.arange(n), sigma].sum())
    return np.asarray(sigma, dtype=np.intp), value


def update_permutation(Y: np.ndarray, Yhat: np.ndarray, s: int) -> BlockPermutation:
    """Exact minimizer of ||Y - P Yhat||_F^2 over s-local permutations.

    Yhat holds the current unpermuted predictions A_k U b_k; each block's
    score matrix is Y_i Yhat_i^T and the block problems are independent.
    """
    Y = np.asarray(Y, dtype=np.float64)
    Yhat = np.asarray(Yhat, dtype=np.float64)
    if Y.ndim != 2 or Y.shape != Yhat.shape:
        raise ShapeMismatchError(
            f"Y and Yhat must be matrices of equal shape, got {Y.shape} vs {Yhat.shape}"
        )
    m = Y.shape[0]
    if s < 1 or m % s != 0:
        raise InvalidDimsError(f"block size s={s} must divide m={m}")
    nb = m // s
    yb = Y.reshape(nb, s, -1)
    hb = Yhat.reshape(nb, s, -1)
    scores = np.matmul(yb, hb.transpose(0, 2, 1))
    if not np.isfinite(scores).all():
        raise DegenerateInputError("non-finite block scores (bad Y or Yhat)")

    assignment = np.empty(m, dtype=np.intp)
    for i in range(nb):
        sigma = _lap_max_assignment(scores[i].tolist(), s)
        off = i * s
        for j in range(s):
            assignment[off + j] = off + sigma[j]
    return BlockPermutation(s, assignment)
