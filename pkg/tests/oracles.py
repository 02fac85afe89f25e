"""Brute-force reference implementations used as test oracles."""

from itertools import permutations

import numpy as np

from daestruct.sigma import ABSENT

NEG = -10**4  # stands in for -inf in the vectorised searches


def random_rows(rng, n, max_entry=3, p_absent=0.4):
    rows = []
    for _ in range(n):
        row = []
        for _ in range(n):
            row.append(ABSENT if rng.random() < p_absent else int(rng.integers(0, max_entry + 1)))
        rows.append(row)
    return rows


def hvt_value(rows):
    """Maximum transversal value over all permutations, None if none is finite."""
    n = len(rows)
    best = None
    for perm in permutations(range(n)):
        entries = [rows[i][perm[i]] for i in range(n)]
        if ABSENT in entries:
            continue
        value = sum(entries)
        if best is None or value > best:
            best = value
    return best


def minimal_offsets(rows, bound=None):
    """Element-wise smallest feasible (c, d), by exhaustive search.

    A candidate c >= 0 with d_j = max_i(sigma_ij + c_i) is feasible when
    sum(d) - sum(c) reaches the optimal transversal value, i.e. some optimal
    transversal is tight.  Returns None for a structurally singular matrix.

    ``bound`` caps each c_i below the default n * max(sigma).  Every feasible
    c dominates the minimal one, so any feasible point inside the box means
    the minimum is inside it too.
    """
    n = len(rows)
    value = hvt_value(rows)
    if value is None:
        return None
    top = max((v for row in rows for v in row if v is not ABSENT), default=0)
    if bound is None:
        bound = n * top
    grid = np.indices((bound + 1,) * n, dtype=np.int16).reshape(n, -1)
    total_d = np.zeros(grid.shape[1], dtype=np.int32)
    for j in range(n):
        col = np.full(grid.shape[1], NEG, dtype=np.int32)
        for i in range(n):
            if rows[i][j] is not ABSENT:
                np.maximum(col, grid[i] + rows[i][j], out=col)
        total_d += col
    feasible = total_d - grid.sum(axis=0) == value
    cs = grid[:, feasible].T
    assert len(cs), "no feasible point inside the search box"
    c = cs.min(axis=0)
    sigma = np.array([[NEG if v is ABSENT else v for v in row] for row in rows])
    d_min = (sigma + c[:, None]).max(axis=0)
    # The element-wise minimum must itself be feasible.
    assert d_min.sum() - c.sum() == value
    return tuple(int(x) for x in c), tuple(int(x) for x in d_min)
