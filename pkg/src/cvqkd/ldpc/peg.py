"""Progressive edge growth construction of column-weight-2 codes.

Every variable node gets exactly two edges.  The first goes to the check
with the lowest current degree (lowest index on ties).  For the second,
a breadth-first search from the first check through the already-placed
edges ranks every other check by graph distance, and the edge goes to a
check the search never reached if one exists, otherwise to one at
maximum distance; ties break toward lower degree, then lower index.
That keeps the shortest cycle through the new variable as long as the
current graph allows.  Check capacities are fixed up front so degrees
spread by at most one, with the lower-index checks taking the remainder.

Edge coefficients are drawn after construction, uniformly over the
nonzero field elements, from a seeded stream in canonical edge order.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from ..crypto import RandomnessService, _seed_bytes
from ..errors import InfeasibleCodeError
from ..fieldmath import FieldSpec
from .matrix import ParityCheckMatrix


@njit(cache=True)
def _peg_core(n_vars, caps):  # pragma: no cover - exercised via peg_construct
    n_checks = caps.shape[0]
    max_cap = 0
    for j in range(n_checks):
        if caps[j] > max_cap:
            max_cap = caps[j]
    chk_deg = np.zeros(n_checks, dtype=np.int32)
    check_vars = np.empty((n_checks, max_cap), dtype=np.int32)
    var_checks = np.empty((n_vars, 2), dtype=np.int32)
    dist = np.empty(n_checks, dtype=np.int32)
    queue = np.empty(n_checks, dtype=np.int32)

    for v in range(n_vars):
        # first edge: emptiest check
        c1 = -1
        best = 2147483647
        for j in range(n_checks):
            if chk_deg[j] < caps[j] and chk_deg[j] < best:
                best = chk_deg[j]
                c1 = j
        if c1 < 0:
            return var_checks[:0]

        # distances from c1 through variables 0..v-1 (each is one
        # check-to-check edge, the other endpoint recovered by sum)
        for j in range(n_checks):
            dist[j] = -1
        dist[c1] = 0
        queue[0] = c1
        head = 0
        tail = 1
        while head < tail:
            c = queue[head]
            head += 1
            d_next = dist[c] + 1
            for t in range(chk_deg[c]):
                u = check_vars[c, t]
                other = var_checks[u, 0] + var_checks[u, 1] - c
                if dist[other] < 0:
                    dist[other] = d_next
                    queue[tail] = other
                    tail += 1

        chk_deg_c1 = chk_deg[c1]
        check_vars[c1, chk_deg_c1] = v
        chk_deg[c1] = chk_deg_c1 + 1

        # second edge: unreached beats far beats near; then degree, index
        c2 = -1
        best_unreached = -1
        best_dist = -1
        best_deg = 2147483647
        for j in range(n_checks):
            if j == c1 or chk_deg[j] >= caps[j]:
                continue
            unreached = 1 if dist[j] < 0 else 0
            if c2 < 0:
                take = True
            elif unreached != best_unreached:
                take = unreached > best_unreached
            elif unreached == 0 and dist[j] != best_dist:
                take = dist[j] > best_dist
            elif chk_deg[j] != best_deg:
                take = chk_deg[j] < best_deg
            else:
                take = False
            if take:
                c2 = j
                best_unreached = unreached
                best_dist = dist[j]
                best_deg = chk_deg[j]
        if c2 < 0:
            return var_checks[:0]
        check_vars[c2, chk_deg[c2]] = v
        chk_deg[c2] = chk_deg[c2] + 1
        var_checks[v, 0] = c1
        var_checks[v, 1] = c2

    return var_checks


def check_capacities(n: int, n_checks: int) -> np.ndarray:
    """Socket counts per check: 2n edges spread with difference at most 1."""
    n_edges = 2 * n
    base, extra = divmod(n_edges, n_checks)
    caps = np.full(n_checks, base, dtype=np.int32)
    caps[:extra] += 1
    return caps


def peg_construct(n: int, rate: float, field: FieldSpec, seed) -> ParityCheckMatrix:
    """Deterministic code for the requested (n, rate, field, seed)."""
    if not 0.0 < rate < 1.0:
        raise InfeasibleCodeError(f"rate {rate} outside (0, 1)")
    if n < 2:
        raise InfeasibleCodeError("need at least two variable nodes")
    n_checks = int(round(n * (1.0 - rate)))
    if n_checks < 2:
        raise InfeasibleCodeError(
            f"n={n} rate={rate} leaves {n_checks} checks; a variable's two "
            "edges must land on distinct checks")
    caps = check_capacities(n, n_checks)
    var_checks = _peg_core(n, caps)
    if var_checks.shape[0] != n:
        raise InfeasibleCodeError("check sockets exhausted during placement")

    edge_check = np.concatenate([var_checks[:, 0], var_checks[:, 1]]).astype(np.int64)
    edge_col = np.concatenate([np.arange(n), np.arange(n)])
    order = np.lexsort((edge_col, edge_check))
    edge_check = edge_check[order]
    edge_col = edge_col[order]

    seed_bytes = _seed_bytes(seed)
    stream = RandomnessService(seed_bytes).stream(
        f"peg/m{field.m}/n{n}/c{n_checks}")
    if field.order == 2:
        coeffs = np.ones(2 * n, dtype=np.uint8)
    else:
        coeffs = (1 + stream.integers(field.order - 1, 2 * n)).astype(np.uint8)

    matrix = ParityCheckMatrix(field, n, n_checks, edge_check, edge_col,
                               coeffs, design_rate=rate,
                               seed_hex=seed_bytes.hex())
    matrix.validate_ldpc()
    return matrix


def shortest_cycle_through_variables(matrix: ParityCheckMatrix) -> int:
    """Girth of the bipartite graph, or 0 when the graph has no cycle.

    Brute-force check used in tests on small codes: for each variable the
    shortest cycle through it is 2*(1 + distance between its two checks
    with the variable removed).
    """
    n_checks = matrix.n_checks
    pairs = {}
    for e in range(matrix.n_edges):
        pairs.setdefault(int(matrix.edge_col[e]), []).append(int(matrix.edge_check[e]))
    adj = [[] for _ in range(n_checks)]
    for v, checks in pairs.items():
        if len(checks) != 2:
            raise ValueError("girth check requires column weight 2")
        a, b = checks
        adj[a].append((b, v))
        adj[b].append((a, v))
    best = 0
    for v, (start, goal) in pairs.items():
        dist = {start: 0}
        frontier = [start]
        while frontier and goal not in dist:
            nxt = []
            for c in frontier:
                for other, via in adj[c]:
                    if via != v and other not in dist:
                        dist[other] = dist[c] + 1
                        nxt.append(other)
            frontier = nxt
        if goal in dist:
            cycle = 2 * (dist[goal] + 1)
            if best == 0 or cycle < best:
                best = cycle
    return best
