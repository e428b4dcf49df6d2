"""Shared builders and brute-force oracles for the test suite.

Everything here recomputes results from plain edge sets with dicts, sets and
nested loops, deliberately avoiding the package's sparse-matrix code paths.
"""

import itertools
from collections import deque

import numpy as np

from firmnet.graph_store import FirmGraph


def random_edges(rng, n, m):
    """m endpoint pairs over n nodes with self-loops removed."""
    src = rng.integers(0, n, size=m)
    dst = rng.integers(0, n, size=m)
    keep = src != dst
    return src[keep], dst[keep]


def random_graph(rng, n_max=200, density=1.5, label_rate=0.15):
    """Random digraph plus the deduplicated edge set it was built from."""
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(0, int(density * n) + 1))
    src, dst = random_edges(rng, n, m)
    labels = rng.random(n) < label_rate
    graph = FirmGraph.from_edges(src, dst, node_count=n, labels=labels)
    edges = set(zip(src.tolist(), dst.tolist()))
    return graph, edges


def adjacency(edges, n):
    """(out, in, undirected) neighbor sets per node."""
    out = {i: set() for i in range(n)}
    inn = {i: set() for i in range(n)}
    und = {i: set() for i in range(n)}
    for s, d in edges:
        out[s].add(d)
        inn[d].add(s)
        und[s].add(d)
        und[d].add(s)
    return out, inn, und


def und_distances(und, start):
    """BFS shortest-path distances over the undirected neighbor sets."""
    dist = {start: 0}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in und[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def walk_set(out, inn, node, steps):
    """Nodes reachable by exactly the step sequence (revisits allowed)."""
    frontier = {node}
    for c in steps:
        step = out if c == "F" else inn
        frontier = set().union(*(step[v] for v in frontier)) if frontier else set()
    return frontier


def oracle_pattern_set(out, inn, und, node, pattern):
    """Independent pattern-neighbor computation.

    Directed: exact step-sequence walk minus the node itself and minus every
    walk along a strict prefix or strict suffix of the pattern. Undirected
    ``Ud``: the exact distance-d BFS shell.
    """
    if pattern.startswith("U"):
        d = int(pattern[1:])
        dist = und_distances(und, node)
        return {v for v, dv in dist.items() if dv == d}
    members = walk_set(out, inn, node, pattern)
    members.discard(node)
    for k in range(1, len(pattern)):
        members -= walk_set(out, inn, node, pattern[:k])
        members -= walk_set(out, inn, node, pattern[-k:])
    return members


def oracle_network_sets(out, inn, und, node):
    """The six neighbor sets behind the network features, by brute force."""
    investors = set(inn[node])
    investees = set(out[node])
    und1 = investors | investees
    und1_inv = set().union(*(inn[v] for v in und1)) if und1 else set()
    und1_ive = set().union(*(out[v] for v in und1)) if und1 else set()
    und1_inv.discard(node)
    und1_ive.discard(node)
    dist = und_distances(und, node)
    und2 = {v for v, dv in dist.items() if dv == 2}
    return investors, investees, und1, und1_inv, und1_ive, und2


def oracle_network_features(out, inn, und, node, labels):
    vec = []
    for members in oracle_network_sets(out, inn, und, node):
        count = sum(1 for v in members if labels[v])
        vec.append(float(count))
        vec.append(count / len(members) if members else 0.0)
    return np.array(vec)


def oracle_lm_points(edges, n, labels, direction, m_max):
    """(denominator, numerator) per m by nested loops."""
    out, inn, und = adjacency(edges, n)
    neigh = {"out": out, "in": inn, "undirected": und}[direction]
    counts = [sum(1 for v in neigh[i] if labels[v]) for i in range(n)]
    points = []
    for m in range(m_max + 1):
        denom = sum(1 for i in range(n) if counts[i] >= m)
        numer = sum(1 for i in range(n) if counts[i] >= m and labels[i])
        points.append((denom, numer))
    return points


def closure_reachability(edges, n):
    """Boolean transitive closure (reflexive) by repeated squaring."""
    reach = np.eye(n, dtype=bool)
    for s, d in edges:
        reach[s, d] = True
    while True:
        nxt = reach | (reach @ reach)
        if np.array_equal(nxt, reach):
            return reach
        reach = nxt


def closure_components(edges, n, mode):
    """Component membership sets from the boolean-closure oracle."""
    if mode == "weak":
        sym = edges | {(d, s) for s, d in edges}
        reach = closure_reachability(sym, n)
        together = reach
    else:
        reach = closure_reachability(edges, n)
        together = reach & reach.T
    seen = set()
    comps = []
    for i in range(n):
        if i in seen:
            continue
        members = frozenset(np.flatnonzero(together[i]).tolist())
        comps.append(members)
        seen |= members
    return comps


def largest_marked_cluster(members, und, marked):
    """Size of the biggest undirected-connected group of marked members."""
    marked_here = [v for v in members if marked[v]]
    best = 0
    left = set(marked_here)
    while left:
        start = left.pop()
        group = {start}
        queue = deque([start])
        while queue:
            v = queue.popleft()
            for w in und[v]:
                if w in left:
                    left.remove(w)
                    group.add(w)
                    queue.append(w)
        best = max(best, len(group))
    return best


def oracle_aggregation(edges, n, labels, min_disc=2):
    """Per-component (size, N_c, S_c, r_c) over eligible components."""
    out, inn, und = adjacency(edges, n)
    rows = []
    for members in sorted(closure_components(edges, n, "weak"), key=min):
        n_disc = sum(1 for v in members if labels[v])
        if n_disc < min_disc or n_disc == len(members):
            continue
        marked = {v: bool(labels[v]) for v in range(n)}
        s_max = largest_marked_cluster(members, und, marked)
        rows.append((len(members), n_disc, s_max, s_max / n_disc))
    return rows


def exact_null_expectation(members, und, n_disc):
    """E[r_c] over every placement of n_disc marks inside the component."""
    members = sorted(members)
    total = 0.0
    count = 0
    for subset in itertools.combinations(members, n_disc):
        marked = {v: False for v in members}
        for v in subset:
            marked[v] = True
        s = largest_marked_cluster(members, und, marked)
        total += s / n_disc
        count += 1
    return total / count
