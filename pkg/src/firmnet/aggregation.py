"""Per-component clustering of labeled nodes and its permutation null.

For a weak component with ``N_c`` discreditable nodes, ``S_c`` is the size of
the largest cluster of discreditable nodes that are mutually reachable through
edges (either direction) running only over discreditable nodes, and
``r_c = S_c / N_c``. The null model redraws the ``N_c`` marks uniformly
without replacement inside the component and recomputes ``r_c``.
"""

from dataclasses import dataclass

import numba
import numpy as np

from .graph_store import induced_subgraph
from .topology import components

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


@dataclass
class AggregationStats:
    """Observed per-component stats over eligible components (ascending id)."""

    component_id: np.ndarray
    size: np.ndarray
    n_disc: np.ndarray
    s_max: np.ndarray
    r: np.ndarray

    @property
    def mean_r(self):
        return float(self.r.mean()) if len(self.r) else float("nan")

    @property
    def frac_r1(self):
        if not len(self.r):
            return float("nan")
        return float((self.s_max == self.n_disc).mean())


@dataclass
class NullAggregation:
    """Trial statistics aligned with an :class:`AggregationStats`."""

    mean: np.ndarray
    std: np.ndarray
    frac_r1: float
    trials: int

    @property
    def mean_r(self):
        return float(self.mean.mean()) if len(self.mean) else float("nan")


def aggregation_stats(graph, comps=None, labels=None, min_disc=2):
    """Observed ``(N_c, S_c, r_c)`` for every eligible component.

    Eligible means at least ``min_disc`` discreditable nodes and at least one
    non-discreditable node (all-discreditable components carry no signal for
    the null comparison).

    Parameters
    ----------
    comps : ComponentSet, optional
        Weak components; computed when omitted.
    labels : ndarray, optional
        Boolean mark vector; defaults to ``graph.labels``.
    """
    if comps is None:
        comps = components(graph, "weak")
    if labels is None:
        labels = graph.labels
    labels = np.asarray(labels, dtype=bool)

    n_by_comp = np.bincount(comps.comp_id[labels], minlength=comps.count)
    s_by_comp = np.zeros(comps.count, dtype=np.int64)
    if labels.any():
        sub, old = induced_subgraph(graph, labels)
        clusters = components(sub, "weak")
        comp_of_sub = comps.comp_id[old]
        # Canonical ids mean cluster j first appears at the first sub node
        # with comp_id == j.
        _, first = np.unique(clusters.comp_id, return_index=True)
        comp_of_cluster = comp_of_sub[first]
        np.maximum.at(s_by_comp, comp_of_cluster, clusters.sizes)

    eligible = np.flatnonzero((n_by_comp >= min_disc)
                              & (n_by_comp < comps.sizes))
    n_disc = n_by_comp[eligible].astype(np.int64)
    s_max = s_by_comp[eligible]
    return AggregationStats(
        component_id=eligible.astype(np.int64),
        size=comps.sizes[eligible],
        n_disc=n_disc,
        s_max=s_max,
        r=s_max / n_disc,
    )


@numba.njit(inline="always")
def _mix(state):
    state = state + np.uint64(0x9E3779B97F4A7C15)
    z = state
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return state, z


@numba.njit(inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@numba.njit(cache=True)
def _null_kernel(members_flat, members_indptr, n_disc, und_indptr,
                 und_indices, n_nodes, trials, base_seed):
    n_comp = len(members_indptr) - 1
    sum_r = np.zeros(n_comp, dtype=np.float64)
    sum_r2 = np.zeros(n_comp, dtype=np.float64)
    count_r1 = np.zeros(n_comp, dtype=np.int64)

    mark = np.zeros(n_nodes, dtype=np.int64)
    local = np.zeros(n_nodes, dtype=np.int64)
    epoch = np.int64(0)

    for ci in range(n_comp):
        lo, hi = members_indptr[ci], members_indptr[ci + 1]
        mem = members_flat[lo:hi]
        n_c = hi - lo
        k = n_disc[ci]
        perm = np.arange(n_c)
        parent = np.empty(k, dtype=np.int64)
        csize = np.empty(k, dtype=np.int64)
        comp_key = base_seed ^ (np.uint64(ci + 1)
                                * np.uint64(0xD1B54A32D192ED03))

        for t in range(trials):
            epoch += 1
            # Fresh stream per (component, trial); the persistent partial
            # Fisher-Yates below stays uniform from any start permutation.
            state = comp_key ^ (np.uint64(t + 1) * np.uint64(0x9E3779B97F4A7C15))
            state, _ = _mix(state)
            for i in range(k):
                state, z = _mix(state)
                j = i + np.int64(z % np.uint64(n_c - i))
                tmp = perm[i]
                perm[i] = perm[j]
                perm[j] = tmp
                node = mem[perm[i]]
                mark[node] = epoch
                local[node] = i
                parent[i] = i
                csize[i] = 1
            best = np.int64(1)
            for i in range(k):
                u = mem[perm[i]]
                for p in range(und_indptr[u], und_indptr[u + 1]):
                    v = und_indices[p]
                    if mark[v] == epoch:
                        ra = _find(parent, i)
                        rb = _find(parent, local[v])
                        if ra != rb:
                            if csize[ra] < csize[rb]:
                                ra, rb = rb, ra
                            parent[rb] = ra
                            csize[ra] += csize[rb]
                            if csize[ra] > best:
                                best = csize[ra]
            r = best / k
            sum_r[ci] += r
            sum_r2[ci] += r * r
            if best == k:
                count_r1[ci] += 1

    return sum_r, sum_r2, count_r1


def null_aggregation(graph, comps, stats, trials=1000, seed=0):
    """Permutation null for every component in ``stats``.

    Each trial redraws ``N_c`` marked nodes uniformly without replacement
    within the component and recomputes ``r_c``. Sequential and seeded, so
    results do not depend on threading.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    members = [comps.members(int(c)) for c in stats.component_id]
    lengths = np.array([len(m) for m in members], dtype=np.int64)
    indptr = np.zeros(len(members) + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    flat = (np.concatenate(members).astype(np.int64) if members
            else np.zeros(0, dtype=np.int64))

    und_indptr, und_indices = graph.und_adjacency()
    sum_r, sum_r2, count_r1 = _null_kernel(
        flat, indptr, stats.n_disc.astype(np.int64),
        und_indptr.astype(np.int64), und_indices.astype(np.int64),
        graph.node_count, trials, np.uint64(seed & 0xFFFFFFFFFFFFFFFF))

    mean = sum_r / trials
    var = np.maximum(sum_r2 / trials - mean ** 2, 0.0)
    frac_r1 = (float(count_r1.sum()) / (trials * len(members))
               if members else float("nan"))
    return NullAggregation(mean=mean, std=np.sqrt(var), frac_r1=frac_r1,
                           trials=trials)


def discreditable_subgraph_sizes(graph, labels=None):
    """Component sizes of the subgraph induced by marked nodes, descending."""
    if labels is None:
        labels = graph.labels
    labels = np.asarray(labels, dtype=bool)
    if not labels.any():
        return np.zeros(0, dtype=np.int64)
    sub, _ = induced_subgraph(graph, labels)
    return components(sub, "weak").sizes_descending()


def aggregation_summary(stats, null):
    """Headline comparison block; None when no component is eligible."""
    if not len(stats.r):
        return None
    return {
        "eligible_components": int(len(stats.r)),
        "mean_r": stats.mean_r,
        "mean_null_r": null.mean_r,
        "frac_r_equal_1": stats.frac_r1,
        "null_frac_r_equal_1": null.frac_r1,
        "trials": null.trials,
    }
