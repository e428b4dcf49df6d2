"""Global structure: components, degree stats, tail-exponent estimators."""

import logging
from dataclasses import dataclass

import numba
import numpy as np
import pandas as pd
import scipy.sparse.csgraph as csgraph
from scipy.optimize import brentq
from scipy.special import zeta

logger = logging.getLogger(__name__)


@dataclass
class ComponentSet:
    """Component membership with canonical ids.

    Component ids are assigned in ascending order of each component's
    smallest node index, so two runs over the same graph produce identical
    ids.
    """

    comp_id: np.ndarray
    sizes: np.ndarray
    mode: str

    def __post_init__(self):
        self._order = None
        self._indptr = None

    @property
    def count(self):
        return len(self.sizes)

    def members(self, c):
        """Sorted node indices in component ``c``."""
        if self._order is None:
            self._order = np.argsort(self.comp_id, kind="stable")
            self._indptr = np.zeros(self.count + 1, dtype=np.int64)
            np.cumsum(np.bincount(self.comp_id, minlength=self.count),
                      out=self._indptr[1:])
        return self._order[self._indptr[c]:self._indptr[c + 1]]

    def sizes_descending(self):
        return np.sort(self.sizes)[::-1]


def components(graph, mode="weak"):
    """Weak or strong components of the directed graph."""
    if mode not in ("weak", "strong"):
        raise ValueError(f"unknown mode {mode!r}")
    if graph.node_count == 0:
        return ComponentSet(np.zeros(0, dtype=np.int64),
                            np.zeros(0, dtype=np.int64), mode)
    _, raw = csgraph.connected_components(
        graph.sparse("out"), directed=True, connection=mode)
    # factorize assigns new ids in first-appearance order over node index,
    # which is exactly "ascending smallest member".
    comp_id, _ = pd.factorize(raw)
    comp_id = comp_id.astype(np.int64)
    sizes = np.bincount(comp_id).astype(np.int64)
    return ComponentSet(comp_id=comp_id, sizes=sizes, mode=mode)


@numba.njit(cache=True)
def _closed_pairs(indptr, indices):
    """Per node: neighbor pairs that are themselves adjacent."""
    n = len(indptr) - 1
    closed = np.zeros(n, dtype=np.int64)
    for u in range(n):
        s, e = indptr[u], indptr[u + 1]
        for a in range(s, e):
            v = indices[a]
            for b in range(a + 1, e):
                w = indices[b]
                lo, hi = indptr[v], indptr[v + 1]
                while lo < hi:
                    mid = (lo + hi) // 2
                    if indices[mid] < w:
                        lo = mid + 1
                    else:
                        hi = mid
                if lo < indptr[v + 1] and indices[lo] == w:
                    closed[u] += 1
    return closed


def clustering_coefficient(graph):
    """Mean local clustering over all nodes of the undirected simple graph.

    A node of undirected degree < 2 contributes 0 and stays in the mean.
    """
    if graph.node_count == 0:
        return 0.0
    indptr, indices = graph.und_adjacency()
    closed = _closed_pairs(indptr, indices.astype(np.int64))
    deg = np.diff(indptr)
    pairs = deg * (deg - 1) // 2
    local = np.zeros(graph.node_count, dtype=np.float64)
    has = pairs > 0
    local[has] = closed[has] / pairs[has]
    return float(local.mean())


def degree_assortativity(graph):
    """Pearson correlation of endpoint degrees over undirected edges.

    None when there are fewer than 2 undirected edges or the endpoint
    degrees have zero variance.
    """
    indptr, indices = graph.und_adjacency()
    deg = np.diff(indptr)
    if len(indices) < 4:  # fewer than 2 undirected edges
        return None
    du = np.repeat(deg, deg).astype(np.float64)
    dv = deg[indices].astype(np.float64)
    if du.std() == 0.0 or dv.std() == 0.0:
        return None
    return float(np.corrcoef(du, dv)[0, 1])


def graph_stats(graph):
    """Undirected-view summary: average degree, clustering, assortativity."""
    n = graph.node_count
    return {
        "avg_degree": (graph.edge_count / n) if n else 0.0,
        "clustering_coefficient": clustering_coefficient(graph),
        "assortativity": degree_assortativity(graph),
    }


def cycle_effect(graph, labels=None):
    """Discreditable rate overall vs on directed cycles.

    A node is on a cycle iff its strong component has size >= 2 (self-loops
    are excluded at load). Returns ``p_on_cycle``/``increment_rate`` as None
    when no node lies on a cycle.
    """
    if labels is None:
        labels = graph.labels
    labels = np.asarray(labels, dtype=bool)
    if not labels.any():
        raise ValueError("no labeled node")
    p_overall = float(labels.mean())
    scc = components(graph, "strong")
    on_cycle = scc.sizes[scc.comp_id] >= 2
    n_cycle = int(on_cycle.sum())
    if n_cycle == 0:
        return {"p_overall": p_overall, "p_on_cycle": None,
                "increment_rate": None, "nodes_on_cycles": 0}
    p_cycle = float(labels[on_cycle].mean())
    return {
        "p_overall": p_overall,
        "p_on_cycle": p_cycle,
        "increment_rate": (p_cycle - p_overall) / p_overall,
        "nodes_on_cycles": n_cycle,
    }


def degree_distribution(graph, direction="in"):
    """(values, counts) over nodes, values ascending, zeros included."""
    if direction == "in":
        deg = graph.in_degrees()
    elif direction == "out":
        deg = graph.out_degrees()
    elif direction == "undirected":
        deg = np.diff(graph.und_adjacency()[0])
    else:
        raise ValueError(f"unknown direction {direction!r}")
    values, counts = np.unique(deg, return_counts=True)
    return values.astype(np.int64), counts.astype(np.int64)


def graph_summary(graph):
    """Headline scalars used by the report bundle."""
    n = graph.node_count
    m = graph.edge_count
    labels = int(graph.labels.sum())
    return {
        "nodes": n,
        "edges": m,
        "avg_degree": (m / n) if n else 0.0,
        "discreditable": labels,
        "discreditable_rate": (labels / n) if n else 0.0,
    }


@dataclass
class PowerLawFit:
    alpha: float
    xmin: int
    ks: float
    n_tail: int
    sigma: float


def _log_zeta_deriv(alpha, xmin, h=1e-5):
    """First and second derivative of ln zeta(alpha, xmin) in alpha."""
    lo, mid, hi = (np.log(zeta(a, xmin))
                   for a in (alpha - h, alpha, alpha + h))
    d1 = (hi - lo) / (2.0 * h)
    d2 = (hi - 2.0 * mid + lo) / (h * h)
    return d1, d2


def powerlaw_alpha_mle(samples, xmin):
    """Exact discrete maximum-likelihood exponent for the tail ``x >= xmin``.

    Solves d/d_alpha ln zeta(alpha, xmin) = -mean(ln x) over the tail; the
    standard error comes from the observed Fisher information. The widely
    used continuous shortcut ``1 + n / sum(ln(x/(xmin-0.5)))`` is biased for
    small xmin, so it is not used. Returns ``(alpha, sigma, n_tail)``.
    """
    if xmin < 1:
        raise ValueError("xmin must be >= 1")
    x = np.asarray(samples, dtype=np.float64)
    tail = x[x >= xmin]
    n = len(tail)
    if n == 0:
        raise ValueError("no samples at or above xmin")
    if tail.min() == tail.max():
        raise ValueError("degenerate sample: all tail values equal")
    mean_ln = float(np.log(tail).mean())

    def score(a):
        return _log_zeta_deriv(a, xmin)[0] + mean_ln

    # ln zeta is convex in alpha, so the score increases from -inf toward
    # mean(ln x) - ln(xmin) > 0; one sign change brackets the root.
    lo, hi = 1.0 + 1e-4, 2.0
    while score(hi) < 0.0 and hi < 512.0:
        lo, hi = hi, hi * 2.0
    if score(hi) < 0.0:
        raise ValueError("tail too steep for a power-law fit")
    alpha = float(brentq(score, lo, hi, xtol=1e-10))
    d2 = _log_zeta_deriv(alpha, xmin)[1]
    sigma = 1.0 / np.sqrt(n * d2) if d2 > 0 else float("nan")
    return alpha, float(sigma), n


def _ks_distance(tail, alpha, xmin):
    values, counts = np.unique(tail, return_counts=True)
    ecdf = np.cumsum(counts) / len(tail)
    # Discrete model CDF via the Hurwitz zeta function.
    z0 = zeta(alpha, xmin)
    cdf = 1.0 - zeta(alpha, values + 1.0) / z0
    return float(np.abs(ecdf - cdf).max())


def fit_power_law(samples, xmin=None, xmin_cap_quantile=0.9, min_tail=10):
    """Fit a discrete power-law tail, scanning ``xmin`` by KS distance.

    Candidate ``xmin`` values are the unique positive sample values no larger
    than the ``xmin_cap_quantile`` quantile of the positive samples; the
    candidate minimizing the KS distance wins, ties going to the smaller
    ``xmin``. Pass ``xmin`` to skip the scan. At least ``min_tail`` samples
    must sit at or above the chosen ``xmin``.
    """
    x = np.asarray(samples, dtype=np.int64)
    x = x[x >= 1]
    if len(x) == 0:
        raise ValueError("no positive samples")

    if xmin is not None:
        tail = x[x >= xmin].astype(np.float64)
        if len(tail) < min_tail:
            raise ValueError(f"fewer than {min_tail} samples at xmin={xmin}")
        alpha, sigma, n = powerlaw_alpha_mle(tail, xmin)
        ks = _ks_distance(tail, alpha, xmin)
        return PowerLawFit(alpha=alpha, xmin=int(xmin), ks=ks, n_tail=n,
                           sigma=sigma)

    cap = np.quantile(x, xmin_cap_quantile)
    candidates = np.unique(x)
    candidates = candidates[candidates <= max(cap, candidates[0])]
    best = None
    for cand in candidates:
        tail = x[x >= cand].astype(np.float64)
        if len(tail) < min_tail or tail.min() == tail.max():
            continue
        alpha, sigma, n = powerlaw_alpha_mle(tail, int(cand))
        ks = _ks_distance(tail, alpha, int(cand))
        if best is None or ks < best.ks:
            best = PowerLawFit(alpha=alpha, xmin=int(cand), ks=ks, n_tail=n,
                               sigma=sigma)
    if best is None:
        raise ValueError("no viable xmin candidate")
    return best


@dataclass
class ZipfFit:
    exponent: float
    intercept: float
    n_points: int
    r_squared: float


def fit_zipf(sizes, exclude_top=2):
    """Least-squares slope of ln(size) against ln(rank).

    Sizes are ranked descending over the full list (rank 1 = largest); the
    first ``exclude_top`` ranks are dropped from the fit but keep their rank
    positions. Needs at least 3 points after exclusion. Returns the positive
    Zipf exponent.
    """
    sizes = np.sort(np.asarray(sizes, dtype=np.float64))[::-1]
    if np.any(sizes <= 0):
        raise ValueError("sizes must be positive")
    ranks = np.arange(1, len(sizes) + 1, dtype=np.float64)
    ranks = ranks[exclude_top:]
    sizes = sizes[exclude_top:]
    if len(sizes) < 3:
        raise ValueError("need at least three ranks after exclusion")
    lnr = np.log(ranks)
    lns = np.log(sizes)
    slope, intercept = np.polyfit(lnr, lns, 1)
    fitted = slope * lnr + intercept
    ss_res = float(((lns - fitted) ** 2).sum())
    ss_tot = float(((lns - lns.mean()) ** 2).sum())
    r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0
    return ZipfFit(exponent=float(-slope), intercept=float(intercept),
                   n_points=len(sizes), r_squared=r_squared)


def zipf_to_powerlaw_exponent(z):
    """Map a Zipf rank-size exponent to the size-distribution exponent."""
    if z <= 0:
        raise ValueError("Zipf exponent must be positive")
    return 1.0 + 1.0 / z
