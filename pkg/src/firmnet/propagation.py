"""Label-correlation analyses: L(m) curves and distance-pattern lift.

``L(m)`` is the probability that a node is discreditable given at least ``m``
discreditable neighbors under a direction convention. Distance patterns
("F", "BB", "FBF", ..., "U2") generalize neighbors to step sequences:
``F`` follows an investment edge, ``B`` goes against one, ``Ud`` means exact
undirected distance ``d``. A node's pattern set never contains the node
itself, nor any node reachable by a strict prefix or strict suffix of the
pattern (the suffix half keeps the sets reverse-symmetric; see the project
notes for the rationale).
"""

import itertools
from dataclasses import dataclass

import numpy as np

from ._sparse import binarize, identity_like, subtract_mask

DIRECTIONS = ("out", "in", "undirected")


def directed_patterns(d_max=3):
    """All step-sequence patterns up to length ``d_max``, short first."""
    out = []
    for d in range(1, d_max + 1):
        for steps in itertools.product("FB", repeat=d):
            out.append("".join(steps))
    return out


def default_patterns(d_max=3, include_undirected=True):
    pats = directed_patterns(d_max)
    if include_undirected:
        pats += [f"U{d}" for d in range(1, d_max + 1)]
    return pats


def parse_pattern(pattern):
    """Validate a pattern string; returns ("directed", steps) or ("und", d)."""
    if not pattern:
        raise ValueError("empty pattern")
    if pattern[0] == "U":
        try:
            d = int(pattern[1:])
        except ValueError:
            raise ValueError(f"bad pattern {pattern!r}") from None
        if d < 1:
            raise ValueError(f"bad pattern {pattern!r}")
        return "und", d
    if any(c not in "FB" for c in pattern):
        raise ValueError(f"bad pattern {pattern!r}")
    return "directed", pattern


def reverse_pattern(pattern):
    """Reverse step order and flip senses; undirected patterns are fixed."""
    kind, val = parse_pattern(pattern)
    if kind == "und":
        return pattern
    return "".join("B" if c == "F" else "F" for c in reversed(val))


class PatternMatrices:
    """Per-graph cache of pattern-set CSR matrices.

    Row ``i`` of ``pattern_matrix(p)`` marks ``pattern_neighbors(i, p)``.
    Directed products of length <= 2 and undirected shells are cached; longer
    products are built and released by the caller.
    """

    def __init__(self, graph):
        self.graph = graph
        self._walk = {}
        self._shell = {}

    def step(self, c):
        if c == "F":
            return self.graph.sparse("out")
        if c == "B":
            return self.graph.sparse("in")
        raise ValueError(f"bad step {c!r}")

    def walk(self, seq):
        """0/1 matrix of nodes reachable by exactly the step sequence."""
        if len(seq) == 1:
            return self.step(seq)
        if seq in self._walk:
            return self._walk[seq]
        mat = binarize(self.walk(seq[:-1]) @ self.step(seq[-1]))
        if len(seq) <= 2:
            self._walk[seq] = mat
        return mat

    def und_shell(self, d):
        """0/1 matrix of exact undirected distance ``d``."""
        if d in self._shell:
            return self._shell[d]
        und = self.graph.sparse("und")
        if d == 1:
            mat = und
        else:
            closer = identity_like(und)
            for k in range(1, d):
                closer = closer + self.und_shell(k)
            mat = subtract_mask(binarize(self.und_shell(d - 1) @ und),
                                binarize(closer))
        self._shell[d] = mat
        return mat

    def pattern_matrix(self, pattern, within=False):
        kind, val = parse_pattern(pattern)
        if kind == "und":
            if within:
                acc = self.und_shell(1)
                for k in range(2, val + 1):
                    acc = acc + self.und_shell(k)
                return binarize(acc)
            return self.und_shell(val)
        d = len(val)
        walk = self.walk(val)
        excl = identity_like(walk)
        subs = {val[:k] for k in range(1, d)} | {val[-k:] for k in range(1, d)}
        for sub in subs:
            excl = excl + self.walk(sub)
        return subtract_mask(walk, binarize(excl))


def pattern_neighbors(graph, node, pattern, within=False):
    """Sorted array of ``node``'s pattern-set members (single-node walk)."""
    kind, val = parse_pattern(pattern)
    if kind == "und":
        dist = {node: 0}
        frontier = [node]
        for depth in range(1, val + 1):
            nxt = []
            for u in frontier:
                for v in graph.und_neighbors(u):
                    if v not in dist:
                        dist[v] = depth
                        nxt.append(int(v))
            frontier = nxt
        if within:
            members = [u for u, d in dist.items() if 1 <= d <= val]
        else:
            members = [u for u, d in dist.items() if d == val]
        return np.array(sorted(members), dtype=np.int64)

    def walk_set(seq):
        cur = {node}
        for c in seq:
            nxt = set()
            for u in cur:
                arr = (graph.out_neighbors(u) if c == "F"
                       else graph.in_neighbors(u))
                nxt.update(int(v) for v in arr)
            cur = nxt
        return cur

    d = len(val)
    result = walk_set(val)
    result.discard(node)
    for k in range(1, d):
        result -= walk_set(val[:k])
        result -= walk_set(val[-k:])
    return np.array(sorted(result), dtype=np.int64)


@dataclass
class NeighborEffectCurve:
    """L(m) table for one direction; arrays are aligned by row."""

    direction: str
    m: np.ndarray
    denominator: np.ndarray
    numerator: np.ndarray
    L: np.ndarray


def _neighbor_disc_counts(graph, direction, labels):
    y = labels.astype(np.int32)
    if direction == "out":
        mat = graph.sparse("out")
    elif direction == "in":
        mat = graph.sparse("in")
    elif direction == "undirected":
        mat = graph.sparse("und")
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return np.asarray(mat @ y).ravel()


def lm_curve(graph, direction, m_max=None, labels=None, min_denominator=100):
    """L(m) for m = 0..m_max under a neighbor direction.

    With ``m_max=None`` the curve extends to the largest m whose denominator
    is at least ``min_denominator`` (noise guard). Rows with zero denominator
    are omitted. m = 0 always covers the whole graph.
    """
    if labels is None:
        labels = graph.labels
    labels = np.asarray(labels, dtype=bool)
    n = graph.node_count
    counts = _neighbor_disc_counts(graph, direction, labels)

    top = int(counts.max()) if n else 0
    hist_all = np.bincount(counts, minlength=top + 1)
    hist_pos = np.bincount(counts[labels], minlength=top + 1)
    # tail[m] = #nodes with count >= m
    tail_all = np.concatenate([np.cumsum(hist_all[::-1])[::-1], [0]])
    tail_pos = np.concatenate([np.cumsum(hist_pos[::-1])[::-1], [0]])

    if m_max is None:
        viable = np.flatnonzero(tail_all >= min_denominator)
        m_hi = int(viable.max()) if len(viable) else 0
    else:
        m_hi = min(int(m_max), top)

    ms, denom, numer = [], [], []
    for m in range(0, m_hi + 1):
        if tail_all[m] == 0:
            break
        ms.append(m)
        denom.append(int(tail_all[m]))
        numer.append(int(tail_pos[m]))
    ms = np.array(ms, dtype=np.int64)
    denom = np.array(denom, dtype=np.int64)
    numer = np.array(numer, dtype=np.int64)
    return NeighborEffectCurve(direction=direction, m=ms, denominator=denom,
                               numerator=numer, L=numer / denom)


@dataclass
class InfluenceRecord:
    pattern: str
    baseline: float
    conditional: float
    increment_rate: float
    denominator: int


def influence_by_distance(graph, patterns=None, labels=None, within=False,
                          matrices=None):
    """Lift of the discreditable rate given >= 1 marked pattern-neighbor.

    Returns one record per pattern with a nonzero denominator, in the order
    given. ``within=True`` switches ``Ud`` patterns to distance <= d.
    """
    if labels is None:
        labels = graph.labels
    labels = np.asarray(labels, dtype=bool)
    baseline = float(labels.mean()) if graph.node_count else 0.0
    if patterns is None:
        patterns = default_patterns()
    if baseline == 0.0:
        return []

    cache = matrices if matrices is not None else PatternMatrices(graph)
    y = labels.astype(np.int32)
    records = []
    for pat in patterns:
        mat = cache.pattern_matrix(pat, within=within)
        counts = np.asarray(mat @ y).ravel()
        has = counts >= 1
        denom = int(has.sum())
        if denom == 0:
            continue
        conditional = float(labels[has].mean())
        records.append(InfluenceRecord(
            pattern=pat,
            baseline=baseline,
            conditional=conditional,
            increment_rate=(conditional - baseline) / baseline,
            denominator=denom,
        ))
    return records
