"""Synthetic ownership-network corpora with planted label structure.

Topology: one giant component plus a power-law tail of small components;
in-degrees follow a zero-inflated discrete power law and edges wire each
in-stub to distinct uniform sources inside the component, with a join pass
that stitches leftover fragments so every planned component is weakly
connected. Labels: seed marks at rate q0, then one synchronous sweep where a
node flips with probability 1 - prod_h (1 - beta_h)^{k_h}; the hop-1 rate is
split by direction (investees count beta, investors beta/bias) and rates
decay geometrically with hop distance, which plants a lift that fades by
construction beyond a few hops.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

from ._rng import substream
from .features import FeatureSchema
from .graph_store import ATTR_CATEGORICALS, AttributeTable, FirmGraph
from .propagation import PatternMatrices
from .topology import components

logger = logging.getLogger(__name__)

DEFAULT_VOCAB_SIZES = {"firm_type": 158, "size_class": 5, "region": 32,
                       "industry": 19}
_VOCAB_PREFIX = {"firm_type": "ft", "size_class": "sz", "region": "rg",
                 "industry": "in"}


@dataclass
class GenParams:
    """Generator knobs; defaults give the standard benchmark corpus."""

    n_nodes: int
    target_avg_degree: float = 1.2
    in_degree_exponent: float = 3.2
    giant_fraction: float = 0.4
    tail_zipf_exponent: float = 0.51
    q0: float = 0.10
    beta: float = 0.3
    decay: float = 0.4
    investee_bias: float = 2.0
    sweeps: int = 1
    max_hop: int = 3
    missing_attr_rate: float = 0.1177
    attr_label_correlation: float = 0.06
    join_allowance: float = 0.03
    vocab_sizes: dict = field(default_factory=lambda: dict(DEFAULT_VOCAB_SIZES))
    seed: int = 0

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ValueError("n_nodes must be >= 2")
        for name in ("q0", "beta", "decay", "missing_attr_rate",
                     "attr_label_correlation"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.in_degree_exponent <= 1.0:
            raise ValueError("in_degree_exponent must be > 1")
        if self.tail_zipf_exponent <= 0.0:
            raise ValueError("tail_zipf_exponent must be > 0")
        if not 0.0 < self.giant_fraction <= 1.0:
            raise ValueError("giant_fraction must be in (0, 1]")
        if self.investee_bias < 1.0:
            raise ValueError("investee_bias must be >= 1")
        if self.sweeps < 1 or self.max_hop < 1:
            raise ValueError("sweeps and max_hop must be >= 1")


def powerlaw_cdf_table(alpha, xmin=1, xmax=None, tail_eps=1e-12,
                       max_len=1 << 22):
    """Cumulative probabilities of the discrete power law on [xmin, hi].

    With ``xmax`` given the table is truncated and renormalized to it.
    Otherwise it extends until the remaining tail mass drops below
    ``tail_eps`` or the table reaches ``max_len`` entries (shallow exponents
    would otherwise need gigabyte tables), and the cdf keeps the true
    unnormalized head values so callers can detect tail overflow.
    """
    if alpha <= 1.0:
        raise ValueError("exponent must exceed 1")
    z0 = zeta(alpha, xmin)
    if xmax is not None:
        hi = xmax
    else:
        hi = xmin
        while (zeta(alpha, hi + 1) / z0 > tail_eps
               and hi - xmin + 1 < max_len):
            hi = min(max(hi + 1, hi * 2), xmin + max_len - 1)
    ks = np.arange(xmin, hi + 1, dtype=np.float64)
    pmf = (zeta(alpha, ks) - zeta(alpha, ks + 1)) / z0
    cdf = np.cumsum(pmf)
    if xmax is not None:
        cdf /= cdf[-1]
    return ks.astype(np.int64), cdf


def sample_discrete_powerlaw(rng, alpha, size, xmin=1, xmax=None):
    """Inverse-CDF samples from the discrete power law.

    Open-ended draws beyond the head table (probability below the table's
    tail epsilon) fall back to the rounded continuous inverse, which is
    asymptotically exact that far out.
    """
    ks, cdf = powerlaw_cdf_table(alpha, xmin=xmin, xmax=xmax)
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    out = ks[np.minimum(idx, len(ks) - 1)]
    if xmax is None and (over := idx >= len(ks)).any():
        far = np.floor((xmin - 0.5) * (1.0 - u[over]) ** (-1.0 / (alpha - 1.0))
                       + 0.5)
        out = out.copy()
        out[over] = np.maximum(far, ks[-1] + 1.0).astype(np.int64)
    return out


def _component_plan(params, rng):
    n = params.n_nodes
    n_giant = int(round(params.giant_fraction * n))
    n_giant = max(2, min(n, n_giant))
    budget = n - n_giant
    if budget == 1:
        n_giant += 1
        budget = 0
    sizes = [n_giant]
    if budget:
        alpha_sizes = 1.0 + 1.0 / params.tail_zipf_exponent
        cap = max(4, budget // 20)
        small = []
        remaining = budget
        while remaining >= 2:
            batch = sample_discrete_powerlaw(
                rng, alpha_sizes, max(64, remaining // 4), xmin=2, xmax=cap)
            for s in batch:
                s = int(s)
                if s > remaining:
                    continue
                small.append(s)
                remaining -= s
                if remaining < 2:
                    break
        if remaining == 1:
            small[-1] += 1
        sizes.extend(small)
    return np.array(sizes, dtype=np.int64)


def _draw_in_degrees(params, comp_sizes, rng):
    n = params.n_nodes
    alpha = params.in_degree_exponent
    need = params.target_avg_degree - params.join_allowance
    if need <= 0:
        raise ValueError("target_avg_degree too small for the join pass")

    # Draws are capped at component size - 1, so solve the zero-inflation
    # level against the capped mean, not the raw power-law mean.
    ks, cdf = powerlaw_cdf_table(alpha, xmin=1)
    pmf = np.diff(np.concatenate([[0.0], cdf]))
    kp_cum = np.cumsum(ks * pmf)
    mean_pl = kp_cum[-1]

    def capped_mean(cap):
        if cap >= ks[-1]:
            return mean_pl
        return kp_cum[cap - 1] + cap * (1.0 - cdf[cap - 1])

    sizes, counts = np.unique(comp_sizes, return_counts=True)
    mean_drawn = sum(c * s * capped_mean(int(s) - 1)
                     for s, c in zip(sizes, counts)) / n
    p0 = 1.0 - need / mean_drawn
    if not 0.0 <= p0 < 1.0:
        raise ValueError(
            f"infeasible degree demands: exponent {alpha} cannot reach "
            f"average degree {params.target_avg_degree}")

    deg = np.zeros(n, dtype=np.int64)
    active = rng.random(n) >= p0
    deg[active] = sample_discrete_powerlaw(rng, alpha, int(active.sum()),
                                           xmin=1)
    caps = np.repeat(comp_sizes - 1, comp_sizes)
    return np.minimum(deg, caps), p0


def _wire_edges(comp_sizes, in_deg, rng):
    """One edge per in-stub: distinct uniform sources within the component."""
    comp_start = np.concatenate([[0], np.cumsum(comp_sizes)[:-1]])
    starts = np.repeat(comp_start, comp_sizes)
    sizes = np.repeat(comp_sizes, comp_sizes)

    tgt = np.repeat(np.arange(len(in_deg), dtype=np.int64), in_deg)
    t_start = starts[tgt]
    t_size = sizes[tgt]
    t_off = tgt - t_start

    n_stub = len(tgt)
    src = np.empty(n_stub, dtype=np.int64)
    todo = np.arange(n_stub)
    for _ in range(200):
        if not len(todo):
            break
        r = rng.integers(0, t_size[todo] - 1)
        pos = r + (r >= t_off[todo])
        src[todo] = t_start[todo] + pos
        # Re-draw stubs that collide with another stub of the same target.
        key = tgt * np.int64(len(in_deg)) + src
        order = np.argsort(key, kind="stable")
        dup = np.zeros(n_stub, dtype=bool)
        same = key[order][1:] == key[order][:-1]
        dup[order[1:][same]] = True
        todo = np.flatnonzero(dup)
    if len(todo):
        # Deterministic fallback for pathological collision sets.
        used = set()
        keyset = set((int(t), int(s)) for t, s in zip(tgt, src))
        for i in todo:
            t = int(tgt[i])
            lo, hi = int(t_start[i]), int(t_start[i] + t_size[i])
            for cand in range(lo, hi):
                if cand != t and (t, cand) not in keyset:
                    src[i] = cand
                    keyset.add((t, cand))
                    break
        del used
    return src, tgt


def _join_fragments(n, comp_sizes, src, tgt, in_deg, rng):
    """Connect leftover fragments inside each planned component."""
    wired = FirmGraph.from_edges(src, tgt, node_count=n)
    frags = components(wired, "weak")
    if frags.count == len(comp_sizes):
        return (np.zeros(0, dtype=np.int64),) * 2

    frag_of_node = frags.comp_id
    order = np.argsort(frag_of_node, kind="stable")
    frag_sizes = frags.sizes
    frag_start = np.concatenate([[0], np.cumsum(frag_sizes)[:-1]])

    comp_start = np.concatenate([[0], np.cumsum(comp_sizes)[:-1]])
    pc_of_node = np.repeat(np.arange(len(comp_sizes)), comp_sizes)
    # Canonical fragment ids ascend with min member, and planned components
    # occupy contiguous node ranges, so fragments are grouped by component.
    first_node = order[frag_start]
    pc_of_frag = pc_of_node[first_node]

    # Join target per fragment: smallest member with zero drawn in-degree,
    # else smallest member.
    big = np.int64(n)
    tgt_zero = np.full(frags.count, big)
    zero_nodes = np.flatnonzero(in_deg == 0)
    np.minimum.at(tgt_zero, frag_of_node[zero_nodes], zero_nodes)
    join_target_of_frag = np.where(tgt_zero < big, tgt_zero, first_node)

    first_frag_of_pc = np.zeros(len(comp_sizes), dtype=np.int64)
    seen = np.zeros(len(comp_sizes), dtype=bool)
    for f in range(frags.count):
        pc = pc_of_frag[f]
        if not seen[pc]:
            seen[pc] = True
            first_frag_of_pc[pc] = f
    needs_join = np.flatnonzero(
        np.arange(frags.count) != first_frag_of_pc[pc_of_frag])

    pc_start_pos = frag_start[first_frag_of_pc]
    lo = pc_start_pos[pc_of_frag[needs_join]]
    hi = frag_start[needs_join]
    u = rng.random(len(needs_join))
    src_pos = lo + np.floor(u * (hi - lo)).astype(np.int64)
    join_src = order[src_pos]
    join_tgt = join_target_of_frag[needs_join]

    comp_of = pc_of_frag[needs_join]
    assert (pc_of_node[join_src] == comp_of).all()
    assert (pc_of_node[join_tgt] == comp_of).all()
    return join_src, join_tgt


def generate_graph(params, seed=None):
    """Directed graph per the component plan; returns (graph, meta)."""
    seed = params.seed if seed is None else seed
    rng_plan = substream(seed, "synth", "plan")
    rng_deg = substream(seed, "synth", "degrees")
    rng_wire = substream(seed, "synth", "wiring")
    rng_join = substream(seed, "synth", "joins")

    comp_sizes = _component_plan(params, rng_plan)
    in_deg, p0 = _draw_in_degrees(params, comp_sizes, rng_deg)
    src, tgt = _wire_edges(comp_sizes, in_deg, rng_wire)
    join_src, join_tgt = _join_fragments(params.n_nodes, comp_sizes, src, tgt,
                                         in_deg, rng_join)

    all_src = np.concatenate([src, join_src])
    all_tgt = np.concatenate([tgt, join_tgt])
    width = max(7, len(str(params.n_nodes - 1)))
    ids = np.array([f"F{i:0{width}d}" for i in range(params.n_nodes)],
                   dtype=object)
    graph = FirmGraph.from_edges(all_src, all_tgt,
                                 node_count=params.n_nodes, ids=ids)
    if graph.edge_count != len(all_src):
        raise AssertionError("generator produced duplicate or loop edges")

    meta = {
        "component_sizes": comp_sizes,
        "drawn_in_degrees": in_deg,
        "zero_inflation": p0,
        "wired_edges": len(src),
        "join_edges": len(join_src),
        "avg_degree": graph.edge_count / params.n_nodes,
    }
    logger.info("generated graph: n=%d m=%d avg=%.4f joins=%d",
                params.n_nodes, graph.edge_count, meta["avg_degree"],
                meta["join_edges"])
    return graph, meta


def plant_labels(graph, params, seed=None):
    """Seed + one synchronous contagion sweep; returns (labels, truth)."""
    seed = params.seed if seed is None else seed
    rng_seed = substream(seed, "synth", "label-seeds")
    rng_flip = substream(seed, "synth", "label-flips")
    n = graph.node_count

    y0 = rng_seed.random(n) < params.q0
    beta = params.beta
    labels = y0.copy()

    if beta > 0.0 and y0.any():
        if params.sweeps == 1:
            yv = y0.astype(np.int32)
            k_ee = np.asarray(graph.sparse("out") @ yv).ravel()
            k_or = np.asarray(graph.sparse("in") @ yv).ravel()
            b_ee = beta
            b_or = beta / params.investee_bias
            with np.errstate(divide="ignore"):
                log_keep = (k_ee * np.log1p(-b_ee)
                            + k_or * np.log1p(-b_or))
                if params.max_hop >= 2 and params.decay > 0.0:
                    cache = PatternMatrices(graph)
                    for h in range(2, params.max_hop + 1):
                        b_h = beta * params.decay ** (h - 1)
                        if b_h <= 0.0:
                            break
                        k_h = np.asarray(cache.und_shell(h) @ yv).ravel()
                        log_keep = log_keep + k_h * np.log1p(-b_h)
            flip_p = -np.expm1(log_keep)
            flips = ~y0 & (rng_flip.random(n) < flip_p)
            labels = y0 | flips
        else:
            current = y0.copy()
            for s in range(params.sweeps):
                b_s = beta * params.decay ** s
                yv = current.astype(np.int32)
                k_ee = np.asarray(graph.sparse("out") @ yv).ravel()
                k_or = np.asarray(graph.sparse("in") @ yv).ravel()
                with np.errstate(divide="ignore"):
                    log_keep = (k_ee * np.log1p(-b_s) + k_or
                                * np.log1p(-b_s / params.investee_bias))
                flip_p = -np.expm1(log_keep)
                flips = ~current & (rng_flip.random(n) < flip_p)
                if not flips.any():
                    break
                current |= flips
            labels = current

    truth = {
        "seeded": np.flatnonzero(y0),
        "induced": np.flatnonzero(labels & ~y0),
        "seed_rate": float(y0.mean()),
        "final_rate": float(labels.mean()),
    }
    return labels, truth


def make_schema(vocab_sizes=None):
    """Synthetic vocabularies; zero-padded names keep sorted order stable."""
    sizes = dict(DEFAULT_VOCAB_SIZES)
    if vocab_sizes:
        sizes.update(vocab_sizes)
    vocabs = {}
    for attr in ATTR_CATEGORICALS:
        prefix = _VOCAB_PREFIX[attr]
        width = max(2, len(str(sizes[attr] - 1)))
        vocabs[attr] = tuple(f"{prefix}{i:0{width}d}"
                             for i in range(sizes[attr]))
    return FeatureSchema(**vocabs)


def _categorical_draw(rng, vocab_size, n, labels, correlation):
    ranks = np.arange(vocab_size, dtype=np.float64)
    base = 1.0 / (ranks + 3.0)
    base /= base.sum()
    cum_base = np.cumsum(base)
    idx = np.searchsorted(cum_base, rng.random(n), side="right")
    idx = np.minimum(idx, vocab_size - 1)
    if correlation > 0.0 and labels.any():
        # Tilt toward the most frequent values: aggregate lift without any
        # single rare category becoming a giveaway indicator.
        k = max(1, vocab_size // 5)
        tilt = np.zeros(vocab_size)
        tilt[:k] = 1.0 / k
        cum_tilt = np.cumsum(tilt)
        redraw = labels & (rng.random(n) < correlation)
        m = int(redraw.sum())
        if m:
            t_idx = np.searchsorted(cum_tilt, rng.random(m), side="right")
            idx[redraw] = np.minimum(t_idx, vocab_size - 1)
    return idx


def generate_attributes(graph, schema, params, seed=None):
    """Attribute table with planted mild label correlation and missingness."""
    seed = params.seed if seed is None else seed
    rng = substream(seed, "synth", "attributes")
    n = graph.node_count
    labels = graph.labels
    corr = params.attr_label_correlation

    base = rng.normal(10.0, 2.0, n)
    base[labels] -= 2.0 * corr * 2.0  # shift in units of the ln-scale sd
    capital = np.expm1(np.clip(base, 0.0, 30.0))

    table = AttributeTable.empty(n)
    table.capital = capital
    table.rows_present = np.ones(n, dtype=bool)
    for attr in ATTR_CATEGORICALS:
        vocab = schema.vocab(attr)
        idx = _categorical_draw(rng, len(vocab), n, labels, corr)
        col = np.array(vocab, dtype=object)[idx]
        setattr(table, attr, col)

    if params.missing_attr_rate > 0.0:
        incomplete = rng.random(n) < params.missing_attr_rate
        which = rng.integers(0, 5, n)
        hit = np.flatnonzero(incomplete)
        for i in hit:
            f = which[i]
            if f == 0:
                table.capital[i] = np.nan
            else:
                getattr(table, ATTR_CATEGORICALS[f - 1])[i] = None
    return table


def generate_corpus(params):
    """Graph + labels + attributes + schema + ground truth in one call."""
    graph, meta = generate_graph(params)
    labels, truth = plant_labels(graph, params)
    graph = graph.with_labels(labels)
    schema = make_schema(params.vocab_sizes)
    attrs = generate_attributes(graph, schema, params)
    truth.update({
        "params": {k: (v if not isinstance(v, dict) else dict(v))
                   for k, v in vars(params).items()},
        "graph_meta": {k: (int(v) if np.isscalar(v) and not isinstance(v, str)
                           else v)
                       for k, v in meta.items()
                       if k in ("wired_edges", "join_edges")},
        "avg_degree": meta["avg_degree"],
        "component_count": len(meta["component_sizes"]),
    })
    return graph, attrs, schema, truth, meta
