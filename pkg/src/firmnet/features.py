"""Feature construction: per-firm attribute encoding plus network features.

The individual block is one numeric column (ln(1 + registered_capital),
standardized later with training-fold statistics) followed by one-hot blocks
for the four categorical attributes, vocabularies sorted. The network block
holds (count, fraction) of discreditable nodes over six neighbor sets.
"""

import json
from dataclasses import dataclass

import numpy as np
import pandas as pd
import scipy.sparse as sp

from ._sparse import binarize, drop_diagonal
from .graph_store import ATTR_CATEGORICALS
from .propagation import PatternMatrices

NETWORK_SETS = ("investors", "investees", "und1", "und1_investors",
                "und1_investees", "und2")
FEATURE_GROUPS = ("individual", "network", "combined")


def network_feature_names():
    names = []
    for s in NETWORK_SETS:
        names.append(f"net_{s}_count")
        names.append(f"net_{s}_frac")
    return names


@dataclass
class FeatureSchema:
    """Sorted categorical vocabularies defining the individual block."""

    firm_type: tuple
    size_class: tuple
    region: tuple
    industry: tuple

    @classmethod
    def from_attributes(cls, attrs):
        base = attrs.schema()
        return cls(firm_type=base.firm_type, size_class=base.size_class,
                   region=base.region, industry=base.industry)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        return cls(**{k: tuple(raw[k]) for k in ATTR_CATEGORICALS})

    def to_json(self, path):
        payload = {k: list(getattr(self, k)) for k in ATTR_CATEGORICALS}
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def vocab(self, name):
        return getattr(self, name)

    @property
    def individual_dim(self):
        return 1 + sum(len(getattr(self, k)) for k in ATTR_CATEGORICALS)

    def individual_names(self):
        names = ["registered_capital"]
        for attr in ATTR_CATEGORICALS:
            names.extend(f"{attr}={v}" for v in getattr(self, attr))
        return names

    def feature_names(self, group):
        if group == "individual":
            return self.individual_names()
        if group == "network":
            return network_feature_names()
        if group == "combined":
            return self.individual_names() + network_feature_names()
        raise ValueError(f"unknown feature group {group!r}")


def encode_individual(attrs, node, schema):
    """Individual feature vector for one firm; attributes must be complete."""
    cap = attrs.capital[node]
    if np.isnan(cap):
        raise ValueError(f"firm {node}: registered_capital missing")
    vec = np.zeros(schema.individual_dim)
    vec[0] = np.log1p(cap)
    offset = 1
    for attr in ATTR_CATEGORICALS:
        value = getattr(attrs, attr)[node]
        vocab = schema.vocab(attr)
        if value is None:
            raise ValueError(f"firm {node}: {attr} missing")
        try:
            idx = vocab.index(value)
        except ValueError:
            raise ValueError(
                f"firm {node}: {attr} value {value!r} not in vocabulary"
            ) from None
        vec[offset + idx] = 1.0
        offset += len(vocab)
    return vec


def _network_set_matrices(graph, matrices=None):
    m_inv = graph.sparse("in")
    m_ive = graph.sparse("out")
    und = graph.sparse("und")
    cache = matrices if matrices is not None else PatternMatrices(graph)
    return (
        m_inv,
        m_ive,
        und,
        drop_diagonal(binarize(und @ m_inv)),
        drop_diagonal(binarize(und @ m_ive)),
        cache.und_shell(2),
    )


def network_feature_table(graph, labels=None, matrices=None):
    """Dense (node_count, 12) array of network features for every node."""
    if labels is None:
        labels = graph.labels
    y = np.asarray(labels, dtype=bool).astype(np.int64)
    out = np.zeros((graph.node_count, 12))
    for k, mat in enumerate(_network_set_matrices(graph, matrices)):
        counts = np.asarray(mat @ y).ravel().astype(np.float64)
        sizes = np.diff(mat.indptr).astype(np.float64)
        frac = np.divide(counts, sizes, out=np.zeros_like(counts),
                         where=sizes > 0)
        out[:, 2 * k] = counts
        out[:, 2 * k + 1] = frac
    return out


def network_features(graph, node, labels=None):
    """The 12 network features of one node, built from explicit sets."""
    if labels is None:
        labels = graph.labels
    labels = np.asarray(labels, dtype=bool)

    investors = set(int(v) for v in graph.in_neighbors(node))
    investees = set(int(v) for v in graph.out_neighbors(node))
    und1 = investors | investees
    und1_inv, und1_ive = set(), set()
    for v in und1:
        und1_inv.update(int(u) for u in graph.in_neighbors(v))
        und1_ive.update(int(u) for u in graph.out_neighbors(v))
    und1_inv.discard(node)
    und1_ive.discard(node)
    und2 = set()
    for v in und1:
        und2.update(int(u) for u in graph.und_neighbors(v))
    und2 -= und1
    und2.discard(node)

    vec = np.zeros(12)
    for k, members in enumerate((investors, investees, und1, und1_inv,
                                 und1_ive, und2)):
        count = sum(1 for u in members if labels[u])
        vec[2 * k] = count
        vec[2 * k + 1] = count / len(members) if members else 0.0
    return vec


@dataclass
class LabeledDataset:
    """Sparse design matrix with labels and provenance.

    ``numeric_cols`` lists columns that carry raw ln(1+capital) values and
    need training-fold standardization before fitting; those entries are
    stored explicitly in ``X`` even when zero, so in-place scaling of stored
    values is exact.
    """

    X: sp.csr_matrix
    y: np.ndarray
    firm_index: np.ndarray
    feature_names: list
    numeric_cols: tuple
    group: str
    # (start, end) column ranges where exactly one indicator is hot per row;
    # the trainer uses these to pin the per-block gauge.
    onehot_blocks: tuple = ()

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def dim(self):
        return self.X.shape[1]


def _individual_block(attrs, rows, schema):
    data, rr, cc = [], [], []
    cap = np.log1p(attrs.capital[rows])
    if np.isnan(cap).any():
        raise ValueError("incomplete rows passed to individual encoder")
    data.append(cap)
    rr.append(np.arange(len(rows)))
    cc.append(np.zeros(len(rows), dtype=np.int64))
    offset = 1
    for attr in ATTR_CATEGORICALS:
        vocab = schema.vocab(attr)
        values = getattr(attrs, attr)[rows]
        idx = pd.Index(vocab).get_indexer(values)
        if (idx < 0).any():
            k = int(np.flatnonzero(idx < 0)[0])
            raise ValueError(
                f"firm {int(rows[k])}: {attr} value {values[k]!r} "
                f"not in vocabulary")
        data.append(np.ones(len(rows)))
        rr.append(np.arange(len(rows)))
        cc.append(offset + idx.astype(np.int64))
        offset += len(vocab)
    return data, rr, cc, offset


def assemble_dataset(graph, attrs, schema, group, labels=None, row_mask=None,
                     matrices=None):
    """Build the design matrix for one feature group.

    Groups with individual features keep only rows with complete attributes;
    the network-only group defaults to every node. ``row_mask`` further
    restricts rows (it is intersected with the completeness requirement).
    """
    if group not in FEATURE_GROUPS:
        raise ValueError(f"unknown feature group {group!r}")
    if labels is None:
        labels = graph.labels
    labels = np.asarray(labels, dtype=bool)

    need_individual = group in ("individual", "combined")
    mask = np.ones(graph.node_count, dtype=bool)
    if row_mask is not None:
        mask &= np.asarray(row_mask, dtype=bool)
    if need_individual:
        mask &= attrs.complete_mask(schema)
    rows = np.flatnonzero(mask)
    if len(rows) == 0:
        raise ValueError("empty dataset after row selection")

    blocks = []
    if need_individual:
        data, rr, cc, offset = _individual_block(attrs, rows, schema)
        ind = sp.coo_matrix(
            (np.concatenate(data),
             (np.concatenate(rr), np.concatenate(cc))),
            shape=(len(rows), offset)).tocsr()
        blocks.append(ind)
    if group in ("network", "combined"):
        table = network_feature_table(graph, labels=labels,
                                      matrices=matrices)[rows]
        blocks.append(sp.csr_matrix(table))

    X = blocks[0] if len(blocks) == 1 else sp.hstack(blocks, format="csr")
    hot = ()
    if need_individual:
        spans = []
        offset = 1
        for attr in ATTR_CATEGORICALS:
            width = len(schema.vocab(attr))
            spans.append((offset, offset + width))
            offset += width
        hot = tuple(spans)
    return LabeledDataset(
        X=X,
        y=labels[rows].astype(np.int8),
        firm_index=rows.astype(np.int64),
        feature_names=schema.feature_names(group),
        numeric_cols=(0,) if need_individual else (),
        group=group,
        onehot_blocks=hot,
    )


def export_dataset_csv(dataset, path):
    """Dense CSV dump (header = feature names + label). Small corpora only."""
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(dataset.feature_names + ["label"])
        dense = dataset.X.toarray()
        for i in range(dataset.n_rows):
            writer.writerow([repr(float(v)) for v in dense[i]]
                            + [int(dataset.y[i])])
