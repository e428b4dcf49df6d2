"""Immutable directed firm graph with CSR adjacency, plus CSV ingestion.

Nodes are dense ints assigned in first-appearance order over the edge file
(investor before investee within a row). External string ids, boolean
discreditable labels, and optional per-firm attributes ride along. All
analytics treat the graph as unweighted; an optional ``share`` edge column is
parsed, validated, and retained but never enters any computation.
"""

import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.sparse as sp

logger = logging.getLogger(__name__)

CACHE_MAGIC = b"FNETG\x00"
CACHE_VERSION = 1

EDGE_COLUMNS = ("investor_id", "investee_id")
ATTR_COLUMNS = (
    "firm_id",
    "registered_capital",
    "firm_type",
    "size_class",
    "region",
    "industry",
)
ATTR_CATEGORICALS = ("firm_type", "size_class", "region", "industry")


class LoadError(ValueError):
    """Raised for malformed input rows; message carries the 1-based line number."""


class CacheError(RuntimeError):
    """Raised when a binary cache is unreadable, corrupt, or version-mismatched."""


@dataclass
class LoadReport:
    """Counters accumulated while ingesting the CSV inputs."""

    edges_read: int = 0
    self_loops_dropped: int = 0
    duplicate_edges_dropped: int = 0
    non_firm_rows_dropped: int = 0
    labels_read: int = 0
    unknown_label_ids: int = 0
    attrs_read: int = 0
    unknown_attr_ids: int = 0

    @property
    def total_warnings(self):
        return (
            self.self_loops_dropped
            + self.duplicate_edges_dropped
            + self.non_firm_rows_dropped
            + self.unknown_label_ids
            + self.unknown_attr_ids
        )


class FirmGraph:
    """Directed simple graph in CSR form (out and in adjacency).

    Instances are immutable by convention: no method mutates the arrays, and
    derived structures (undirected adjacency, sparse views, the id lookup
    table) are cached lazily.
    """

    def __init__(self, ids, labels, out_indptr, out_indices, in_indptr,
                 in_indices, share=None):
        self.ids = ids
        self.labels = labels
        self.out_indptr = out_indptr
        self.out_indices = out_indices
        self.in_indptr = in_indptr
        self.in_indices = in_indices
        self.share = share
        self._id_lookup = None
        self._und = None
        self._csr = {}

    @property
    def node_count(self):
        return len(self.ids)

    @property
    def edge_count(self):
        return len(self.out_indices)

    @classmethod
    def from_edges(cls, src, dst, *, node_count=None, ids=None, labels=None,
                   share=None):
        """Build a graph from parallel endpoint arrays.

        Self-loops and duplicate edges are dropped silently; use
        :func:`load_graph` when those counts matter.
        """
        graph, _, _ = _build(src, dst, node_count=node_count, ids=ids,
                             labels=labels, share=share)
        return graph

    def with_labels(self, labels):
        """Copy of this graph with a different label vector (arrays shared)."""
        labels = np.asarray(labels, dtype=bool)
        if labels.shape != (self.node_count,):
            raise ValueError("label vector length mismatch")
        return FirmGraph(self.ids, labels, self.out_indptr, self.out_indices,
                         self.in_indptr, self.in_indices, self.share)

    def index_of(self, external_id):
        if self._id_lookup is None:
            self._id_lookup = {eid: i for i, eid in enumerate(self.ids)}
        return self._id_lookup[external_id]

    def id_of(self, node):
        return self.ids[node]

    def out_degrees(self):
        return np.diff(self.out_indptr)

    def in_degrees(self):
        return np.diff(self.in_indptr)

    def out_neighbors(self, node):
        return self.out_indices[self.out_indptr[node]:self.out_indptr[node + 1]]

    def in_neighbors(self, node):
        return self.in_indices[self.in_indptr[node]:self.in_indptr[node + 1]]

    def und_adjacency(self):
        """Undirected simple adjacency as (indptr, indices), built once."""
        if self._und is None:
            n = self.node_count
            srcs = np.repeat(np.arange(n, dtype=np.int64),
                             np.diff(self.out_indptr))
            dsts = self.out_indices.astype(np.int64)
            u = np.concatenate([srcs, dsts])
            v = np.concatenate([dsts, srcs])
            keys = np.unique(u * n + v)
            uu = (keys // n).astype(np.int64)
            vv = (keys % n).astype(np.int32)
            indptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(np.bincount(uu, minlength=n), out=indptr[1:])
            self._und = (indptr, vv)
        return self._und

    def und_neighbors(self, node):
        indptr, indices = self.und_adjacency()
        return indices[indptr[node]:indptr[node + 1]]

    def sparse(self, direction="out"):
        """Boolean-count CSR matrix view (int32 data of ones)."""
        if direction not in self._csr:
            n = self.node_count
            if direction == "out":
                indptr, indices = self.out_indptr, self.out_indices
            elif direction == "in":
                indptr, indices = self.in_indptr, self.in_indices
            elif direction == "und":
                indptr, indices = self.und_adjacency()
            else:
                raise ValueError(f"unknown direction {direction!r}")
            data = np.ones(len(indices), dtype=np.int32)
            self._csr[direction] = sp.csr_matrix(
                (data, indices, indptr), shape=(n, n))
        return self._csr[direction]


def neighbors(graph, node, direction="out"):
    """Sorted unique neighbor indices of ``node``.

    ``direction`` is one of ``"out"`` (investees), ``"in"`` (investors), or
    ``"undirected"``.
    """
    if direction == "out":
        return graph.out_neighbors(node)
    if direction == "in":
        return graph.in_neighbors(node)
    if direction == "undirected":
        return graph.und_neighbors(node)
    raise ValueError(f"unknown direction {direction!r}")


def induced_subgraph(graph, keep):
    """Subgraph on the nodes where ``keep`` is true.

    Returns ``(subgraph, old_indices)`` where ``old_indices[new] = old``.
    Node order (and therefore external ids and labels) is preserved.
    """
    keep = np.asarray(keep, dtype=bool)
    if keep.shape != (graph.node_count,):
        raise ValueError("mask length mismatch")
    old_indices = np.flatnonzero(keep)
    remap = np.full(graph.node_count, -1, dtype=np.int64)
    remap[old_indices] = np.arange(len(old_indices))

    srcs = np.repeat(np.arange(graph.node_count, dtype=np.int64),
                     np.diff(graph.out_indptr))
    dsts = graph.out_indices
    emask = keep[srcs] & keep[dsts]
    new_src = remap[srcs[emask]]
    new_dst = remap[dsts[emask]]
    share = graph.share[emask] if graph.share is not None else None
    sub, _, _ = _build(new_src, new_dst, node_count=len(old_indices),
                       ids=graph.ids[old_indices],
                       labels=graph.labels[old_indices], share=share)
    return sub, old_indices


def _build(src, dst, *, node_count=None, ids=None, labels=None, share=None):
    """Dedup + CSR construction. Returns (graph, n_self_loops, n_duplicates)."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    if node_count is None:
        node_count = int(max(src.max(initial=-1), dst.max(initial=-1))) + 1
    n = int(node_count)

    loops = src == dst
    n_self = int(loops.sum())
    if n_self:
        keepe = ~loops
        src, dst = src[keepe], dst[keepe]
        if share is not None:
            share = np.asarray(share)[keepe]

    keys = src * n + dst
    uniq, first = np.unique(keys, return_index=True)
    n_dup = len(keys) - len(uniq)
    src_u = (uniq // n).astype(np.int64)
    dst_u = (uniq % n).astype(np.int32)
    share_u = None
    if share is not None:
        share_u = np.asarray(share, dtype=np.float64)[first]

    out_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src_u, minlength=n), out=out_indptr[1:])
    out_indices = dst_u

    order = np.argsort(dst_u * np.int64(n) + src_u, kind="stable")
    in_indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(dst_u, minlength=n), out=in_indptr[1:])
    in_indices = src_u[order].astype(np.int32)

    if ids is None:
        ids = np.array([str(i) for i in range(n)], dtype=object)
    else:
        ids = np.asarray(ids, dtype=object)
        if len(ids) != n:
            raise ValueError("ids length mismatch")
    if labels is None:
        labels = np.zeros(n, dtype=bool)
    else:
        labels = np.asarray(labels, dtype=bool)
        if len(labels) != n:
            raise ValueError("labels length mismatch")

    graph = FirmGraph(ids, labels, out_indptr, out_indices, in_indptr,
                      in_indices, share_u)
    return graph, n_self, n_dup


@dataclass
class AttributeSchema:
    """Category vocabularies (sorted) used for one-hot encoding."""

    firm_type: tuple
    size_class: tuple
    region: tuple
    industry: tuple

    def vocab(self, name):
        return getattr(self, name)


@dataclass
class AttributeTable:
    """Columnar per-node attributes aligned with graph node order.

    ``capital`` is NaN where missing; categorical columns hold ``None`` where
    missing. ``rows_present`` marks nodes that appeared in the attrs file.
    """

    capital: np.ndarray
    firm_type: np.ndarray
    size_class: np.ndarray
    region: np.ndarray
    industry: np.ndarray
    rows_present: np.ndarray = field(default=None)

    @classmethod
    def empty(cls, n):
        return cls(
            capital=np.full(n, np.nan),
            firm_type=np.full(n, None, dtype=object),
            size_class=np.full(n, None, dtype=object),
            region=np.full(n, None, dtype=object),
            industry=np.full(n, None, dtype=object),
            rows_present=np.zeros(n, dtype=bool),
        )

    def __len__(self):
        return len(self.capital)

    def schema(self):
        """Vocabularies observed in the table, sorted lexicographically."""
        def vocab(col):
            vals = {v for v in col if v is not None}
            return tuple(sorted(vals))
        return AttributeSchema(
            firm_type=vocab(self.firm_type),
            size_class=vocab(self.size_class),
            region=vocab(self.region),
            industry=vocab(self.industry),
        )

    def complete_mask(self, schema=None):
        """Nodes with capital present and every categorical in-vocabulary."""
        mask = ~np.isnan(self.capital)
        for name in ATTR_CATEGORICALS:
            col = getattr(self, name)
            present = col != None  # noqa: E711  (elementwise on object array)
            mask &= present
            if schema is not None:
                vocab = set(schema.vocab(name))
                invocab = np.fromiter((v in vocab for v in col), dtype=bool,
                                      count=len(col))
                mask &= invocab
        return mask

    def subset(self, old_indices):
        return AttributeTable(
            capital=self.capital[old_indices],
            firm_type=self.firm_type[old_indices],
            size_class=self.size_class[old_indices],
            region=self.region[old_indices],
            industry=self.industry[old_indices],
            rows_present=self.rows_present[old_indices],
        )


@dataclass
class LoadResult:
    graph: FirmGraph
    attributes: AttributeTable
    report: LoadReport


def _read_csv(path, expected, optional=()):
    try:
        df = pd.read_csv(path, dtype=str, keep_default_na=False,
                         na_values=[], engine="c")
    except pd.errors.ParserError as exc:
        raise LoadError(f"{path}: {exc}") from None
    cols = tuple(df.columns)
    allowed = (tuple(expected), *(tuple(expected) + tuple(optional[:k])
                                  for k in range(1, len(optional) + 1)))
    if cols not in allowed:
        raise LoadError(
            f"{path}: expected header {','.join(expected)}"
            f"{''.join(f'[,{c}]' for c in optional)}, got {','.join(cols)}")
    return df


def _require_filled(df, col, path):
    vals = df[col].to_numpy(dtype=object)
    bad = np.fromiter(((v is np.nan) or v == "" or (not isinstance(v, str))
                       for v in vals), dtype=bool, count=len(vals))
    if bad.any():
        line = int(np.flatnonzero(bad)[0]) + 2
        raise LoadError(f"{path}: line {line}: empty {col}")
    return vals


def load_graph(edges_path, labels_path=None, attrs_path=None,
               non_firm_prefix=None):
    """Ingest the CSV inputs into a :class:`FirmGraph`.

    Parameters
    ----------
    edges_path : str
        CSV with header ``investor_id,investee_id[,share]``. Self-loops and
        duplicate edges are dropped and counted. Malformed rows raise
        :class:`LoadError` with the offending line number.
    labels_path : str, optional
        CSV with header ``firm_id`` (every listed firm is discreditable) or
        ``firm_id,discreditable`` with 0/1 values. Ids absent from the edge
        file are counted and ignored.
    attrs_path : str, optional
        CSV with header ``firm_id,registered_capital,firm_type,size_class,
        region,industry``. Empty cells are missing values.
    non_firm_prefix : str, optional
        Rows whose ids start with this marker (e.g. ``person:``) are dropped
        from every file and counted.

    Returns
    -------
    LoadResult
        Graph, attribute table aligned with node order (all-missing when no
        attrs file is given), and the warning counters.
    """
    report = LoadReport()

    edges = _read_csv(edges_path, EDGE_COLUMNS, optional=("share",))
    report.edges_read = len(edges)
    inv = _require_filled(edges, "investor_id", edges_path)
    ine = _require_filled(edges, "investee_id", edges_path)
    share = None
    if "share" in edges.columns:
        raw = edges["share"].to_numpy(dtype=object)
        share = pd.to_numeric(pd.Series(raw), errors="coerce").to_numpy()
        bad = ~np.isfinite(share) | (share <= 0)
        if bad.any():
            line = int(np.flatnonzero(bad)[0]) + 2
            raise LoadError(f"{edges_path}: line {line}: bad share value")

    if non_firm_prefix:
        drop = np.fromiter(
            (a.startswith(non_firm_prefix) or b.startswith(non_firm_prefix)
             for a, b in zip(inv, ine)), dtype=bool, count=len(inv))
        report.non_firm_rows_dropped += int(drop.sum())
        keep = ~drop
        inv, ine = inv[keep], ine[keep]
        if share is not None:
            share = share[keep]

    interleaved = np.empty(2 * len(inv), dtype=object)
    interleaved[0::2] = inv
    interleaved[1::2] = ine
    codes, uniques = pd.factorize(interleaved)
    ids = np.asarray(uniques, dtype=object)
    src = codes[0::2].astype(np.int64)
    dst = codes[1::2].astype(np.int64)

    graph, n_self, n_dup = _build(src, dst, node_count=len(ids), ids=ids,
                                  share=share)
    report.self_loops_dropped = n_self
    report.duplicate_edges_dropped = n_dup

    if labels_path is not None:
        attach_labels(graph, labels_path, non_firm_prefix=non_firm_prefix,
                      report=report)

    if attrs_path is not None:
        attrs = attach_attributes(graph, attrs_path,
                                  non_firm_prefix=non_firm_prefix,
                                  report=report)
    else:
        attrs = AttributeTable.empty(graph.node_count)

    if report.total_warnings:
        logger.info(
            "load_graph: %d warnings (self-loops %d, duplicates %d, "
            "non-firm %d, unknown labels %d, unknown attrs %d)",
            report.total_warnings, report.self_loops_dropped,
            report.duplicate_edges_dropped, report.non_firm_rows_dropped,
            report.unknown_label_ids, report.unknown_attr_ids)

    return LoadResult(graph=graph, attributes=attrs, report=report)


def attach_labels(graph, labels_path, non_firm_prefix=None, report=None):
    """Set ``graph.labels`` in place from a labels CSV.

    Accepts a bare ``firm_id`` membership list or ``firm_id,discreditable``
    with 0/1 cells. Unknown ids are counted on the report; conflicting
    duplicates raise :class:`LoadError`.
    """
    report = report if report is not None else LoadReport()
    ldf = _read_csv(labels_path, ("firm_id",), optional=("discreditable",))
    report.labels_read += len(ldf)
    lids = _require_filled(ldf, "firm_id", labels_path)
    if "discreditable" in ldf.columns:
        raw = ldf["discreditable"].to_numpy(dtype=object)
        ok = np.fromiter((v in ("0", "1") for v in raw), dtype=bool,
                         count=len(raw))
        if not ok.all():
            line = int(np.flatnonzero(~ok)[0]) + 2
            raise LoadError(
                f"{labels_path}: line {line}: discreditable must be 0 or 1")
        lvals = raw == "1"
    else:
        lvals = np.ones(len(lids), dtype=bool)
    if non_firm_prefix:
        drop = np.fromiter((s.startswith(non_firm_prefix) for s in lids),
                           dtype=bool, count=len(lids))
        report.non_firm_rows_dropped += int(drop.sum())
        lids, lvals = lids[~drop], lvals[~drop]
    pos = pd.Index(graph.ids).get_indexer(lids)
    unknown = pos < 0
    report.unknown_label_ids += int(unknown.sum())
    pos, lvals, lids = pos[~unknown], lvals[~unknown], lids[~unknown]
    if len(pos):
        order = np.argsort(pos, kind="stable")
        sp_, sv = pos[order], lvals[order]
        clash = (sp_[1:] == sp_[:-1]) & (sv[1:] != sv[:-1])
        if clash.any():
            bad = lids[order][1:][clash][0]
            raise LoadError(
                f"{labels_path}: conflicting labels for firm {bad!r}")
        graph.labels[pos] = lvals
    return report


def attach_attributes(graph, attrs_path, non_firm_prefix=None, report=None):
    """Attribute table aligned to ``graph`` node order from an attrs CSV.

    Unknown ids are counted; duplicate rows must agree cell for cell or
    :class:`LoadError` is raised.
    """
    report = report if report is not None else LoadReport()
    attrs = AttributeTable.empty(graph.node_count)
    adf = _read_csv(attrs_path, ATTR_COLUMNS)
    report.attrs_read += len(adf)
    aids = _require_filled(adf, "firm_id", attrs_path)
    if non_firm_prefix:
        drop = np.fromiter((s.startswith(non_firm_prefix) for s in aids),
                           dtype=bool, count=len(aids))
        report.non_firm_rows_dropped += int(drop.sum())
        adf = adf.loc[~drop]
        aids = aids[~drop]
    rawcap = adf["registered_capital"].to_numpy(dtype=object)
    cap = pd.to_numeric(pd.Series(rawcap), errors="coerce").to_numpy()
    nonempty = np.fromiter((isinstance(v, str) and v != "" for v in rawcap),
                           dtype=bool, count=len(rawcap))
    bad = nonempty & (~np.isfinite(cap) | (cap < 0))
    if bad.any():
        line = int(adf.index[np.flatnonzero(bad)[0]]) + 2
        raise LoadError(f"{attrs_path}: line {line}: bad registered_capital")
    cap = np.where(nonempty, cap, np.nan)

    pos = pd.Index(graph.ids).get_indexer(aids)
    unknown = pos < 0
    report.unknown_attr_ids += int(unknown.sum())

    cat = {}
    for name in ATTR_CATEGORICALS:
        col = adf[name].to_numpy(dtype=object)
        cat[name] = np.array(
            [v if isinstance(v, str) and v != "" else None for v in col],
            dtype=object)

    known = np.flatnonzero(~unknown)
    if len(known):
        order = known[np.argsort(pos[known], kind="stable")]
        sp_ = pos[order]
        first_of_run = np.ones(len(order), dtype=bool)
        first_of_run[1:] = sp_[1:] != sp_[:-1]
        # Duplicate ids are rare; compare them row by row against the first
        # occurrence for that firm.
        run_first = np.maximum.accumulate(
            np.where(first_of_run, np.arange(len(order)), 0))
        for j in np.flatnonzero(~first_of_run):
            k, k0 = order[j], order[run_first[j]]
            same_cap = (np.isnan(cap[k]) and np.isnan(cap[k0])) \
                or cap[k] == cap[k0]
            if not same_cap or any(cat[n][k] != cat[n][k0]
                                   for n in ATTR_CATEGORICALS):
                raise LoadError(
                    f"{attrs_path}: conflicting attributes for firm "
                    f"{aids[k]!r}")
        firsts = order[first_of_run]
        dest = pos[firsts]
        attrs.capital[dest] = cap[firsts]
        for name in ATTR_CATEGORICALS:
            getattr(attrs, name)[dest] = cat[name][firsts]
        attrs.rows_present[dest] = True
    return attrs


def _sections(graph):
    yield "out_indptr", graph.out_indptr
    yield "out_indices", graph.out_indices
    yield "in_indptr", graph.in_indptr
    yield "in_indices", graph.in_indices
    yield "labels", graph.labels.astype(np.uint8)
    if graph.share is not None:
        yield "share", graph.share


def save_cache(graph, path):
    """Write the graph to a versioned, checksummed binary file."""
    for eid in graph.ids:
        if "\n" in eid:
            raise ValueError("external ids must not contain newlines")
    ids_blob = "\n".join(graph.ids).encode("utf-8")

    payload = io.BytesIO()
    sections = []
    for name, arr in _sections(graph):
        raw = np.ascontiguousarray(arr)
        buf = raw.tobytes()
        sections.append({"name": name, "dtype": str(raw.dtype),
                         "len": len(raw)})
        payload.write(buf)
    payload.write(ids_blob)
    body = payload.getvalue()

    header = {
        "node_count": graph.node_count,
        "edge_count": graph.edge_count,
        "has_share": graph.share is not None,
        "sections": sections,
        "ids_bytes": len(ids_blob),
        "sha256": hashlib.sha256(body).hexdigest(),
    }
    hjson = json.dumps(header, sort_keys=True).encode("utf-8")
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(CACHE_VERSION.to_bytes(2, "little"))
        fh.write(len(hjson).to_bytes(4, "little"))
        fh.write(hjson)
        fh.write(body)
    os.replace(tmp, path)


def load_cache(path):
    """Read a graph written by :func:`save_cache`.

    Raises :class:`CacheError` on magic/version mismatch or checksum failure.
    """
    with open(path, "rb") as fh:
        magic = fh.read(len(CACHE_MAGIC))
        if magic != CACHE_MAGIC:
            raise CacheError(f"{path}: not a firmnet graph cache")
        version = int.from_bytes(fh.read(2), "little")
        if version != CACHE_VERSION:
            raise CacheError(
                f"{path}: cache version {version}, expected {CACHE_VERSION}")
        hlen = int.from_bytes(fh.read(4), "little")
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CacheError(f"{path}: corrupt cache header: {exc}") from None
        body = fh.read()

    if hashlib.sha256(body).hexdigest() != header["sha256"]:
        raise CacheError(f"{path}: checksum mismatch")

    offset = 0
    arrays = {}
    for sec in header["sections"]:
        dtype = np.dtype(sec["dtype"])
        nbytes = dtype.itemsize * sec["len"]
        arrays[sec["name"]] = np.frombuffer(
            body, dtype=dtype, count=sec["len"], offset=offset).copy()
        offset += nbytes
    ids_blob = body[offset:offset + header["ids_bytes"]]
    text = ids_blob.decode("utf-8")
    ids = np.array(text.split("\n") if text else [], dtype=object)
    if len(ids) != header["node_count"]:
        raise CacheError(f"{path}: id table length mismatch")

    return FirmGraph(
        ids=ids,
        labels=arrays["labels"].astype(bool),
        out_indptr=arrays["out_indptr"],
        out_indices=arrays["out_indices"],
        in_indptr=arrays["in_indptr"],
        in_indices=arrays["in_indices"],
        share=arrays.get("share"),
    )
