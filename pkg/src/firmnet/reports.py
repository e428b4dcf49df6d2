"""Report bundle writers.

Every numeric cell goes through ``repr(float(v))`` (or ``str(int(v))``), so
two runs with the same inputs and seed produce byte-identical files. Wall
clock goes only to timings.json, which is the one file allowed to differ
between otherwise identical runs.
"""

import hashlib
import json
import os
from importlib import metadata

import numpy as np
import pandas as pd

from .features import network_feature_names
from .graph_store import ATTR_COLUMNS

R_HIST_BIN = 0.05


def fmt(v):
    """Deterministic cell text: shortest round-trip repr, '' for missing."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if np.isnan(v):
            return ""
        return repr(v)
    return str(v)


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        obj = float(obj)
    if isinstance(obj, float) and np.isnan(obj):
        return None
    return obj


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def file_sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_lm_curves(path, curves):
    """``curves`` maps direction -> NeighborEffectCurve."""
    rows = []
    for direction in ("out", "in", "undirected"):
        c = curves.get(direction)
        if c is None:
            continue
        for j in range(len(c.m)):
            rows.append((c.direction, c.m[j], c.denominator[j],
                         c.numerator[j], c.L[j]))
    write_csv(path, ("direction", "m", "denominator", "numerator", "L"), rows)


def write_influence(path, records):
    rows = [(r.pattern, r.baseline, r.conditional, r.increment_rate,
             r.denominator) for r in records]
    write_csv(path, ("pattern", "baseline", "conditional", "increment_rate",
                     "denominator"), rows)


def write_aggregation(path, stats, null):
    rows = []
    for i in range(len(stats.r)):
        nm = null.mean[i] if null is not None else None
        ns = null.std[i] if null is not None else None
        rows.append((stats.component_id[i], stats.size[i], stats.n_disc[i],
                     stats.s_max[i], stats.r[i], nm, ns))
    write_csv(path, ("component_id", "size", "N_c", "S_c", "r_c",
                     "null_mean", "null_std"), rows)


def _hist(values, bin_width):
    n_bins = int(np.ceil(round(1.0 / bin_width, 9)))
    counts = np.zeros(n_bins, dtype=np.int64)
    if len(values):
        bins = np.minimum((np.asarray(values) / bin_width).astype(np.int64),
                          n_bins - 1)
        np.add.at(counts, bins, 1)
    return counts


def write_r_histogram(path, stats, null, bin_width=R_HIST_BIN):
    """Binned p(r_c) next to binned p(mean null r_c)."""
    obs = _hist(stats.r, bin_width)
    nul = _hist(null.mean if null is not None else (), bin_width)
    total = max(1, len(stats.r))
    rows = []
    for i in range(len(obs)):
        rows.append((round(i * bin_width, 10),
                     round(min((i + 1) * bin_width, 1.0), 10),
                     obs[i], obs[i] / total, nul[i], nul[i] / total))
    write_csv(path, ("r_lo", "r_hi", "n_observed", "p_observed", "n_null",
                     "p_null"), rows)


def write_precision(path, evals, s_grid):
    rows = []
    for group in sorted(evals):
        ev = evals[group]
        for j, s in enumerate(s_grid):
            rows.append((group, s, ev.p_mean[j], ev.p_std[j]))
    write_csv(path, ("feature_group", "S", "P_mean", "P_std"), rows)


def write_weights(path, rows):
    write_csv(path, ("rank", "feature", "weight"), rows)


def write_degree_hist(path, values, counts):
    write_csv(path, ("degree", "count"), list(zip(values, counts)))


def write_component_sizes(path, comps):
    sizes = comps.sizes_descending()
    rows = [(i + 1, s) for i, s in enumerate(sizes)]
    write_csv(path, ("rank", "size"), rows)


def write_stats(csv_path, json_path, stats):
    write_csv(csv_path, ("stat", "value"), list(stats.items()))
    write_json(json_path, stats)


def write_model(path, model):
    write_json(path, model.to_dict())


def package_versions():
    out = {}
    for pkg in ("firmnet", "numpy", "scipy", "pandas", "numba"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = None
    return out


class Manifest:
    """Run manifest: inputs, config, stage statuses.

    No timestamps, and stage outputs are stored relative to the bundle
    directory, so identical config + seed gives a byte-identical file.
    """

    def __init__(self, seed, config=None, base_dir=None):
        self.base_dir = base_dir
        self.payload = {
            "seed": int(seed),
            "config": _jsonable(config or {}),
            "versions": package_versions(),
            "inputs": {},
            "stages": [],
        }

    def add_input(self, name, path):
        self.payload["inputs"][name] = {
            "path": str(path),
            "sha256": file_sha256(path),
        }

    def start_stage(self, name):
        entry = {"name": name, "status": "running", "outputs": []}
        self.payload["stages"].append(entry)
        return entry

    def finish_stage(self, entry, outputs=()):
        entry["status"] = "ok"
        rel = (os.path.relpath(p, self.base_dir) if self.base_dir else p
               for p in outputs)
        entry["outputs"] = sorted(str(p) for p in rel)

    def fail_stage(self, entry, error):
        entry["status"] = "failed"
        entry["error"] = str(error)

    def skip_stage(self, name, reason):
        self.payload["stages"].append(
            {"name": name, "status": "skipped", "reason": reason,
             "outputs": []})

    def write(self, path):
        write_json(path, self.payload)


def write_timings(path, timings):
    """Wall-clock sidecar; excluded from determinism comparisons."""
    write_json(path, {"stages": timings,
                      "total": float(sum(timings.values()))})


def write_edges_csv(path, graph):
    n = graph.node_count
    srcs = np.repeat(np.arange(n), np.diff(graph.out_indptr))
    df = pd.DataFrame({
        "investor_id": graph.ids[srcs],
        "investee_id": graph.ids[graph.out_indices],
    })
    df.to_csv(path, index=False, lineterminator="\n")


def write_labels_csv(path, graph):
    df = pd.DataFrame({"firm_id": graph.ids[graph.labels]})
    df.to_csv(path, index=False, lineterminator="\n")


def write_attrs_csv(path, graph, attrs):
    present = np.flatnonzero(attrs.rows_present)
    cap = attrs.capital[present]
    cap_text = np.array([fmt(v) if not np.isnan(v) else "" for v in cap],
                        dtype=object)
    cols = {"firm_id": graph.ids[present], "registered_capital": cap_text}
    for name in ATTR_COLUMNS[2:]:
        vals = getattr(attrs, name)[present]
        cols[name] = np.array([v if v is not None else "" for v in vals],
                              dtype=object)
    pd.DataFrame(cols).to_csv(path, index=False, lineterminator="\n")


def write_ground_truth(path, graph, truth, meta):
    sizes = np.asarray(meta["component_sizes"])
    payload = {
        "seeded_ids": graph.ids[truth["seeded"]].tolist(),
        "induced_ids": graph.ids[truth["induced"]].tolist(),
        "seed_rate": truth["seed_rate"],
        "final_rate": truth["final_rate"],
        "params": truth.get("params", {}),
        "plan": {
            "component_count": int(len(sizes)),
            "giant_size": int(sizes[0]) if len(sizes) else 0,
            "sizes_head": sizes[:1000].tolist(),
        },
        "zero_inflation": meta["zero_inflation"],
        "wired_edges": int(meta["wired_edges"]),
        "join_edges": int(meta["join_edges"]),
        "avg_degree": meta["avg_degree"],
    }
    write_json(path, payload)
