"""Command-line surface.

Subcommands: ingest, stats, aggregation, neighbor-effect, features,
train-eval, synth, run. A flat ``key = value`` config file can preload any
flag; explicit flags win. All randomness descends from --seed.
"""

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import reports
from .aggregation import (aggregation_stats, aggregation_summary,
                          null_aggregation)
from .classifier import cross_validate, default_s_grid, train, weight_report
from .features import (FEATURE_GROUPS, FeatureSchema, assemble_dataset,
                       export_dataset_csv)
from .graph_store import (AttributeTable, LoadError, attach_attributes,
                          attach_labels, load_cache, load_graph, save_cache)
from .propagation import (DIRECTIONS, PatternMatrices, default_patterns,
                          influence_by_distance, lm_curve)
from .synthgen import GenParams, generate_corpus
from .topology import (components, cycle_effect, degree_distribution,
                       fit_power_law, fit_zipf, graph_stats,
                       zipf_to_powerlaw_exponent)

logger = logging.getLogger(__name__)

STAGES = ("stats", "aggregation", "neighbor-effect", "features", "train-eval")

_CONFIG_SCHEMA = {
    "edges": str, "labels": str, "attrs": str, "cache": str,
    "non_firm_prefix": str, "out": str, "schema": str, "stages": str,
    "groups": str, "group": str, "s_grid": str,
    "seed": int, "threads": int, "trials": int, "min_disc": int,
    "m_max": int, "min_denominator": int, "d_max": int, "folds": int,
    "max_iter": int, "n": int, "exclude_top": int, "sweeps": int,
    "l2": float, "tol": float, "bin_width": float, "avg_degree": float,
    "alpha": float, "giant_fraction": float, "zipf": float, "q0": float,
    "beta": float, "decay": float, "bias": float, "missing_rate": float,
    "attr_corr": float, "join_allowance": float,
    "within": bool,
}

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


def read_config(path):
    """Flat ``key = value`` file; '#' comments and blank lines ignored."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise LoadError(f"{path}: line {ln}: expected key = value")
            key, val = line.split("=", 1)
            key = key.strip().replace("-", "_")
            val = val.strip()
            if key not in _CONFIG_SCHEMA:
                raise LoadError(f"{path}: line {ln}: unknown key {key!r}")
            caster = _CONFIG_SCHEMA[key]
            if caster is bool:
                low = val.lower()
                if low in _TRUE:
                    out[key] = True
                elif low in _FALSE:
                    out[key] = False
                else:
                    raise LoadError(
                        f"{path}: line {ln}: {key} must be true or false")
            else:
                try:
                    out[key] = caster(val)
                except ValueError:
                    raise LoadError(
                        f"{path}: line {ln}: bad value for {key}") from None
    return out


def _add_common(p):
    p.add_argument("--config", metavar="FILE",
                   help="flat key=value defaults, overridden by flags")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--threads", type=int, help="cap worker threads")
    p.add_argument("-v", "--verbose", action="count", default=0)


def _add_inputs(p):
    p.add_argument("--edges", help="edges CSV (investor_id,investee_id)")
    p.add_argument("--labels", help="labels CSV")
    p.add_argument("--attrs", help="attributes CSV")
    p.add_argument("--cache", help="binary graph cache from `ingest`")
    p.add_argument("--non-firm-prefix",
                   help="drop rows whose ids start with this marker")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="firmnet",
        description="Ownership-network risk analytics: component stats, "
                    "label aggregation nulls, neighbor-effect curves, and a "
                    "network-feature classifier.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load CSVs and write a binary cache")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--out", required=True, help="cache file to write")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="degree, component and tail statistics")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--exclude-top", type=int, default=2,
                   help="largest components dropped from the Zipf fit")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("aggregation",
                       help="per-component label clustering vs permutation "
                            "null")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--min-disc", type=int, default=2,
                   help="eligibility threshold on marked nodes per component")
    p.add_argument("--bin-width", type=float, default=0.05)
    p.set_defaults(func=cmd_aggregation)

    p = sub.add_parser("neighbor-effect",
                       help="L(m) curves and distance-pattern lift")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--m-max", type=int, default=None,
                   help="largest m; defaults to the last well-populated row")
    p.add_argument("--min-denominator", type=int, default=100)
    p.add_argument("--d-max", type=int, default=3)
    p.add_argument("--within", action="store_true",
                   help="undirected patterns use distance <= d, not exact d")
    p.set_defaults(func=cmd_neighbor_effect)

    p = sub.add_parser("features", help="export a feature matrix as CSV")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--group", choices=FEATURE_GROUPS, default="combined")
    p.add_argument("--schema", help="feature schema JSON (default: derive)")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train-eval",
                       help="k-fold precision@S per feature group")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--groups", default=",".join(FEATURE_GROUPS),
                   help="comma list of feature groups")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--s-grid", help="comma list of absolute S cutoffs")
    p.add_argument("--schema", help="feature schema JSON (default: derive)")
    p.set_defaults(func=cmd_train_eval)

    gp = GenParams(n_nodes=2)
    p = sub.add_parser("synth", help="generate a synthetic corpus")
    _add_common(p)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--avg-degree", type=float, default=gp.target_avg_degree)
    p.add_argument("--alpha", type=float, default=gp.in_degree_exponent,
                   help="in-degree tail exponent")
    p.add_argument("--giant-fraction", type=float, default=gp.giant_fraction)
    p.add_argument("--zipf", type=float, default=gp.tail_zipf_exponent,
                   help="component-size Zipf exponent")
    p.add_argument("--q0", type=float, default=gp.q0)
    p.add_argument("--beta", type=float, default=gp.beta)
    p.add_argument("--decay", type=float, default=gp.decay)
    p.add_argument("--bias", type=float, default=gp.investee_bias,
                   help="investee over investor contagion ratio")
    p.add_argument("--sweeps", type=int, default=gp.sweeps)
    p.add_argument("--missing-rate", type=float, default=gp.missing_attr_rate)
    p.add_argument("--attr-corr", type=float,
                   default=gp.attr_label_correlation)
    p.add_argument("--join-allowance", type=float, default=gp.join_allowance)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("run", help="full pipeline into one report bundle")
    _add_common(p)
    _add_inputs(p)
    p.add_argument("--out", required=True)
    p.add_argument("--stages", default=",".join(STAGES),
                   help=f"comma list from {','.join(STAGES)}")
    p.add_argument("--exclude-top", type=int, default=2)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument("--min-disc", type=int, default=2)
    p.add_argument("--bin-width", type=float, default=0.05)
    p.add_argument("--m-max", type=int, default=None)
    p.add_argument("--min-denominator", type=int, default=100)
    p.add_argument("--d-max", type=int, default=3)
    p.add_argument("--within", action="store_true")
    p.add_argument("--groups", default=",".join(FEATURE_GROUPS))
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--l2", type=float, default=0.0)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--s-grid")
    p.add_argument("--schema")
    p.set_defaults(func=cmd_run)

    return parser, sub.choices


def _load_inputs(ns):
    """(graph, attrs) from --cache and/or the CSV flags."""
    if ns.cache:
        graph = load_cache(ns.cache)
        if ns.labels:
            attach_labels(graph, ns.labels,
                          non_firm_prefix=ns.non_firm_prefix)
        if ns.attrs:
            attrs = attach_attributes(graph, ns.attrs,
                                      non_firm_prefix=ns.non_firm_prefix)
        else:
            attrs = AttributeTable.empty(graph.node_count)
        return graph, attrs
    if not ns.edges:
        raise LoadError("need --edges or --cache")
    res = load_graph(ns.edges, labels_path=ns.labels, attrs_path=ns.attrs,
                     non_firm_prefix=ns.non_firm_prefix)
    return res.graph, res.attributes


def _resolve_schema(ns, attrs):
    if getattr(ns, "schema", None):
        return FeatureSchema.from_json(ns.schema)
    return FeatureSchema.from_attributes(attrs)


def stage_stats(graph, outdir, exclude_top=2):
    comps = components(graph, "weak")
    stats = dict(graph_stats(graph))
    n = graph.node_count
    stats.update({
        "nodes": n,
        "edges": graph.edge_count,
        "discreditable": int(graph.labels.sum()),
        "discreditable_rate": float(graph.labels.mean()) if n else 0.0,
        "weak_components": comps.count,
        "giant_size": int(comps.sizes.max()) if comps.count else 0,
    })
    stats["giant_fraction"] = stats["giant_size"] / n if n else 0.0

    if graph.labels.any():
        cyc = cycle_effect(graph)
        stats["p_on_cycle"] = cyc["p_on_cycle"]
        stats["cycle_increment_rate"] = cyc["increment_rate"]
        stats["nodes_on_cycles"] = cyc["nodes_on_cycles"]

    deg = graph.in_degrees()
    try:
        fit = fit_power_law(deg[deg > 0])
        stats.update({
            "in_degree_alpha": fit.alpha, "in_degree_xmin": fit.xmin,
            "in_degree_sigma": fit.sigma, "in_degree_ks": fit.ks,
            "in_degree_tail_n": fit.n_tail,
        })
    except ValueError as exc:
        logger.warning("in-degree power-law fit skipped: %s", exc)

    try:
        zf = fit_zipf(comps.sizes_descending(), exclude_top=exclude_top)
        stats.update({
            "component_zipf_exponent": zf.exponent,
            "component_zipf_r_squared": zf.r_squared,
            "component_zipf_implied_alpha":
                zipf_to_powerlaw_exponent(zf.exponent),
        })
    except ValueError as exc:
        logger.warning("component Zipf fit skipped: %s", exc)

    paths = []

    def out(name):
        paths.append(os.path.join(outdir, name))
        return paths[-1]

    reports.write_stats(out("stats.csv"), out("stats.json"), stats)
    for direction in DIRECTIONS:
        values, counts = degree_distribution(graph, direction)
        reports.write_degree_hist(out(f"degree_hist_{direction}.csv"),
                                  values, counts)
    reports.write_component_sizes(out("component_sizes.csv"), comps)
    return paths


def stage_aggregation(graph, outdir, trials, min_disc, bin_width, seed):
    comps = components(graph, "weak")
    stats = aggregation_stats(graph, comps, min_disc=min_disc)
    null = null_aggregation(graph, comps, stats, trials=trials, seed=seed)
    summary = aggregation_summary(stats, null)
    if summary is None:
        logger.warning("no eligible component for aggregation analysis")

    paths = [os.path.join(outdir, f) for f in
             ("aggregation.csv", "aggregation_summary.json",
              "r_histogram.csv")]
    reports.write_aggregation(paths[0], stats, null)
    reports.write_json(paths[1], summary)
    reports.write_r_histogram(paths[2], stats, null, bin_width=bin_width)
    return paths


def stage_neighbor_effect(graph, outdir, m_max, min_denominator, d_max,
                          within):
    curves = {d: lm_curve(graph, d, m_max=m_max,
                          min_denominator=min_denominator)
              for d in DIRECTIONS}
    cache = PatternMatrices(graph)
    records = influence_by_distance(graph, patterns=default_patterns(d_max),
                                    within=within, matrices=cache)
    paths = [os.path.join(outdir, f)
             for f in ("lm_curves.csv", "influence.csv")]
    reports.write_lm_curves(paths[0], curves)
    reports.write_influence(paths[1], records)
    return paths


def stage_features(graph, attrs, schema, outdir, groups):
    """Assemble aligned datasets; emits the schema and a shape summary."""
    mask = attrs.complete_mask(schema)
    if not mask.any():
        raise LoadError("no firm has complete attributes")
    cache = PatternMatrices(graph)
    datasets = {g: assemble_dataset(graph, attrs, schema, g, row_mask=mask,
                                    matrices=cache)
                for g in groups}
    paths = [os.path.join(outdir, f)
             for f in ("feature_schema.json", "features_summary.json")]
    schema.to_json(paths[0])
    reports.write_json(paths[1], {
        "rows": int(next(iter(datasets.values())).n_rows),
        "dims": {g: int(ds.dim) for g, ds in datasets.items()},
        "groups": list(groups),
    })
    return datasets, paths


def stage_train_eval(datasets, outdir, folds, seed, l2, tol, max_iter,
                     s_grid):
    n_rows = next(iter(datasets.values())).n_rows
    if s_grid is None:
        s_grid = default_s_grid(n_rows, folds)
    evals = cross_validate(datasets, k=folds, seed=seed, s_grid=s_grid,
                           l2=l2, tol=tol, max_iter=max_iter)

    report_group = "combined" if "combined" in datasets else list(datasets)[-1]
    model = train(datasets[report_group], l2=l2, tol=tol, max_iter=max_iter)
    rows, ratio = weight_report(model)

    paths = [os.path.join(outdir, f) for f in
             ("precision.csv", "weights.csv", "model.json",
              "train_summary.json")]
    reports.write_precision(paths[0], evals, s_grid)
    reports.write_weights(paths[1], rows)
    reports.write_model(paths[2], model)
    reports.write_json(paths[3], {
        "groups": sorted(datasets),
        "folds": folds,
        "s_grid": [int(s) for s in s_grid],
        "skipped_folds": {g: ev.skipped_folds for g, ev in evals.items()},
        "weight_model_group": report_group,
        "top_network_over_individual": ratio,
        "model_converged": model.converged,
    })
    return paths


def cmd_ingest(ns):
    res = load_graph(ns.edges, labels_path=ns.labels, attrs_path=ns.attrs,
                     non_firm_prefix=ns.non_firm_prefix)
    save_cache(res.graph, ns.out)
    r = res.report
    print(f"nodes={res.graph.node_count} edges={res.graph.edge_count} "
          f"discreditable={int(res.graph.labels.sum())}")
    print(f"dropped: self_loops={r.self_loops_dropped} "
          f"duplicates={r.duplicate_edges_dropped} "
          f"non_firm={r.non_firm_rows_dropped} "
          f"unknown_labels={r.unknown_label_ids} "
          f"unknown_attrs={r.unknown_attr_ids}")
    print(f"cache written: {ns.out}")
    return 0


def cmd_stats(ns):
    graph, _ = _load_inputs(ns)
    os.makedirs(ns.out, exist_ok=True)
    for p in stage_stats(graph, ns.out, exclude_top=ns.exclude_top):
        print(p)
    return 0


def cmd_aggregation(ns):
    graph, _ = _load_inputs(ns)
    os.makedirs(ns.out, exist_ok=True)
    for p in stage_aggregation(graph, ns.out, ns.trials, ns.min_disc,
                               ns.bin_width, ns.seed):
        print(p)
    return 0


def cmd_neighbor_effect(ns):
    graph, _ = _load_inputs(ns)
    os.makedirs(ns.out, exist_ok=True)
    for p in stage_neighbor_effect(graph, ns.out, ns.m_max,
                                   ns.min_denominator, ns.d_max, ns.within):
        print(p)
    return 0


def cmd_features(ns):
    graph, attrs = _load_inputs(ns)
    os.makedirs(ns.out, exist_ok=True)
    schema = _resolve_schema(ns, attrs)
    datasets, paths = stage_features(graph, attrs, schema, ns.out,
                                     (ns.group,))
    csv_path = os.path.join(ns.out, f"features_{ns.group}.csv")
    export_dataset_csv(datasets[ns.group], csv_path)
    for p in paths + [csv_path]:
        print(p)
    return 0


def cmd_train_eval(ns):
    graph, attrs = _load_inputs(ns)
    os.makedirs(ns.out, exist_ok=True)
    schema = _resolve_schema(ns, attrs)
    groups = _parse_groups(ns.groups)
    datasets, paths = stage_features(graph, attrs, schema, ns.out, groups)
    s_grid = _parse_s_grid(ns.s_grid)
    paths += stage_train_eval(datasets, ns.out, ns.folds, ns.seed, ns.l2,
                              ns.tol, ns.max_iter, s_grid)
    for p in paths:
        print(p)
    return 0


def cmd_synth(ns):
    params = GenParams(
        n_nodes=ns.n,
        target_avg_degree=ns.avg_degree,
        in_degree_exponent=ns.alpha,
        giant_fraction=ns.giant_fraction,
        tail_zipf_exponent=ns.zipf,
        q0=ns.q0,
        beta=ns.beta,
        decay=ns.decay,
        investee_bias=ns.bias,
        sweeps=ns.sweeps,
        missing_attr_rate=ns.missing_rate,
        attr_label_correlation=ns.attr_corr,
        join_allowance=ns.join_allowance,
        seed=ns.seed,
    )
    graph, attrs, schema, truth, meta = generate_corpus(params)
    os.makedirs(ns.out, exist_ok=True)
    paths = {name: os.path.join(ns.out, name) for name in
             ("edges.csv", "labels.csv", "attrs.csv", "schema.json",
              "ground_truth.json")}
    reports.write_edges_csv(paths["edges.csv"], graph)
    reports.write_labels_csv(paths["labels.csv"], graph)
    reports.write_attrs_csv(paths["attrs.csv"], graph, attrs)
    schema.to_json(paths["schema.json"])
    reports.write_ground_truth(paths["ground_truth.json"], graph, truth,
                               meta)
    print(f"nodes={graph.node_count} edges={graph.edge_count} "
          f"avg_degree={meta['avg_degree']:.4f} "
          f"discreditable_rate={truth['final_rate']:.4f}")
    for p in paths.values():
        print(p)
    return 0


def _parse_groups(text):
    groups = tuple(g.strip() for g in text.split(",") if g.strip())
    for g in groups:
        if g not in FEATURE_GROUPS:
            raise LoadError(f"unknown feature group {g!r}")
    if not groups:
        raise LoadError("no feature groups requested")
    return groups


def _parse_s_grid(text):
    if not text:
        return None
    try:
        grid = sorted({int(s) for s in text.split(",") if s.strip()})
    except ValueError:
        raise LoadError(f"bad S grid {text!r}") from None
    if not grid:
        raise LoadError("empty S grid")
    return np.array(grid, dtype=np.int64)


def _parse_stages(text):
    stages = [s.strip() for s in text.split(",") if s.strip()]
    for s in stages:
        if s not in STAGES:
            raise LoadError(f"unknown stage {s!r}")
    if "train-eval" in stages and "features" not in stages:
        stages.append("features")
    return [s for s in STAGES if s in stages]


def cmd_run(ns):
    os.makedirs(ns.out, exist_ok=True)
    requested = _parse_stages(ns.stages)
    cfg = {k: v for k, v in sorted(vars(ns).items())
           if k not in ("func", "verbose", "config", "out")
           and v is not None}
    manifest = reports.Manifest(ns.seed, config=cfg, base_dir=ns.out)
    for name in ("edges", "labels", "attrs", "cache", "schema"):
        path = getattr(ns, name, None)
        if path:
            manifest.add_input(name, path)

    timings = {}
    failed = None

    def run_stage(name, fn):
        nonlocal failed
        if failed is not None:
            manifest.skip_stage(name, f"stage {failed} failed")
            return None
        entry = manifest.start_stage(name)
        t0 = time.perf_counter()
        try:
            result, outputs = fn()
        except Exception as exc:  # noqa: BLE001 - manifest must record it
            timings[name] = time.perf_counter() - t0
            manifest.fail_stage(entry, exc)
            failed = name
            logger.error("stage %s failed: %s", name, exc)
            return None
        timings[name] = time.perf_counter() - t0
        manifest.finish_stage(entry, outputs)
        print(f"stage {name}: ok ({timings[name]:.2f}s)")
        return result

    # run_stage short-circuits into skip_stage once `failed` is set, so the
    # lambdas below are never evaluated after an upstream failure
    loaded = run_stage("load", lambda: (_load_inputs(ns), []))
    graph = attrs = None
    if loaded is not None:
        graph, attrs = loaded

    if "stats" in requested:
        run_stage("stats",
                  lambda: (None, stage_stats(graph, ns.out,
                                             exclude_top=ns.exclude_top)))
    if "aggregation" in requested:
        run_stage("aggregation",
                  lambda: (None, stage_aggregation(
                      graph, ns.out, ns.trials, ns.min_disc, ns.bin_width,
                      ns.seed)))
    if "neighbor-effect" in requested:
        run_stage("neighbor-effect",
                  lambda: (None, stage_neighbor_effect(
                      graph, ns.out, ns.m_max, ns.min_denominator, ns.d_max,
                      ns.within)))

    datasets = None
    if "features" in requested:
        def _features():
            schema = _resolve_schema(ns, attrs)
            return stage_features(graph, attrs, schema, ns.out,
                                  _parse_groups(ns.groups))
        datasets = run_stage("features", _features)

    if "train-eval" in requested:
        run_stage("train-eval",
                  lambda: (None, stage_train_eval(
                      datasets, ns.out, ns.folds, ns.seed, ns.l2, ns.tol,
                      ns.max_iter, _parse_s_grid(ns.s_grid))))

    manifest.write(os.path.join(ns.out, "manifest.json"))
    reports.write_timings(os.path.join(ns.out, "timings.json"), timings)
    if failed is not None:
        print(f"stage {failed} failed; see manifest", file=sys.stderr)
        return 2
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser, commands = build_parser()

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        try:
            cfg = read_config(known.config)
        except (OSError, LoadError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        # subparsers parse into a fresh namespace, so defaults set on the
        # top-level parser never reach them; push config onto each command
        for sp in commands.values():
            accepted = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items()
                               if k in accepted})

    ns = parser.parse_args(argv)
    logging.basicConfig(
        level=max(logging.WARNING - 10 * ns.verbose, logging.DEBUG),
        format="%(levelname)s %(name)s: %(message)s")
    if ns.threads:
        import numba
        numba.set_num_threads(
            max(1, min(ns.threads, numba.config.NUMBA_NUM_THREADS)))

    try:
        return ns.func(ns)
    except (OSError, LoadError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
