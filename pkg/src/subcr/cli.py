"""Command-line surface.

Subcommands: inject, diffuse, train, score, eval, run, sweep. Every
subcommand reads the effective configuration (bundled defaults < config
file < flags) and treats --out as the run directory; file names inside it
are fixed by convention (model.bin, scores.csv, roc.csv, ...).

Exit codes: 0 success, 1 runtime or numerical failure, 2 usage or IO
problems.
"""

import argparse
import dataclasses
import hashlib
import itertools
import os
import sys
import time

import numpy as np

from . import config as cfgmod
from . import diffusion, evaluate, graph, inject, pipeline, plotting
from .errors import (CapacityError, ConfigError, ConvergenceError,
                     DimensionError, MalformedInputError, NumericalError,
                     SubcrError, UndefinedMetricError, UsageError)

_USAGE_ERRORS = (ConfigError, UsageError, MalformedInputError,
                 DimensionError)
_RUNTIME_ERRORS = (NumericalError, ConvergenceError, CapacityError,
                   UndefinedMetricError)


def _parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--dataset", help="dataset name (bundled defaults: "
                        + ", ".join(cfgmod.BUNDLED) + ")")
    common.add_argument("--seed", type=int, help="override train.seed")
    common.add_argument("--out", help="run directory (default runs/<name>)")
    common.add_argument("--variant", choices=pipeline.VARIANTS,
                        help="ablation variant")
    common.add_argument("--rounds", type=int,
                        help="override inference rounds")
    common.add_argument("--jobs", type=int, default=1,
                        help="parallel processes for sweep")

    p = argparse.ArgumentParser(
        prog="subcr",
        description="Subgraph-contrast anomaly detection for attributed "
                    "networks")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("inject", parents=[common],
                   help="write a dataset copy with injected anomalies")
    sub.add_parser("diffuse", parents=[common],
                   help="precompute and cache the diffusion matrix")
    sub.add_parser("train", parents=[common],
                   help="train and checkpoint a model")
    sub.add_parser("score", parents=[common],
                   help="score nodes with a trained checkpoint")
    sub.add_parser("eval", parents=[common],
                   help="ROC/AUC artifacts from scores.csv")
    sub.add_parser("run", parents=[common],
                   help="diffuse + train + score + eval in one go")
    sub.add_parser("sweep", parents=[common],
                   help="grid sweep over p, dim, gamma")
    return p


def _overrides(args):
    doc = {}
    if args.dataset:
        doc.setdefault("dataset", {})["name"] = args.dataset
    train = {}
    if args.seed is not None:
        train["seed"] = args.seed
    if args.variant:
        train["variant"] = args.variant
    if args.rounds is not None:
        train["rounds"] = args.rounds
    if train:
        doc["train"] = train
    if args.out:
        doc["output"] = {"dir": args.out}
    return doc


def _load_dataset(rc, need_labels=False):
    for label, path in (("edge list", rc.edges_path),
                        ("attribute table", rc.attributes_path)):
        if not path:
            raise UsageError(f"no {label} configured for dataset "
                             f"{rc.dataset!r}")
        if not os.path.exists(path):
            raise UsageError(f"{label} not found: {path}")
    labels_path = rc.labels_path
    if labels_path and not os.path.exists(labels_path):
        if need_labels:
            raise UsageError(f"label file not found: {labels_path}")
        labels_path = None
    if need_labels and not labels_path:
        raise UsageError(f"dataset {rc.dataset!r} has no labels; run "
                         "`subcr inject` first or point [dataset] labels "
                         "at a labeled copy")
    g = graph.load_graph(rc.edges_path, rc.attributes_path, labels_path)
    return graph.normalize_attributes(g, rc.attribute_norm)


def _graph_digest(g, rc):
    h = hashlib.sha256()
    h.update(g.edge_pairs().tobytes())
    h.update(f"{g.num_nodes},{rc.train.alpha},{rc.diffusion_method},"
             f"{rc.diffusion_topk},{rc.diffusion_tol}".encode())
    return h.hexdigest()[:20]


def _compute_diffusion(g, rc):
    method = rc.diffusion_method
    if method == "auto":
        method = "dense" if g.num_nodes <= 5000 else "iterative"
    if method == "dense":
        return diffusion.compute_ppr(g, alpha=rc.train.alpha)
    topk = rc.diffusion_topk or None
    return diffusion.compute_ppr_iterative(g, alpha=rc.train.alpha,
                                           tol=rc.diffusion_tol, topk=topk)


def _get_diffusion(g, rc, quiet=False):
    """Cache-aware diffusion: load when a cached copy exists, else compute
    (and store it when a cache directory is configured)."""
    cache_path = None
    if rc.cache_dir:
        cache_path = os.path.join(rc.cache_dir,
                                  f"ppr-{_graph_digest(g, rc)}.bin")
        if os.path.exists(cache_path):
            if not quiet:
                print(f"diffusion cache hit: {cache_path}")
            return diffusion.load_diffusion(cache_path)
    s = _compute_diffusion(g, rc)
    if cache_path:
        os.makedirs(rc.cache_dir, exist_ok=True)
        diffusion.save_diffusion(s, cache_path)
        if not quiet:
            print(f"diffusion cached: {cache_path}")
    return s


def _run_dir(rc):
    os.makedirs(rc.out_dir, exist_ok=True)
    return rc.out_dir


# ------------------------------------------------------------- subcommands

def cmd_inject(rc):
    g = _load_dataset(rc)
    if rc.injection_total <= 0:
        raise ConfigError("[injection] total must be set for inject")
    plan = inject.plan_for_total(rc.injection_total, rc.clique_size,
                                 rc.candidate_pool, seed=rc.train.seed)
    result = inject.inject(g, plan)
    out = os.path.join(_run_dir(rc), "dataset")
    os.makedirs(out, exist_ok=True)
    graph.export_graph(result.graph,
                       os.path.join(out, "edges.txt"),
                       os.path.join(out, "attributes.csv"),
                       os.path.join(out, "labels.txt"))
    inject.write_manifest(plan, result, os.path.join(out, "manifest.json"))
    with open(os.path.join(out, "dataset.toml"), "w") as fh:
        fh.write(f'# generated by subcr inject (seed {rc.train.seed})\n'
                 f'[dataset]\nname = "{rc.dataset}"\n'
                 f'edges = "edges.txt"\nattributes = "attributes.csv"\n'
                 f'labels = "labels.txt"\n'
                 f'attribute_norm = "{rc.attribute_norm}"\n')
    print(f"injected {plan.total()} anomalies "
          f"({plan.num_cliques * plan.clique_size} structural, "
          f"{plan.num_attribute_anomalies} attribute) -> {out}")
    return 0


def cmd_diffuse(rc):
    g = _load_dataset(rc)
    out = _run_dir(rc)
    s = _compute_diffusion(g, rc)
    path = os.path.join(out, "diffusion.bin")
    diffusion.save_diffusion(s, path)
    kind = "sparse" if s.is_sparse else "dense"
    print(f"diffusion matrix ({kind}, {s.num_nodes} nodes, "
          f"alpha {s.alpha}) -> {path}")
    if rc.cache_dir:
        cache_path = os.path.join(rc.cache_dir,
                                  f"ppr-{_graph_digest(g, rc)}.bin")
        os.makedirs(rc.cache_dir, exist_ok=True)
        diffusion.save_diffusion(s, cache_path)
        print(f"diffusion cached: {cache_path}")
    return 0


def _load_or_compute_diffusion(g, rc):
    local = os.path.join(rc.out_dir, "diffusion.bin")
    if os.path.exists(local):
        s = diffusion.load_diffusion(local)
        if s.num_nodes == g.num_nodes and s.alpha == rc.train.alpha:
            return s
        print(f"ignoring stale {local} (shape or alpha mismatch)",
              file=sys.stderr)
    return _get_diffusion(g, rc)


def cmd_train(rc):
    g = _load_dataset(rc)
    s = _load_or_compute_diffusion(g, rc)
    out = _run_dir(rc)
    t0 = time.monotonic()
    params, history = pipeline.train(rc.train, g, s)
    elapsed = time.monotonic() - t0
    pipeline.save_model(params, os.path.join(out, "model.bin"))
    pipeline.write_epoch_log(history, os.path.join(out, "loss.csv"))
    plotting.loss_figure(history, os.path.join(out, "loss.svg"))
    print(f"trained {rc.train.epochs} epochs in {elapsed:.1f}s, "
          f"final loss {history[-1]['loss_total']:.6f} -> {out}/model.bin")
    return 0


def cmd_score(rc):
    g = _load_dataset(rc)
    s = _load_or_compute_diffusion(g, rc)
    out = _run_dir(rc)
    model_path = os.path.join(out, "model.bin")
    if not os.path.exists(model_path):
        raise UsageError(f"no checkpoint at {model_path}; run "
                         "`subcr train` first")
    params = pipeline.load_model(model_path)
    report = pipeline.infer(params, rc.train, g, s)
    pipeline.write_scores(report, os.path.join(out, "scores.csv"))
    plotting.score_histogram(report, os.path.join(out, "score_hist.svg"))
    note = " (low-round smoke)" if report.low_rounds else ""
    print(f"scored {g.num_nodes} nodes over {report.rounds} rounds{note} "
          f"-> {out}/scores.csv")
    return 0


def _evaluate_report(rc, report):
    if report.labels is None:
        raise UsageError("scores carry no labels; evaluation needs a "
                         "labeled dataset")
    roc = evaluate.compute_roc(report.combined, report.labels)
    extra = {"dataset": rc.dataset, "variant": rc.train.variant,
             "config": cfgmod.effective_dict(rc)}
    evaluate.emit_report(roc, report, rc.out_dir, extra=extra)
    return roc


def cmd_eval(rc):
    out = _run_dir(rc)
    scores_path = os.path.join(out, "scores.csv")
    if not os.path.exists(scores_path):
        raise UsageError(f"no scores at {scores_path}; run `subcr score` "
                         "first")
    report = pipeline.read_scores(scores_path)
    report.config_hash = pipeline.config_hash(rc.train)
    report.seed = rc.train.seed
    report.rounds = rc.train.rounds
    report.low_rounds = rc.train.rounds < pipeline.LOW_ROUNDS
    plotting.score_histogram(report, os.path.join(out, "score_hist.svg"))
    roc = _evaluate_report(rc, report)
    print(f"AUC {roc.auc:.6f} dataset={rc.dataset} "
          f"variant={rc.train.variant} seed={rc.train.seed}")
    return 0


def cmd_run(rc):
    g = _load_dataset(rc, need_labels=True)
    s = _load_or_compute_diffusion(g, rc)
    out = _run_dir(rc)
    t0 = time.monotonic()
    params, history = pipeline.train(rc.train, g, s)
    pipeline.save_model(params, os.path.join(out, "model.bin"))
    pipeline.write_epoch_log(history, os.path.join(out, "loss.csv"))
    plotting.loss_figure(history, os.path.join(out, "loss.svg"))
    report = pipeline.infer(params, rc.train, g, s)
    pipeline.write_scores(report, os.path.join(out, "scores.csv"))
    plotting.score_histogram(report, os.path.join(out, "score_hist.svg"))
    roc = _evaluate_report(rc, report)
    elapsed = time.monotonic() - t0
    note = " low_rounds=1" if report.low_rounds else ""
    print(f"AUC {roc.auc:.6f} dataset={rc.dataset} "
          f"variant={rc.train.variant} seed={rc.train.seed} "
          f"rounds={report.rounds} time={elapsed:.1f}s{note}")
    return 0


# ------------------------------------------------------------------- sweep

_SWEEP_STATE = {}


def _sweep_point(item):
    index, (p, dim, gamma) = item
    g = _SWEEP_STATE["graph"]
    s = _SWEEP_STATE["diffusion"]
    base = _SWEEP_STATE["train"]
    t0 = time.monotonic()
    try:
        cfg = dataclasses.replace(base, p=p, dim=dim, gamma=gamma)
        params, _ = pipeline.train(cfg, g, s)
        report = pipeline.infer(params, cfg, g, s)
        auc = evaluate.compute_auc(report.combined, report.labels)
        return index, p, dim, gamma, auc, time.monotonic() - t0, ""
    except (SubcrError, FloatingPointError) as exc:
        return (index, p, dim, gamma, float("nan"),
                time.monotonic() - t0, f"{type(exc).__name__}: {exc}")


def cmd_sweep(rc, jobs=1):
    grids = {key: rc.sweep.get(key) for key in ("p", "dim", "gamma")}
    for key, grid in grids.items():
        if not grid:
            raise UsageError(f"sweep grid for {key!r} is empty; set "
                             f"[sweep] {key} in the config")
    g = _load_dataset(rc, need_labels=True)
    s = _load_or_compute_diffusion(g, rc)
    points = list(itertools.product(grids["p"], grids["dim"],
                                    grids["gamma"]))
    _SWEEP_STATE.update(graph=g, diffusion=s, train=rc.train)
    items = list(enumerate(points))
    if jobs > 1:
        # fork-based pool: workers inherit _SWEEP_STATE without pickling
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = sorted(pool.map(_sweep_point, items))
    else:
        rows = [_sweep_point(item) for item in items]
    out = _run_dir(rc)
    path = os.path.join(out, "sweep.csv")
    with open(path, "w", newline="") as fh:
        fh.write("p,dim,gamma,auc,runtime_s,error\n")
        for _, p, dim, gamma, auc, runtime, error in rows:
            auc_txt = "" if np.isnan(auc) else repr(float(auc))
            fh.write(f"{p},{dim},{float(gamma)!r},{auc_txt},"
                     f"{runtime:.2f},{error}\n")
    failures = sum(1 for r in rows if r[6])
    print(f"swept {len(rows)} points ({failures} failed) -> {path}")
    return 0


# -------------------------------------------------------------------- main

def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        rc = cfgmod.load_run_config(config_path=args.config,
                                    dataset=args.dataset,
                                    overrides=_overrides(args))
        if args.command == "inject":
            return cmd_inject(rc)
        if args.command == "diffuse":
            return cmd_diffuse(rc)
        if args.command == "train":
            return cmd_train(rc)
        if args.command == "score":
            return cmd_score(rc)
        if args.command == "eval":
            return cmd_eval(rc)
        if args.command == "run":
            return cmd_run(rc)
        if args.command == "sweep":
            return cmd_sweep(rc, jobs=max(1, args.jobs))
        raise UsageError(f"unknown command {args.command!r}")
    except _USAGE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
