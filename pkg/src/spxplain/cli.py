"""Command-line entry point: segment / train / explain / fidelity / sweep.

Every subcommand is deterministic under a fixed --seed and writes all of its
artifacts (delimited CSVs plus rendered figures) inside --out.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import explain, fidelity, pipeline, plots
from .gat import GatConfig, init_params, predict
from .superpixel import SlicParams, save_graph_text
from .train import (TrainConfig, evaluate, load_checkpoint, save_checkpoint,
                    train, write_metrics_csv)

DATASETS = ("mnist", "fashion", "cifar10", "synthetic")


def _add_common(p):
    p.add_argument("--dataset", choices=DATASETS, default="synthetic")
    p.add_argument("--data-dir", default=None,
                   help=f"dataset root (default ${pipeline.DATA_DIR_ENV} or ./data)")
    p.add_argument("--k", type=int, default=75, help="desired superpixel count")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--subset", type=int, default=None,
                   help="truncate the split to this many items")


def _add_model(p):
    p.add_argument("--heads", type=int, default=3)
    p.add_argument("--layers", type=int, default=3)
    p.add_argument("--hidden", type=int, default=16, help="per-head width")


def _add_train(p):
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=32)


def _methods(arg):
    names = explain.METHODS if arg == "all" else tuple(arg.split(","))
    if not names or any(m not in explain.ALL_METHODS for m in names):
        raise argparse.ArgumentTypeError(
            f"methods must be 'all' or a comma list from {explain.ALL_METHODS}")
    return names


def build_parser():
    parser = argparse.ArgumentParser(
        prog="spxplain",
        description="Superpixel-graph image classification with attention-"
                    "network saliency explanations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment one image and export its graph")
    _add_common(p)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--index", type=int, default=0)

    p = sub.add_parser("train", help="train a model, write checkpoint + metrics")
    _add_common(p)
    _add_model(p)
    _add_train(p)

    p = sub.add_parser("explain", help="saliency overlays for one image")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--methods", type=_methods, default=explain.METHODS)
    p.add_argument("--class", dest="target_class", type=int, default=None,
                   help="saliency target class (default: predicted)")

    p = sub.add_parser("fidelity", help="occlusion fidelity threshold sweep")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--methods", type=_methods, default=explain.METHODS)
    p.add_argument("--thresholds", default=None,
                   help="comma list of thresholds in (0,1)")

    p = sub.add_parser("sweep", help="train per superpixel count, report accuracy")
    _add_common(p)
    _add_model(p)
    _add_train(p)
    p.add_argument("--k-list", default="25,75,150",
                   help="comma list of superpixel counts")

    return parser


def _slic(args):
    return SlicParams(k_segments=args.k)


def _log(msg):
    print(msg, flush=True)


# ---- subcommands -------------------------------------------------------------


def cmd_segment(args):
    ds = pipeline.get_split(args.dataset, args.split, args.data_dir,
                            subset=args.index + 1)
    if args.index >= len(ds):
        raise ValueError(f"index {args.index} out of range for split of {len(ds)}")
    img = ds.images[args.index]
    from .superpixel import image_to_graph
    g = image_to_graph(img, _slic(args), label=int(ds.labels[args.index]))
    base = os.path.join(args.out, f"{args.dataset}_{args.split}{args.index}_k{args.k}")
    ppm, png = plots.save_raster(base + "_boundaries",
                                 plots.boundary_image(img, g.segment_map))
    graph_path = base + "_graph.txt"
    save_graph_text(g, graph_path)
    _log(f"wrote {ppm}, {png}, {graph_path} ({g.n_nodes} nodes, {len(g.edges)} edges)")


def _train_model(args, train_graphs, val_graphs):
    in_features = train_graphs[0].node_features.shape[1]
    config = GatConfig(in_features=in_features, n_layers=args.layers,
                       n_heads=args.heads, head_dim=args.hidden)
    model = init_params(config, seed=args.seed)
    cfg = TrainConfig(epochs=args.epochs, learning_rate=args.lr,
                      batch_size=args.batch, seed=args.seed)
    model, history, state = train(
        model, train_graphs, val_graphs, cfg,
        log=lambda m: _log(f"epoch {m.epoch}: loss={m.loss:.4f} "
                           f"train={m.train_acc:.3f} val={m.val_acc:.3f} "
                           f"({m.seconds:.1f}s)"))
    return model, history, state


def cmd_train(args):
    cache = os.path.join(args.out, "graph_cache")
    params = _slic(args)
    train_graphs = pipeline.graphs_for_split(
        args.dataset, "train", args.data_dir, params, args.subset, cache, _log)
    val_subset = max(1, (args.subset or 2000) // 5)
    val_graphs = pipeline.graphs_for_split(
        args.dataset, "val", args.data_dir, params, val_subset, cache, _log)
    model, history, state = _train_model(args, train_graphs, val_graphs)

    ckpt = os.path.join(args.out, f"{args.dataset}_k{args.k}.ckpt")
    save_checkpoint(ckpt, model, state, history)
    metrics = os.path.join(args.out, f"{args.dataset}_k{args.k}_metrics.csv")
    write_metrics_csv(metrics, history)
    if history:
        plots.plot_training_curves(
            history, os.path.join(args.out, f"{args.dataset}_k{args.k}_curves.png"))
    _log(f"wrote {ckpt}, {metrics}")


def cmd_explain(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    ds = pipeline.get_split(args.dataset, args.split, args.data_dir,
                            subset=args.index + 1)
    img = ds.images[args.index]
    from .superpixel import image_to_graph
    g = image_to_graph(img, _slic(args), label=int(ds.labels[args.index]))
    if g.node_features.shape[1] != model.config.in_features:
        raise ValueError(
            f"checkpoint expects {model.config.in_features} node features, "
            f"graph has {g.node_features.shape[1]}")
    pred = predict(model, g)
    _log(f"label={g.label} predicted={pred} "
         f"target={'predicted' if args.target_class is None else args.target_class}")
    base = os.path.join(args.out, f"{args.dataset}_{args.split}{args.index}_k{args.k}")
    for method in args.methods:
        s = explain.compute_saliency(method, model, g, c=args.target_class)
        heat = explain.saliency_to_pixels(s)
        ppm, png = plots.save_raster(f"{base}_{method}",
                                     plots.overlay_image(img, heat))
        csv_path = f"{base}_{method}.csv"
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["node_index", "score"])
            for i, v in enumerate(s.node_scores):
                w.writerow([i, repr(float(v))])
        _log(f"wrote {ppm}, {png}, {csv_path}")


def cmd_fidelity(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    cache = os.path.join(args.out, "graph_cache")
    graphs = pipeline.graphs_for_split(
        args.dataset, args.split, args.data_dir, _slic(args),
        args.subset or 1000, cache, _log)
    thresholds = (fidelity.DEFAULT_THRESHOLDS if args.thresholds is None
                  else [float(v) for v in args.thresholds.split(",")])
    reports = fidelity.threshold_sweep(model, graphs, args.methods, thresholds)
    csv_path = os.path.join(args.out, f"{args.dataset}_k{args.k}_fidelity.csv")
    fidelity.write_fidelity_csv(csv_path, reports)
    plots.plot_fidelity_curves(
        reports, os.path.join(args.out, f"{args.dataset}_k{args.k}_fidelity.png"))
    for r in reports:
        _log(f"{r.method}: fidelity@{thresholds[0]}={r.fidelity_at[0]:.4f}")
    _log(f"wrote {csv_path}")


def cmd_sweep(args):
    ks = []
    for v in args.k_list.split(","):
        k = int(v)
        if k in ks:
            _log(f"warning: duplicate k={k} ignored")
        else:
            ks.append(k)
    cache = os.path.join(args.out, "graph_cache")
    rows = []
    for k in ks:
        params = SlicParams(k_segments=k)
        train_graphs = pipeline.graphs_for_split(
            args.dataset, "train", args.data_dir, params, args.subset, cache, _log)
        val_subset = max(1, (args.subset or 2000) // 5)
        val_graphs = pipeline.graphs_for_split(
            args.dataset, "val", args.data_dir, params, val_subset, cache, _log)
        test_graphs = pipeline.graphs_for_split(
            args.dataset, "test", args.data_dir, params, val_subset, cache, _log)
        model, _, _ = _train_model(args, train_graphs, val_graphs)
        acc = evaluate(model, test_graphs)
        rows.append((k, acc))
        _log(f"k={k}: test accuracy {acc:.4f}")
    csv_path = os.path.join(args.out, f"{args.dataset}_sweep.csv")
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["k", "test_accuracy"])
        for k, acc in rows:
            w.writerow([k, repr(acc)])
    plots.plot_accuracy_vs_k([r[0] for r in rows], [r[1] for r in rows],
                             os.path.join(args.out, f"{args.dataset}_sweep.png"))
    _log(f"wrote {csv_path}")


COMMANDS = {
    "segment": cmd_segment,
    "train": cmd_train,
    "explain": cmd_explain,
    "fidelity": cmd_fidelity,
    "sweep": cmd_sweep,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    os.makedirs(args.out, exist_ok=True)
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
