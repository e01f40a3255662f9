"""Dataset-to-graph plumbing shared by the CLI subcommands.

Segmentation dominates preprocessing time, so graph sets are cached to a
single .npz per (dataset, split, segmentation params, count) key.
"""

from __future__ import annotations

import os

import numpy as np

from .datasets import load_splits, make_synthetic_digits
from .superpixel import SlicParams, SpGraph, image_to_graph

DATA_DIR_ENV = "SPXPLAIN_DATA"
SYNTHETIC_SPLIT_SEEDS = {"train": 1000, "val": 2000, "test": 3000}


def resolve_data_dir(data_dir):
    return data_dir or os.environ.get(DATA_DIR_ENV, "data")


def get_split(dataset, split, data_dir, subset=None):
    """Return (LabeledDataset,) for one split, truncated to `subset` items."""
    if dataset == "synthetic":
        n = subset or 2000
        return make_synthetic_digits(n, seed=SYNTHETIC_SPLIT_SEEDS[split])
    splits = dict(zip(("train", "val", "test"),
                      load_splits(dataset, resolve_data_dir(data_dir))))
    ds = splits[split]
    if subset:
        ds = ds.subset(range(min(subset, len(ds))))
    return ds


def _cache_key(dataset, split, params, count):
    return (f"{dataset}_{split}_k{params.k_segments}"
            f"_m{params.compactness:g}_it{params.max_iters}_n{count}.npz")


def graphs_to_npz(path, graphs):
    feats = np.concatenate([g.node_features for g in graphs])
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    edges = [np.array(sorted(g.edges), dtype=np.int64).reshape(-1, 2) for g in graphs]
    edge_flat = np.concatenate(edges) if edges else np.zeros((0, 2), np.int64)
    edge_offsets = np.cumsum([0] + [len(e) for e in edges])
    labels = np.array([-1 if g.label is None else g.label for g in graphs])
    seg = np.concatenate([g.segment_map.labels.ravel() for g in graphs]) \
        if all(g.segment_map is not None for g in graphs) else np.zeros(0, np.int64)
    shapes = np.array([[g.segment_map.height, g.segment_map.width] for g in graphs]) \
        if all(g.segment_map is not None for g in graphs) else np.zeros((0, 2), np.int64)
    np.savez_compressed(path, feats=feats, offsets=offsets, edge_flat=edge_flat,
                        edge_offsets=edge_offsets, labels=labels,
                        seg=seg, seg_shapes=shapes)


def graphs_from_npz(path):
    from .superpixel import SegmentMap

    z = np.load(path)
    graphs = []
    seg_pos = 0
    has_seg = len(z["seg_shapes"]) > 0
    for i in range(len(z["offsets"]) - 1):
        a, b = z["offsets"][i], z["offsets"][i + 1]
        ea, eb = z["edge_offsets"][i], z["edge_offsets"][i + 1]
        edges = {(int(p), int(q)) for p, q in z["edge_flat"][ea:eb]}
        seg = None
        if has_seg:
            h, w = z["seg_shapes"][i]
            lab = z["seg"][seg_pos:seg_pos + h * w].reshape(h, w)
            seg_pos += h * w
            seg = SegmentMap(lab, int(b - a))
        label = int(z["labels"][i])
        graphs.append(SpGraph(z["feats"][a:b].copy(), edges, int(b - a), seg,
                              None if label < 0 else label))
    return graphs


def graphs_for_split(dataset, split, data_dir, params, subset=None,
                     cache_dir=None, log=None):
    """Segment a split into graphs, reusing the on-disk cache when present."""
    ds = get_split(dataset, split, data_dir, subset)
    if len(ds) == 0:
        return []
    if cache_dir:
        os.makedirs(cache_dir, exist_ok=True)
        path = os.path.join(cache_dir, _cache_key(dataset, split, params, len(ds)))
        if os.path.exists(path):
            return graphs_from_npz(path)
    graphs = []
    for i, (img, label) in enumerate(zip(ds.images, ds.labels)):
        graphs.append(image_to_graph(img, params, label=int(label)))
        if log and (i + 1) % 500 == 0:
            log(f"segmented {i + 1}/{len(ds)}")
    if cache_dir:
        graphs_to_npz(path, graphs)
    return graphs
