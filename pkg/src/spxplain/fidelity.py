"""Occlusion-based quantification of explanation quality.

Fidelity of a method at threshold t = accuracy on the original graphs minus
accuracy after zeroing the feature rows of every node whose saliency (for the
model's predicted class) exceeds t.  Topology and node count are untouched.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .explain import METHODS, compute_saliency
from .gat import predict
from .superpixel import SpGraph
from .train import evaluate

DEFAULT_THRESHOLDS = (0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9)


@dataclass
class FidelityReport:
    method: str
    thresholds: list
    fidelity_at: list           # acc_original - acc_occluded per threshold
    occluded_fraction_at: list  # mean fraction of nodes occluded
    n_samples: int

    def __post_init__(self):
        t = list(self.thresholds)
        if any(not 0 < x < 1 for x in t) or any(a >= b for a, b in zip(t, t[1:])):
            raise ValueError("thresholds must be strictly ascending in (0, 1)")


def occlude(g, s, t):
    """Copy of g with feature rows zeroed where saliency exceeds t."""
    if s.graph_ref is not g or len(s.node_scores) != g.n_nodes:
        raise ValueError("saliency does not belong to this graph")
    if not 0 < t < 1:
        raise ValueError("threshold must lie in (0, 1)")
    feats = g.node_features.copy()
    feats[s.node_scores > t] = 0.0
    return SpGraph(feats, g.edges, g.n_nodes, g.segment_map, g.label)


def _occluded_sets(model, dataset, method):
    """Saliency per graph, targeting the predicted class; computed once."""
    return [compute_saliency(method, model, g, c=predict(model, g))
            for g in dataset]


def fidelity_score(model, dataset, method, t):
    if not dataset:
        raise ValueError("empty dataset")
    saliencies = _occluded_sets(model, dataset, method)
    occluded = [occlude(g, s, t) for g, s in zip(dataset, saliencies)]
    return evaluate(model, dataset) - evaluate(model, occluded)


def threshold_sweep(model, dataset, methods=METHODS, thresholds=DEFAULT_THRESHOLDS):
    """Full (method, threshold) fidelity grid; one saliency pass per method."""
    if not dataset:
        raise ValueError("empty dataset")
    thresholds = sorted(thresholds)
    acc_orig = evaluate(model, dataset)
    reports = []
    for method in methods:
        saliencies = _occluded_sets(model, dataset, method)
        fid, frac = [], []
        for t in thresholds:
            occluded = [occlude(g, s, t) for g, s in zip(dataset, saliencies)]
            fid.append(acc_orig - evaluate(model, occluded))
            frac.append(float(np.mean(
                [(s.node_scores > t).mean() for s in saliencies])))
        reports.append(FidelityReport(method, thresholds, fid, frac, len(dataset)))
    return reports


def write_fidelity_csv(path, reports):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["method", "threshold", "fidelity", "occluded_fraction"])
        for r in reports:
            for t, fid, frac in zip(r.thresholds, r.fidelity_at, r.occluded_fraction_at):
                w.writerow([r.method, t, repr(fid), repr(frac)])
