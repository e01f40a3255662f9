"""Saliency methods mapping (model, graph, target class) to per-node scores.

Four headline methods: plain gradient saliency (cgsm), class activation
mapping (cam), gradient-weighted class activation mapping (gradcam) and
guided backpropagation (gbp), plus the derived guided-gradcam product.  All
scores are max-normalized to [0, 1]; an identically-zero raw map stays zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gat import forward, is_cam_compliant, predict

METHODS = ("cgsm", "cam", "gradcam", "gbp")
ALL_METHODS = METHODS + ("guided_gradcam",)


@dataclass
class Saliency:
    node_scores: np.ndarray  # (N,) in [0, 1]
    method: str
    target_class: int
    graph_ref: object

    def __post_init__(self):
        s = self.node_scores
        if not np.all(np.isfinite(s)):
            raise ValueError("saliency contains non-finite values")
        if len(s) and (s.min() < 0 or s.max() > 1):
            raise ValueError("saliency scores must lie in [0, 1]")


def _normalize(raw):
    peak = raw.max() if len(raw) else 0.0
    return raw / peak if peak > 0 else raw


def _target(model, g, c):
    return predict(model, g) if c is None else int(c)


def _grad_saliency(model, g, c, mode):
    c = _target(model, g, c)
    art = forward(model, g)
    score = art.tape.pick(art.logits, c)
    art.tape.backward(score, mode=mode)
    grad = art.input_features.grad
    raw = np.linalg.norm(np.maximum(grad, 0.0), axis=1)
    return raw, c


def cgsm(model, g, c=None):
    """Per-node l2 norm of the relu'd input gradient of the class score."""
    raw, c = _grad_saliency(model, g, c, "standard")
    return Saliency(_normalize(raw), "cgsm", c, g)


def guided_backprop(model, g, c=None):
    """cgsm with negative upstream gradients zeroed at every nonlinearity."""
    raw, c = _grad_saliency(model, g, c, "guided")
    return Saliency(_normalize(raw), "gbp", c, g)


def cam_raw(model, g, c=None):
    c = _target(model, g, c)
    art = forward(model, g)
    if not is_cam_compliant(art):
        raise ValueError("model is not CAM-compliant (pool + single affine map)")
    w_c = model.classifier_w[:, c]
    raw = np.maximum(art.last_node_features.values @ w_c, 0.0)
    return raw, c


def cam(model, g, c=None):
    """Class-weighted sum of last-layer node features, relu'd."""
    raw, c = cam_raw(model, g, c)
    return Saliency(_normalize(raw), "cam", c, g)


def grad_cam_raw(model, g, c=None):
    c = _target(model, g, c)
    art = forward(model, g)
    score = art.tape.pick(art.logits, c)
    art.tape.backward(score)
    feats = art.last_node_features
    channel_w = feats.grad.mean(axis=0)  # gradient pooled over nodes
    raw = np.maximum(feats.values @ channel_w, 0.0)
    return raw, c


def grad_cam(model, g, c=None):
    """cam with gradient-pooled channel weights; architecture-agnostic."""
    raw, c = grad_cam_raw(model, g, c)
    return Saliency(_normalize(raw), "gradcam", c, g)


def guided_grad_cam(model, g, c=None):
    """Elementwise product of normalized gbp and gradcam maps, renormalized."""
    c = _target(model, g, c)
    a = guided_backprop(model, g, c)
    b = grad_cam(model, g, c)
    return Saliency(_normalize(a.node_scores * b.node_scores), "guided_gradcam", c, g)


_DISPATCH = {
    "cgsm": cgsm,
    "cam": cam,
    "gradcam": grad_cam,
    "gbp": guided_backprop,
    "guided_gradcam": guided_grad_cam,
}


def compute_saliency(method, model, g, c=None):
    if method not in _DISPATCH:
        raise ValueError(f"unknown saliency method {method!r}")
    return _DISPATCH[method](model, g, c)


def saliency_to_pixels(s):
    """Project node scores back to pixel space via the segment map."""
    seg = getattr(s.graph_ref, "segment_map", None)
    if seg is None:
        raise ValueError("saliency's graph carries no segment map")
    return s.node_scores[seg.labels]
