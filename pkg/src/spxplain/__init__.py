"""Superpixel-graph image classification with attention-network saliency."""

from .datasets import (Image, LabeledDataset, load_cifar10_batch,
                       load_idx_images, load_idx_labels, make_synthetic_digits)
from .superpixel import (SegmentMap, SlicParams, SpGraph, build_rag,
                         extract_node_features, image_to_graph, slic_segment)
from .gat import GatConfig, GatModel, forward, init_params, predict
from .train import TrainConfig, evaluate, train
from .explain import (cam, cgsm, compute_saliency, grad_cam, guided_backprop,
                      guided_grad_cam, saliency_to_pixels)
from .fidelity import FidelityReport, fidelity_score, occlude, threshold_sweep

__version__ = "0.1.0"
