"""Multi-head graph attention classifier built on the autodiff tape.

Each layer transforms node features per head (z = h W), scores every directed
edge with a relu'd linear attention over the concatenated endpoint embeddings,
softmax-normalizes scores per target node, aggregates weighted messages, and
concatenates the head outputs.  The classifier head is intentionally rigid —
last layer features -> global mean pool -> one affine map — so class
activation mapping is well-defined.

Checkpoint layout (``save_model``/``load_model``): 8-byte magic ``SPXCKPT1``,
4-byte big-endian JSON manifest length, UTF-8 JSON manifest (config, seed,
epoch, created, extra metadata, array names + shapes in order), then the raw
little-endian float64 array payloads in manifest order.
"""

from __future__ import annotations

import datetime
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import Tape

CKPT_MAGIC = b"SPXCKPT1"


@dataclass(frozen=True)
class GatConfig:
    in_features: int
    n_layers: int = 3
    n_heads: int = 3
    head_dim: int = 16
    n_classes: int = 10

    def layer_dims(self):
        """(fan_in, per-head fan_out) for each layer."""
        dims = []
        f = self.in_features
        for _ in range(self.n_layers):
            dims.append((f, self.head_dim))
            f = self.n_heads * self.head_dim
        return dims


@dataclass
class GatLayerParams:
    w: list  # per head: (F, F') weight, applied as z = h @ w
    a: list  # per head: (2F',) attention vector over [z_dst || z_src]


@dataclass
class GatModel:
    config: GatConfig
    layers: list
    classifier_w: np.ndarray  # (D_last, C)
    classifier_b: np.ndarray  # (C,)
    seed: int = 0

    def parameters(self):
        """Named flat views of every parameter, declaration order."""
        out = {}
        for li, layer in enumerate(self.layers):
            for hi in range(self.config.n_heads):
                out[f"layer{li}.head{hi}.w"] = layer.w[hi]
                out[f"layer{li}.head{hi}.a"] = layer.a[hi]
        out["classifier.w"] = self.classifier_w
        out["classifier.b"] = self.classifier_b
        return out


@dataclass
class ForwardArtifacts:
    logits: object                 # Tensor (C,)
    last_node_features: object     # Tensor (N, D_last)
    attention_coeffs: list         # per layer: list of per-head alpha Tensors
    tape: Tape
    input_features: object         # Tensor (N, F), requires_grad
    param_tensors: dict            # name -> Tensor wrapping that parameter
    classifier_op_names: list      # tape op names from last features to logits


def _glorot(rng, shape):
    fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], 1)
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def init_params(config, seed=0):
    """Seed-determined uniform (Glorot) initialization; biases zero."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out in config.layer_dims():
        w = [_glorot(rng, (fan_in, fan_out)) for _ in range(config.n_heads)]
        a = [_glorot(rng, (2 * fan_out,)) for _ in range(config.n_heads)]
        layers.append(GatLayerParams(w, a))
    d_last = config.n_heads * config.head_dim
    cw = _glorot(rng, (d_last, config.n_classes))
    cb = np.zeros(config.n_classes)
    return GatModel(config, layers, cw, cb, seed)


def directed_edges(g):
    """Directed (src, dst) index arrays: both edge directions plus self-loops."""
    src, dst = [], []
    for a, b in sorted(g.edges):
        src += [a, b]
        dst += [b, a]
    loops = list(range(g.n_nodes))
    src += loops
    dst += loops
    return np.array(src, dtype=np.intp), np.array(dst, dtype=np.intp)


def gat_layer(tape, h, src, dst, w_tensors, a_tensors, n_nodes, sigma):
    """One multi-head attention layer; returns (output, per-head alphas)."""
    outs, alphas = [], []
    for w, a in zip(w_tensors, a_tensors):
        z = tape.matmul(h, w)
        d = w.values.shape[1]
        a_col = tape.reshape(a, (2 * d, 1))
        s_dst = tape.matmul(z, tape.gather_rows(a_col, np.arange(d)))
        s_src = tape.matmul(z, tape.gather_rows(a_col, np.arange(d, 2 * d)))
        e = tape.relu(tape.reshape(
            tape.add(tape.gather_rows(s_dst, dst), tape.gather_rows(s_src, src)),
            (len(src),)))
        alpha = tape.segment_softmax(e, dst, n_nodes)
        msgs = tape.gather_rows(z, src)
        agg = tape.segment_weighted_sum(msgs, alpha, dst, n_nodes)
        outs.append(sigma(agg))
        alphas.append(alpha)
    return tape.concat_cols(outs), alphas


def forward(model, g):
    """Full forward pass; retains the tape and everything explainers need."""
    if g.n_nodes < 1:
        raise ValueError("graph has no nodes")
    cfg = model.config
    if g.node_features.shape[1] != cfg.in_features:
        raise ValueError(
            f"graph has {g.node_features.shape[1]} features, model expects {cfg.in_features}")
    tape = Tape()
    params = {name: tape.tensor(arr, requires_grad=True)
              for name, arr in model.parameters().items()}
    src, dst = directed_edges(g)
    x = tape.tensor(g.node_features, requires_grad=True)

    h = x
    attn = []
    for li in range(cfg.n_layers):
        last = li == cfg.n_layers - 1
        sigma = tape.relu if last else tape.elu
        w_t = [params[f"layer{li}.head{hi}.w"] for hi in range(cfg.n_heads)]
        a_t = [params[f"layer{li}.head{hi}.a"] for hi in range(cfg.n_heads)]
        h, alphas = gat_layer(tape, h, src, dst, w_t, a_t, g.n_nodes, sigma)
        attn.append(alphas)

    head_start = len(tape._nodes)
    pooled = tape.global_mean_pool(h)
    logits = tape.reshape(
        tape.add(tape.matmul(tape.reshape(pooled, (1, -1)), params["classifier.w"]),
                 tape.reshape(params["classifier.b"], (1, -1))),
        (cfg.n_classes,))
    op_names = [name for _, _, name in tape._nodes[head_start:]]

    return ForwardArtifacts(logits=logits, last_node_features=h,
                            attention_coeffs=attn, tape=tape,
                            input_features=x, param_tensors=params,
                            classifier_op_names=op_names)


def is_cam_compliant(artifacts):
    """Structural check: exactly one mean pool and one affine map after the
    last layer's node features, nothing else."""
    names = artifacts.classifier_op_names
    allowed = {"global_mean_pool", "matmul", "add", "reshape"}
    return (names.count("global_mean_pool") == 1
            and names.count("matmul") == 1
            and names.count("add") == 1
            and set(names) <= allowed)


def predict(model, g):
    """Argmax class; ties break toward the lowest index."""
    logits = forward(model, g).logits.values
    return int(np.argmax(logits))


# ---- checkpoint I/O ---------------------------------------------------------

def save_model(path, model, extra=None, arrays_extra=None):
    """Write the self-describing checkpoint container (see module docstring)."""
    arrays = dict(model.parameters())
    if arrays_extra:
        arrays.update(arrays_extra)
    manifest = {
        "format_version": 1,
        "config": asdict(model.config),
        "seed": model.seed,
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "extra": extra or {},
        "arrays": [{"name": k, "shape": list(np.shape(v))} for k, v in arrays.items()],
    }
    blob = json.dumps(manifest).encode()
    with open(path, "wb") as f:
        f.write(CKPT_MAGIC)
        f.write(struct.pack(">I", len(blob)))
        f.write(blob)
        for v in arrays.values():
            f.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_model(path):
    """Read a checkpoint; returns (GatModel, extra dict, extra arrays dict)."""
    with open(path, "rb") as f:
        magic = f.read(8)
        if magic != CKPT_MAGIC:
            raise ValueError(f"not a checkpoint file (magic {magic!r})")
        (mlen,) = struct.unpack(">I", f.read(4))
        manifest = json.loads(f.read(mlen).decode())
        if manifest.get("format_version") != 1:
            raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
        arrays = {}
        for spec in manifest["arrays"]:
            shape = tuple(spec["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = f.read(count * 8)
            if len(data) != count * 8:
                raise ValueError("truncated checkpoint payload")
            arrays[spec["name"]] = np.frombuffer(data, dtype="<f8").reshape(shape).copy()
    config = GatConfig(**manifest["config"])
    model = init_params(config, seed=manifest["seed"])
    for name, arr in model.parameters().items():
        arr[...] = arrays.pop(name)
    return model, manifest["extra"], arrays
