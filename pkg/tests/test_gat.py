import numpy as np
import pytest

from spxplain.gat import (GatConfig, directed_edges, forward, init_params,
                          is_cam_compliant, load_model, predict, save_model)
from spxplain.superpixel import SpGraph


def random_graph(rng, n_nodes=6, n_features=3, p_edge=0.5, label=None):
    edges = set()
    for a in range(n_nodes):
        for b in range(a + 1, n_nodes):
            if rng.random() < p_edge:
                edges.add((a, b))
    # keep it connected: chain fallback
    for a in range(n_nodes - 1):
        edges.add((a, a + 1))
    return SpGraph(rng.random((n_nodes, n_features)), edges, n_nodes, None, label)


def small_model(seed=0, in_features=3, **kw):
    cfg = GatConfig(in_features=in_features, n_layers=kw.pop("n_layers", 2),
                    n_heads=kw.pop("n_heads", 2), head_dim=kw.pop("head_dim", 4),
                    n_classes=kw.pop("n_classes", 10))
    return init_params(cfg, seed=seed)


def test_init_deterministic():
    a = init_params(GatConfig(3), seed=42)
    b = init_params(GatConfig(3), seed=42)
    for (ka, va), (kb, vb) in zip(a.parameters().items(), b.parameters().items()):
        assert ka == kb
        assert np.array_equal(va, vb)


def test_init_bias_zero_and_bounds():
    model = init_params(GatConfig(5, n_layers=1, n_heads=1, head_dim=32), seed=1)
    assert np.all(model.classifier_b == 0)
    w = model.layers[0].w[0]  # fan_in=5, fan_out=32
    assert np.abs(w).max() <= np.sqrt(6 / 37)


def test_forward_logits_shape_and_zero_classifier():
    rng = np.random.default_rng(0)
    g = random_graph(rng)
    model = small_model()
    art = forward(model, g)
    assert art.logits.values.shape == (10,)
    model.classifier_w[...] = 0.0
    assert np.allclose(forward(model, g).logits.values, 0.0)


def test_single_node_graph_self_attention():
    g = SpGraph(np.array([[0.2, 0.3, 0.4]]), set(), 1)
    model = small_model()
    art = forward(model, g)
    for alphas in art.attention_coeffs:
        for alpha in alphas:
            assert np.allclose(alpha.values, [1.0])


def test_attention_sums_to_one_per_node():
    rng = np.random.default_rng(3)
    for trial in range(100):
        g = random_graph(rng, n_nodes=int(rng.integers(2, 9)))
        model = small_model(seed=trial % 7)
        art = forward(model, g)
        _, dst = directed_edges(g)
        for alphas in art.attention_coeffs:
            for alpha in alphas:
                sums = np.bincount(dst, weights=alpha.values, minlength=g.n_nodes)
                assert np.allclose(sums, 1.0, atol=1e-9)


def test_zero_weights_give_uniform_attention():
    rng = np.random.default_rng(4)
    g = random_graph(rng, n_nodes=5)
    model = small_model()
    for layer in model.layers:
        for w in layer.w:
            w[...] = 0.0
    art = forward(model, g)
    src, dst = directed_edges(g)
    deg = np.bincount(dst, minlength=g.n_nodes)
    alpha = art.attention_coeffs[0][0].values
    assert np.allclose(alpha, 1.0 / deg[dst])
    # zero z means the aggregated output is sigma(0) = 0
    assert np.allclose(art.last_node_features.values, 0.0)


def test_permutation_equivariance():
    rng = np.random.default_rng(5)
    g = random_graph(rng, n_nodes=7)
    model = small_model(seed=2)
    art = forward(model, g)

    perm = rng.permutation(g.n_nodes)
    inv = np.argsort(perm)
    edges_p = {tuple(sorted((int(perm[a]), int(perm[b])))) for a, b in g.edges}
    g_p = SpGraph(g.node_features[inv], edges_p, g.n_nodes)
    art_p = forward(model, g_p)

    assert np.allclose(art_p.logits.values, art.logits.values, atol=1e-12)
    assert np.allclose(art_p.last_node_features.values,
                       art.last_node_features.values[inv], atol=1e-12)


def test_isolated_node_attends_to_itself():
    # node 3 has no edges: only its self-loop contributes
    feats = np.random.default_rng(6).random((4, 3))
    g = SpGraph(feats, {(0, 1), (1, 2)}, 4)
    model = small_model()
    art = forward(model, g)
    src, dst = directed_edges(g)
    for alphas in art.attention_coeffs:
        for alpha in alphas:
            mask = dst == 3
            assert mask.sum() == 1
            assert np.allclose(alpha.values[mask], 1.0)


def test_cam_compliance_structural():
    rng = np.random.default_rng(7)
    g = random_graph(rng)
    art = forward(small_model(), g)
    assert is_cam_compliant(art)


def test_feature_dim_mismatch():
    g = SpGraph(np.zeros((3, 5)), {(0, 1), (1, 2)}, 3)
    with pytest.raises(ValueError):
        forward(small_model(in_features=3), g)


def test_predict_tie_breaks_low():
    rng = np.random.default_rng(8)
    g = random_graph(rng)
    model = small_model()
    model.classifier_w[...] = 0.0
    model.classifier_b[...] = 0.0
    assert predict(model, g) == 0  # all-equal logits -> class 0
    model.classifier_b[1] = 5.0
    assert predict(model, g) == 1


def test_end_to_end_gradcheck():
    """Every parameter gradient matches central finite differences (<1e-4)."""
    rng = np.random.default_rng(9)
    g = random_graph(rng, n_nodes=5, label=2)
    model = small_model(seed=3, n_layers=2, n_heads=2, head_dim=3)

    art = forward(model, g)
    loss = art.tape.cross_entropy(art.logits, 2)
    art.tape.backward(loss)

    eps = 1e-5
    for name, arr in model.parameters().items():
        analytic = art.param_tensors[name].grad
        fd = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = arr[i]
            arr[i] = orig + eps
            ap = forward(model, g)
            lp = ap.tape.cross_entropy(ap.logits, 2).values
            arr[i] = orig - eps
            am = forward(model, g)
            lm = am.tape.cross_entropy(am.logits, 2).values
            arr[i] = orig
            fd[i] = (lp - lm) / (2 * eps)
        denom = max(np.abs(analytic).max(), np.abs(fd).max(), 1e-8)
        assert np.abs(analytic - fd).max() / denom < 1e-4, name


def test_checkpoint_roundtrip(tmp_path):
    model = small_model(seed=11)
    path = tmp_path / "model.ckpt"
    save_model(path, model, extra={"epoch": 5})
    loaded, extra, extra_arrays = load_model(path)
    assert extra == {"epoch": 5}
    assert extra_arrays == {}
    assert loaded.config == model.config
    for (_, a), (_, b) in zip(model.parameters().items(), loaded.parameters().items()):
        assert np.array_equal(a, b)


def test_checkpoint_truncated(tmp_path):
    model = small_model()
    path = tmp_path / "model.ckpt"
    save_model(path, model)
    data = path.read_bytes()
    path.write_bytes(data[:-16])
    with pytest.raises(ValueError):
        load_model(path)


def test_checkpoint_bad_magic(tmp_path):
    path = tmp_path / "model.ckpt"
    path.write_bytes(b"NOTACKPT" + bytes(100))
    with pytest.raises(ValueError):
        load_model(path)
