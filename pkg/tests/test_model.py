import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ontoalign.model import (
    ContextVectors,
    ModelConfig,
    ModelParams,
    MODE_FULL,
    MODE_NO_CONTEXT,
    MODE_SINGLE_ATTENTION,
    POOL_MAX,
    combine_contexts,
    concept_forward,
    encode_context,
    facet_vector_single_hop,
    forward_from_encoding,
    init_params,
    load_checkpoint,
    mse_loss,
    node_attention_combine,
    pad_paths,
    path_attention,
    path_node_scores,
    property_forward,
    save_checkpoint,
    similarity,
    unify_paths,
)


def random_context(rng, dim, n_paths=(1, 3), path_len=(1, 3), neighbors=(0, 3)) -> ContextVectors:
    paths = [
        rng.normal(size=(rng.integers(path_len[0], path_len[1] + 1), dim))
        for _ in range(rng.integers(n_paths[0], n_paths[1] + 1))
    ]

    def blk():
        return rng.normal(size=(rng.integers(neighbors[0], neighbors[1] + 1), dim))

    return ContextVectors(paths=paths, children=blk(), object_neighbors=blk(), data_neighbors=blk())


# --- attention building blocks ----------------------------------------------

def test_path_node_scores_dot():
    assert np.allclose(path_node_scores(np.array([1.0, 0.0]), [np.array([0.5, 0.5])]), [0.5])


def test_path_node_scores_orthogonal():
    u = np.array([1.0, 0.0])
    nodes = [np.array([0.0, 2.0]), np.array([0.0, -1.0])]
    assert np.allclose(path_node_scores(u, nodes), [0.0, 0.0])


def test_path_node_scores_scaling():
    got = path_node_scores(np.array([2.0, 0.0]), [np.array([1.0, 0.0]), np.array([0.0, 1.0])])
    assert np.allclose(got, [2.0, 0.0])


def test_path_node_scores_shape_error():
    with pytest.raises(ValueError):
        path_node_scores(np.array([1.0, 0.0]), [np.array([1.0, 0.0, 0.0])])


def test_path_attention_singleton():
    assert np.allclose(path_attention([np.array([0.3, 0.4])]), [1.0])


def test_path_attention_equal_sums():
    weights = path_attention([np.array([0.5, 0.5]), np.array([1.0])])
    assert np.allclose(weights, [0.5, 0.5])


def test_path_attention_log2_case():
    # softmax over sums [ln 2, 0] is [2/3, 1/3]
    weights = path_attention([np.array([math.log(2.0)]), np.array([0.0])])
    assert np.allclose(weights, [2.0 / 3.0, 1.0 / 3.0])


def test_path_attention_empty_raises():
    with pytest.raises(ValueError):
        path_attention([])


def test_unify_single_path_unchanged():
    path = np.array([[1.0, 2.0], [3.0, 4.0]])
    padded, lengths = pad_paths([path], dim=2)
    assert np.allclose(unify_paths(np.array([1.0]), padded, lengths), path)


def test_unify_opposed_vectors_cancel():
    a = np.array([[1.0, -2.0]])
    padded, lengths = pad_paths([a, -a], dim=2)
    merged = unify_paths(np.array([0.5, 0.5]), padded, lengths)
    assert np.allclose(merged, np.zeros((1, 2)))


def test_unify_padding_contributes_zero_mass():
    long = np.array([[1.0, 0.0], [0.0, 2.0]])
    short = np.array([[3.0, 0.0]])
    padded, lengths = pad_paths([long, short], dim=2)
    merged = unify_paths(np.array([0.25, 0.75]), padded, lengths)
    # position 1 only receives the long path's node, scaled by its weight
    assert np.allclose(merged[1], 0.25 * long[1])


def test_unify_max_pool_masks_padding():
    long = np.array([[0.0, -1.0], [0.0, -2.0]])
    short = np.array([[0.0, -3.0]])
    padded, lengths = pad_paths([long, short], dim=2)
    merged = unify_paths(np.array([0.5, 0.5]), padded, lengths, pooling=POOL_MAX)
    # at position 1 the short path is exhausted; its zero padding must not win the max
    assert np.allclose(merged[1], 0.5 * long[1])


def test_node_attention_single_node_identity():
    r = np.array([[2.0, -1.0]])
    facet, weights = node_attention_combine(np.array([1.0, 0.0]), r, np.array([1.0, 1.0]))
    assert np.allclose(facet, r[0])
    assert np.allclose(weights, [1.0, 0.0])


def test_node_attention_zero_depth_weights():
    r = np.array([[2.0, -1.0], [0.5, 0.5]])
    facet, _ = node_attention_combine(np.array([1.0, 0.0]), r, np.zeros(2))
    assert np.allclose(facet, np.zeros(2))


def test_node_attention_equal_scores_average():
    # both merged nodes score identically against the focal vector
    r = np.array([[1.0, 0.0], [1.0, 0.0]])
    facet, weights = node_attention_combine(np.array([1.0, 0.0]), r, np.ones(2))
    assert np.allclose(weights, [0.5, 0.5])
    assert np.allclose(facet, 0.5 * r[0] + 0.5 * r[1])


def test_node_attention_empty_path_zero_vector():
    facet, weights = node_attention_combine(np.array([1.0, 0.0]), np.zeros((0, 2)), np.ones(3))
    assert np.allclose(facet, np.zeros(2))
    assert np.array_equal(weights, np.zeros(3))


def test_node_attention_too_long_raises():
    with pytest.raises(ValueError):
        node_attention_combine(np.array([1.0]), np.zeros((3, 1)), np.ones(2))


def test_single_hop_no_neighbors():
    facet, weights = facet_vector_single_hop(np.array([1.0, 0.0]), np.zeros((0, 2)))
    assert np.allclose(facet, np.zeros(2))
    assert weights.shape == (0,)


def test_single_hop_one_neighbor_identity():
    n = np.array([[0.3, 0.7]])
    facet, weights = facet_vector_single_hop(np.array([1.0, 0.0]), n)
    assert np.allclose(facet, n[0])
    assert np.allclose(weights, [1.0])


def test_single_hop_opposed_neighbors_cancel():
    n = np.array([[0.0, 1.0], [0.0, -1.0]])
    facet, _ = facet_vector_single_hop(np.array([1.0, 0.0]), n)
    assert np.allclose(facet, np.zeros(2))


def test_combine_contexts_convexity():
    v = np.array([0.4, -0.2])
    for logits in (np.zeros(4), np.array([3.0, -1.0, 0.5, 2.0])):
        assert np.allclose(combine_contexts(v, v, v, v, logits), v)


def test_combine_contexts_equal_logits_mean():
    facets = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([2.0, 2.0]), np.array([-1.0, 1.0])]
    got = combine_contexts(*facets, np.zeros(4))
    assert np.allclose(got, np.mean(facets, axis=0))


def test_combine_contexts_extreme_logit_selects_facet():
    facets = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([2.0, 2.0]), np.array([-1.0, 1.0])]
    got = combine_contexts(*facets, np.array([0.0, 50.0, 0.0, 0.0]))
    assert np.allclose(got, facets[1], atol=1e-12)


# --- full forward against an independent scalar oracle -----------------------

def scalar_forward_oracle(proj, depth_w, logits, u, paths, children, objs, datas):
    """Step-by-step plain-Python recomputation of the whole forward pass."""

    def dot(a, b):
        return sum(float(x) * float(y) for x, y in zip(a, b))

    def softmax_list(xs):
        m = max(xs)
        es = [math.exp(x - m) for x in xs]
        z = sum(es)
        return [e / z for e in es]

    dim = len(u)
    path_sums = [sum(dot(u, node) for node in path) for path in paths]
    pw = softmax_list(path_sums)
    t = max(len(p) for p in paths)
    merged = [
        [
            sum(pw[j] * (paths[j][k][d] if k < len(paths[j]) else 0.0) for j in range(len(paths)))
            for d in range(dim)
        ]
        for k in range(t)
    ]
    nw = softmax_list([dot(u, merged[k]) for k in range(t)])
    f_a = [sum(depth_w[k] * nw[k] * merged[k][d] for k in range(t)) for d in range(dim)]

    def one_hop(neigh):
        if not neigh:
            return [0.0] * dim
        ww = softmax_list([dot(u, nv) for nv in neigh])
        return [sum(ww[i] * neigh[i][d] for i in range(len(neigh))) for d in range(dim)]

    f_o, f_h, f_d = one_hop(objs), one_hop(children), one_hop(datas)
    s = softmax_list(list(logits))
    v = [s[0] * f_a[d] + s[1] * f_o[d] + s[2] * f_h[d] + s[3] * f_d[d] for d in range(dim)]
    x = list(u) + v
    return [dot(row, x) for row in proj]


FIXTURE = dict(
    u=[1.0, 0.5],
    paths=[[[0.5, 0.0], [0.0, 1.0]], [[1.0, 1.0]]],
    children=[[0.2, 0.1]],
    objs=[],
    datas=[[0.0, 0.4], [0.3, 0.3]],
    depth_w=[1.0, 0.5],
    logits=[0.1, 0.2, 0.3, 0.4],
    proj=[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 1.0, 0.0], [0.5, -0.5, 0.25, 2.0]],
)


def fixture_params_and_ctx():
    cfg = ModelConfig(dim=2, out_dim=3, max_depth=2)
    params = ModelParams(
        projection=np.array(FIXTURE["proj"]),
        depth_weights=np.array(FIXTURE["depth_w"]),
        category_logits=np.array(FIXTURE["logits"]),
        config=cfg,
    )
    ctx = ContextVectors(
        paths=[np.array(p) for p in FIXTURE["paths"]],
        children=np.array(FIXTURE["children"]),
        object_neighbors=np.zeros((0, 2)),
        data_neighbors=np.array(FIXTURE["datas"]),
    )
    return params, ctx


def test_full_forward_matches_scalar_oracle():
    params, ctx = fixture_params_and_ctx()
    out, _ = concept_forward(params, np.array(FIXTURE["u"]), ctx)
    expected = scalar_forward_oracle(
        FIXTURE["proj"], FIXTURE["depth_w"], FIXTURE["logits"], FIXTURE["u"],
        FIXTURE["paths"], FIXTURE["children"], FIXTURE["objs"], FIXTURE["datas"],
    )
    assert np.allclose(out, expected, atol=1e-12)
    # frozen oracle output for this exact fixture
    assert np.allclose(expected, [1.0, 0.7254405728409478, 0.7709366033361297], atol=1e-12)


def test_no_context_output_is_projection_of_label_half():
    params, ctx = fixture_params_and_ctx()
    params.config = ModelConfig(dim=2, out_dim=3, max_depth=2, mode=MODE_NO_CONTEXT)
    u = np.array(FIXTURE["u"])
    out, trace = concept_forward(params, u, ctx)
    assert np.allclose(out, params.projection @ np.concatenate([u, np.zeros(2)]))
    assert np.allclose(trace.context, np.zeros(2))


def test_empty_bundle_full_equals_no_context():
    params, _ = fixture_params_and_ctx()
    u = np.array(FIXTURE["u"])
    out_full, _ = concept_forward(params, u, ContextVectors.empty(2))
    params.config = ModelConfig(dim=2, out_dim=3, max_depth=2, mode=MODE_NO_CONTEXT)
    out_nc, _ = concept_forward(params, u, ContextVectors.empty(2))
    assert np.allclose(out_full, out_nc)


def test_no_context_independent_of_bundle(rng):
    cfg = ModelConfig(dim=4, out_dim=3, max_depth=3, mode=MODE_NO_CONTEXT)
    params = init_params(cfg, seed=0)
    u = rng.normal(size=4)
    out_a, _ = concept_forward(params, u, random_context(rng, 4))
    out_b, _ = concept_forward(params, u, random_context(rng, 4))
    assert np.array_equal(out_a, out_b)


def test_single_attention_uses_uniform_path_weights(rng):
    cfg = ModelConfig(dim=4, out_dim=3, max_depth=3, mode=MODE_SINGLE_ATTENTION)
    ctx = random_context(rng, 4, n_paths=(3, 3))
    enc = encode_context(rng.normal(size=4), ctx, cfg)
    assert np.allclose(enc.path_weights, np.full(3, 1.0 / 3.0))


def test_facet_mask_zeroes_other_facets(rng):
    cfg = ModelConfig(dim=4, out_dim=3, max_depth=3, facets=("ancestors",))
    ctx = random_context(rng, 4, neighbors=(2, 2))
    enc = encode_context(rng.normal(size=4), ctx, cfg)
    for name in ("object", "children", "data"):
        assert np.array_equal(enc.facet_fixed[name], np.zeros(4))
    assert enc.path_weights.shape[0] > 0


def test_property_forward_identity(rng):
    u = rng.normal(size=8)
    assert property_forward(u) is u
    assert np.array_equal(property_forward(np.zeros(8)), np.zeros(8))


# --- similarity and loss ------------------------------------------------------

def test_similarity_conventions(rng):
    v = rng.normal(size=5)
    assert similarity(v, v) == pytest.approx(1.0)
    assert similarity(v, -v) == pytest.approx(-1.0)
    assert similarity(v, np.zeros(5)) == 0.0
    assert similarity(np.zeros(5), np.zeros(5)) == 0.0
    with pytest.raises(ValueError):
        similarity(v, rng.normal(size=4))


def test_mse_loss_examples():
    assert mse_loss([0.3, 0.9], [0.3, 0.9]) == 0.0
    assert mse_loss([0.0], [1.0]) == 1.0
    assert mse_loss([0.5, 0.5], [0.0, 1.0]) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        mse_loss([0.1], [1.0, 0.0])
    with pytest.raises(ValueError):
        mse_loss([], [])


@settings(max_examples=50, deadline=None)
@given(
    preds=st.lists(st.integers(-100, 100).map(lambda i: i / 100), min_size=1, max_size=8),
    data=st.data(),
)
def test_loss_nonnegative_zero_iff_exact(preds, data):
    labels = data.draw(
        st.lists(st.sampled_from([0.0, 1.0]), min_size=len(preds), max_size=len(preds))
    )
    loss = mse_loss(preds, labels)
    assert loss >= 0.0
    if all(p == l for p, l in zip(preds, labels)):
        assert loss == 0.0
    if loss == 0.0:
        assert all(p == l for p, l in zip(preds, labels))


# --- trace invariants ---------------------------------------------------------

def test_attention_groups_sum_to_one(rng):
    cfg = ModelConfig(dim=6, out_dim=4, max_depth=4)
    params = init_params(cfg, seed=1)
    for _ in range(50):
        ctx = random_context(rng, 6)
        _, trace = concept_forward(params, rng.normal(size=6), ctx)
        for name, weights in trace.attention_groups():
            assert abs(weights.sum() - 1.0) < 1e-6, name
        t = trace.encoding.merged_path.shape[0]
        assert np.all(trace.node_weights[t:] == 0.0)


def test_siamese_weight_sharing_symmetry(rng):
    cfg = ModelConfig(dim=6, out_dim=4, max_depth=4)
    params = init_params(cfg, seed=2)
    for _ in range(50):
        u_a, u_b = rng.normal(size=6), rng.normal(size=6)
        ctx_a, ctx_b = random_context(rng, 6), random_context(rng, 6)
        out_a, _ = concept_forward(params, u_a, ctx_a)
        out_b, _ = concept_forward(params, u_b, ctx_b)
        assert abs(similarity(out_a, out_b) - similarity(out_b, out_a)) <= 1e-9


def test_positive_scaling_preserves_path_attention_argmax(rng):
    # path scores scale linearly with the focal vector, so the winning path
    # is scale-invariant (weight values are not)
    cfg = ModelConfig(dim=6, out_dim=4, max_depth=4)
    for _ in range(20):
        u = rng.normal(size=6)
        ctx = random_context(rng, 6, n_paths=(2, 3), path_len=(2, 3))
        enc1 = encode_context(u, ctx, cfg)
        enc2 = encode_context(3.5 * u, ctx, cfg)
        if len(np.unique(np.round(enc1.path_weights, 12))) == enc1.path_weights.shape[0]:
            assert enc1.path_weights.argmax() == enc2.path_weights.argmax()


def test_positive_scaling_preserves_node_attention_argmax(rng):
    # same invariance for node attention over a fixed merged path
    depth_w = np.ones(4)
    for _ in range(20):
        u = rng.normal(size=6)
        merged = rng.normal(size=(3, 6))
        _, nw1 = node_attention_combine(u, merged, depth_w)
        _, nw2 = node_attention_combine(7.0 * u, merged, depth_w)
        if len(np.unique(np.round(nw1[:3], 12))) == 3:
            assert nw1[:3].argmax() == nw2[:3].argmax()


# --- checkpointing --------------------------------------------------------------

def test_checkpoint_round_trip_value_exact(tmp_path, rng):
    cfg = ModelConfig(dim=5, out_dim=3, max_depth=4, pooling=POOL_MAX, mode=MODE_SINGLE_ATTENTION,
                      facets=("ancestors", "children"))
    params = init_params(cfg, seed=7)
    params.depth_weights[:] = rng.normal(size=4)
    params.category_logits[:] = rng.normal(size=4)
    path = tmp_path / "model.ckpt"
    save_checkpoint(params, path)
    loaded = load_checkpoint(path)
    assert loaded.config == cfg
    assert np.array_equal(loaded.projection, params.projection)
    assert np.array_equal(loaded.depth_weights, params.depth_weights)
    assert np.array_equal(loaded.category_logits, params.category_logits)


def test_checkpoint_unreadable_raises(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_text("not json at all")
    with pytest.raises(ValueError):
        load_checkpoint(bad)
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "missing.ckpt")


def test_init_params_seeded_and_bounded():
    cfg = ModelConfig(dim=16, out_dim=8, max_depth=6)
    a = init_params(cfg, seed=0)
    b = init_params(cfg, seed=0)
    assert np.array_equal(a.projection, b.projection)
    bound = np.sqrt(6.0 / (2 * 16 + 8))
    assert np.abs(a.projection).max() <= bound
    assert np.array_equal(a.depth_weights, np.ones(6))
    assert np.array_equal(a.category_logits, np.zeros(4))
