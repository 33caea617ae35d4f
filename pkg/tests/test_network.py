import numpy as np
import pytest
import scipy.sparse as sp

from kgalign.autodiff import Tensor
from kgalign.dual_graph import build_dual_graph, relation_proxies
from kgalign.graph_model import KnowledgeGraph, merge_graphs
from kgalign.network import (NUM_GCN_LAYERS, Variant, build_index, forward,
                             init_params, interaction_stack,
                             normalized_adjacency)

from conftest import random_primal_graph


# ---------------------------------------------------------------------------
# independent dense numpy oracle for the full forward pass


def _leaky(x, slope):
    return np.where(x > 0, x, slope * x)


def _seg_softmax(logits, seg, num):
    out = np.empty_like(logits)
    for s in range(num):
        mask = seg == s
        if not mask.any():
            continue
        z = logits[mask] - logits[mask].max()
        e = np.exp(z)
        out[mask] = e / e.sum()
    return out


def oracle_forward(g, dual, params, variant):
    x_init = params.x_init
    slope = params.leaky_slope

    d_dst, d_src, d_w = dual.flat_edges()
    pair_rels = {}
    for q in range(g.entity_count):
        for t, r, _ in g.neighbors[q]:
            pair_rels.setdefault((q, t), set()).add(r)
            pair_rels.setdefault((q, q), set()).add(r)
    pairs = sorted(pair_rels)
    p_dst = np.array([q for q, _ in pairs])
    p_src = np.array([t for _, t in pairs])

    def dual_layer(xr, proxies, w, b):
        feat = np.concatenate([proxies[d_dst], proxies[d_src]], axis=1)
        logits = _leaky(d_w * (feat @ w + b), slope)
        alpha = _seg_softmax(logits, d_dst, g.relation_count)
        out = np.zeros_like(xr)
        np.add.at(out, d_dst, alpha[:, None] * xr[d_src])
        return np.maximum(out, 0.0)

    def primal_layer(xe, dual_reps, w, b, beta):
        pair_reps = np.stack([
            np.mean([dual_reps[r] for r in pair_rels[p]], axis=0) for p in pairs])
        logits = _leaky(pair_reps @ w + b, slope)
        alpha = _seg_softmax(logits, p_dst, g.entity_count)
        tilde = np.zeros_like(xe)
        np.add.at(tilde, p_dst, alpha[:, None] * xe[p_src])
        return beta * np.maximum(tilde, 0.0) + x_init

    ent = x_init
    if variant in (Variant.RDGCN, Variant.RD):
        xr = None
        for s in range(params.num_interactions):
            row = 0 if params.share_scorers else s
            proxies = relation_proxies(g, ent)
            if xr is None:
                xr = proxies
            xr = dual_layer(xr, proxies, params.dual_w[row], params.dual_b[row])
            ent = primal_layer(ent, xr, params.primal_w[row],
                               params.primal_b[row], params.betas[s])

    if variant in (Variant.RDGCN, Variant.HGCN_S, Variant.GCN_S):
        adj = normalized_adjacency(g).toarray()
        for layer in range(NUM_GCN_LAYERS):
            cand = np.maximum(adj @ (ent @ params.gcn_w[layer]), 0.0)
            if variant is Variant.GCN_S:
                ent = cand
            else:
                gate = 1.0 / (1.0 + np.exp(-(ent @ params.gate_w[layer]
                                             + params.gate_b[layer])))
                ent = gate * cand + (1.0 - gate) * ent
    return ent


@pytest.mark.parametrize("variant", list(Variant))
def test_forward_matches_dense_oracle(small_dataset, small_index, small_params,
                                      variant):
    dataset, _, _ = small_dataset
    index, dual = small_index
    out, _, _ = forward(index, small_params, variant, requires_grad=False)
    want = oracle_forward(dataset.graph, dual, small_params, variant)
    np.testing.assert_allclose(out.value, want, atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("variant", [Variant.RDGCN, Variant.GCN_S])
def test_forward_matches_oracle_random_graphs(seed, variant):
    rng = np.random.default_rng(seed)
    g = random_primal_graph(rng, n_entities=14, n_relations=5, n_triples=35)
    dual = build_dual_graph(g)
    index = build_index(g, dual)
    x = rng.standard_normal((g.entity_count, 4))
    params = init_params(x, rng_seed=seed)
    out, _, _ = forward(index, params, variant, requires_grad=False)
    np.testing.assert_allclose(out.value, oracle_forward(g, dual, params, variant),
                               atol=1e-12)


# ---------------------------------------------------------------------------
# small hand-checked pieces


def _two_relation_setup():
    # two relations sharing tail entity 2 -> dual edge 0<->1 plus self-edges
    g1 = KnowledgeGraph(entities=frozenset({0, 1, 2}),
                        relations=frozenset({0, 1}),
                        triples=((0, 0, 2), (1, 0, 2), (1, 1, 2)))
    g2 = KnowledgeGraph(entities=frozenset({0}), relations=frozenset(), triples=())
    graph, *_ = merge_graphs(g1, g2)
    dual = build_dual_graph(graph)
    return graph, dual


def test_dual_attention_softmax_hand_oracle():
    graph, dual = _two_relation_setup()
    index = build_index(graph, dual)
    rng = np.random.default_rng(0)
    params = init_params(rng.standard_normal((4, 3)), betas=(0.25,), rng_seed=1)
    _, trace, _ = forward(index, params, Variant.RD, requires_grad=False)
    alpha, seg, _ = trace.dual_attention[0]
    c = relation_proxies(graph, params.x_init)
    for i in range(2):
        mask = seg == i
        logits = []
        for src in np.array(index.d_src)[mask]:
            w_edge = dual.weights[(i, int(src))]
            score = np.concatenate([c[i], c[src]]) @ params.dual_w[0] + params.dual_b[0]
            logits.append(_leaky(w_edge * score, params.leaky_slope))
        z = np.array(logits) - max(logits)
        want = np.exp(z) / np.exp(z).sum()
        np.testing.assert_allclose(alpha[mask], want, atol=1e-12)


def test_attention_rows_sum_to_one(small_index, small_params):
    index, _ = small_index
    _, trace, _ = forward(index, small_params, Variant.RDGCN, requires_grad=False)
    rows = list(trace.attention_rows())
    assert len(rows) == 2 * small_params.num_interactions
    for _, _, sums in rows:
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)


def test_singleton_neighborhood_gets_weight_one():
    # single relation -> dual graph has only the self-edge
    g1 = KnowledgeGraph(entities=frozenset({0, 1}), relations=frozenset({0}),
                        triples=((0, 0, 1),))
    g2 = KnowledgeGraph(entities=frozenset({0}), relations=frozenset(), triples=())
    graph, *_ = merge_graphs(g1, g2)
    index = build_index(graph, build_dual_graph(graph))
    params = init_params(np.random.default_rng(2).standard_normal((3, 2)),
                         betas=(0.5,))
    _, trace, _ = forward(index, params, Variant.RD, requires_grad=False)
    alpha, seg, _ = trace.dual_attention[0]
    np.testing.assert_allclose(alpha[seg == 0], [1.0], atol=1e-15)


def test_beta_zero_interactions_are_identity(small_index, small_dataset):
    index, _ = small_index
    _, name_vecs, _ = small_dataset
    params = init_params(name_vecs, betas=(0.0, 0.0), rng_seed=3)
    out, _, _ = forward(index, params, Variant.RD, requires_grad=False)
    np.testing.assert_allclose(out.value, params.x_init, atol=1e-12)


def test_highway_gate_negative_bias_passes_input_through(small_index, small_params):
    index, _ = small_index
    params = small_params.copy()
    params.gate_b[:] = -40.0  # sigmoid ~ 0 -> output is the layer input
    out, _, _ = forward(index, params, Variant.HGCN_S, requires_grad=False)
    np.testing.assert_allclose(out.value, params.x_init, atol=1e-12)


def test_gcn_s_gates_forced_open(small_index, small_params):
    index, _ = small_index
    params = small_params.copy()
    params.gate_b[:] = -40.0  # would close the gates if they were used
    out, trace, _ = forward(index, params, Variant.GCN_S, requires_grad=False)
    for gate in trace.gate_activations:
        np.testing.assert_array_equal(gate, 1.0)
    assert not np.allclose(out.value, params.x_init)


def test_variant_trace_structure(small_index, small_params):
    index, _ = small_index
    cases = {
        Variant.RDGCN: (2, NUM_GCN_LAYERS),
        Variant.HGCN_S: (0, NUM_GCN_LAYERS),
        Variant.GCN_S: (0, NUM_GCN_LAYERS),
        Variant.RD: (2, 0),
    }
    for variant, (n_att, n_gcn) in cases.items():
        _, trace, _ = forward(index, small_params, variant, requires_grad=False)
        assert len(trace.dual_attention) == n_att
        assert len(trace.primal_attention) == n_att
        assert len(trace.gcn_outputs) == n_gcn
        assert trace.final is not None


def test_forward_deterministic(small_index, small_params):
    index, _ = small_index
    a, _, _ = forward(index, small_params, Variant.RDGCN, requires_grad=False)
    b, _, _ = forward(index, small_params, Variant.RDGCN, requires_grad=False)
    np.testing.assert_array_equal(a.value, b.value)


def test_forward_permutation_equivariant():
    rng = np.random.default_rng(9)
    g = random_primal_graph(rng, n_entities=12, n_relations=4, n_triples=28)
    x = rng.standard_normal((g.entity_count, 3))
    params = init_params(x, rng_seed=4)
    out, _, _ = forward(build_index(g, build_dual_graph(g)), params,
                        Variant.RDGCN, requires_grad=False)

    n1 = g.kg1_entity_count
    perm = np.concatenate([rng.permutation(n1),
                           n1 + rng.permutation(g.entity_count - n1)])
    m1 = g.kg1_relation_count
    g1 = KnowledgeGraph(entities=frozenset(int(perm[e]) for e in range(n1)),
                        relations=frozenset(range(m1)),
                        triples=tuple((int(perm[h]), r, int(perm[t]))
                                      for h, r, t in g.triples if h < n1))
    g2 = KnowledgeGraph(entities=frozenset(int(perm[e])
                                           for e in range(n1, g.entity_count)),
                        relations=frozenset(range(g.relation_count - m1)),
                        triples=tuple((int(perm[h]), r - m1, int(perm[t]))
                                      for h, r, t in g.triples if h >= n1))
    pg, *_ = merge_graphs(g1, g2)
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    params2 = params.copy()
    params2.x_init = x[inv]
    out2, _, _ = forward(build_index(pg, build_dual_graph(pg)), params2,
                         Variant.RDGCN, requires_grad=False)
    np.testing.assert_allclose(out2.value[perm], out.value, atol=1e-10)


def test_interaction_count_validation(small_index, small_params):
    index, _ = small_index
    tensors = {k: Tensor(v) for k, v in small_params.tensors().items()}
    with pytest.raises(ValueError):
        interaction_stack(index, tensors, small_params, num_interactions=0)
    with pytest.raises(ValueError):
        interaction_stack(index, tensors, small_params, num_interactions=3)


def test_share_scorers_uses_single_row(small_index, small_dataset):
    index, _ = small_index
    _, name_vecs, _ = small_dataset
    params = init_params(name_vecs, rng_seed=6, share_scorers=True)
    out_a, _, _ = forward(index, params, Variant.RD, requires_grad=False)
    params_b = params.copy()
    params_b.dual_w[1] = 123.0  # row 1 must be ignored
    params_b.primal_w[1] = -55.0
    out_b, _, _ = forward(index, params_b, Variant.RD, requires_grad=False)
    np.testing.assert_array_equal(out_a.value, out_b.value)


def test_normalized_adjacency_matches_dense_oracle():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        g = random_primal_graph(rng, n_entities=int(rng.integers(4, 50)),
                                n_relations=4, n_triples=60)
        a = np.zeros((g.entity_count, g.entity_count))
        for h, _, t in g.triples:
            a[h, t] = a[t, h] = 1.0
        a += np.eye(g.entity_count)
        np.fill_diagonal(a, 1.0)
        d = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
        np.testing.assert_allclose(normalized_adjacency(g).toarray(),
                                   d @ a @ d, atol=1e-12)


def test_normalized_adjacency_rows_spectral():
    rng = np.random.default_rng(1)
    g = random_primal_graph(rng, n_entities=20, n_relations=4, n_triples=40)
    m = normalized_adjacency(g).toarray()
    np.testing.assert_allclose(m, m.T, atol=1e-12)
    eig = np.linalg.eigvalsh(m)
    assert eig.max() <= 1.0 + 1e-10


def test_variant_parse():
    assert Variant.parse("RDGCN") is Variant.RDGCN
    assert Variant.parse("hgcn_s") is Variant.HGCN_S
    assert Variant.parse(" gcn-s ") is Variant.GCN_S
    with pytest.raises(ValueError, match="unknown variant"):
        Variant.parse("transe")


def test_init_params_shapes_and_determinism(small_dataset):
    _, name_vecs, _ = small_dataset
    a = init_params(name_vecs, betas=(0.1, 0.3), rng_seed=7)
    b = init_params(name_vecs, betas=(0.1, 0.3), rng_seed=7)
    d = name_vecs.shape[1]
    assert a.dual_w.shape == (2, 4 * d)
    assert a.primal_w.shape == (2, 2 * d)
    assert a.gcn_w.shape == (NUM_GCN_LAYERS, d, d)
    assert a.num_interactions == 2
    for name in a.TRAINABLE:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.x_init is not name_vecs  # must be an independent copy
