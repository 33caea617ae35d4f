import numpy as np
import pytest

from kgalign.dual_graph import build_dual_graph
from kgalign.graph_model import load_dataset, load_name_embeddings
from kgalign.network import build_index, init_params
from kgalign.synthgen import SynthConfig, generate


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """A tiny deterministic dataset shared across tests (read-only)."""
    out = tmp_path_factory.mktemp("small_ds")
    config = SynthConfig(entities_per_kg=20, relation_count=4, triple_count=50,
                         edge_dropout=0.1, name_noise=0.1, embedding_dim=6,
                         rng_seed=11, planted_triangles=2, confusable_pairs=2)
    result = generate(config, str(out))
    dataset = load_dataset(str(out), split_fraction=0.3, rng_seed=0)
    name_vecs = load_name_embeddings(result.embeddings_path, 6, dataset.graph)
    return dataset, name_vecs, result


@pytest.fixture(scope="session")
def small_index(small_dataset):
    dataset, name_vecs, _ = small_dataset
    dual = build_dual_graph(dataset.graph)
    return build_index(dataset.graph, dual), dual


@pytest.fixture()
def small_params(small_dataset):
    _, name_vecs, _ = small_dataset
    return init_params(name_vecs, betas=(0.1, 0.3), rng_seed=5)


def random_primal_graph(rng, n_entities=10, n_relations=4, n_triples=25,
                        two_kg_split=None):
    """Random PrimalGraph built through the public merge path."""
    from kgalign.graph_model import KnowledgeGraph, merge_graphs

    split = two_kg_split if two_kg_split is not None else n_entities // 2
    split = max(1, min(n_entities - 1, split))

    def random_kg(ents, rels):
        triples = set()
        for _ in range(n_triples):
            h, t = rng.choice(ents, size=2, replace=False)
            r = rng.choice(rels)
            triples.add((int(h), int(r), int(t)))
        # every relation needs at least one triple or proxies are undefined
        for r in rels:
            if not any(tr[1] == r for tr in triples):
                h, t = rng.choice(ents, size=2, replace=False)
                triples.add((int(h), int(r), int(t)))
        return KnowledgeGraph(entities=frozenset(int(e) for e in ents),
                              relations=frozenset(int(r) for r in rels),
                              triples=tuple(sorted(triples)))

    g1 = random_kg(np.arange(split), np.arange(max(1, n_relations // 2)))
    g2 = random_kg(np.arange(n_entities - split),
                   np.arange(n_relations - max(1, n_relations // 2)))
    graph, *_ = merge_graphs(g1, g2)
    return graph
