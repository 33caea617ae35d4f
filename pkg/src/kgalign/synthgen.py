"""Deterministic synthetic bilingual KG pairs with known ground truth.

A base KG is grown with preferential attachment (so relation head/tail sets
overlap and the dual graph is non-trivial) and a few same-relation triangles
are planted. Each output KG is an independently edge-dropped copy of the
base; KG2 additionally gets permuted entity ids. Name vectors share a unit
base vector per aligned pair plus independent noise.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Dict, List, Set, Tuple

import numpy as np

from .graph_model import (KnowledgeGraph, write_kg, write_name_embeddings,
                          write_pairs)


@dataclass
class SynthConfig:
    entities_per_kg: int = 200
    relation_count: int = 20
    triple_count: int = 800
    edge_dropout: float = 0.2
    name_noise: float = 0.1
    embedding_dim: int = 50
    rng_seed: int = 0
    seed_fraction: float = 0.3
    planted_triangles: int = 5
    name_rank: int = 8        # latent rank of the base name vectors
    confusable_pairs: int = 40  # entity pairs with near-identical names that
                                # only their relation types can tell apart
    twin_name_gap: float = 0.02

    def __post_init__(self):
        if self.relation_count < 1:
            raise ValueError("need at least one relation")
        if self.triple_count < self.entities_per_kg:
            raise ValueError("triple_count must be at least entities_per_kg")
        if self.triple_count < self.relation_count:
            raise ValueError("triple_count must cover every relation")
        n, m = self.entities_per_kg, self.relation_count
        if self.triple_count > n * (n - 1) * m:
            raise ValueError("triple_count exceeds the number of distinct triples")
        if not 0.0 <= self.edge_dropout < 1.0:
            raise ValueError("edge_dropout must be in [0,1)")
        if self.name_noise < 0.0:
            raise ValueError("name_noise must be nonnegative")
        if not 0.0 < self.seed_fraction < 1.0:
            raise ValueError("seed_fraction must be in (0,1)")


@dataclass
class SynthResult:
    directory: str
    embeddings_path: str
    gold_pairs: Tuple[Tuple[int, int], ...]
    base_triples: int
    twin_pairs: Tuple[Tuple[int, int], ...] = ()


def _grow_base(config: SynthConfig, rng: np.random.Generator):
    """Returns (triples, protected) where protected triples survive dropout."""
    n, m = config.entities_per_kg, config.relation_count
    triples: List[Tuple[int, int, int]] = []
    seen: Set[Tuple[int, int, int]] = set()
    protected: Set[Tuple[int, int, int]] = set()
    endpoints: List[int] = []  # one entry per triple endpoint: degree skew

    def add(h: int, r: int, t: int, protect: bool) -> bool:
        if h == t or (h, r, t) in seen:
            return False
        seen.add((h, r, t))
        triples.append((h, r, t))
        endpoints.extend((h, t))
        if protect:
            protected.add((h, r, t))
        return True

    # planted same-relation triangles, protected so they survive dropout
    for _ in range(config.planted_triangles):
        r = int(rng.integers(m))
        u, v, w = map(int, rng.choice(n, size=3, replace=False))
        add(u, r, v, True)
        add(v, r, w, True)
        add(u, r, w, True)

    # confusable twins: identical neighbor sets but crossed relation types
    # (u-w via r1, u-z via r2; v-w via r2, v-z via r1). Their names are later
    # made nearly identical, so plain neighbor averaging sees no difference
    # between the twins and only relation-type evidence can separate them.
    twins: List[Tuple[int, int]] = []
    if m >= 2:
        for _ in range(config.confusable_pairs):
            u, v, w, z = map(int, rng.choice(n, size=4, replace=False))
            r1, r2 = map(int, rng.choice(m, size=2, replace=False))
            ok = [add(u, r1, w, True), add(u, r2, z, True),
                  add(v, r2, w, True), add(v, r1, z, True)]
            if all(ok):
                twins.append((u, v))

    def pick_entity() -> int:
        if endpoints and rng.random() < 0.7:
            return endpoints[int(rng.integers(len(endpoints)))]
        return int(rng.integers(n))

    # coverage pass: every entity appears, every relation keeps one
    # protected triple so no head/tail set can go empty in either copy.
    # Entities already placed (e.g. twins) are skipped so their carefully
    # constructed neighborhoods stay undiluted.
    covered = set(endpoints)
    for i in range(n):
        r = i % m
        if i >= m and i in covered:
            continue
        for _ in range(50):
            if add(i, r, pick_entity(), protect=i < m):
                break

    while len(triples) < config.triple_count:
        r = int(rng.integers(m))
        add(pick_entity(), r, pick_entity(), False)

    return triples, protected, twins


def generate(config: SynthConfig, out_dir: str) -> SynthResult:
    """Write a DBP15K-layout dataset plus name embeddings and gold pairs."""
    os.makedirs(out_dir, exist_ok=True)
    rng = np.random.default_rng(config.rng_seed)
    n, m = config.entities_per_kg, config.relation_count

    base_triples, protected, twins = _grow_base(config, rng)
    perm = rng.permutation(n)

    def drop(triples):
        kept = []
        for tr in triples:
            if tr in protected or rng.random() >= config.edge_dropout:
                kept.append(tr)
        return kept

    kg1_triples = drop(base_triples)
    kg2_triples = [(n + int(perm[h]), m + r, n + int(perm[t]))
                   for h, r, t in drop(base_triples)]

    kg1 = KnowledgeGraph(
        entities=frozenset(range(n)),
        relations=frozenset(range(m)),
        triples=tuple(kg1_triples),
        labels={i: f"kg1_entity_{i}" for i in range(n)},
    )
    kg2 = KnowledgeGraph(
        entities=frozenset(range(n, 2 * n)),
        relations=frozenset(range(m, 2 * m)),
        triples=tuple(kg2_triples),
        labels={n + i: f"kg2_entity_{i}" for i in range(n)},
    )
    write_kg(out_dir, "1", kg1)
    write_kg(out_dir, "2", kg2)

    gold = tuple((i, n + int(perm[i])) for i in range(n))
    write_pairs(os.path.join(out_dir, "ref_ent_ids"), gold)
    write_pairs(os.path.join(out_dir, "gold_pairs"), gold)

    # base vectors from a low-rank latent factor model: distinct but
    # correlated, like real name embeddings, so noise actually confuses
    # the nearest-neighbor baseline instead of being washed out by
    # near-orthogonality in high dimension
    rank = min(config.name_rank, config.embedding_dim)
    latent = rng.standard_normal((n, rank))
    mix = rng.standard_normal((rank, config.embedding_dim)) / np.sqrt(rank)
    base_vecs = latent @ mix
    base_vecs /= np.linalg.norm(base_vecs, axis=1, keepdims=True)
    for u, v in twins:
        nudged = base_vecs[u] + config.twin_name_gap * rng.standard_normal(
            config.embedding_dim)
        base_vecs[v] = nudged / np.linalg.norm(nudged)
    vectors: Dict[int, np.ndarray] = {}
    for i in range(n):
        noise1 = config.name_noise * rng.standard_normal(config.embedding_dim)
        noise2 = config.name_noise * rng.standard_normal(config.embedding_dim)
        vectors[i] = base_vecs[i] + noise1
        vectors[n + int(perm[i])] = base_vecs[i] + noise2
    emb_path = os.path.join(out_dir, "name_vectors")
    write_name_embeddings(emb_path, vectors)

    return SynthResult(directory=out_dir, embeddings_path=emb_path,
                       gold_pairs=gold, base_triples=len(base_triples),
                       twin_pairs=tuple(twins))
