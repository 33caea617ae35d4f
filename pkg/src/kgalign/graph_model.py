"""Knowledge-graph data model and DBP15K-format dataset loading.

File layout (tab-separated, UTF-8, one record per line):
    ent_ids_1 / ent_ids_2:   <int id>\t<entity uri>
    rel_ids_1 / rel_ids_2:   <int id>\t<relation uri>
    triples_1 / triples_2:   <head id>\t<relation id>\t<tail id>
    ref_ent_ids:             <kg1 id>\t<kg2 id>   (all aligned pairs)
    sup_ent_ids (optional):  training subset, same format
Name embeddings: <entity id>\t<v1> <v2> ... <v_dim>  (space-separated floats).
"""
from __future__ import annotations

import logging
import os
import zlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

logger = logging.getLogger(__name__)

Triple = Tuple[int, int, int]


class DatasetError(Exception):
    """Raised for malformed or inconsistent dataset files."""


@dataclass(frozen=True)
class KnowledgeGraph:
    """A single KG: entity/relation id sets plus directed typed triples."""
    entities: frozenset
    relations: frozenset
    triples: Tuple[Triple, ...]
    labels: Optional[Dict[int, str]] = None

    def __post_init__(self):
        for h, r, t in self.triples:
            if h not in self.entities or t not in self.entities:
                raise DatasetError(f"triple ({h},{r},{t}) references unknown entity")
            if r not in self.relations:
                raise DatasetError(f"triple ({h},{r},{t}) references unknown relation {r}")
        if len(set(self.triples)) != len(self.triples):
            raise DatasetError("duplicate triples in KnowledgeGraph")


@dataclass(frozen=True)
class PrimalGraph:
    """Merged entity graph of both KGs with dense contiguous ids (KG1 first).

    ``neighbors[q]`` lists (neighbor entity, relation, direction) with
    direction +1 when q is the head of the triple, -1 when q is the tail.
    The two KGs stay disconnected: no triple crosses the kg1/kg2 boundary.
    """
    entity_count: int
    relation_count: int
    kg1_entity_count: int
    kg1_relation_count: int
    triples: Tuple[Triple, ...]
    neighbors: Tuple[Tuple[Tuple[int, int, int], ...], ...]
    head_sets: Tuple[frozenset, ...]
    tail_sets: Tuple[frozenset, ...]
    entity_orig: Tuple[Tuple[int, int], ...]   # dense id -> (kg index 1/2, original id)
    relation_orig: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        n1 = self.kg1_entity_count
        for h, r, t in self.triples:
            if (h < n1) != (t < n1):
                raise DatasetError(f"cross-KG triple ({h},{r},{t})")
        used = {r for _, r, _ in self.triples}
        for r in used:
            if not self.head_sets[r] or not self.tail_sets[r]:
                raise DatasetError(f"relation {r} occurs in triples but has empty head/tail set")

    def adjacency_pairs(self) -> Set[Tuple[int, int]]:
        """Symmetric set of undirected entity-id pairs linked by any triple."""
        pairs: Set[Tuple[int, int]] = set()
        for h, _, t in self.triples:
            pairs.add((h, t))
            pairs.add((t, h))
        return pairs

    def is_kg1_entity(self, e: int) -> bool:
        return e < self.kg1_entity_count


@dataclass(frozen=True)
class AlignmentSeeds:
    """Known aligned pairs (dense ids), split into train and test."""
    train: Tuple[Tuple[int, int], ...]
    test: Tuple[Tuple[int, int], ...]

    def __post_init__(self):
        if set(self.train) & set(self.test):
            raise DatasetError("train/test seed pairs overlap")
        for pairs in (self.train, self.test):
            left = [p for p, _ in pairs]
            right = [q for _, q in pairs]
            if len(set(left)) != len(left) or len(set(right)) != len(right):
                raise DatasetError("an entity appears in more than one pair of a split")


# ---------------------------------------------------------------------------
# file parsing


def _read_tsv(path: str, n_fields: int) -> List[Tuple[str, ...]]:
    if not os.path.exists(path):
        raise DatasetError(f"missing file: {path}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != n_fields:
                raise DatasetError(
                    f"{path}:{lineno}: expected {n_fields} tab-separated fields, got {len(parts)}")
            rows.append(tuple(parts))
    return rows


def _parse_id_map(path: str) -> Dict[int, str]:
    out: Dict[int, str] = {}
    for lineno, (sid, name) in enumerate(_read_tsv(path, 2), 1):
        try:
            i = int(sid)
        except ValueError:
            raise DatasetError(f"{path}: malformed id {sid!r}") from None
        if i < 0:
            raise DatasetError(f"{path}: negative id {i}")
        if i in out:
            raise DatasetError(f"{path}: duplicate id definition {i}")
        out[i] = name
    return out


def _parse_triples(path: str, entities: Set[int], relations: Set[int]) -> List[Triple]:
    if not os.path.exists(path):
        raise DatasetError(f"missing file: {path}")
    triples: List[Triple] = []
    seen = set()
    dup = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 fields, got {len(parts)}")
            try:
                h, r, t = (int(p) for p in parts)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-integer id") from None
            for e in (h, t):
                if e not in entities:
                    raise DatasetError(f"{path}:{lineno}: dangling entity id {e}")
            if r not in relations:
                raise DatasetError(f"{path}:{lineno}: dangling relation id {r}")
            if (h, r, t) in seen:
                dup += 1
                continue
            seen.add((h, r, t))
            triples.append((h, r, t))
    if dup:
        logger.warning("%s: dropped %d duplicate triples", path, dup)
    return triples


def load_kg(ent_path: str, rel_path: str, triple_path: str) -> KnowledgeGraph:
    ent_map = _parse_id_map(ent_path)
    rel_map = _parse_id_map(rel_path)
    if not os.path.exists(triple_path):
        raise DatasetError(f"missing file: {triple_path}")
    triples = _parse_triples(triple_path, set(ent_map), set(rel_map))
    return KnowledgeGraph(
        entities=frozenset(ent_map),
        relations=frozenset(rel_map),
        triples=tuple(triples),
        labels=ent_map,
    )


# ---------------------------------------------------------------------------
# merging


def merge_graphs(g1: KnowledgeGraph, g2: KnowledgeGraph) -> Tuple[
        PrimalGraph, Dict[int, int], Dict[int, int], Dict[int, int], Dict[int, int]]:
    """Re-index both KGs into one dense id space (KG1 first).

    Returns the primal graph plus the original-id -> dense-id maps
    (entities then relations, per KG). No cross-KG edges are added.
    """
    ent_map1 = {e: i for i, e in enumerate(sorted(g1.entities))}
    ent_map2 = {e: i + len(ent_map1) for i, e in enumerate(sorted(g2.entities))}
    rel_map1 = {r: i for i, r in enumerate(sorted(g1.relations))}
    rel_map2 = {r: i + len(rel_map1) for i, r in enumerate(sorted(g2.relations))}

    n = len(ent_map1) + len(ent_map2)
    m = len(rel_map1) + len(rel_map2)
    triples: List[Triple] = []
    for (kg, emap, rmap) in ((g1, ent_map1, rel_map1), (g2, ent_map2, rel_map2)):
        for h, r, t in kg.triples:
            triples.append((emap[h], rmap[r], emap[t]))

    heads: List[Set[int]] = [set() for _ in range(m)]
    tails: List[Set[int]] = [set() for _ in range(m)]
    nbr: List[List[Tuple[int, int, int]]] = [[] for _ in range(n)]
    for h, r, t in triples:
        heads[r].add(h)
        tails[r].add(t)
        nbr[h].append((t, r, 1))
        nbr[t].append((h, r, -1))

    entity_orig = [(1, e) for e in sorted(g1.entities)] + [(2, e) for e in sorted(g2.entities)]
    relation_orig = [(1, r) for r in sorted(g1.relations)] + [(2, r) for r in sorted(g2.relations)]

    graph = PrimalGraph(
        entity_count=n,
        relation_count=m,
        kg1_entity_count=len(ent_map1),
        kg1_relation_count=len(rel_map1),
        triples=tuple(triples),
        neighbors=tuple(tuple(sorted(x)) for x in nbr),
        head_sets=tuple(frozenset(s) for s in heads),
        tail_sets=tuple(frozenset(s) for s in tails),
        entity_orig=tuple(entity_orig),
        relation_orig=tuple(relation_orig),
    )
    return graph, ent_map1, ent_map2, rel_map1, rel_map2


# ---------------------------------------------------------------------------
# dataset loading


@dataclass(frozen=True)
class Dataset:
    graph: PrimalGraph
    seeds: AlignmentSeeds
    kg1: KnowledgeGraph
    kg2: KnowledgeGraph
    ent_map1: Dict[int, int] = field(repr=False, default_factory=dict)
    ent_map2: Dict[int, int] = field(repr=False, default_factory=dict)


def load_dataset(dir_path: str, split_fraction: float = 0.3,
                 rng_seed: int = 0) -> Dataset:
    """Load a DBP15K-layout directory and split the reference pairs.

    The split shuffles the reference pairs with ``rng_seed`` and takes
    round(split_fraction * count) as training seeds. A ``sup_ent_ids``
    file, when present, pins the training subset instead.
    """
    if not 0.0 < split_fraction < 1.0:
        raise ValueError("split_fraction must be in (0,1)")
    j = os.path.join
    g1 = load_kg(j(dir_path, "ent_ids_1"), j(dir_path, "rel_ids_1"), j(dir_path, "triples_1"))
    g2 = load_kg(j(dir_path, "ent_ids_2"), j(dir_path, "rel_ids_2"), j(dir_path, "triples_2"))
    graph, ent_map1, ent_map2, _, _ = merge_graphs(g1, g2)

    ref_path = j(dir_path, "ref_ent_ids")
    refs: List[Tuple[int, int]] = []
    for lineno, (a, b) in enumerate(_read_tsv(ref_path, 2), 1):
        try:
            e1, e2 = int(a), int(b)
        except ValueError:
            raise DatasetError(f"{ref_path}:{lineno}: non-integer id") from None
        if e1 not in ent_map1:
            raise DatasetError(f"{ref_path}:{lineno}: dangling kg1 entity id {e1}")
        if e2 not in ent_map2:
            raise DatasetError(f"{ref_path}:{lineno}: dangling kg2 entity id {e2}")
        refs.append((ent_map1[e1], ent_map2[e2]))

    sup_path = j(dir_path, "sup_ent_ids")
    if os.path.exists(sup_path):
        sup = []
        for lineno, (a, b) in enumerate(_read_tsv(sup_path, 2), 1):
            pair = (ent_map1[int(a)], ent_map2[int(b)])
            sup.append(pair)
        sup_set = set(sup)
        train = tuple(sup)
        test = tuple(p for p in refs if p not in sup_set)
    else:
        rng = np.random.default_rng(rng_seed)
        order = rng.permutation(len(refs))
        n_train = int(round(split_fraction * len(refs)))
        train = tuple(refs[i] for i in order[:n_train])
        test = tuple(refs[i] for i in order[n_train:])

    seeds = AlignmentSeeds(train=train, test=test)
    return Dataset(graph=graph, seeds=seeds, kg1=g1, kg2=g2,
                   ent_map1=ent_map1, ent_map2=ent_map2)


# ---------------------------------------------------------------------------
# name embeddings


def _fallback_vector(key: str, dim: int) -> np.ndarray:
    """Deterministic unit-norm pseudo-random vector from the original id string."""
    seed = zlib.crc32(key.encode("utf-8"))
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def load_name_embeddings(path: str, dim: int, graph: PrimalGraph) -> np.ndarray:
    """Read per-entity name vectors keyed by original file id.

    Entities without a vector get a deterministic unit-norm fallback seeded
    from their original id, so runs are reproducible and no row is zero.
    """
    if not os.path.exists(path):
        raise DatasetError(f"missing file: {path}")
    by_orig: Dict[int, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            key, _, rest = line.partition("\t")
            try:
                orig = int(key)
                vec = np.array([float(x) for x in rest.split()], dtype=np.float64)
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric token") from None
            if vec.shape[0] != dim:
                raise DatasetError(
                    f"{path}:{lineno}: entity {orig} has {vec.shape[0]} values, expected {dim}")
            by_orig[orig] = vec

    out = np.empty((graph.entity_count, dim), dtype=np.float64)
    missing = 0
    for dense, (kg, orig) in enumerate(graph.entity_orig):
        if orig in by_orig:
            out[dense] = by_orig[orig]
        else:
            out[dense] = _fallback_vector(f"kg{kg}:{orig}", dim)
            missing += 1
    if missing:
        logger.warning("%s: %d entities missing name vectors, used seeded fallback",
                       path, missing)
    return out


# ---------------------------------------------------------------------------
# writing (used by the synthetic generator and round-trip tests)


def write_kg(dir_path: str, suffix: str, kg: KnowledgeGraph) -> None:
    j = os.path.join
    with open(j(dir_path, f"ent_ids_{suffix}"), "w", encoding="utf-8") as fh:
        labels = kg.labels or {}
        for e in sorted(kg.entities):
            fh.write(f"{e}\t{labels.get(e, f'entity_{e}')}\n")
    with open(j(dir_path, f"rel_ids_{suffix}"), "w", encoding="utf-8") as fh:
        for r in sorted(kg.relations):
            fh.write(f"{r}\trelation_{r}\n")
    with open(j(dir_path, f"triples_{suffix}"), "w", encoding="utf-8") as fh:
        for h, r, t in kg.triples:
            fh.write(f"{h}\t{r}\t{t}\n")


def write_pairs(path: str, pairs: Sequence[Tuple[int, int]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for a, b in pairs:
            fh.write(f"{a}\t{b}\n")


def write_name_embeddings(path: str, vectors: Dict[int, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for orig in sorted(vectors):
            vals = " ".join(repr(float(x)) for x in vectors[orig])
            fh.write(f"{orig}\t{vals}\n")
