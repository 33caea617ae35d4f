"""Weighted dual relation graph and relation proxy representations.

One vertex per relation type; two relations are linked when they share a
head or tail entity, with edge weight = head-set Jaccard + tail-set Jaccard.
Every vertex also carries a self-edge (weight 2) so attention neighborhoods
are never empty.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np
import scipy.sparse as sp

from .graph_model import PrimalGraph


@dataclass(frozen=True)
class DualRelationGraph:
    vertex_count: int
    weights: Dict[Tuple[int, int], float]          # symmetric, both orders stored
    neighbors: Tuple[Tuple[int, ...], ...]         # sorted, includes the vertex itself

    def edge_count(self) -> int:
        """Number of undirected edges, self-edges included once."""
        return sum(1 for (i, j) in self.weights if i <= j)

    def flat_edges(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Directed edge arrays (dst, src, weight) ordered by (dst, src).

        Row i of an attention layer aggregates over src entries with dst == i,
        so dst is the segment id.
        """
        dst, src, w = [], [], []
        for i, nbrs in enumerate(self.neighbors):
            for j in nbrs:
                dst.append(i)
                src.append(j)
                w.append(self.weights[(i, j)])
        return (np.array(dst, dtype=np.int64), np.array(src, dtype=np.int64),
                np.array(w, dtype=np.float64))


def _jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 0.0
    return len(a & b) / len(a | b)


def build_dual_graph(g: PrimalGraph) -> DualRelationGraph:
    """Construct the weighted dual graph from head/tail set overlaps.

    Candidate pairs come from inverted indices (entity -> relations with
    that head / that tail), so only colliding pairs are scored.
    """
    m = g.relation_count
    if m == 0:
        raise ValueError("primal graph has no relations")

    by_head: Dict[int, list] = {}
    by_tail: Dict[int, list] = {}
    for r in range(m):
        for e in g.head_sets[r]:
            by_head.setdefault(e, []).append(r)
        for e in g.tail_sets[r]:
            by_tail.setdefault(e, []).append(r)

    candidates = set()
    for rel_lists in (by_head, by_tail):
        for rels in rel_lists.values():
            for a in range(len(rels)):
                for b in range(a + 1, len(rels)):
                    i, j = rels[a], rels[b]
                    candidates.add((i, j) if i < j else (j, i))

    weights: Dict[Tuple[int, int], float] = {}
    nbrs = [[i] for i in range(m)]
    for i in range(m):
        weights[(i, i)] = 2.0
    for i, j in sorted(candidates):
        w = _jaccard(g.head_sets[i], g.head_sets[j]) + _jaccard(g.tail_sets[i], g.tail_sets[j])
        if w > 0.0:
            weights[(i, j)] = w
            weights[(j, i)] = w
            nbrs[i].append(j)
            nbrs[j].append(i)

    return DualRelationGraph(
        vertex_count=m,
        weights=weights,
        neighbors=tuple(tuple(sorted(x)) for x in nbrs),
    )


def proxy_matrices(g: PrimalGraph) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    """Sparse averaging operators over head sets and tail sets.

    Row i of the first matrix averages entity rows over H_i (second over T_i),
    so proxies = [Hm @ X || Tm @ X]. Raises if any occurring relation has an
    empty head or tail set.
    """
    m, n = g.relation_count, g.entity_count
    rows_h, cols_h, vals_h = [], [], []
    rows_t, cols_t, vals_t = [], [], []
    for r in range(m):
        heads, tails = g.head_sets[r], g.tail_sets[r]
        if not heads or not tails:
            raise ValueError(f"relation {r} has an empty head or tail set")
        for e in heads:
            rows_h.append(r)
            cols_h.append(e)
            vals_h.append(1.0 / len(heads))
        for e in tails:
            rows_t.append(r)
            cols_t.append(e)
            vals_t.append(1.0 / len(tails))
    hm = sp.csr_matrix((vals_h, (rows_h, cols_h)), shape=(m, n))
    tm = sp.csr_matrix((vals_t, (rows_t, cols_t)), shape=(m, n))
    return hm, tm


def relation_proxies(g: PrimalGraph, entity_reps: np.ndarray) -> np.ndarray:
    """Per-relation proxy: [mean entity row over heads || mean over tails]."""
    hm, tm = proxy_matrices(g)
    return np.concatenate([hm @ entity_reps, tm @ entity_reps], axis=1)
