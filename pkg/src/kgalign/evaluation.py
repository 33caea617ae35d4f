"""Alignment evaluation: Hits@k ranking, triangle stratification, sweeps."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from ._kernels import l1_cross
from .graph_model import PrimalGraph


@dataclass
class AlignmentReport:
    direction: str                      # "kg1-kg2", "kg2-kg1", or "both"
    hits: Dict[int, float]
    ranks: Optional[np.ndarray] = None  # per-test-pair rank of the true match
    triangle_correct: Optional[int] = None
    triangle_total: Optional[int] = None
    runtime: float = 0.0
    config_fingerprint: str = ""
    sub_reports: List["AlignmentReport"] = field(default_factory=list)

    @property
    def triangle_rate(self) -> Optional[float]:
        if self.triangle_total in (None, 0):
            return None
        return self.triangle_correct / self.triangle_total

    def to_dict(self) -> dict:
        out = {
            "direction": self.direction,
            "hits": {str(k): v for k, v in sorted(self.hits.items())},
            "runtime": self.runtime,
            "config_fingerprint": self.config_fingerprint,
        }
        if self.triangle_total is not None:
            out["triangle_correct"] = self.triangle_correct
            out["triangle_total"] = self.triangle_total
            out["triangle_rate"] = self.triangle_rate
        if self.ranks is not None:
            out["ranks"] = [int(r) for r in self.ranks]
        if self.sub_reports:
            out["sub_reports"] = [r.to_dict() for r in self.sub_reports]
        return out


def _rank_one_direction(x: np.ndarray, queries: np.ndarray, true_cands: np.ndarray,
                        candidates: np.ndarray) -> np.ndarray:
    """Rank of each query's true candidate among ``candidates`` by L1
    distance, ties broken by ascending entity id."""
    dist = l1_cross(np.ascontiguousarray(x[queries]),
                    np.ascontiguousarray(x[candidates]))
    ranks = np.empty(len(queries), dtype=np.int64)
    for i in range(len(queries)):
        true_id = true_cands[i]
        pos = np.nonzero(candidates == true_id)[0]
        if pos.size != 1:
            raise ValueError(f"true counterpart {true_id} not in candidate pool")
        d_true = dist[i, pos[0]]
        better = dist[i] < d_true
        tied_ahead = (dist[i] == d_true) & (candidates < true_id)
        ranks[i] = 1 + int(better.sum()) + int(tied_ahead.sum())
    return ranks


def evaluate(x: np.ndarray, test_pairs: Sequence[Tuple[int, int]],
             ks: Iterable[int] = (1, 10), direction: str = "kg1-kg2",
             candidate_ids: Optional[np.ndarray] = None,
             triangle_entities: Optional[Set[int]] = None,
             include_ranks: bool = False,
             config_fingerprint: str = "") -> AlignmentReport:
    """Nearest-neighbor retrieval over the test split.

    The candidate pool defaults to the counterpart entities of the test
    pairs themselves (the standard protocol); ``candidate_ids`` widens it.
    ``direction="both"`` averages the two directional reports.
    """
    if not test_pairs:
        raise ValueError("no test pairs")
    ks = sorted(set(int(k) for k in ks))
    pairs = np.asarray(test_pairs, dtype=np.int64)
    t0 = time.time()

    if direction == "both":
        subs = [evaluate(x, test_pairs, ks, d, candidate_ids, triangle_entities,
                         include_ranks, config_fingerprint)
                for d in ("kg1-kg2", "kg2-kg1")]
        hits = {k: (subs[0].hits[k] + subs[1].hits[k]) / 2.0 for k in ks}
        rep = AlignmentReport(direction="both", hits=hits, runtime=time.time() - t0,
                              config_fingerprint=config_fingerprint, sub_reports=subs)
        if triangle_entities is not None:
            rep.triangle_correct = sum(s.triangle_correct for s in subs)
            rep.triangle_total = sum(s.triangle_total for s in subs)
        return rep

    if direction == "kg1-kg2":
        queries, true_cands = pairs[:, 0], pairs[:, 1]
    elif direction == "kg2-kg1":
        queries, true_cands = pairs[:, 1], pairs[:, 0]
    else:
        raise ValueError(f"unknown direction {direction!r}")
    candidates = np.sort(np.unique(true_cands)) if candidate_ids is None \
        else np.sort(np.asarray(candidate_ids, dtype=np.int64))

    ranks = _rank_one_direction(x, queries, true_cands, candidates)
    hits = {k: float((ranks <= k).mean()) for k in ks}
    rep = AlignmentReport(direction=direction, hits=hits,
                          ranks=ranks if include_ranks else None,
                          runtime=time.time() - t0,
                          config_fingerprint=config_fingerprint)
    if triangle_entities is not None:
        mask = np.array([q in triangle_entities for q in queries])
        rep.triangle_total = int(mask.sum())
        rep.triangle_correct = int((ranks[mask] == 1).sum())
    return rep


def find_triangular_entities(g: PrimalGraph) -> Set[int]:
    """Entities on a 3-cycle whose three edges (direction ignored) all carry
    the same relation type."""
    out: Set[int] = set()
    by_rel: Dict[int, Dict[int, Set[int]]] = {}
    for h, r, t in g.triples:
        if h == t:
            continue
        adj = by_rel.setdefault(r, {})
        adj.setdefault(h, set()).add(t)
        adj.setdefault(t, set()).add(h)
    for adj in by_rel.values():
        for u, nbrs in adj.items():
            for v in nbrs:
                if v <= u:
                    continue
                common = nbrs & adj[v]
                for w in common:
                    out.update((u, v, w))
    return out


def seed_sweep(dataset_dir: str, embeddings_path: str, dim: int,
               fractions: Sequence[float], train_config, betas=(0.1, 0.3),
               rng_seed: int = 0) -> List[Tuple[float, float]]:
    """Retrain from scratch at each seed fraction; returns (fraction, hits@1)."""
    from .pipeline import run_on_directory  # lazy: pipeline imports evaluate

    rows = []
    for frac in fractions:
        if not 0.0 < frac < 1.0:
            raise ValueError("fractions must lie in (0,1)")
        report, _, _ = run_on_directory(
            dataset_dir, embeddings_path, dim, train_config,
            split_fraction=frac, split_seed=rng_seed, betas=betas)
        rows.append((float(frac), report.hits[1]))
    return rows
