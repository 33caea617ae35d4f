"""Margin ranking training: exact gradients, hard negative mining, Adam/SGD.

Negatives are the exact K-nearest non-matching entities under L1 distance,
re-mined every few epochs and treated as constants in between (no gradient
flows through the mining selection).
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from ._kernels import l1_cross
from .autodiff import Tensor
from .graph_model import AlignmentSeeds, PrimalGraph
from .network import ForwardTrace, GraphIndex, ModelParams, Variant, forward

GradientBundle = Dict[str, np.ndarray]


class TrainingDiverged(Exception):
    """Raised when the loss or a gradient goes non-finite."""


@dataclass
class TrainingConfig:
    margin: float = 1.0
    negatives_per_side: int = 125
    negative_refresh_epochs: int = 10
    learning_rate: float = 0.001
    epochs: int = 600
    rng_seed: int = 0
    variant: Variant = Variant.RDGCN
    optimizer: str = "adam"         # "adam" or "sgd"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    early_stop: bool = False
    patience: int = 50
    val_fraction: float = 0.1
    eval_every: int = 10

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.negatives_per_side < 1:
            raise ValueError("need at least one negative per side")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class NegativeSet:
    """Corrupted pairs per training pair: row i holds 2K (p', q') pairs for
    train pair i (first K corrupt the kg2 side, last K the kg1 side)."""
    pairs: np.ndarray  # P x 2K x 2 entity ids

    @property
    def per_positive(self) -> int:
        return self.pairs.shape[1]


def alignment_distance(x: np.ndarray, e1: int, e2: int) -> float:
    """L1 distance between two entity embedding rows."""
    return float(np.abs(x[e1] - x[e2]).sum())


def mine_negatives(x: np.ndarray, train_pairs: np.ndarray, k: int,
                   graph: PrimalGraph) -> NegativeSet:
    """Exact K-nearest corruption on both sides under L1 distance.

    For pair (p, q): the K entities of KG2 nearest to p (excluding q) replace
    q, and the K entities of KG1 nearest to q (excluding p) replace p. Ties
    break by ascending entity id.
    """
    train_pairs = np.asarray(train_pairs, dtype=np.int64)
    n1 = graph.kg1_entity_count
    kg1_ids = np.arange(n1, dtype=np.int64)
    kg2_ids = np.arange(n1, graph.entity_count, dtype=np.int64)
    if k >= kg1_ids.size or k >= kg2_ids.size:
        raise ValueError(f"negatives_per_side={k} exceeds candidate pool")

    p_ids = train_pairs[:, 0]
    q_ids = train_pairs[:, 1]
    out = np.empty((len(train_pairs), 2 * k, 2), dtype=np.int64)

    def nearest(queries, cand_ids, exclude):
        dist = l1_cross(np.ascontiguousarray(x[queries]),
                        np.ascontiguousarray(x[cand_ids]))
        picks = np.empty((len(queries), k), dtype=np.int64)
        for i in range(len(queries)):
            row = dist[i].copy()
            row[np.searchsorted(cand_ids, exclude[i])] = np.inf
            order = np.lexsort((cand_ids, row))
            picks[i] = cand_ids[order[:k]]
        return picks

    q_neg = nearest(p_ids, kg2_ids, q_ids)   # corrupt the kg2 side
    p_neg = nearest(q_ids, kg1_ids, p_ids)   # corrupt the kg1 side
    out[:, :k, 0] = p_ids[:, None]
    out[:, :k, 1] = q_neg
    out[:, k:, 0] = p_neg
    out[:, k:, 1] = q_ids[:, None]
    return NegativeSet(pairs=out)


def _loss_tensor(x: Tensor, train_pairs: np.ndarray, negatives: NegativeSet,
                 gamma: float) -> Tensor:
    train_pairs = np.asarray(train_pairs, dtype=np.int64)
    d_pos = (x.gather(train_pairs[:, 0]) - x.gather(train_pairs[:, 1])).abs().sum_axis(1)
    flat = negatives.pairs.reshape(-1, 2)
    pos_idx = np.repeat(np.arange(len(train_pairs)), negatives.per_positive)
    d_neg = (x.gather(flat[:, 0]) - x.gather(flat[:, 1])).abs().sum_axis(1)
    hinge = (d_pos.gather(pos_idx) - d_neg + gamma).relu()
    return hinge.sum()


def margin_loss(x: np.ndarray, seeds: AlignmentSeeds, negatives: NegativeSet,
                gamma: float) -> float:
    """Hinge loss over all (positive, mined negative) combinations."""
    return float(_loss_tensor(Tensor(x), np.asarray(seeds.train), negatives, gamma).value)


def backward(index: GraphIndex, params: ModelParams, variant: Variant,
             train_pairs: np.ndarray, negatives: NegativeSet,
             gamma: float) -> Tuple[float, GradientBundle, ForwardTrace]:
    """Forward + loss + reverse sweep; returns (loss, grads, trace)."""
    x_bar, trace, tensors = forward(index, params, variant)
    loss = _loss_tensor(x_bar, train_pairs, negatives, gamma)
    loss.backward()
    grads: GradientBundle = {}
    for name, t in tensors.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.value)
        if not np.all(np.isfinite(g)):
            raise TrainingDiverged(f"non-finite gradient in {name}")
        grads[name] = g
    if not np.isfinite(loss.value):
        raise TrainingDiverged("non-finite loss")
    return float(loss.value), grads, trace


class Optimizer:
    def __init__(self, config: TrainingConfig):
        self.config = config
        self.step_count = 0
        self._m: Dict[str, np.ndarray] = {}
        self._v: Dict[str, np.ndarray] = {}

    def step(self, params: ModelParams, grads: GradientBundle) -> None:
        c = self.config
        self.step_count += 1
        for name in params.TRAINABLE:
            g = grads[name]
            p = getattr(params, name)
            if c.optimizer == "sgd":
                p -= c.learning_rate * g
                continue
            if name not in self._m:
                self._m[name] = np.zeros_like(p)
                self._v[name] = np.zeros_like(p)
            m = self._m[name]
            v = self._v[name]
            m *= c.adam_beta1
            m += (1 - c.adam_beta1) * g
            v *= c.adam_beta2
            v += (1 - c.adam_beta2) * g * g
            m_hat = m / (1 - c.adam_beta1 ** self.step_count)
            v_hat = v / (1 - c.adam_beta2 ** self.step_count)
            p -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.adam_eps)


def train(graph: PrimalGraph, index: GraphIndex, params: ModelParams,
          config: TrainingConfig, seeds: AlignmentSeeds,
          log_callback=None) -> Tuple[ModelParams, List[dict]]:
    """Full-batch training loop with periodic hard-negative refresh.

    Deterministic given the config seed. On divergence the last finite-loss
    parameter snapshot is returned and the log records the abort.
    """
    from .evaluation import evaluate  # local import to avoid a cycle

    params = params.copy()
    if not seeds.train:
        raise ValueError("no training seeds")

    all_train = np.asarray(seeds.train, dtype=np.int64)
    rng = np.random.default_rng(config.rng_seed)
    if config.early_stop and len(all_train) >= 10:
        n_val = max(1, int(round(config.val_fraction * len(all_train))))
        order = rng.permutation(len(all_train))
        val_pairs = all_train[order[:n_val]]
        train_pairs = all_train[order[n_val:]]
    else:
        val_pairs = None
        train_pairs = all_train

    opt = Optimizer(config)
    log: List[dict] = []
    negatives: Optional[NegativeSet] = None
    best_val = -1.0
    best_params = params.copy()
    stale = 0
    t0 = time.time()

    for epoch in range(config.epochs):
        if negatives is None or epoch % config.negative_refresh_epochs == 0:
            x_bar, _, _ = forward(index, params, config.variant, requires_grad=False)
            negatives = mine_negatives(x_bar.value, train_pairs,
                                       config.negatives_per_side, graph)
        try:
            loss, grads, _ = backward(index, params, config.variant, train_pairs,
                                      negatives, config.margin)
        except TrainingDiverged as exc:
            log.append({"epoch": epoch, "event": "diverged", "detail": str(exc)})
            return best_params, log

        record = {"epoch": epoch, "loss": loss, "wall_time": time.time() - t0}
        snapshot = params.copy()
        opt.step(params, grads)

        if val_pairs is not None and (epoch + 1) % config.eval_every == 0:
            x_bar, _, _ = forward(index, params, config.variant, requires_grad=False)
            rep = evaluate(x_bar.value, tuple(map(tuple, val_pairs)), ks=(1,))
            record["val_hits1"] = rep.hits[1]
            if rep.hits[1] > best_val:
                best_val = rep.hits[1]
                best_params = params.copy()
                stale = 0
            else:
                stale += 1
        else:
            best_params = snapshot

        log.append(record)
        if log_callback is not None:
            log_callback(record)
        if val_pairs is not None and stale >= config.patience:
            log.append({"epoch": epoch, "event": "early_stop"})
            return best_params, log

    if val_pairs is None:
        best_params = params
    return best_params, log
