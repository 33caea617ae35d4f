"""Forward pass: dual/primal attention interactions plus highway-gated GCNs.

All trainable state lives in ModelParams (plain numpy arrays); forward()
wraps them in autodiff tensors so training.backward() can differentiate the
whole pass. The static graph structure (edge arrays, pooling and averaging
operators, normalized adjacency) is precomputed once in GraphIndex.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp

from .autodiff import Tensor, concat_cols, segment_softmax, spmm
from .dual_graph import DualRelationGraph, proxy_matrices
from .graph_model import PrimalGraph


class Variant(enum.Enum):
    RDGCN = "rdgcn"    # interactions + highway GCN layers
    HGCN_S = "hgcn-s"  # highway GCN layers only
    GCN_S = "gcn-s"    # plain GCN layers only (gates forced fully open)
    RD = "rd"          # interactions only

    @classmethod
    def parse(cls, name: str) -> "Variant":
        key = name.strip().lower().replace("_", "-")
        for v in cls:
            if v.value == key:
                return v
        raise ValueError(f"unknown variant {name!r}; choose from "
                         f"{[v.value for v in cls]}")


NUM_GCN_LAYERS = 2


@dataclass
class ModelParams:
    """Trainable tensors plus fixed hyperparameters.

    Scorer weights are stored per interaction (row s); with
    ``share_scorers`` row 0 is used by every interaction.
    """
    x_init: np.ndarray        # n x d, trainable, seeded from name vectors
    dual_w: np.ndarray        # S x 4d
    dual_b: np.ndarray        # S
    primal_w: np.ndarray      # S x 2d
    primal_b: np.ndarray      # S
    gcn_w: np.ndarray         # L x d x d
    gate_w: np.ndarray        # L x d x d
    gate_b: np.ndarray        # L x d
    betas: Tuple[float, ...]  # fixed mixing weights, one per interaction
    leaky_slope: float = 0.2
    share_scorers: bool = False

    TRAINABLE = ("x_init", "dual_w", "dual_b", "primal_w", "primal_b",
                 "gcn_w", "gate_w", "gate_b")

    @property
    def dim(self) -> int:
        return self.x_init.shape[1]

    @property
    def num_interactions(self) -> int:
        return len(self.betas)

    def copy(self) -> "ModelParams":
        return ModelParams(
            x_init=self.x_init.copy(), dual_w=self.dual_w.copy(),
            dual_b=self.dual_b.copy(), primal_w=self.primal_w.copy(),
            primal_b=self.primal_b.copy(), gcn_w=self.gcn_w.copy(),
            gate_w=self.gate_w.copy(), gate_b=self.gate_b.copy(),
            betas=tuple(self.betas), leaky_slope=self.leaky_slope,
            share_scorers=self.share_scorers)

    def tensors(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in self.TRAINABLE}


def _uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(name_vectors: np.ndarray, betas: Tuple[float, ...] = (0.1, 0.3),
                rng_seed: int = 0, share_scorers: bool = False,
                leaky_slope: float = 0.2) -> ModelParams:
    """Initialize all trainable tensors (symmetric uniform, biases at zero)."""
    d = name_vectors.shape[1]
    s = len(betas)
    rng = np.random.default_rng(rng_seed)
    return ModelParams(
        x_init=np.array(name_vectors, dtype=np.float64, copy=True),
        dual_w=_uniform(rng, (s, 4 * d), 4 * d, 1),
        dual_b=np.zeros(s),
        primal_w=_uniform(rng, (s, 2 * d), 2 * d, 1),
        primal_b=np.zeros(s),
        gcn_w=np.stack([_uniform(rng, (d, d), d, d) for _ in range(NUM_GCN_LAYERS)]),
        gate_w=np.stack([_uniform(rng, (d, d), d, d) for _ in range(NUM_GCN_LAYERS)]),
        gate_b=np.zeros((NUM_GCN_LAYERS, d)),
        betas=tuple(float(b) for b in betas),
        leaky_slope=leaky_slope,
        share_scorers=share_scorers,
    )


# ---------------------------------------------------------------------------
# static graph structure


def normalized_adjacency(g: PrimalGraph) -> sp.csr_matrix:
    """Symmetric normalization D^{-1/2} (A + I) D^{-1/2} of the undirected
    entity adjacency with self-loops."""
    n = g.entity_count
    pairs = g.adjacency_pairs()
    rows = [q for q, _ in pairs] + list(range(n))
    cols = [t for _, t in pairs] + list(range(n))
    a = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    a.data[:] = 1.0  # duplicate-safe: entries saturate at 1
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d_inv = sp.diags(inv_sqrt)
    return (d_inv @ a @ d_inv).tocsr()


@dataclass
class GraphIndex:
    """Precomputed structure shared by every forward pass."""
    n: int
    m: int
    # dual attention edges: row dst aggregates over src
    d_dst: np.ndarray
    d_src: np.ndarray
    d_w: np.ndarray
    # primal attention edges, one per unique (entity, neighbor) pair
    p_dst: np.ndarray
    p_src: np.ndarray
    pool: sp.csr_matrix       # pairs x m: mean over relations linking the pair
    head_mean: sp.csr_matrix  # m x n
    tail_mean: sp.csr_matrix  # m x n
    adj_norm: sp.csr_matrix   # n x n


def build_index(g: PrimalGraph, dual: DualRelationGraph) -> GraphIndex:
    d_dst, d_src, d_w = dual.flat_edges()

    pair_rels: Dict[Tuple[int, int], set] = {}
    for q in range(g.entity_count):
        for t, r, _ in g.neighbors[q]:
            pair_rels.setdefault((q, t), set()).add(r)
            # GAT-style self edge, scored from the entity's pooled relation
            # context so attention can fall back to the entity itself
            pair_rels.setdefault((q, q), set()).add(r)
    pairs = sorted(pair_rels)
    rows, cols, vals = [], [], []
    for idx, pair in enumerate(pairs):
        rels = pair_rels[pair]
        for r in rels:
            rows.append(idx)
            cols.append(r)
            vals.append(1.0 / len(rels))
    pool = sp.csr_matrix((vals, (rows, cols)),
                         shape=(len(pairs), g.relation_count))
    hm, tm = proxy_matrices(g)
    return GraphIndex(
        n=g.entity_count, m=g.relation_count,
        d_dst=d_dst, d_src=d_src, d_w=d_w,
        p_dst=np.array([q for q, _ in pairs], dtype=np.int64),
        p_src=np.array([t for _, t in pairs], dtype=np.int64),
        pool=pool, head_mean=hm, tail_mean=tm,
        adj_norm=normalized_adjacency(g),
    )


# ---------------------------------------------------------------------------
# forward trace


@dataclass
class ForwardTrace:
    """Intermediate activations of one forward pass (numpy snapshots)."""
    dual_inputs: List[np.ndarray] = field(default_factory=list)
    dual_outputs: List[np.ndarray] = field(default_factory=list)
    dual_attention: List[Tuple[np.ndarray, np.ndarray, int]] = field(default_factory=list)
    primal_outputs: List[np.ndarray] = field(default_factory=list)
    mixed_outputs: List[np.ndarray] = field(default_factory=list)
    primal_attention: List[Tuple[np.ndarray, np.ndarray, int]] = field(default_factory=list)
    gcn_inputs: List[np.ndarray] = field(default_factory=list)
    gcn_outputs: List[np.ndarray] = field(default_factory=list)
    gate_activations: List[np.ndarray] = field(default_factory=list)
    final: Optional[np.ndarray] = None

    def attention_rows(self):
        """Yield (weights per row, over the row's neighborhood) for every
        attention layer: list of 1-d arrays indexed by segment."""
        for alpha, seg, num in self.dual_attention + self.primal_attention:
            sums = np.zeros(num)
            np.add.at(sums, seg, alpha)
            occupied = np.zeros(num, dtype=bool)
            occupied[seg] = True
            yield alpha, seg, sums[occupied]


# ---------------------------------------------------------------------------
# layers


def _scorer(feat: Tensor, w_row: Tensor, b: Tensor) -> Tensor:
    """Fully connected map to a scalar per row: feat @ w + b, flat output."""
    return (feat * w_row).sum_axis(1) + b


def dual_attention(index: GraphIndex, xr: Tensor, proxies: Tensor,
                   w_row: Tensor, b: Tensor, slope: float,
                   trace: Optional[ForwardTrace] = None) -> Tensor:
    """Attention over the dual graph; logits combine the edge weight with a
    learned score of the concatenated endpoint proxies."""
    feat = concat_cols(proxies.gather(index.d_dst), proxies.gather(index.d_src))
    logits = (Tensor(index.d_w) * _scorer(feat, w_row, b)).leaky_relu(slope)
    alpha = segment_softmax(logits, index.d_dst, index.m)
    vals = xr.gather(index.d_src) * alpha.reshape(-1, 1)
    out = vals.segment_sum(index.d_dst, index.m).relu()
    if trace is not None:
        trace.dual_attention.append((alpha.value.copy(), index.d_dst, index.m))
        trace.dual_inputs.append(xr.value.copy())
        trace.dual_outputs.append(out.value.copy())
    return out


def primal_attention(index: GraphIndex, xe: Tensor, dual_reps: Tensor,
                     w_row: Tensor, b: Tensor, slope: float, beta: float,
                     x_init: Tensor, trace: Optional[ForwardTrace] = None) -> Tensor:
    """Attention over the entity graph scored from pooled dual representations,
    followed by residual mixing with the initial embeddings."""
    pair_reps = spmm(index.pool, dual_reps)
    logits = _scorer(pair_reps, w_row, b).leaky_relu(slope)
    alpha = segment_softmax(logits, index.p_dst, index.n)
    vals = xe.gather(index.p_src) * alpha.reshape(-1, 1)
    tilde = vals.segment_sum(index.p_dst, index.n).relu()
    mixed = beta * tilde + x_init
    if trace is not None:
        trace.primal_attention.append((alpha.value.copy(), index.p_dst, index.n))
        trace.primal_outputs.append(tilde.value.copy())
        trace.mixed_outputs.append(mixed.value.copy())
    return mixed


def _proxies(index: GraphIndex, ent_reps: Tensor) -> Tensor:
    return concat_cols(spmm(index.head_mean, ent_reps), spmm(index.tail_mean, ent_reps))


def interaction_stack(index: GraphIndex, tensors: Dict[str, Tensor],
                      params: ModelParams, num_interactions: Optional[int] = None,
                      trace: Optional[ForwardTrace] = None) -> Tensor:
    """Alternating dual/primal attention. Interaction 1 bootstraps the dual
    inputs and proxies from the initial entity embeddings; later interactions
    feed forward the previous dual output and recompute proxies."""
    s_total = params.num_interactions if num_interactions is None else num_interactions
    if s_total < 1:
        raise ValueError("need at least one interaction")
    if s_total > params.num_interactions:
        raise ValueError(f"{s_total} interactions requested but only "
                         f"{params.num_interactions} mixing weights configured")
    x_init = tensors["x_init"]
    ent = x_init
    xr: Optional[Tensor] = None
    for s in range(s_total):
        row = 0 if params.share_scorers else s
        dw = tensors["dual_w"].gather([row]).reshape(1, -1)
        db = tensors["dual_b"].gather([row]).reshape(())
        pw = tensors["primal_w"].gather([row]).reshape(1, -1)
        pb = tensors["primal_b"].gather([row]).reshape(())
        proxies = _proxies(index, ent)
        if xr is None:
            xr = proxies
        xr = dual_attention(index, xr, proxies, dw, db, params.leaky_slope, trace)
        ent = primal_attention(index, ent, xr, pw, pb, params.leaky_slope,
                               params.betas[s], x_init, trace)
    return ent


def highway_gcn_layer(x: Tensor, adj: sp.csr_matrix, w: Tensor, gate_w: Tensor,
                      gate_b: Tensor, gated: bool = True,
                      trace: Optional[ForwardTrace] = None) -> Tensor:
    """One GCN layer; with ``gated`` the output is mixed with the input
    through a learned sigmoid gate (fully open when gated is False)."""
    candidate = spmm(adj, x.matmul(w)).relu()
    if gated:
        gate = (x.matmul(gate_w) + gate_b).sigmoid()
        out = gate * candidate + (1.0 - gate) * x
        gate_vals = gate.value.copy()
    else:
        out = candidate
        gate_vals = np.ones_like(x.value)
    if trace is not None:
        trace.gcn_inputs.append(x.value.copy())
        trace.gate_activations.append(gate_vals)
        trace.gcn_outputs.append(out.value.copy())
    return out


def forward(index: GraphIndex, params: ModelParams, variant: Variant,
            tensors: Optional[Dict[str, Tensor]] = None,
            requires_grad: bool = True) -> Tuple[Tensor, ForwardTrace, Dict[str, Tensor]]:
    """Run one forward pass; returns final embeddings, the trace, and the
    parameter tensors (whose .grad fills in after backward)."""
    if tensors is None:
        tensors = {name: Tensor(arr, requires_grad=requires_grad)
                   for name, arr in params.tensors().items()}
    trace = ForwardTrace()
    if variant in (Variant.RDGCN, Variant.RD):
        ent = interaction_stack(index, tensors, params, trace=trace)
    else:
        ent = tensors["x_init"]
    if variant in (Variant.RDGCN, Variant.HGCN_S, Variant.GCN_S):
        gated = variant is not Variant.GCN_S
        for layer in range(NUM_GCN_LAYERS):
            ent = highway_gcn_layer(
                ent, index.adj_norm,
                tensors["gcn_w"].gather([layer]).reshape(params.dim, params.dim),
                tensors["gate_w"].gather([layer]).reshape(params.dim, params.dim),
                tensors["gate_b"].gather([layer]).reshape(1, params.dim),
                gated=gated, trace=trace)
    trace.final = ent.value.copy()
    return ent, trace, tensors
