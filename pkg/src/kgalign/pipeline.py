"""End-to-end run orchestration shared by the CLI and the test suite.

A run: load (or generate) a dataset, build the dual graph and static index,
initialize parameters from name vectors, train, evaluate, and write
reports/checkpoints. Every artifact embeds the resolved config and its hash
so any report can be regenerated exactly.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dual_graph import build_dual_graph
from .evaluation import AlignmentReport, evaluate, find_triangular_entities
from .graph_model import Dataset, load_dataset, load_name_embeddings
from .network import (GraphIndex, ModelParams, Variant, build_index, forward,
                      init_params)
from .synthgen import SynthConfig, generate
from .training import TrainingConfig, train

CHECKPOINT_VERSION = 1


@dataclass
class RunConfig:
    """Fully resolved run configuration; serializable and hashable."""
    dataset: Optional[str] = None          # dataset directory
    embeddings: Optional[str] = None       # name-embedding file
    dim: int = 50
    split_fraction: float = 0.3
    split_seed: int = 0
    betas: Tuple[float, ...] = (0.1, 0.3)
    leaky_slope: float = 0.2
    share_scorers: bool = False
    variant: str = "rdgcn"
    margin: float = 1.0
    negatives_per_side: int = 125
    negative_refresh_epochs: int = 10
    learning_rate: float = 0.001
    epochs: int = 600
    rng_seed: int = 0
    optimizer: str = "adam"
    early_stop: bool = False
    patience: int = 50
    ks: Tuple[int, ...] = (1, 10)
    direction: str = "kg1-kg2"
    candidate_pool: str = "test"           # "test" or "all"

    def training_config(self) -> TrainingConfig:
        return TrainingConfig(
            margin=self.margin, negatives_per_side=self.negatives_per_side,
            negative_refresh_epochs=self.negative_refresh_epochs,
            learning_rate=self.learning_rate, epochs=self.epochs,
            rng_seed=self.rng_seed, variant=Variant.parse(self.variant),
            optimizer=self.optimizer, early_stop=self.early_stop,
            patience=self.patience)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        d["ks"] = list(self.ks)
        return d

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


_BOOL = {"true": True, "false": False, "1": True, "0": False,
         "yes": True, "no": False}


def parse_config_file(path: str) -> Dict[str, str]:
    """Flat ``key = value`` lines; '#' starts a comment."""
    out: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            out[key.strip()] = value.strip()
    return out


def resolve_config(file_values: Dict[str, str],
                   overrides: Dict[str, object]) -> RunConfig:
    """Build a RunConfig from a config-file dict plus CLI overrides."""
    cfg = RunConfig()
    merged: Dict[str, object] = dict(file_values)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    for key, raw in merged.items():
        if not hasattr(cfg, key):
            raise ValueError(f"unknown config key {key!r}")
        current = getattr(cfg, key)
        if isinstance(raw, str):
            if isinstance(current, bool):
                value: object = _BOOL[raw.lower()]
            elif isinstance(current, tuple):
                value = tuple(type(current[0])(x) for x in raw.split(","))
            elif current is None or isinstance(current, str):
                value = raw
            else:
                value = type(current)(raw)
        else:
            value = raw
        setattr(cfg, key, value)
    return cfg


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str, params: ModelParams, config: RunConfig,
                    n: int, m: int) -> None:
    header = {
        "version": CHECKPOINT_VERSION,
        "n": n, "m": m, "dim": params.dim,
        "variant": config.variant,
        "config": config.to_dict(),
        "config_fingerprint": config.fingerprint(),
        "betas": list(params.betas),
        "leaky_slope": params.leaky_slope,
        "share_scorers": params.share_scorers,
    }
    np.savez(path, header=np.frombuffer(json.dumps(header).encode(), dtype=np.uint8),
             **params.tensors())


def load_checkpoint(path: str) -> Tuple[ModelParams, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["header"]).decode())
        if header["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header['version']}")
        params = ModelParams(
            x_init=data["x_init"], dual_w=data["dual_w"], dual_b=data["dual_b"],
            primal_w=data["primal_w"], primal_b=data["primal_b"],
            gcn_w=data["gcn_w"], gate_w=data["gate_w"], gate_b=data["gate_b"],
            betas=tuple(header["betas"]), leaky_slope=header["leaky_slope"],
            share_scorers=header["share_scorers"])
    return params, header


def check_compatible(header: dict, dataset: Dataset, dim: int) -> None:
    g = dataset.graph
    if (header["n"], header["m"]) != (g.entity_count, g.relation_count):
        raise ValueError(
            f"checkpoint built for n={header['n']}, m={header['m']} but dataset "
            f"has n={g.entity_count}, m={g.relation_count}")
    if header["dim"] != dim:
        raise ValueError(f"checkpoint dim {header['dim']} != requested {dim}")


# ---------------------------------------------------------------------------
# run drivers


@dataclass
class RunArtifacts:
    report: AlignmentReport
    params: ModelParams
    dataset: Dataset
    index: GraphIndex
    log: List[dict]


def prepare_dataset(config: RunConfig) -> Tuple[Dataset, np.ndarray]:
    if config.dataset is None:
        raise ValueError("no dataset directory configured")
    dataset = load_dataset(config.dataset, split_fraction=config.split_fraction,
                           rng_seed=config.split_seed)
    emb = config.embeddings or os.path.join(config.dataset, "name_vectors")
    name_vecs = load_name_embeddings(emb, config.dim, dataset.graph)
    return dataset, name_vecs


def evaluate_final(x_bar: np.ndarray, dataset: Dataset, config: RunConfig,
                   include_ranks: bool = False) -> AlignmentReport:
    g = dataset.graph
    if config.candidate_pool == "all":
        candidate_ids = np.arange(g.kg1_entity_count, g.entity_count)
        if config.direction == "kg2-kg1":
            candidate_ids = np.arange(g.kg1_entity_count)
    else:
        candidate_ids = None
    return evaluate(
        x_bar, dataset.seeds.test, ks=config.ks, direction=config.direction,
        candidate_ids=candidate_ids,
        triangle_entities=find_triangular_entities(g),
        include_ranks=include_ranks,
        config_fingerprint=config.fingerprint())


def run(config: RunConfig, log_callback=None) -> RunArtifacts:
    """Train and evaluate one configuration end to end."""
    dataset, name_vecs = prepare_dataset(config)
    dual = build_dual_graph(dataset.graph)
    index = build_index(dataset.graph, dual)
    params = init_params(name_vecs, betas=config.betas, rng_seed=config.rng_seed,
                         share_scorers=config.share_scorers,
                         leaky_slope=config.leaky_slope)
    params, log = train(dataset.graph, index, params, config.training_config(),
                        dataset.seeds, log_callback=log_callback)
    x_bar, _, _ = forward(index, params, Variant.parse(config.variant),
                          requires_grad=False)
    report = evaluate_final(x_bar.value, dataset, config)
    return RunArtifacts(report=report, params=params, dataset=dataset,
                        index=index, log=log)


def run_on_directory(dataset_dir: str, embeddings_path: str, dim: int,
                     train_config: TrainingConfig, split_fraction: float = 0.3,
                     split_seed: int = 0, betas: Tuple[float, ...] = (0.1, 0.3)
                     ) -> Tuple[AlignmentReport, ModelParams, Dataset]:
    """Thin wrapper used by evaluation.seed_sweep."""
    config = RunConfig(
        dataset=dataset_dir, embeddings=embeddings_path, dim=dim,
        split_fraction=split_fraction, split_seed=split_seed, betas=betas,
        variant=train_config.variant.value, margin=train_config.margin,
        negatives_per_side=train_config.negatives_per_side,
        negative_refresh_epochs=train_config.negative_refresh_epochs,
        learning_rate=train_config.learning_rate, epochs=train_config.epochs,
        rng_seed=train_config.rng_seed, optimizer=train_config.optimizer,
        early_stop=train_config.early_stop, patience=train_config.patience)
    art = run(config)
    return art.report, art.params, art.dataset


def baseline_report(config: RunConfig) -> AlignmentReport:
    """Untrained name-embedding baseline (nearest neighbor on the inputs)."""
    dataset, name_vecs = prepare_dataset(config)
    return evaluate_final(name_vecs, dataset, config)


def ablate(config: RunConfig, variants: Sequence[str]) -> List[Tuple[str, Optional[AlignmentReport], Optional[str]]]:
    """Run each variant with the same data/seed; per-cell failures don't
    abort the remaining cells."""
    rows: List[Tuple[str, Optional[AlignmentReport], Optional[str]]] = []
    for name in variants:
        cell = RunConfig(**{**config.to_dict(),
                            "variant": Variant.parse(name).value,
                            "betas": tuple(config.betas),
                            "ks": tuple(config.ks)})
        try:
            rows.append((name, run(cell).report, None))
        except Exception as exc:  # noqa: BLE001 - per-cell isolation is the contract
            rows.append((name, None, str(exc)))
    return rows
