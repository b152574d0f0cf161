"""Synthetic planted-relation corpus.

Sentences are random word ids over random dependency trees with random arc
labels. One token per sentence is the probe word, and the class is the label
of the arc attaching the probe to its head. Nothing but the relation matrix
carries that label, so a model only solves the task by reading relations.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .treebank import DependencyTree, Token, serialize_conllu

ARC_LABELS = ("amod", "nsubj", "obj", "advmod")
PROBE = "probe"

# Small enough to train in seconds; random word vectors, so a small init scale.
DEFAULT_MODEL = {
    "n_layers": 2,
    "n_heads": 2,
    "d_model": 16,
    "d_r": 8,
    "d_ff": 32,
    "max_position": 16,
    "init_std": 0.1,
}


def random_tree(rng: np.random.Generator, n: int, labels=ARC_LABELS) -> tuple[list[int], list[str]]:
    """Uniform random recursive tree over n tokens; returns (1-based heads, deprels)."""
    order = rng.permutation(n) + 1
    heads = [0] * (n + 1)
    rels = [""] * (n + 1)
    heads[order[0]] = 0
    rels[order[0]] = "root"
    for k in range(1, n):
        node = order[k]
        heads[node] = int(order[rng.integers(k)])
        rels[node] = labels[rng.integers(len(labels))]
    return heads[1:], rels[1:]


def planted_sentence(rng: np.random.Generator, min_len: int, max_len: int, n_words: int,
                     sent_id: str) -> tuple[DependencyTree, int]:
    n = int(rng.integers(min_len, max_len + 1))
    heads, rels = random_tree(rng, n)
    candidates = [k for k in range(n) if heads[k] != 0]
    probe = candidates[rng.integers(len(candidates))]
    forms = [f"w{int(rng.integers(n_words)):02d}" for _ in range(n)]
    forms[probe] = PROBE
    tokens = [Token(k + 1, forms[k], heads[k], rels[k]) for k in range(n)]
    return DependencyTree(tokens, sent_id=sent_id), ARC_LABELS.index(rels[probe])


def planted_relation(n_sentences: int = 2000, min_len: int = 8, max_len: int = 12,
                     n_words: int = 20, seed: int = 0) -> tuple[list[DependencyTree], list[int]]:
    rng = np.random.default_rng(seed)
    trees, labels = [], []
    for k in range(n_sentences):
        tree, label = planted_sentence(rng, min_len, max_len, n_words, f"s{k + 1}")
        trees.append(tree)
        labels.append(label)
    return trees, labels


def write_planted_relation(out: str | Path, n_sentences: int = 2000, dev_fraction: float = 0.2,
                           seed: int = 0, epochs: int = 50) -> dict[str, Path]:
    """Write train/dev CoNLL-U + label files and two run configs (intact and relation-shuffled)."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    trees, labels = planted_relation(n_sentences, seed=seed)
    n_dev = int(round(n_sentences * dev_fraction))
    splits = {"train": slice(0, n_sentences - n_dev), "dev": slice(n_sentences - n_dev, None)}
    paths: dict[str, Path] = {}
    for name, sl in splits.items():
        conllu = out / f"{name}.conllu"
        lab = out / f"{name}.labels"
        conllu.write_text(serialize_conllu(trees[sl]), encoding="utf-8")
        lab.write_text("".join(f"{y}\n" for y in labels[sl]), encoding="utf-8")
        paths[f"{name}.conllu"], paths[f"{name}.labels"] = conllu, lab
    base = {
        "task": "planted",
        "train": {"conllu": "train.conllu", "labels": "train.labels"},
        "dev": {"conllu": "dev.conllu", "labels": "dev.labels"},
        "seed": seed,
        "epochs": epochs,
        "batch_size": 32,
        "lr": 0.02,
        "variant": "dt_full",
        "model": DEFAULT_MODEL,
        "out_dir": "run",
        "target_metric": 0.95,
    }
    shuffled = dict(base, shuffle_relations=True, out_dir="run_shuffled")
    for name, cfg in (("run.json", base), ("run_shuffled.json", shuffled)):
        p = out / name
        p.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        paths[name] = p
    return paths
