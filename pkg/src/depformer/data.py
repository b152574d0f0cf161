"""Turning trees and label files into padded model batches."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import Batch
from .relation import RelationVocab, build_relation_matrix
from .treebank import DependencyTree, Vocab, read_conllu, read_labels, validate_treebank


@dataclass
class EncodedSentence:
    token_ids: np.ndarray  # l+1, ROOT first
    level_ids: np.ndarray  # l+1, unclamped depths
    rel_ids: np.ndarray    # (l+1) x (l+1)

    @property
    def n_nodes(self) -> int:
        return len(self.token_ids)


def encode_tree(tree: DependencyTree, vocab: Vocab, rel_vocab: RelationVocab, tau: int) -> EncodedSentence:
    return EncodedSentence(
        np.array(vocab.encode(tree), dtype=np.int64),
        np.array(tree.levels, dtype=np.int64),
        build_relation_matrix(tree, rel_vocab, tau).ids,
    )


def collate(sentences: Sequence[EncodedSentence], max_level: int, targets=None, pair: bool = False) -> Batch:
    """Pad to the longest sentence. Pads use token PAD, level 0 and relation NONE."""
    b = len(sentences)
    length = max(s.n_nodes for s in sentences)
    tok = np.zeros((b, length), dtype=np.int64)
    lev = np.zeros((b, length), dtype=np.int64)
    rel = np.zeros((b, length, length), dtype=np.int64)
    mask = np.zeros((b, length), dtype=bool)
    lengths = np.array([s.n_nodes for s in sentences], dtype=np.int64)
    for k, s in enumerate(sentences):
        n = s.n_nodes
        tok[k, :n] = s.token_ids
        lev[k, :n] = np.minimum(s.level_ids, max_level - 1)
        rel[k, :n, :n] = s.rel_ids
        mask[k, :n] = True
    return Batch(tok, lev, rel, mask, lengths, targets, pair)


@dataclass
class Example:
    """One training item: a sentence (or a left/right pair) with its target."""

    sentences: tuple[EncodedSentence, ...]
    target: float | int


@dataclass
class SplitData:
    trees: list[DependencyTree]
    labels: list
    dropped: int = 0


def load_split(conllu: str | Path, labels: str | Path, pair: bool, strict: bool = True) -> SplitData:
    """Read a treebank and its label file, validating trees.

    Pair labels reference sentences by ``sent_id`` (or 1-based ordinal when a
    sentence has no id). Lenient mode drops labels whose sentences were dropped.
    """
    raw = read_conllu(conllu)
    for k, tree in enumerate(raw):
        if tree.sent_id is None:
            tree.sent_id = str(k + 1)
    targets = read_labels(labels, pair)
    if not pair and len(targets) != len(raw):
        raise ValueError(f"{labels}: {len(targets)} labels for {len(raw)} sentences")
    kept, dropped = validate_treebank(raw, strict=strict)
    if not pair and dropped:
        keep_ids = {t.sent_id for t in kept}
        targets = [y for t, y in zip(raw, targets) if t.sent_id in keep_ids]
    if pair:
        ids = {t.sent_id for t in kept}
        all_ids = {t.sent_id for t in raw}
        for left, right, _ in targets:
            for sid in (left, right):
                if sid not in all_ids:
                    raise ValueError(f"{labels}: unknown sentence id {sid!r}")
        targets = [row for row in targets if row[0] in ids and row[1] in ids]
    return SplitData(kept, targets, dropped)


def make_examples(split: SplitData, vocab: Vocab, rel_vocab: RelationVocab, tau: int,
                  pair: bool) -> list[Example]:
    encoded = {t.sent_id: encode_tree(t, vocab, rel_vocab, tau) for t in split.trees}
    if pair:
        return [Example((encoded[l], encoded[r]), y) for l, r, y in split.labels]
    return [Example((encoded[t.sent_id],), y) for t, y in zip(split.trees, split.labels)]


def collate_examples(examples: Sequence[Example], max_level: int, pair: bool) -> Batch:
    if pair:
        sents = [e.sentences[0] for e in examples] + [e.sentences[1] for e in examples]
    else:
        sents = [e.sentences[0] for e in examples]
    return collate(sents, max_level, targets=[e.target for e in examples], pair=pair)


def shuffle_relation_ids(sentence: EncodedSentence, n_relations: int, rng: np.random.Generator) -> EncodedSentence:
    """Relabel the sentence's non-reserved relation ids with a random permutation.

    Structure (which cells share an id) is kept, but which relation an id
    stands for is scrambled independently per sentence.
    """
    reserved = RelationVocab.reserved
    mapping = np.arange(n_relations)
    mapping[len(reserved):] = len(reserved) + rng.permutation(n_relations - len(reserved))
    return EncodedSentence(sentence.token_ids, sentence.level_ids, mapping[sentence.rel_ids])
