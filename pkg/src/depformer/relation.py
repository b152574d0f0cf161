"""Relation matrices: which relation id each ordered node pair of a tree receives.

Adjacent pairs get their arc label (with direction), near non-adjacent pairs
get a path code made of the two hop counts to their nearest common
ancestor, the diagonal is SELF and everything else is NONE.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np

from .treebank import DependencyTree


@dataclass(frozen=True, order=True)
class ArcLabel:
    label: str
    head_to_dep: bool  # True when the row word is the head of the column word

    def flip(self) -> "ArcLabel":
        return ArcLabel(self.label, not self.head_to_dep)

    def __str__(self) -> str:
        return f"{self.label}:{'h>d' if self.head_to_dep else 'd>h'}"


@dataclass(frozen=True, order=True)
class PathCode:
    up_i: int
    up_j: int

    def flip(self) -> "PathCode":
        return PathCode(self.up_j, self.up_i)

    def __str__(self) -> str:
        return f"p({self.up_i},{self.up_j})"


@dataclass(frozen=True)
class _Special:
    tag: str

    def flip(self) -> "_Special":
        return self

    def __str__(self) -> str:
        return self.tag


SELF = _Special("self")
NONE = _Special("none")
UNK = _Special("unk")

RelationKey = Union[ArcLabel, PathCode, _Special]

_PATH_RE = re.compile(r"^p\((\d+),(\d+)\)$")


def parse_key(text: str) -> RelationKey:
    for special in (SELF, NONE, UNK):
        if text == special.tag:
            return special
    m = _PATH_RE.match(text)
    if m:
        return PathCode(int(m.group(1)), int(m.group(2)))
    label, sep, direction = text.rpartition(":")
    if sep and direction in ("h>d", "d>h"):
        return ArcLabel(label, direction == "h>d")
    raise ValueError(f"unrecognised relation key {text!r}")


def nca_with_distances(tree: DependencyTree, i: int, j: int) -> tuple[int, int, int]:
    """Nearest common ancestor of nodes ``i`` and ``j`` and the hop count from each."""
    n = tree.n_nodes
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"node index out of range 0..{n - 1}: ({i}, {j})")
    heads, levels = tree.heads, tree.levels
    a, b, da, db = i, j, 0, 0
    while levels[a] > levels[b]:
        a, da = heads[a], da + 1
    while levels[b] > levels[a]:
        b, db = heads[b], db + 1
    while a != b:
        a, b = heads[a], heads[b]
        da, db = da + 1, db + 1
    return a, da, db


def relation_key(tree: DependencyTree, i: int, j: int, tau: int = 2) -> RelationKey:
    if i == j:
        return SELF
    heads, deprels = tree.heads, tree.deprels
    if heads[j] == i:
        return ArcLabel(deprels[j], True)
    if heads[i] == j:
        return ArcLabel(deprels[i], False)
    _, di, dj = nca_with_distances(tree, i, j)
    if di + dj <= tau:
        return PathCode(di, dj)
    return NONE


def relation_keys(tree: DependencyTree, tau: int = 2) -> list[list[RelationKey]]:
    n = tree.n_nodes
    return [[relation_key(tree, i, j, tau) for j in range(n)] for i in range(n)]


class RelationVocab:
    """RelationKey <-> id with NONE=0, SELF=1, UNK=2 reserved."""

    reserved = (NONE, SELF, UNK)
    none_id, self_id, unk_id = 0, 1, 2

    def __init__(self, keys: Iterable[RelationKey] = ()):
        self.itos: list[RelationKey] = list(self.reserved)
        self.stoi: dict[RelationKey, int] = {k: i for i, k in enumerate(self.itos)}
        self.frozen = False
        for k in keys:
            self.add(k)

    def add(self, key: RelationKey) -> int:
        if key not in self.stoi:
            if self.frozen:
                return self.unk_id
            self.stoi[key] = len(self.itos)
            self.itos.append(key)
        return self.stoi[key]

    def lookup(self, key: RelationKey) -> int:
        return self.stoi.get(key, self.unk_id)

    def freeze(self) -> "RelationVocab":
        self.frozen = True
        return self

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, key: RelationKey) -> bool:
        return key in self.stoi

    def to_json(self) -> list[str]:
        return [str(k) for k in self.itos[len(self.reserved):]]

    @classmethod
    def from_json(cls, keys: Sequence[str]) -> "RelationVocab":
        return cls(parse_key(k) for k in keys).freeze()


def _sort_key(key: RelationKey):
    if isinstance(key, ArcLabel):
        return (0, key.label, not key.head_to_dep, 0, 0)
    if isinstance(key, PathCode):
        return (1, "", False, key.up_i, key.up_j)
    return (2, key.tag, False, 0, 0)


def build_relation_vocab(trees: Iterable[DependencyTree], tau: int = 2) -> RelationVocab:
    """Vocabulary of every key seen in the given (training) trees, in sorted order."""
    seen: set[RelationKey] = set()
    for tree in trees:
        for row in relation_keys(tree, tau):
            seen.update(row)
    seen.difference_update(RelationVocab.reserved)
    return RelationVocab(sorted(seen, key=_sort_key)).freeze()


@dataclass
class RelationMatrix:
    ids: np.ndarray  # (l+1) x (l+1) int64; row = attending node, column = attended node
    keys: list[list[RelationKey]]


def build_relation_matrix(tree: DependencyTree, vocab: RelationVocab, tau: int = 2) -> RelationMatrix:
    """Relation ids for every ordered node pair. A frozen vocab maps unseen keys to UNK."""
    keys = relation_keys(tree, tau)
    ids = np.array([[vocab.add(k) for k in row] for row in keys], dtype=np.int64)
    return RelationMatrix(ids, keys)


def dump_matrix(tree: DependencyTree, matrix: RelationMatrix) -> dict:
    """JSON-ready view of one sentence's matrix."""
    return {
        "sent_id": tree.sent_id,
        "tokens": ["[root]"] + tree.forms,
        "keys": [[str(k) for k in row] for row in matrix.keys],
        "ids": matrix.ids.tolist(),
    }
