"""CoNLL-U ingestion, tree validation, node levels, vocabularies and word vectors."""

from __future__ import annotations

import logging
from collections import Counter, deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK, ROOT = "<pad>", "<unk>", "<root>"


class ConlluParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class TreeStructureError(ValueError):
    """A tree violates the single-root / acyclic / connected contract."""

    def __init__(self, message: str, violations: Sequence["Violation"] = ()):
        super().__init__(message)
        self.violations = list(violations)


class EmbeddingFormatError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class Token:
    index: int
    form: str
    head: int
    deprel: str

    def __post_init__(self):
        if self.index < 1 or self.head < 0 or self.head == self.index:
            raise ValueError(f"invalid token index={self.index} head={self.head}")


@dataclass
class DependencyTree:
    """Tokens of one sentence; node 0 is the artificial ROOT."""

    tokens: list[Token]
    sent_id: str | None = None
    comments: list[str] = field(default_factory=list)
    _levels: list[int] | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_nodes(self) -> int:
        return len(self.tokens) + 1

    @property
    def heads(self) -> list[int]:
        """``heads[k]`` is the head of node ``k``; ``heads[0]`` is -1 for ROOT."""
        return [-1] + [t.head for t in self.tokens]

    @property
    def deprels(self) -> list[str]:
        return [""] + [t.deprel for t in self.tokens]

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def levels(self) -> list[int]:
        if self._levels is None:
            self._levels = compute_levels(self)
        return self._levels

    def children(self) -> list[list[int]]:
        kids: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for t in self.tokens:
            kids[t.head].append(t.index)
        return kids

    @classmethod
    def from_heads(cls, heads: Sequence[int], deprels: Sequence[str] | None = None,
                   forms: Sequence[str] | None = None, sent_id: str | None = None) -> "DependencyTree":
        """Build from 1-based head indices listed for tokens 1..n."""
        n = len(heads)
        deprels = deprels or ["dep"] * n
        forms = forms or [f"w{k}" for k in range(1, n + 1)]
        toks = [Token(k + 1, forms[k], int(heads[k]), deprels[k]) for k in range(n)]
        return cls(toks, sent_id=sent_id)


# CoNLL-U -----------------------------------------------------------------------


def parse_conllu(text: str) -> list[DependencyTree]:
    """Parse CoNLL-U text into trees. Multiword ranges and empty nodes are skipped."""
    trees: list[DependencyTree] = []
    rows: list[tuple[int, list[str]]] = []
    comments: list[str] = []

    def flush():
        if rows:
            trees.append(_build_tree(rows, comments))
        rows.clear()
        comments.clear()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluParseError(lineno, f"expected 10 tab-separated columns, found {len(cols)}")
        if "-" in cols[0] or "." in cols[0]:
            continue
        rows.append((lineno, cols))
    flush()
    return trees


def _build_tree(rows: list[tuple[int, list[str]]], comments: list[str]) -> DependencyTree:
    n = len(rows)
    tokens = []
    for expected, (lineno, cols) in enumerate(rows, start=1):
        try:
            index = int(cols[0])
        except ValueError:
            raise ConlluParseError(lineno, f"non-integer ID {cols[0]!r}") from None
        if index != expected:
            raise ConlluParseError(lineno, f"token ID {index} out of sequence (expected {expected})")
        try:
            head = int(cols[6])
        except ValueError:
            raise ConlluParseError(lineno, f"non-integer HEAD {cols[6]!r}") from None
        if not 0 <= head <= n:
            raise ConlluParseError(lineno, f"HEAD {head} out of range 0..{n}")
        if head == index:
            raise ConlluParseError(lineno, f"token {index} is its own head")
        tokens.append(Token(index, cols[1], head, cols[7]))
    sent_id = None
    for c in comments:
        body = c[1:].strip()
        if body.startswith("sent_id"):
            _, _, value = body.partition("=")
            sent_id = value.strip()
    return DependencyTree(tokens, sent_id=sent_id, comments=list(comments))


def serialize_conllu(trees: Iterable[DependencyTree]) -> str:
    blocks = []
    for tree in trees:
        lines = list(tree.comments)
        if tree.sent_id is not None and not any("sent_id" in c for c in lines):
            lines.insert(0, f"# sent_id = {tree.sent_id}")
        for t in tree.tokens:
            lines.append("\t".join([str(t.index), t.form, "_", "_", "_", "_",
                                    str(t.head), t.deprel, "_", "_"]))
        blocks.append("\n".join(lines) + "\n")
    return "\n".join(blocks)


def read_conllu(path: str | Path) -> list[DependencyTree]:
    return parse_conllu(Path(path).read_text(encoding="utf-8"))


# validation ---------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str  # "multi-root" | "no-root" | "cycle" | "unreachable"
    nodes: tuple[int, ...]

    def __str__(self) -> str:
        return f"{self.kind}: nodes {list(self.nodes)}"


def validate_tree(tree: DependencyTree) -> list[Violation]:
    """Structural findings for ``tree``; an empty list means the tree is well formed."""
    heads = tree.heads
    n = tree.n_nodes
    found: list[Violation] = []
    roots = tuple(t.index for t in tree.tokens if t.head == 0)
    if len(roots) == 0 and tree.tokens:
        found.append(Violation("no-root", ()))
    elif len(roots) > 1:
        found.append(Violation("multi-root", roots))

    # 0 = unvisited, 1 = on current walk, 2 = resolved
    state = [0] * n
    state[0] = 2
    reaches = [False] * n
    reaches[0] = True
    cyclic: set[int] = set()
    for start in range(1, n):
        if state[start]:
            continue
        walk = []
        node = start
        while state[node] == 0:
            state[node] = 1
            walk.append(node)
            node = heads[node]
        if state[node] == 1:
            cyc = walk[walk.index(node):]
            cyclic.update(cyc)
            found.append(Violation("cycle", tuple(sorted(cyc))))
        ok = reaches[node] and node not in cyclic
        for w in walk:
            state[w] = 2
            reaches[w] = ok
    stranded = tuple(k for k in range(1, n) if not reaches[k] and k not in cyclic)
    if stranded:
        found.append(Violation("unreachable", stranded))
    return found


def validate_treebank(trees: Sequence[DependencyTree], strict: bool = True) -> tuple[list[DependencyTree], int]:
    """Check every tree. Strict mode raises on the first bad tree; lenient drops bad trees.

    Returns the kept trees and the number dropped.
    """
    kept, dropped = [], 0
    for k, tree in enumerate(trees):
        problems = validate_tree(tree)
        if not problems:
            kept.append(tree)
            continue
        label = tree.sent_id or str(k + 1)
        if strict:
            raise TreeStructureError(
                f"sentence {label}: " + "; ".join(map(str, problems)), problems)
        dropped += 1
    if dropped:
        log.warning("dropped %d malformed sentence(s) out of %d", dropped, len(trees))
    return kept, dropped


def compute_levels(tree: DependencyTree) -> list[int]:
    """Depth of every node, ROOT first. Cyclic input raises ``TreeStructureError``."""
    heads = tree.heads
    n = tree.n_nodes
    levels = [-1] * n
    levels[0] = 0
    for k in range(1, n):
        path = []
        node = k
        while levels[node] < 0:
            path.append(node)
            if len(path) > n:
                raise TreeStructureError(f"head cycle reached from node {k}")
            node = heads[node]
        depth = levels[node]
        for p in reversed(path):
            depth += 1
            levels[p] = depth
    return levels


def bfs_levels(tree: DependencyTree) -> list[int]:
    """Breadth-first depths from ROOT; unreachable nodes get -1."""
    kids = tree.children()
    levels = [-1] * tree.n_nodes
    levels[0] = 0
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v in kids[u]:
            if levels[v] < 0:
                levels[v] = levels[u] + 1
                queue.append(v)
    return levels


# vocabulary and embeddings ---------------------------------------------------------


class Vocab:
    """String <-> id map with reserved PAD=0, UNK=1, ROOT=2."""

    reserved = (PAD, UNK, ROOT)

    def __init__(self, words: Iterable[str] = (), lowercase: bool = True):
        self.lowercase = lowercase
        self.itos: list[str] = list(self.reserved)
        self.stoi: dict[str, int] = {w: i for i, w in enumerate(self.itos)}
        for w in words:
            self.add(w)

    pad_id, unk_id, root_id = 0, 1, 2

    def norm(self, word: str) -> str:
        return word.lower() if self.lowercase else word

    def add(self, word: str) -> int:
        if word not in self.stoi:
            self.stoi[word] = len(self.itos)
            self.itos.append(word)
        return self.stoi[word]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, word: str) -> bool:
        return self.norm(word) in self.stoi

    def lookup(self, word: str) -> int:
        return self.stoi.get(self.norm(word), self.unk_id)

    def encode(self, tree: DependencyTree) -> list[int]:
        """Token ids with ROOT prepended."""
        return [self.root_id] + [self.lookup(f) for f in tree.forms]

    def to_json(self) -> dict:
        return {"lowercase": self.lowercase, "itos": self.itos[len(self.reserved):]}

    @classmethod
    def from_json(cls, obj: dict) -> "Vocab":
        return cls(obj["itos"], lowercase=obj["lowercase"])


def build_vocab(trees: Iterable[DependencyTree], lowercase: bool = True, min_count: int = 1) -> Vocab:
    """Vocabulary ordered by descending frequency, ties broken alphabetically."""
    counts: Counter[str] = Counter()
    for tree in trees:
        for form in tree.forms:
            counts[form.lower() if lowercase else form] += 1
    words = sorted((w for w, c in counts.items() if c >= min_count and w not in Vocab.reserved),
                   key=lambda w: (-counts[w], w))
    return Vocab(words, lowercase=lowercase)


@dataclass
class EmbeddingTable:
    matrix: np.ndarray
    found: int
    oov: int

    @property
    def coverage(self) -> float:
        total = self.found + self.oov
        return self.found / total if total else 0.0


def load_embeddings(path: str | Path, vocab: Vocab, d_e: int = 300, seed: int = 0,
                    oov_range: float = 0.05) -> EmbeddingTable:
    """Read a ``word v1 .. v_d`` text file into a |V| x d_e matrix.

    Words missing from the file get U(-oov_range, oov_range) rows drawn from
    ``seed``; the PAD row is zero. Coverage counts exclude PAD and UNK.
    """
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-oov_range, oov_range, size=(len(vocab), d_e))
    matrix[vocab.pad_id] = 0.0
    hit = np.zeros(len(vocab), dtype=bool)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) <= 1 and not parts[0]:
                continue
            if len(parts) - 1 != d_e:
                raise EmbeddingFormatError(lineno, f"expected {d_e} values, found {len(parts) - 1}")
            idx = vocab.stoi.get(parts[0])
            if idx is None or idx in (vocab.pad_id, vocab.unk_id):
                continue
            try:
                matrix[idx] = np.array(parts[1:], dtype=np.float64)
            except ValueError:
                raise EmbeddingFormatError(lineno, "non-numeric vector component") from None
            hit[idx] = True
    counted = np.ones(len(vocab), dtype=bool)
    counted[[vocab.pad_id, vocab.unk_id]] = False
    found = int((hit & counted).sum())
    return EmbeddingTable(matrix, found=found, oov=int(counted.sum()) - found)


# label files ---------------------------------------------------------------------------


def read_labels(path: str | Path, pair: bool) -> list:
    """Targets, one per line. Pair files hold ``left_id<TAB>right_id<TAB>target``."""
    out = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        cols = line.split("\t")
        if pair:
            if len(cols) != 3:
                raise ConlluParseError(lineno, f"pair label line needs 3 columns, found {len(cols)}")
            out.append((cols[0], cols[1], _number(cols[2], lineno)))
        else:
            out.append(_number(cols[-1], lineno))
    return out


def _number(text: str, lineno: int):
    try:
        value = float(text)
    except ValueError:
        raise ConlluParseError(lineno, f"target {text!r} is not numeric") from None
    return int(value) if value.is_integer() and "." not in text else value
