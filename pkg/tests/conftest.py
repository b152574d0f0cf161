from pathlib import Path

import numpy as np
import pytest

from depformer.treebank import DependencyTree

FIXTURES = Path(__file__).parent / "fixtures"

LABELS = ("nsubj", "obj", "amod", "det")


def random_tree(rng: np.random.Generator, n: int) -> DependencyTree:
    """Random single-root tree over n tokens with random arc labels."""
    order = rng.permutation(n) + 1
    heads = [0] * (n + 1)
    rels = ["root"] * (n + 1)
    for k in range(1, n):
        heads[order[k]] = int(order[rng.integers(k)])
        rels[order[k]] = LABELS[rng.integers(len(LABELS))]
    return DependencyTree.from_heads(heads[1:], rels[1:])


def random_trees(count: int, max_nodes: int = 12, seed: int = 0) -> list[DependencyTree]:
    # max_nodes counts ROOT
    rng = np.random.default_rng(seed)
    return [random_tree(rng, int(rng.integers(1, max_nodes))) for _ in range(count)]


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture
def dogs_bark() -> DependencyTree:
    return DependencyTree.from_heads([2, 0], ["nsubj", "root"], ["dogs", "bark"])


def encoded_sentences(trees, n_words: int = 30, seed: int = 0, tau: int = 2):
    """Encode trees with random token ids; returns (sentences, relation vocab)."""
    from depformer.data import EncodedSentence
    from depformer.relation import build_relation_matrix, build_relation_vocab

    rng = np.random.default_rng(seed)
    rel_vocab = build_relation_vocab(trees, tau)
    out = []
    for tree in trees:
        tokens = np.concatenate([[2], rng.integers(3, n_words, size=len(tree))])
        out.append(EncodedSentence(tokens, np.array(tree.levels),
                                   build_relation_matrix(tree, rel_vocab, tau).ids))
    return out, rel_vocab


_ACCEPTANCE: list[str] = []


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion; returns ``ok`` for asserting."""

    def record(number: int, title: str, ok: bool, detail: str = "") -> bool:
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}" + (f": {detail}" if detail else "")
        _ACCEPTANCE.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
