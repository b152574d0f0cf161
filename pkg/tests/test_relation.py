import json

import numpy as np
import pytest

from conftest import random_trees
from oracles import bfs_relation_keys, nca_by_paths
from depformer.relation import (NONE, SELF, UNK, ArcLabel, PathCode, RelationVocab,
                                build_relation_matrix, build_relation_vocab, dump_matrix,
                                nca_with_distances, parse_key, relation_key, relation_keys)
from depformer.treebank import DependencyTree


def test_nca_identity(dogs_bark):
    assert nca_with_distances(dogs_bark, 1, 1) == (1, 0, 0)
    assert nca_with_distances(dogs_bark, 0, 0) == (0, 0, 0)


def test_nca_head(dogs_bark):
    assert nca_with_distances(dogs_bark, 1, 2) == (2, 1, 0)


def test_nca_bounds(dogs_bark):
    with pytest.raises(IndexError):
        nca_with_distances(dogs_bark, 0, 3)


def test_nca_matches_path_intersection():
    for tree in random_trees(500, seed=1):
        n = tree.n_nodes
        for i in range(n):
            for j in range(n):
                assert nca_with_distances(tree, i, j) == nca_by_paths(tree, i, j)


def test_arc_key_direction():
    # saw(2) -nsubj-> I(1)
    tree = DependencyTree.from_heads([2, 0], ["nsubj", "root"])
    assert relation_key(tree, 2, 1) == ArcLabel("nsubj", True)
    assert relation_key(tree, 1, 2) == ArcLabel("nsubj", False)


def test_siblings_get_path_code():
    tree = DependencyTree.from_heads([2, 0, 2], ["nsubj", "root", "obj"])
    assert relation_key(tree, 1, 3, tau=2) == PathCode(1, 1)


def test_threshold_excludes_distant_pairs():
    # chain of five below the root: node 5 is the top, node 1 the bottom
    tree = DependencyTree.from_heads([2, 3, 4, 5, 0, 5, 6])
    # 1 -> 5 is four hops up; 7 hangs two below 5: distance 6
    _, di, dj = nca_with_distances(tree, 1, 6)
    assert di + dj == 5
    assert relation_key(tree, 1, 6, tau=2) == NONE


def test_dogs_bark_hand_trace(dogs_bark):
    keys = relation_keys(dogs_bark, tau=2)
    assert keys == [
        [SELF, PathCode(0, 2), ArcLabel("root", True)],
        [PathCode(2, 0), SELF, ArcLabel("nsubj", False)],
        [ArcLabel("root", False), ArcLabel("nsubj", True), SELF],
    ]


def test_single_token_sentence():
    tree = DependencyTree.from_heads([0], ["root"], ["hi"])
    keys = relation_keys(tree, 2)
    assert keys == [[SELF, ArcLabel("root", True)], [ArcLabel("root", False), SELF]]


def test_matrix_is_direction_flip_symmetric():
    for tree in random_trees(200, seed=2):
        keys = relation_keys(tree, 3)
        n = tree.n_nodes
        for i in range(n):
            for j in range(n):
                assert keys[i][j] == keys[j][i].flip()


def test_matrix_matches_bfs_oracle():
    for tree in random_trees(500, seed=4):
        for tau in (2, 3):
            assert relation_keys(tree, tau) == bfs_relation_keys(tree, tau)


def test_arc_cell_count_is_twice_tokens():
    for tree in random_trees(200, seed=6):
        keys = relation_keys(tree, 2)
        arcs = sum(isinstance(k, ArcLabel) for row in keys for k in row)
        assert arcs == 2 * len(tree)


def test_raising_tau_only_fills_none_cells():
    for tree in random_trees(200, seed=7):
        low, high = relation_keys(tree, 2), relation_keys(tree, 4)
        for row_lo, row_hi in zip(low, high):
            for a, b in zip(row_lo, row_hi):
                if isinstance(a, (ArcLabel, PathCode)) or a == SELF:
                    assert a == b
                elif a != b:
                    assert a == NONE and isinstance(b, PathCode)


def test_path_codes_never_encode_adjacency():
    for tree in random_trees(200, seed=8):
        for row in relation_keys(tree, 4):
            for k in row:
                if isinstance(k, PathCode):
                    assert k.up_i + k.up_j >= 2


# vocab ----------------------------------------------------------------------------------


def _fixture_corpus():
    return [
        DependencyTree.from_heads([2, 0], ["nsubj", "root"]),
        DependencyTree.from_heads([2, 0, 2], ["nsubj", "root", "nsubj"]),
    ]


def test_relation_vocab_enumeration():
    vocab = build_relation_vocab(_fixture_corpus(), tau=2)
    arcs = [k for k in vocab.itos if isinstance(k, ArcLabel)]
    assert sorted(map(str, arcs)) == ["nsubj:d>h", "nsubj:h>d", "root:d>h", "root:h>d"]
    paths = {k for k in vocab.itos if isinstance(k, PathCode)}
    # ROOT to grandchildren, siblings
    assert paths == {PathCode(0, 2), PathCode(2, 0), PathCode(1, 1)}
    assert vocab.itos[:3] == [NONE, SELF, UNK]
    assert len(vocab) == 3 + 4 + 3


def test_empty_corpus_vocab():
    assert build_relation_vocab([], 2).itos == [NONE, SELF, UNK]


def test_relation_vocab_deterministic():
    a = build_relation_vocab(_fixture_corpus(), 2)
    b = build_relation_vocab(list(reversed(_fixture_corpus())), 2)
    assert a.itos == b.itos


def test_frozen_vocab_maps_unseen_to_unk(dogs_bark):
    vocab = build_relation_vocab([dogs_bark], 2)
    tree = DependencyTree.from_heads([2, 0], ["amod", "root"])
    m = build_relation_matrix(tree, vocab, 2)
    assert m.ids[2, 1] == RelationVocab.unk_id
    assert m.ids[0, 2] == vocab.lookup(ArcLabel("root", True))


def test_building_mode_adds_keys(dogs_bark):
    vocab = RelationVocab()
    m = build_relation_matrix(dogs_bark, vocab, 2)
    assert len(vocab) == 3 + 6
    assert np.all(np.diag(m.ids) == RelationVocab.self_id)


def test_key_strings_round_trip():
    for key in (SELF, NONE, UNK, ArcLabel("nsubj:pass", True), ArcLabel("obj", False), PathCode(1, 2)):
        assert parse_key(str(key)) == key


def test_dump_matches_golden(dogs_bark, fixtures):
    vocab = build_relation_vocab([dogs_bark], 2)
    dumped = dump_matrix(dogs_bark, build_relation_matrix(dogs_bark, vocab, 2))
    golden = json.loads((fixtures / "dogs_bark_relmatrix.json").read_text())
    assert dumped["keys"] == golden["keys"]
    assert dumped["ids"] == golden["ids"]
    assert dumped["tokens"] == golden["tokens"]
