import numpy as np
import pytest

from conftest import random_trees
from depformer.treebank import (ConlluParseError, DependencyTree, EmbeddingFormatError,
                                TreeStructureError, Vocab, bfs_levels, build_vocab,
                                compute_levels, load_embeddings, parse_conllu, read_conllu,
                                read_labels, serialize_conllu, validate_tree, validate_treebank)


def test_two_sentence_fixture(fixtures):
    trees = read_conllu(fixtures / "two_sentences.conllu")
    assert len(trees) == 2
    first, second = trees
    assert first.sent_id == "s1"
    assert [t.form for t in first.tokens] == ["The", "dog", "barked", "."]
    assert [t.head for t in first.tokens] == [2, 3, 0, 3]
    assert [t.deprel for t in first.tokens] == ["det", "nsubj", "root", "punct"]
    # multiword range and empty node skipped
    assert [(t.form, t.head, t.deprel) for t in second.tokens] == [
        ("do", 3, "aux"), ("not", 3, "advmod"), ("go", 0, "root")]


def test_empty_text():
    assert parse_conllu("") == []


def test_non_integer_head_names_line():
    text = "1\tdog\t_\t_\t_\t_\t0\troot\t_\t_\n2\tbark\t_\t_\t_\t_\tx\tdep\t_\t_\n"
    with pytest.raises(ConlluParseError, match="line 2") as err:
        parse_conllu(text)
    assert err.value.lineno == 2


def test_missing_columns():
    with pytest.raises(ConlluParseError, match="line 1"):
        parse_conllu("1\tdog\t_\t0\troot\n")


def test_head_out_of_range():
    with pytest.raises(ConlluParseError, match="out of range"):
        parse_conllu("1\tdog\t_\t_\t_\t_\t5\troot\t_\t_\n")


def test_round_trip(fixtures):
    trees = read_conllu(fixtures / "two_sentences.conllu")
    again = parse_conllu(serialize_conllu(trees))
    for a, b in zip(trees, again):
        assert [(t.form, t.head, t.deprel) for t in a.tokens] == [(t.form, t.head, t.deprel) for t in b.tokens]
        assert a.sent_id == b.sent_id


def test_round_trip_random_trees():
    trees = random_trees(50, seed=11)
    again = parse_conllu(serialize_conllu(trees))
    assert [t.tokens for t in trees] == [t.tokens for t in again]


# validation ---------------------------------------------------------------------


def test_cycle_violation(fixtures):
    (tree,) = read_conllu(fixtures / "cycle.conllu")
    kinds = {v.kind for v in validate_tree(tree)}
    assert "cycle" in kinds
    with pytest.raises(TreeStructureError) as err:
        validate_treebank([tree], strict=True)
    assert any(v.kind == "cycle" for v in err.value.violations)


def test_chain_is_valid():
    # 1 <- 2 <- ROOT
    tree = DependencyTree.from_heads([2, 0])
    assert validate_tree(tree) == []


def test_multi_root_violation(fixtures):
    (tree,) = read_conllu(fixtures / "multiroot.conllu")
    assert [v.kind for v in validate_tree(tree)] == ["multi-root"]
    with pytest.raises(TreeStructureError, match="multi-root"):
        validate_treebank([tree], strict=True)


def test_lenient_mode_drops(fixtures):
    trees = read_conllu(fixtures / "two_sentences.conllu") + read_conllu(fixtures / "cycle.conllu")
    kept, dropped = validate_treebank(trees, strict=False)
    assert dropped == 1 and len(kept) == 2


def test_unreachable_hanging_off_cycle():
    # 1 <-> 2 cycle, 3 hangs off the cycle, 4 is the real root
    tree = DependencyTree.from_heads([2, 1, 1, 0])
    kinds = {v.kind: v.nodes for v in validate_tree(tree)}
    assert kinds["cycle"] == (1, 2)
    assert kinds["unreachable"] == (3,)


def test_valid_trees_have_one_head_per_token():
    for tree in random_trees(200, seed=3):
        assert validate_tree(tree) == []
        assert sum(1 for h in tree.heads[1:] if h >= 0) == len(tree)


# levels -----------------------------------------------------------------------------


def test_levels_single_token():
    assert compute_levels(DependencyTree.from_heads([0])) == [0, 1]


def test_levels_chain():
    # ROOT -> 4 -> 3 -> 2 -> 1
    assert compute_levels(DependencyTree.from_heads([2, 3, 4, 0])) == [0, 4, 3, 2, 1]


def test_levels_match_bfs_oracle():
    for tree in random_trees(500, seed=5):
        levels = compute_levels(tree)
        assert levels == bfs_levels(tree)
        heads = tree.heads
        assert all(levels[k] == 1 + levels[heads[k]] for k in range(1, tree.n_nodes))


def test_levels_on_cycle_raise():
    with pytest.raises(TreeStructureError):
        compute_levels(DependencyTree.from_heads([2, 1]))


# vocab and embeddings -------------------------------------------------------------------


def test_vocab_reserved_and_deterministic(fixtures):
    trees = read_conllu(fixtures / "two_sentences.conllu")
    v1, v2 = build_vocab(trees), build_vocab(trees)
    assert v1.itos[:3] == ["<pad>", "<unk>", "<root>"]
    assert v1.itos == v2.itos
    assert v1.lookup("THE") == v1.lookup("the") != v1.unk_id
    assert v1.lookup("zebra") == v1.unk_id
    assert v1.encode(trees[0])[0] == Vocab.root_id


def test_load_embeddings(fixtures):
    vocab = Vocab(["dog", "barked", "zebra"])
    table = load_embeddings(fixtures / "vectors3.txt", vocab, d_e=3, seed=1)
    np.testing.assert_array_equal(table.matrix[vocab.lookup("dog")], [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(table.matrix[vocab.lookup("barked")], [-1.0, 0.0, 1.5])
    assert np.all(table.matrix[vocab.pad_id] == 0.0)
    zebra = table.matrix[vocab.lookup("zebra")]
    assert np.all(np.abs(zebra) <= 0.05)
    again = load_embeddings(fixtures / "vectors3.txt", vocab, d_e=3, seed=1)
    np.testing.assert_array_equal(again.matrix, table.matrix)
    # dog, barked found; ROOT and zebra not
    assert (table.found, table.oov) == (2, 2)


def test_embedding_length_mismatch(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("dog " + " ".join(["0.1"] * 299) + "\n")
    with pytest.raises(EmbeddingFormatError, match="line 1"):
        load_embeddings(path, Vocab(["dog"]), d_e=300)


def test_read_labels(tmp_path):
    single = tmp_path / "y.txt"
    single.write_text("1\n0\n")
    assert read_labels(single, pair=False) == [1, 0]
    pair = tmp_path / "pairs.txt"
    pair.write_text("s1\ts2\t3.6\n")
    assert read_labels(pair, pair=True) == [("s1", "s2", 3.6)]
