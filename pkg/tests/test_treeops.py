"""Dependency conversion, binarization and structural profiles."""

from __future__ import annotations

import random

import pytest

from conftest import random_tree, random_tokens
from oracles import brute_force_dependencies

from rstgauge.core import (
    NUCLEUS,
    ROOT_HEAD,
    ROOT_LABEL,
    RstTree,
    SATELLITE,
    SPAN,
    internal_node,
    leaf_node,
    validate_tree,
)
from rstgauge.treeops import (
    SyntaxLayer,
    binarize,
    read_syntax,
    structural_profile,
    to_dependencies,
)


def tree_over(rng_seed: int, root_builder, n_edus: int) -> RstTree:
    tokens, edus = random_tokens(random.Random(rng_seed), n_edus)
    return RstTree(doc_id="doc", root=root_builder, edus=edus, tokens=tokens)


def edges_of(graph):
    return {n.edu_id: (n.head, n.relation) for n in graph.nodes}


class TestToDependencies:
    def test_two_edu_multinuclear(self):
        root = internal_node(
            3,
            [leaf_node(1, 1, NUCLEUS, "joint-list"), leaf_node(2, 2, NUCLEUS, "joint-list")],
        )
        tree = tree_over(1, root, 2)
        assert edges_of(to_dependencies(tree)) == {
            1: (ROOT_HEAD, ROOT_LABEL),
            2: (1, "joint-list"),
        }

    def test_two_edu_mononuclear(self):
        root = internal_node(
            3,
            [leaf_node(1, 1, SATELLITE, "causal-cause"), leaf_node(2, 2, NUCLEUS, SPAN)],
        )
        tree = tree_over(2, root, 2)
        assert edges_of(to_dependencies(tree)) == {
            2: (ROOT_HEAD, ROOT_LABEL),
            1: (2, "causal-cause"),
        }

    def test_nested_satellites_attach_to_percolated_head(self):
        # elaboration(nucleus=cause(satellite=1, nucleus=2), satellite=3):
        # EDU 2 heads everything, 1 and 3 both depend on it.
        inner = internal_node(
            4,
            [leaf_node(1, 1, SATELLITE, "causal-cause"), leaf_node(2, 2, NUCLEUS, SPAN)],
            role=NUCLEUS,
            rel2par=SPAN,
        )
        root = internal_node(
            5, [inner, leaf_node(3, 3, SATELLITE, "elaboration-additional")]
        )
        tree = tree_over(3, root, 3)
        assert edges_of(to_dependencies(tree)) == {
            2: (ROOT_HEAD, ROOT_LABEL),
            1: (2, "causal-cause"),
            3: (2, "elaboration-additional"),
        }

    def test_flat_multinuclear_chains(self):
        root = internal_node(
            4, [leaf_node(i, i, NUCLEUS, "joint-sequence") for i in (1, 2, 3)]
        )
        tree = tree_over(4, root, 3)
        assert edges_of(to_dependencies(tree)) == {
            1: (ROOT_HEAD, ROOT_LABEL),
            2: (1, "joint-sequence"),
            3: (2, "joint-sequence"),
        }

    def test_mononuclear_nary_satellites_share_head(self):
        root = internal_node(
            4,
            [
                leaf_node(1, 1, SATELLITE, "context-circumstance"),
                leaf_node(2, 2, NUCLEUS, SPAN),
                leaf_node(3, 3, SATELLITE, "evaluation-comment"),
            ],
        )
        tree = tree_over(5, root, 3)
        assert edges_of(to_dependencies(tree)) == {
            2: (ROOT_HEAD, ROOT_LABEL),
            1: (2, "context-circumstance"),
            3: (2, "evaluation-comment"),
        }

    def test_single_edu_document(self):
        tree = tree_over(6, leaf_node(1, 1), 1)
        assert edges_of(to_dependencies(tree)) == {1: (ROOT_HEAD, ROOT_LABEL)}

    def test_classes_attached_with_scheme(self):
        from rstgauge.core import RelationScheme

        scheme = RelationScheme.builtin("gum")
        root = internal_node(
            3,
            [leaf_node(1, 1, SATELLITE, "causal-cause"), leaf_node(2, 2, NUCLEUS, SPAN)],
        )
        tree = tree_over(7, root, 2)
        graph = to_dependencies(tree, scheme)
        assert graph.node(1).rel_class == "Causal"
        assert graph.node(2).rel_class == "ROOT"

    def test_matches_brute_force_oracle_on_random_trees(self):
        rng = random.Random(101)
        for _ in range(200):
            tree = random_tree(rng, max_edus=10)
            assert validate_tree(tree) == []
            got = edges_of(to_dependencies(tree))
            assert got == brute_force_dependencies(tree)

    def test_every_edu_gets_exactly_one_head(self):
        rng = random.Random(102)
        for _ in range(50):
            tree = random_tree(rng, max_edus=12, min_edus=2)
            graph = to_dependencies(tree)
            assert sorted(n.edu_id for n in graph.nodes) == list(range(1, tree.n_edus + 1))
            assert sum(1 for n in graph.nodes if n.head == ROOT_HEAD) == 1


class TestBinarize:
    def test_three_way_multinuclear_nests_right(self):
        root = internal_node(
            4, [leaf_node(i, i, NUCLEUS, "joint-list") for i in (1, 2, 3)]
        )
        tree = tree_over(8, root, 3)
        out = binarize(tree).root
        assert len(out.children) == 2
        left, right = out.children
        assert left.leaf_edu == 1
        assert (right.start, right.end) == (2, 3)
        assert right.role == NUCLEUS and right.rel2par == "joint-list"
        assert [c.leaf_edu for c in right.children] == [2, 3]

    def test_binary_output_is_valid_and_spans_preserved(self, rng):
        for _ in range(100):
            tree = random_tree(rng, max_edus=10)
            out = binarize(tree)
            assert validate_tree(out) == []
            for node in out.root.walk():
                assert node.leaf_edu is not None or len(node.children) == 2
            assert (out.root.start, out.root.end) == (tree.root.start, tree.root.end)

    def test_binarization_does_not_change_dependencies(self):
        rng = random.Random(103)
        for _ in range(200):
            tree = random_tree(rng, max_edus=10)
            flat = edges_of(to_dependencies(tree))
            nested = edges_of(to_dependencies(binarize(tree)))
            assert flat == nested

    def test_idempotent_on_binary_trees(self, rng):
        def shape(node):
            if node.leaf_edu is not None:
                return (node.leaf_edu, node.role, node.rel2par)
            return (node.role, node.rel2par, tuple(shape(c) for c in node.children))

        for _ in range(25):
            tree = random_tree(rng, max_edus=8)
            once = binarize(tree)
            twice = binarize(once)
            assert shape(once.root) == shape(twice.root)


class TestStructuralProfile:
    def make_chain(self):
        root = internal_node(
            4, [leaf_node(i, i, NUCLEUS, "joint-sequence") for i in (1, 2, 3)]
        )
        return tree_over(9, root, 3)

    def test_counts_on_chain(self):
        tree = self.make_chain()
        graph = to_dependencies(tree)
        prof = structural_profile(tree, graph, subord_strategy="same-sentence")
        assert prof[1].n_children == 1 and prof[1].n_descendants == 2
        assert prof[2].n_children == 1 and prof[2].n_descendants == 1
        assert prof[3].n_children == 0 and prof[3].n_descendants == 0
        assert prof[1].domain_size == 3
        assert prof[3].domain_size == 1

    def test_invariants_on_random_trees(self, rng):
        for _ in range(50):
            tree = random_tree(rng, max_edus=12, min_edus=2)
            graph = to_dependencies(tree)
            prof = structural_profile(tree, graph, subord_strategy="same-sentence")
            assert sum(p.n_children for p in prof.values()) == tree.n_edus - 1
            root_edu = graph.root_edu()
            assert prof[root_edu].domain_size == tree.n_edus
            assert prof[root_edu].same_sentence_as_head is False
            assert prof[root_edu].same_paragraph_as_head is False

    def test_syntax_based_subordination(self, tmp_path):
        # Two EDUs, three tokens each; EDU 2 opens with a token whose head
        # lies in EDU 1 under an adverbial-clause function.
        root = internal_node(
            3,
            [leaf_node(1, 1, NUCLEUS, SPAN), leaf_node(2, 2, SATELLITE, "causal-cause")],
        )
        from rstgauge.core import Edu, Token

        toks = tuple(
            Token(i, f"w{i}", True, 1 if i <= 3 else 2, 1) for i in range(1, 7)
        )
        edus = (Edu(1, 1, 3), Edu(2, 4, 6))
        tree = RstTree(doc_id="doc", root=root, edus=edus, tokens=toks)

        syn = tmp_path / "doc.tsv"
        syn.write_text(
            "# token\thead\tlabel\n"
            "1\t2\tdet\n2\t0\troot\n3\t2\tobj\n"
            "4\t2\tadvcl\n5\t4\tmark\n6\t4\tobj\n"
        )
        layer = read_syntax(syn)
        graph = to_dependencies(tree)
        prof = structural_profile(tree, graph, syntax=layer, subord_strategy="syntax")
        assert prof[2].is_subordinate is True
        assert prof[2].syn_function == "advcl"
        assert prof[1].is_subordinate is False
        assert prof[1].syn_function == "root"

    def test_leaf_root_tree(self):
        tree = tree_over(12, leaf_node(1, 1), 1)
        graph = to_dependencies(tree)
        prof = structural_profile(tree, graph, subord_strategy="same-sentence")
        assert prof[1].domain_size == 1
        assert prof[1].n_children == 0


class TestReadSyntax:
    def test_round_trip_fields(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("1\t2\tnsubj\n2\t0\troot\n")
        layer = read_syntax(p)
        assert layer.heads == (2, 0)
        assert layer.deprels == ("nsubj", "root")

    def test_out_of_order_index_rejected(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("1\t2\tnsubj\n3\t0\troot\n")
        from rstgauge.core import FormatError

        with pytest.raises(FormatError):
            read_syntax(p)
