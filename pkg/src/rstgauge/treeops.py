"""Constituent-tree operations: binarization, head-dependency conversion,
and per-EDU structural profiles.

The dependency conversion follows the chain-style head-percolation rule:

* the head EDU of a leaf is its own EDU;
* the head EDU of an internal node is the head of its leftmost nucleus child;
* a satellite child depends on the head of its parent node, labeled with the
  satellite's rel2par;
* in a multinuclear node, each non-leftmost nucleus depends on the head of
  the nearest nucleus to its left (a chain), labeled with the shared
  multinuclear relation;
* the head of the whole tree depends on 0 with the reserved label ROOT.

Under this rule, right-branching binarization of multinuclear nodes does not
change the resulting dependency graph, so constituent and binary-tree inputs
profile identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .core import (
    ConstituentNode,
    DepGraph,
    DepNode,
    FormatError,
    NUCLEUS,
    ROOT_HEAD,
    ROOT_LABEL,
    RelationScheme,
    RstTree,
    SATELLITE,
    SPAN,
    internal_node,
)

# Incoming syntactic functions that mark a clause as subordinate under the
# syntax-based strategy (UD labels: adverbial, adnominal/relative,
# complement and open-complement clauses).
SUBORDINATE_FUNCTIONS = frozenset({"advcl", "acl", "acl:relcl", "ccomp", "xcomp"})


def _node_head_edus(root: ConstituentNode) -> dict[int, int]:
    """Head EDU for every node id, by leftmost-nucleus percolation."""
    heads: dict[int, int] = {}

    def head(node: ConstituentNode) -> int:
        if node.leaf_edu is not None:
            heads[node.id] = node.leaf_edu
            return node.leaf_edu
        h: Optional[int] = None
        for child in node.children:
            ch = head(child)
            if h is None and child.role == NUCLEUS:
                h = ch
        if h is None:
            # Defective node without a nucleus: fall back to leftmost child
            # so conversion still terminates; validate_tree reports it.
            h = head(node.children[0])
        heads[node.id] = h
        return h

    head(root)
    return heads


def to_dependencies(tree: RstTree, scheme: Optional[RelationScheme] = None) -> DepGraph:
    """Convert a constituent tree to an EDU dependency graph.

    Every EDU receives exactly one incoming edge; the tree's head EDU
    depends on 0 under the reserved label ROOT.  When ``scheme`` is given,
    each node also carries the coarse class of its relation.
    """
    heads = _node_head_edus(tree.root)
    edges: dict[int, tuple[int, str]] = {heads[tree.root.id]: (ROOT_HEAD, ROOT_LABEL)}

    def walk(node: ConstituentNode) -> None:
        if node.leaf_edu is not None:
            return
        node_head = heads[node.id]
        prev_nucleus: Optional[int] = None
        for child in node.children:
            child_head = heads[child.id]
            if child.role == NUCLEUS:
                if prev_nucleus is None:
                    prev_nucleus = child_head
                else:
                    edges[child_head] = (prev_nucleus, child.rel2par or SPAN)
                    prev_nucleus = child_head
            else:
                edges[child_head] = (node_head, child.rel2par or SPAN)
            walk(child)

    walk(tree.root)

    nodes = []
    for edu in tree.edus:
        head, relation = edges[edu.id]
        rel_class = scheme.class_of(relation) if scheme is not None else None
        nodes.append(DepNode(edu.id, head, relation, rel_class))
    texts = tuple(tree.edu_text(e.id) for e in tree.edus)
    return DepGraph(tree.doc_id, tuple(nodes), texts)


def binarize(tree: RstTree) -> RstTree:
    """Return an equivalent strictly binary tree.

    Multinuclear nodes nest right-branching (``joint(A,B,C)`` becomes
    ``joint(A, joint(B,C))``, the inner node carrying the multinuclear
    relation).  In mononuclear nodes with several satellites, satellites
    peel off outside-in so that the nucleus stays innermost and the EDU
    order is preserved; intermediate nuclei carry the reserved ``span``
    label.  Already-binary trees come back structurally unchanged.
    """
    counter = [max(n.id for n in tree.root.walk())]

    def fresh() -> int:
        counter[0] += 1
        return counter[0]

    def fold(kids: list[ConstituentNode], role, rel2par, node_id=None) -> ConstituentNode:
        """One binary node over already-binary children."""
        nid = fresh() if node_id is None else node_id
        if len(kids) > 2:
            # A peeled block becomes the single nucleus of a mononuclear
            # binary node and carries the reserved span label; a pure run
            # of nuclei nests right-branching under its own relation.
            if kids[0].role == SATELLITE:
                kids = [kids[0], fold(kids[1:], NUCLEUS, SPAN)]
            elif kids[-1].role == SATELLITE:
                kids = [fold(kids[:-1], NUCLEUS, SPAN), kids[-1]]
            else:
                kids = [kids[0], fold(kids[1:], NUCLEUS, kids[1].rel2par)]
        return ConstituentNode(
            id=nid,
            start=kids[0].start,
            end=kids[-1].end,
            role=role,
            rel2par=rel2par,
            children=tuple(kids),
        )

    def rebuild(node: ConstituentNode) -> ConstituentNode:
        if node.leaf_edu is not None:
            return node
        children = [rebuild(c) for c in node.children]
        return fold(children, node.role, node.rel2par, node_id=node.id)

    root = rebuild(tree.root)
    return RstTree(
        doc_id=tree.doc_id,
        root=root,
        edus=tree.edus,
        tokens=tree.tokens,
        genre=tree.genre,
        boundary_source=tree.boundary_source,
    )


@dataclass(frozen=True)
class SyntaxLayer:
    """Token-level dependency syntax: for token i (1-based), ``heads[i-1]``
    is the head token index (0 for the syntactic root) and ``deprels[i-1]``
    its incoming function label."""

    doc_id: str
    heads: tuple[int, ...]
    deprels: tuple[str, ...]

    @property
    def n_tokens(self) -> int:
        return len(self.heads)


def read_syntax(path: "Path | str", doc_id: Optional[str] = None) -> SyntaxLayer:
    """Read a token-level syntax file: ``token_index<TAB>head<TAB>label``
    per line, ``#`` comments allowed, indices 1-based and in order."""
    path = Path(path)
    heads: list[int] = []
    deprels: list[str] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf8").splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise FormatError(f"{path}:{lineno}: expected token_index<TAB>head<TAB>label")
        try:
            idx, head = int(parts[0]), int(parts[1])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric token or head index") from None
        if idx != len(heads) + 1:
            raise FormatError(f"{path}:{lineno}: token index {idx} out of order")
        heads.append(head)
        deprels.append(parts[2])
    return SyntaxLayer(doc_id or path.stem, tuple(heads), tuple(deprels))


@dataclass(frozen=True)
class StructuralProfile:
    """Gold-tree structural description of one EDU."""

    edu_id: int
    n_children: int
    n_descendants: int
    domain_size: int
    is_subordinate: bool
    same_sentence_as_head: bool
    same_paragraph_as_head: bool
    syn_function: str


def _edu_function(tree: RstTree, syntax: SyntaxLayer, edu_id: int) -> str:
    """Incoming function of the first token whose syntactic head lies
    outside the EDU (the clause's attachment point)."""
    edu = tree.edu(edu_id)
    for i in range(edu.start, edu.end + 1):
        head = syntax.heads[i - 1]
        if head == 0 or head < edu.start or head > edu.end:
            return syntax.deprels[i - 1]
    return "internal"


def structural_profile(
    tree: RstTree,
    graph: DepGraph,
    syntax: Optional[SyntaxLayer] = None,
    subord_strategy: str = "syntax",
    subord_functions: frozenset[str] = SUBORDINATE_FUNCTIONS,
) -> dict[int, StructuralProfile]:
    """Per-EDU structural profiles from the gold tree and its dependency
    conversion.

    ``subord_strategy`` selects how subordination is judged: ``"syntax"``
    uses the first token's incoming function against ``subord_functions``
    (requires a syntax layer); ``"same-sentence"`` calls an EDU subordinate
    when its head EDU lies in the same sentence, for corpora without a
    token syntax layer.
    """
    if subord_strategy not in ("syntax", "same-sentence"):
        raise ValueError(f"unknown subordination strategy {subord_strategy!r}")
    if subord_strategy == "syntax" and syntax is not None and syntax.n_tokens != len(tree.tokens):
        raise FormatError(
            f"{tree.doc_id}: syntax layer has {syntax.n_tokens} tokens, document has {len(tree.tokens)}"
        )

    children: dict[int, list[int]] = {e.id: [] for e in tree.edus}
    for node in graph.nodes:
        if node.head != ROOT_HEAD:
            children[node.head].append(node.edu_id)

    def descendant_count(edu_id: int) -> int:
        total = 0
        stack = list(children[edu_id])
        while stack:
            cur = stack.pop()
            total += 1
            stack.extend(children[cur])
        return total

    node_heads = _node_head_edus(tree.root)
    domain: dict[int, int] = {e.id: 1 for e in tree.edus}
    for node in tree.root.walk():
        size = node.end - node.start + 1
        head = node_heads[node.id]
        if size > domain[head]:
            domain[head] = size

    def sentence_of(edu_id: int) -> int:
        return tree.tokens[tree.edu(edu_id).start - 1].sentence_id

    def paragraph_of(edu_id: int) -> int:
        return tree.tokens[tree.edu(edu_id).start - 1].paragraph_id

    profiles: dict[int, StructuralProfile] = {}
    for edu in tree.edus:
        dep = graph.node(edu.id)
        is_root = dep.head == ROOT_HEAD
        same_sent = (not is_root) and sentence_of(edu.id) == sentence_of(dep.head)
        same_par = (not is_root) and paragraph_of(edu.id) == paragraph_of(dep.head)
        if syntax is not None:
            function = _edu_function(tree, syntax, edu.id)
        else:
            function = "_"
        if subord_strategy == "syntax":
            subord = syntax is not None and function in subord_functions
        else:
            subord = same_sent
        profiles[edu.id] = StructuralProfile(
            edu_id=edu.id,
            n_children=len(children[edu.id]),
            n_descendants=descendant_count(edu.id),
            domain_size=domain[edu.id],
            is_subordinate=subord,
            same_sentence_as_head=same_sent,
            same_paragraph_as_head=same_par,
            syn_function=function,
        )
    return profiles
