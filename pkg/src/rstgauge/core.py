"""Core data model: tokens, EDUs, constituent trees, dependency graphs,
connective annotations and relation-label schemes.

All structures are immutable after construction.  Readers in
:mod:`rstgauge.ingest` build them; :mod:`rstgauge.treeops` and the rest of
the package only consume them.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Iterator, Optional

if sys.version_info >= (3, 9):
    from importlib import resources as importlib_resources
else:  # pragma: no cover
    import importlib_resources

NUCLEUS = "nucleus"
SATELLITE = "satellite"

# Reserved labels: nuclei of mononuclear nodes carry SPAN; the artificial
# incoming edge of the dependency root carries ROOT with head index 0.
SPAN = "span"
ROOT_LABEL = "ROOT"
ROOT_HEAD = 0

SIGNAL = "signal"
DISTRACTOR = "distractor"


class CorpusError(Exception):
    """Base class for malformed corpus input."""


class FormatError(CorpusError):
    """A file could not be parsed in its declared format."""


class UnknownLabelError(CorpusError):
    """A relation label is not covered by the active scheme."""


@dataclass(frozen=True)
class Token:
    """One surface token.

    ``index`` is the 1-based position in the document.  ``sentence_id`` and
    ``paragraph_id`` are 1-based and non-decreasing over the document; they
    come from corpus markup when available and from punctuation/blank-line
    heuristics otherwise (see ``RstTree.boundary_source``).
    """

    index: int
    form: str
    is_lexical: bool
    sentence_id: int
    paragraph_id: int


@dataclass(frozen=True)
class Edu:
    """An elementary discourse unit covering tokens ``start..end`` inclusive."""

    id: int
    start: int
    end: int

    @property
    def length(self) -> int:
        return self.end - self.start + 1


@dataclass(frozen=True)
class ConstituentNode:
    """A node of an RST constituent tree.

    Leaves carry ``leaf_edu``; internal nodes carry ``children``.  ``role``
    and ``rel2par`` describe the link to the parent and are ``None`` on the
    root.  Nuclei of mononuclear nodes carry the reserved label ``span``;
    nuclei of multinuclear nodes all carry the shared multinuclear relation.
    ``start``/``end`` are the covered EDU range, inclusive.
    """

    id: int
    start: int
    end: int
    role: Optional[str] = None
    rel2par: Optional[str] = None
    children: tuple["ConstituentNode", ...] = ()
    leaf_edu: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.leaf_edu is not None

    def nucleus_children(self) -> tuple["ConstituentNode", ...]:
        return tuple(c for c in self.children if c.role == NUCLEUS)

    def satellite_children(self) -> tuple["ConstituentNode", ...]:
        return tuple(c for c in self.children if c.role == SATELLITE)

    @property
    def is_multinuclear(self) -> bool:
        return len(self.nucleus_children()) >= 2

    def walk(self) -> Iterator["ConstituentNode"]:
        """Yield this node and all descendants, pre-order."""
        yield self
        for child in self.children:
            yield from child.walk()

    def relabel(self, role: Optional[str], rel2par: Optional[str]) -> "ConstituentNode":
        """Copy of this node with a different link to its parent."""
        return ConstituentNode(
            id=self.id,
            start=self.start,
            end=self.end,
            role=role,
            rel2par=rel2par,
            children=self.children,
            leaf_edu=self.leaf_edu,
        )


def leaf_node(
    node_id: int, edu_id: int, role: Optional[str] = None, rel2par: Optional[str] = None
) -> ConstituentNode:
    return ConstituentNode(
        id=node_id, start=edu_id, end=edu_id, role=role, rel2par=rel2par, leaf_edu=edu_id
    )


def internal_node(
    node_id: int,
    children: Iterable[ConstituentNode],
    role: Optional[str] = None,
    rel2par: Optional[str] = None,
) -> ConstituentNode:
    kids = tuple(children)
    if not kids:
        raise ValueError("internal node needs at least one child")
    return ConstituentNode(
        id=node_id,
        start=min(c.start for c in kids),
        end=max(c.end for c in kids),
        role=role,
        rel2par=rel2par,
        children=kids,
    )


@dataclass(frozen=True)
class RstTree:
    """A document with its constituent analysis.

    ``edus`` and ``tokens`` are in document order; EDU ``i`` is
    ``edus[i-1]``.  ``boundary_source`` records whether sentence/paragraph
    ids came from corpus markup or from heuristics.
    """

    doc_id: str
    root: ConstituentNode
    edus: tuple[Edu, ...]
    tokens: tuple[Token, ...]
    genre: str = "unknown"
    boundary_source: str = "heuristic"

    @property
    def n_edus(self) -> int:
        return len(self.edus)

    def edu(self, edu_id: int) -> Edu:
        return self.edus[edu_id - 1]

    def edu_tokens(self, edu_id: int) -> tuple[Token, ...]:
        e = self.edu(edu_id)
        return self.tokens[e.start - 1 : e.end]

    def edu_text(self, edu_id: int) -> str:
        return " ".join(t.form for t in self.edu_tokens(edu_id))


@dataclass(frozen=True)
class DepNode:
    """One EDU in a dependency graph: ``head`` is an EDU id, 0 for the root.

    ``rel_class`` is the coarse class of ``relation`` under the active
    scheme, or ``None`` when no scheme was applied.
    """

    edu_id: int
    head: int
    relation: str
    rel_class: Optional[str] = None


@dataclass(frozen=True)
class DepGraph:
    """Dependency analysis of one document, nodes sorted by EDU id."""

    doc_id: str
    nodes: tuple[DepNode, ...]
    edu_texts: Optional[tuple[str, ...]] = None

    @property
    def n_edus(self) -> int:
        return len(self.nodes)

    def node(self, edu_id: int) -> DepNode:
        return self.nodes[edu_id - 1]

    def root_edu(self) -> int:
        for n in self.nodes:
            if n.head == ROOT_HEAD:
                return n.edu_id
        raise CorpusError(f"{self.doc_id}: dependency graph has no root")

    def with_classes(self, scheme: "RelationScheme") -> "DepGraph":
        nodes = tuple(
            DepNode(n.edu_id, n.head, n.relation, scheme.class_of(n.relation))
            for n in self.nodes
        )
        return DepGraph(self.doc_id, nodes, self.edu_texts)


@dataclass(frozen=True)
class DmAnnotation:
    """A discourse-marker occurrence anchored to document token indices.

    Signals point at a gold relation instance (``source_edu`` depends on
    ``target_edu`` under ``relation``); distractors have no link and carry
    ``None`` in all three fields.
    """

    doc_id: str
    token_indices: tuple[int, ...]
    form: str
    status: str  # SIGNAL or DISTRACTOR
    source_edu: Optional[int] = None
    target_edu: Optional[int] = None
    relation: Optional[str] = None

    @property
    def is_signal(self) -> bool:
        return self.status == SIGNAL


def _capitalize_prefix(label: str) -> str:
    head = label.split("-", 1)[0]
    return head[:1].upper() + head[1:]


class RelationScheme:
    """Mapping from fine relation labels to coarse classes.

    Loaded from an editable two-column TSV (``label<TAB>class``).  ``#``
    starts a comment; ``#!`` lines carry directives:

    * ``#! name: <scheme name>``
    * ``#! fallback: hyphen-prefix`` -- unknown labels map to their
      capitalized hyphen prefix (``adversative-contrast`` -> ``Adversative``)
    * ``#! structural: <label>`` -- the label maps normally but its class is
      excluded from the class inventory (e.g. ``same-unit`` in corpora that
      treat it as a structural device rather than a relation)

    ``ROOT`` always maps to itself and is never part of the inventory.
    """

    def __init__(
        self,
        name: str,
        mapping: dict[str, str],
        fallback: Optional[str] = None,
        structural: frozenset[str] = frozenset(),
    ) -> None:
        self.name = name
        self._map = dict(mapping)
        self.fallback = fallback
        self.structural = structural
        self._lower = {k.lower(): v for k, v in self._map.items()}

    @classmethod
    def from_file(cls, path: "Path | str") -> "RelationScheme":
        path = Path(path)
        name = path.stem
        fallback = None
        structural: set[str] = set()
        mapping: dict[str, str] = {}
        for lineno, raw in enumerate(path.read_text(encoding="utf8").splitlines(), 1):
            line = raw.strip()
            if line.startswith("#!"):
                directive = line[2:].strip()
                key, _, value = directive.partition(":")
                key, value = key.strip(), value.strip()
                if key == "name":
                    name = value
                elif key == "fallback":
                    fallback = value
                elif key == "structural":
                    structural.add(value)
                else:
                    raise FormatError(f"{path}:{lineno}: unknown directive {key!r}")
                continue
            if not line or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise FormatError(f"{path}:{lineno}: expected label<TAB>class")
            mapping[parts[0]] = parts[1]
        return cls(name, mapping, fallback=fallback, structural=frozenset(structural))

    @classmethod
    def builtin(cls, name: str) -> "RelationScheme":
        try:
            ref = importlib_resources.files("rstgauge.resources") / f"{name}_classes.tsv"
            with importlib_resources.as_file(ref) as path:
                return cls.from_file(path)
        except FileNotFoundError:
            raise UnknownLabelError(f"no built-in scheme named {name!r}") from None

    def class_of(self, label: str) -> str:
        if label == ROOT_LABEL:
            return ROOT_LABEL
        if label in self._map:
            return self._map[label]
        low = label.lower()
        if low in self._lower:
            return self._lower[low]
        if self.fallback == "hyphen-prefix":
            return _capitalize_prefix(label)
        raise UnknownLabelError(f"label {label!r} not covered by scheme {self.name!r}")

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(sorted(self._map))

    @property
    def classes(self) -> tuple[str, ...]:
        """Distinct classes, excluding ROOT and structural pseudo-relations."""
        excluded = {self._map[lab] for lab in self.structural if lab in self._map}
        excluded.add(ROOT_LABEL)
        return tuple(sorted(set(self._map.values()) - excluded))

    @property
    def n_labels(self) -> int:
        return len(self._map)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def __repr__(self) -> str:  # pragma: no cover
        return f"RelationScheme({self.name!r}, {self.n_labels} labels, {self.n_classes} classes)"


@lru_cache(maxsize=None)
def load_stoplist(path: Optional[str] = None) -> frozenset[str]:
    """Closed-class word forms used by the lexicality test, lowercased.

    With no ``path``, the bundled English list is used.
    """
    if path is None:
        ref = importlib_resources.files("rstgauge.resources") / "stopwords_en.txt"
        with importlib_resources.as_file(ref) as p:
            text = p.read_text(encoding="utf8")
    else:
        text = Path(path).read_text(encoding="utf8")
    forms = set()
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            forms.add(line.lower())
    return frozenset(forms)


def is_lexical_form(form: str, stoplist: frozenset[str]) -> bool:
    """True for content-word forms: at least one alphabetic character and
    not in the closed-class stoplist."""
    if form.lower() in stoplist:
        return False
    return any(ch.isalpha() for ch in form)


def validate_tree(tree: RstTree) -> list[str]:
    """Check structural well-formedness; returns violations, never raises.

    An empty list means the tree satisfies all invariants: EDU spans
    partition the tokens, node spans equal the union of their children's
    contiguous spans, every internal node has a nucleus, multinuclear nodes
    have at least two nuclei sharing one relation label, and nuclei of
    mononuclear nodes carry the reserved ``span`` label.
    """
    problems: list[str] = []
    n_tokens = len(tree.tokens)

    for i, tok in enumerate(tree.tokens, 1):
        if tok.index != i:
            problems.append(f"token {i}: index {tok.index} out of order")
            break
    for i in range(1, len(tree.tokens)):
        a, b = tree.tokens[i - 1], tree.tokens[i]
        if b.sentence_id < a.sentence_id or b.paragraph_id < a.paragraph_id:
            problems.append(f"token {b.index}: sentence/paragraph ids decrease")
            break

    expected_start = 1
    for i, edu in enumerate(tree.edus, 1):
        if edu.id != i:
            problems.append(f"edu {edu.id}: ids must be 1..n in order")
            break
        if edu.start != expected_start or edu.end < edu.start:
            problems.append(
                f"edu {edu.id}: span ({edu.start},{edu.end}) does not continue at {expected_start}"
            )
            break
        expected_start = edu.end + 1
    else:
        if tree.edus and expected_start != n_tokens + 1:
            problems.append(
                f"edu spans cover tokens 1..{expected_start - 1} but document has {n_tokens}"
            )

    root = tree.root
    if root.role is not None or root.rel2par is not None:
        problems.append("root: must not carry a role or rel2par")
    if (root.start, root.end) != (1, tree.n_edus):
        problems.append(
            f"root: covers {root.start}..{root.end}, document has EDUs 1..{tree.n_edus}"
        )

    seen_ids: set[int] = set()
    for node in root.walk():
        tag = f"node {node.id}"
        if node.id in seen_ids:
            problems.append(f"{tag}: duplicate node id")
        seen_ids.add(node.id)

        if node.is_leaf:
            if node.children:
                problems.append(f"{tag}: leaf with children")
            if (node.start, node.end) != (node.leaf_edu, node.leaf_edu):
                problems.append(f"{tag}: leaf span must equal its EDU")
            continue
        if not node.children:
            problems.append(f"{tag}: internal node without children")
            continue

        pos = node.start
        for child in node.children:
            if child.start != pos:
                problems.append(f"{tag}: child spans not contiguous at EDU {pos}")
                break
            pos = child.end + 1
        else:
            if pos != node.end + 1:
                problems.append(f"{tag}: children do not cover {node.start}..{node.end}")

        nuclei = node.nucleus_children()
        for child in node.children:
            if child.role not in (NUCLEUS, SATELLITE):
                problems.append(f"{tag}: child {child.id} has role {child.role!r}")
            if child.rel2par is None:
                problems.append(f"{tag}: child {child.id} lacks rel2par")
        if not nuclei:
            problems.append(f"{tag}: no nucleus child")
        elif len(nuclei) == 1:
            if nuclei[0].rel2par != SPAN:
                problems.append(
                    f"{tag}: mononuclear nucleus carries {nuclei[0].rel2par!r}, expected {SPAN!r}"
                )
        else:
            labels = {c.rel2par for c in nuclei}
            if len(labels) > 1:
                problems.append(
                    f"{tag}: multinuclear nuclei disagree on relation ({sorted(labels)})"
                )

    return problems
