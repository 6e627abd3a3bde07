"""Corpus readers and writers.

Three tree/graph formats are supported:

* ``rs3`` -- XML constituent format: ``segment`` elements are EDUs,
  ``group`` elements are internal nodes (``type="span"`` or
  ``type="multinuc"``).  Satellites point at the node they modify; the
  reader rebuilds proper constituents, synthesizing a wrapper node where
  the file leaves it implicit, and collapses redundant unary spans.
* ``dis`` -- parenthesized constituent format with ``Root``/``Nucleus``/
  ``Satellite`` nodes, ``(span a b)``/``(leaf n)`` indices, ``rel2par``
  labels and inline ``(text _!...!_)`` payloads.  ``<P>`` payload tokens
  mark paragraph breaks.  Nodes mixing two or more nuclei with satellites
  are normalized to pure nodes: edge satellites wrap the multinuclear
  core, and a satellite sandwiched between nuclei joins the nucleus on
  its left.
* ``rsd`` -- tab-separated dependency format, one EDU per line with the
  head EDU id in column 7 and the relation label in column 8 (``_m``/
  ``_r`` suffixes are tolerated and stripped).

Sentence ids always come from a terminal-punctuation heuristic; paragraph
ids come from markup when the format carries it (``<P>`` in dis, blank
lines inside rs3 segments) and default to a single paragraph otherwise.
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from itertools import count
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import (
    ConstituentNode,
    CorpusError,
    DepGraph,
    DepNode,
    DISTRACTOR,
    DmAnnotation,
    Edu,
    FormatError,
    NUCLEUS,
    ROOT_HEAD,
    ROOT_LABEL,
    RelationScheme,
    RstTree,
    SATELLITE,
    SIGNAL,
    SPAN,
    Token,
    internal_node,
    is_lexical_form,
    leaf_node,
    load_stoplist,
)
from .treeops import SyntaxLayer, read_syntax, to_dependencies

TREE_EXTENSIONS = (".rs3", ".rs4", ".dis", ".rsd")

_TERMINALS = (".", "!", "?", "…")
_TRAILERS = "\"')]»”’"


def _ends_sentence(form: str) -> bool:
    stripped = form.rstrip(_TRAILERS)
    return stripped.endswith(_TERMINALS) and (
        len(stripped) <= 1 or not stripped[:-1].replace(".", "").isdigit()
    )


def _make_tokens(
    edu_forms: Sequence[Sequence[str]],
    paragraph_break_before: Optional[set[tuple[int, int]]] = None,
    stoplist: Optional[frozenset[str]] = None,
) -> tuple[tuple[Token, ...], tuple[Edu, ...]]:
    """Assemble Token/Edu tuples from per-EDU form lists.

    ``paragraph_break_before`` holds (edu_index, form_index) positions (both
    0-based) where a new paragraph starts.
    """
    stop = stoplist if stoplist is not None else load_stoplist()
    breaks = paragraph_break_before or set()
    tokens: list[Token] = []
    edus: list[Edu] = []
    sent = par = 1
    pending_sentence_break = False
    pos = 1
    for ei, forms in enumerate(edu_forms):
        start = pos
        for fi, form in enumerate(forms):
            if (ei, fi) in breaks and tokens:
                par += 1
                pending_sentence_break = True
            if pending_sentence_break:
                sent += 1
                pending_sentence_break = False
            tokens.append(Token(pos, form, is_lexical_form(form, stop), sent, par))
            pos += 1
            if _ends_sentence(form):
                pending_sentence_break = True
        if forms:
            edus.append(Edu(len(edus) + 1, start, pos - 1))
        else:
            raise FormatError(f"EDU {ei + 1} has no tokens")
    return tuple(tokens), tuple(edus)


# ---------------------------------------------------------------------------
# rs3


@dataclass
class _Rs3Node:
    nid: str
    kind: str  # "segment" | "span" | "multinuc"
    parent: Optional[str]
    relname: Optional[str]
    text: Optional[str] = None
    edu_id: Optional[int] = None


@dataclass
class _Rs3File:
    path: Path
    nodes: dict[str, _Rs3Node]
    order: list[str]
    multinuc_rels: frozenset[str]
    signals: list[ET.Element]


def _parse_rs3(path: Path) -> _Rs3File:
    try:
        xml_root = ET.parse(str(path)).getroot()
    except ET.ParseError as exc:
        raise FormatError(f"{path}: not well-formed XML ({exc})") from None

    multinuc = set()
    declared = {SPAN}
    for rel in xml_root.iter("rel"):
        name = rel.get("name")
        if not name:
            raise FormatError(f"{path}: relation declaration without a name")
        declared.add(name)
        if rel.get("type") == "multinuc":
            multinuc.add(name)

    nodes: dict[str, _Rs3Node] = {}
    order: list[str] = []
    edu_count = 0
    for elem in xml_root.iter():
        if elem.tag not in ("segment", "group"):
            continue
        nid = elem.get("id")
        if nid is None or nid in nodes:
            raise FormatError(f"{path}: missing or duplicate node id {nid!r}")
        relname = elem.get("relname")
        if relname is not None and relname not in declared:
            raise FormatError(f"{path}: relation {relname!r} not declared in the header")
        if elem.tag == "segment":
            edu_count += 1
            nodes[nid] = _Rs3Node(
                nid, "segment", elem.get("parent"), relname, elem.text or "", edu_count
            )
        else:
            kind = elem.get("type")
            if kind not in ("span", "multinuc"):
                raise FormatError(f"{path}: group {nid} has unknown type {kind!r}")
            nodes[nid] = _Rs3Node(nid, kind, elem.get("parent"), relname)
        order.append(nid)

    if edu_count == 0:
        raise FormatError(f"{path}: no segments")
    for node in nodes.values():
        if node.parent is not None and node.parent not in nodes:
            raise FormatError(f"{path}: node {node.nid} references undeclared parent {node.parent}")
    signals = list(xml_root.iter("signal"))
    return _Rs3File(path, nodes, order, frozenset(multinuc), signals)


class _Rs3Builder:
    """Rebuild proper constituents from rs3 pointer structure."""

    def __init__(self, parsed: _Rs3File):
        self.parsed = parsed
        self.children: dict[str, list[str]] = {nid: [] for nid in parsed.nodes}
        roots = []
        for nid in parsed.order:
            node = parsed.nodes[nid]
            if node.parent is None:
                roots.append(nid)
            else:
                self.children[node.parent].append(nid)
        if len(roots) != 1:
            raise FormatError(
                f"{parsed.path}: expected exactly one top-level node, found {len(roots)}"
            )
        self.root_id = roots[0]
        n_edus = sum(1 for n in parsed.nodes.values() if n.kind == "segment")
        self._next_id = n_edus
        self.built: dict[str, ConstituentNode] = {}
        self._building: set[str] = set()

    def fresh(self) -> int:
        self._next_id += 1
        return self._next_id

    def link_kind(self, nid: str) -> str:
        node = self.parsed.nodes[nid]
        if node.relname == SPAN:
            return SPAN
        parent = self.parsed.nodes[node.parent] if node.parent else None
        if (
            parent is not None
            and parent.kind == "multinuc"
            and node.relname in self.parsed.multinuc_rels
        ):
            return "multinuc"
        return "rst"

    def expand(self, nid: str) -> ConstituentNode:
        """Constituent for node ``nid`` including its attached satellites."""
        if nid in self._building:
            raise FormatError(f"{self.parsed.path}: cycle through node {nid}")
        self._building.add(nid)
        satellites = [c for c in self.children[nid] if self.link_kind(c) == "rst"]
        core = self.core(nid)
        if satellites:
            kids = [core.relabel(NUCLEUS, SPAN)]
            for sat in satellites:
                rel = self.parsed.nodes[sat].relname
                kids.append(self.expand(sat).relabel(SATELLITE, rel))
            kids.sort(key=lambda k: k.start)
            core = internal_node(self.fresh(), kids)
        self._building.discard(nid)
        self.built[nid] = core
        return core

    def core(self, nid: str) -> ConstituentNode:
        node = self.parsed.nodes[nid]
        if node.kind == "segment":
            return leaf_node(node.edu_id, node.edu_id)
        if node.kind == "span":
            inner = [c for c in self.children[nid] if self.link_kind(c) == SPAN]
            if len(inner) != 1:
                raise FormatError(
                    f"{self.parsed.path}: span group {nid} has {len(inner)} span children"
                )
            return self.expand(inner[0])
        nucs = [c for c in self.children[nid] if self.link_kind(c) == "multinuc"]
        if not nucs:
            raise FormatError(f"{self.parsed.path}: multinuc group {nid} has no nuclei")
        if len(nucs) == 1:
            # Degenerate multinuc behaves like a redundant span.
            return self.expand(nucs[0])
        kids = [
            self.expand(c).relabel(NUCLEUS, self.parsed.nodes[c].relname) for c in nucs
        ]
        kids.sort(key=lambda k: k.start)
        return internal_node(self.fresh(), kids)


def _rs3_tokens(parsed: _Rs3File, stoplist):
    edu_forms: list[list[str]] = []
    breaks: set[tuple[int, int]] = set()
    segs = [parsed.nodes[nid] for nid in parsed.order if parsed.nodes[nid].kind == "segment"]
    for ei, seg in enumerate(segs):
        text = seg.text or ""
        forms: list[str] = []
        for chunk_no, chunk in enumerate(text.split("\n\n")):
            chunk_forms = chunk.split()
            if chunk_no > 0 and chunk_forms:
                breaks.add((ei, len(forms)))
            forms.extend(chunk_forms)
        if not forms:
            raise FormatError(f"{parsed.path}: segment {seg.nid} has no tokens")
        edu_forms.append(forms)
    has_breaks = bool(breaks)
    tokens, edus = _make_tokens(edu_forms, breaks, stoplist)
    return tokens, edus, ("markup" if has_breaks else "heuristic")


def read_rs3(
    path: "Path | str",
    doc_id: Optional[str] = None,
    genre: str = "unknown",
    stoplist: Optional[frozenset[str]] = None,
) -> RstTree:
    """Read one rs3/rs4 file into a constituent tree."""
    path = Path(path)
    parsed = _parse_rs3(path)
    builder = _Rs3Builder(parsed)
    root = builder.expand(builder.root_id).relabel(None, None)
    tokens, edus, boundary_source = _rs3_tokens(parsed, stoplist)
    if (root.start, root.end) != (1, len(edus)):
        raise FormatError(f"{path}: tree covers EDUs {root.start}-{root.end} of {len(edus)}")
    return RstTree(
        doc_id=doc_id or path.stem.split(".")[0],
        root=root,
        edus=edus,
        tokens=tokens,
        genre=genre,
        boundary_source=boundary_source,
    )


def read_embedded_signals(
    path: "Path | str",
    tree: Optional[RstTree] = None,
    stoplist: Optional[frozenset[str]] = None,
) -> list[DmAnnotation]:
    """Extract marker annotations embedded in an rs3/rs4 file.

    Signal elements of type ``dm`` anchored to token indices are returned
    as signals on the relation their source node participates in; ``dm``
    signals with subtype ``orphan`` (or with an unresolvable source) become
    distractors.  Files without a ``signals`` block yield an empty list.
    """
    path = Path(path)
    parsed = _parse_rs3(path)
    if tree is None:
        tree = read_rs3(path, stoplist=stoplist)
    builder = _Rs3Builder(parsed)
    builder.expand(builder.root_id)
    graph = to_dependencies(tree)

    def subtree_head(node: ConstituentNode) -> int:
        while node.leaf_edu is None:
            nucs = node.nucleus_children()
            node = nucs[0] if nucs else node.children[0]
        return node.leaf_edu

    doc_forms = [t.form for t in tree.tokens]
    out: list[DmAnnotation] = []
    for sig in parsed.signals:
        if sig.get("type") != "dm":
            continue
        raw = (sig.get("tokens") or "").strip()
        if not raw:
            continue
        try:
            indices = tuple(sorted(int(t) for t in raw.split(",")))
        except ValueError:
            raise FormatError(f"{path}: signal with non-numeric tokens {raw!r}") from None
        if indices and (indices[0] < 1 or indices[-1] > len(doc_forms)):
            raise FormatError(f"{path}: signal tokens {raw} outside the document")
        form = " ".join(doc_forms[i - 1] for i in indices)
        source = sig.get("source")
        orphan = sig.get("subtype") == "orphan"
        if orphan or source is None or source not in builder.built:
            out.append(DmAnnotation(tree.doc_id, indices, form, DISTRACTOR))
            continue
        src_edu = subtree_head(builder.built[source])
        dep = graph.node(src_edu)
        if dep.head == ROOT_HEAD:
            out.append(DmAnnotation(tree.doc_id, indices, form, DISTRACTOR))
            continue
        out.append(
            DmAnnotation(tree.doc_id, indices, form, SIGNAL, src_edu, dep.head, dep.relation)
        )
    return out


def _segment_text(tree: RstTree, edu_id: int) -> str:
    """EDU surface text with paragraph breaks rendered as blank lines."""
    toks = tree.edu_tokens(edu_id)
    if not toks:
        return ""
    start = tree.edu(edu_id).start
    prev_par = tree.tokens[start - 2].paragraph_id if start > 1 else toks[0].paragraph_id
    parts: list[str] = []
    for tok in toks:
        if tok.paragraph_id > prev_par:
            parts.append("\n\n")
        elif parts:
            parts.append(" ")
        parts.append(tok.form)
        prev_par = tok.paragraph_id
    return "".join(parts)


def write_rs3(tree: RstTree, path: "Path | str") -> None:
    """Serialize a constituent tree as an rs3 file ``read_rs3`` can reload.

    EDU *i* becomes segment *i*.  A multinuclear node becomes a
    ``type="multinuc"`` group with its nuclei as children; a mononuclear
    node becomes a ``type="span"`` group whose nucleus links down with the
    reserved ``span`` label and whose satellites point at the nucleus's
    element.  Paragraph breaks are written as blank lines inside segment
    text; sentence ids are not stored (the reader re-derives them).
    """
    path = Path(path)
    mono_rels: set[str] = set()
    multi_rels: set[str] = set()
    for node in tree.root.walk():
        if node.is_leaf:
            continue
        for child in node.children:
            if child.role not in (NUCLEUS, SATELLITE) or child.rel2par is None:
                raise FormatError(
                    f"{tree.doc_id}: node {child.id} lacks a role or relation label"
                )
        if node.is_multinuclear:
            if node.satellite_children():
                raise FormatError(
                    f"{tree.doc_id}: node {node.id} mixes nuclei and satellites"
                )
            multi_rels.add(node.children[0].rel2par)
        else:
            if len(node.nucleus_children()) != 1:
                raise FormatError(f"{tree.doc_id}: node {node.id} has no nucleus")
            for sat in node.satellite_children():
                mono_rels.add(sat.rel2par)
    # The wrapper group itself carries its upward relation label, so a
    # satellite wrapper's label also lands on a group; collect from roles
    # above instead of element kinds, and refuse ambiguous double use.
    clash = sorted(mono_rels & multi_rels)
    if clash:
        raise FormatError(
            f"{tree.doc_id}: relations used both mono- and multinuclearly: {', '.join(clash)}"
        )

    n_edus = len(tree.edus)
    segments: dict[int, ET.Element] = {}
    groups: list[ET.Element] = []
    next_gid = count(n_edus + 1)

    def new_element(tag: str, eid: str, parent_id: Optional[str], relname: Optional[str]):
        elem = ET.Element(tag)
        elem.set("id", eid)
        if tag == "group":
            groups.append(elem)
        if parent_id is not None:
            elem.set("parent", parent_id)
            elem.set("relname", relname or "")
        return elem

    def emit(node: ConstituentNode, parent_id: Optional[str], relname: Optional[str]) -> str:
        """Write elements for ``node``; return the id representing it."""
        if node.is_leaf:
            eid = str(node.leaf_edu)
            elem = new_element("segment", eid, parent_id, relname)
            elem.text = _segment_text(tree, node.leaf_edu)
            segments[node.leaf_edu] = elem
            return eid
        gid = str(next(next_gid))
        if node.is_multinuclear:
            elem = new_element("group", gid, parent_id, relname)
            elem.set("type", "multinuc")
            for child in node.children:
                emit(child, gid, child.rel2par)
            return gid
        elem = new_element("group", gid, parent_id, relname)
        elem.set("type", "span")
        core_id = emit(node.nucleus_children()[0], gid, SPAN)
        for sat in node.satellite_children():
            emit(sat, core_id, sat.rel2par)
        return gid

    emit(tree.root, None, None)
    if sorted(segments) != list(range(1, n_edus + 1)):
        raise FormatError(f"{tree.doc_id}: tree leaves do not cover EDUs 1..{n_edus}")

    rst = ET.Element("rst")
    header = ET.SubElement(rst, "header")
    relations = ET.SubElement(header, "relations")
    for name, kind in [(n, "rst") for n in sorted(mono_rels)] + [
        (n, "multinuc") for n in sorted(multi_rels)
    ]:
        rel = ET.SubElement(relations, "rel")
        rel.set("name", name)
        rel.set("type", kind)
    body = ET.SubElement(rst, "body")
    for edu in tree.edus:
        body.append(segments[edu.id])
    for group in groups:
        body.append(group)
    ET.indent(rst)
    ET.ElementTree(rst).write(str(path), encoding="utf-8", xml_declaration=True)


# ---------------------------------------------------------------------------
# dis


def _tokenize_dis(text: str, path: Path) -> list[str]:
    """Lexer: parens and atoms, with _!...!_ text payloads kept whole."""
    out: list[str] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch in "()":
            out.append(ch)
            i += 1
        elif text.startswith("_!", i):
            end = text.find("!_", i + 2)
            if end < 0:
                raise FormatError(f"{path}: unterminated text payload")
            out.append(text[i : end + 2])
            i = end + 2
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "()":
                j += 1
            out.append(text[i:j])
            i = j
    return out


@dataclass
class _DisNode:
    kind: str
    leaf: Optional[int] = None
    span: Optional[tuple[int, int]] = None
    rel2par: Optional[str] = None
    text: Optional[str] = None
    children: list["_DisNode"] = field(default_factory=list)


def _parse_dis(tokens: list[str], path: Path) -> _DisNode:
    pos = 0

    def expect(tok: str) -> None:
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != tok:
            got = tokens[pos] if pos < len(tokens) else "end of file"
            raise FormatError(f"{path}: expected {tok!r}, got {got!r}")
        pos += 1

    def parse_node() -> _DisNode:
        nonlocal pos
        expect("(")
        if pos >= len(tokens):
            raise FormatError(f"{path}: truncated node")
        kind = tokens[pos]
        pos += 1
        if kind not in ("Root", "Nucleus", "Satellite"):
            raise FormatError(f"{path}: unknown node kind {kind!r}")
        node = _DisNode(kind)
        while pos < len(tokens) and tokens[pos] == "(":
            head = tokens[pos + 1] if pos + 1 < len(tokens) else ""
            if head == "span":
                pos += 2
                node.span = (int(tokens[pos]), int(tokens[pos + 1]))
                pos += 2
                expect(")")
            elif head == "leaf":
                pos += 2
                node.leaf = int(tokens[pos])
                pos += 1
                expect(")")
            elif head == "rel2par":
                pos += 2
                node.rel2par = tokens[pos]
                pos += 1
                expect(")")
            elif head == "text":
                pos += 2
                payload = tokens[pos]
                pos += 1
                if not (payload.startswith("_!") and payload.endswith("!_")):
                    raise FormatError(f"{path}: malformed text payload")
                node.text = payload[2:-2]
                expect(")")
            else:
                node.children.append(parse_node())
        expect(")")
        return node

    root = parse_node()
    if pos != len(tokens):
        raise FormatError(f"{path}: trailing material after the root node")
    return root


def _purify(children: list[ConstituentNode], fresh) -> list[ConstituentNode]:
    """Normalize a mixed child sequence (several nuclei plus satellites).

    A satellite with nuclei on both sides joins the nucleus on its left;
    prefix/suffix satellites then wrap the multinuclear core.
    """
    nuclei_idx = [i for i, c in enumerate(children) if c.role == NUCLEUS]
    if len(nuclei_idx) < 2 or len(nuclei_idx) == len(children):
        return children

    merged: list[ConstituentNode] = []
    for child in children:
        last_nucleus_after = any(
            c.role == NUCLEUS and c.start > child.start for c in children
        )
        if (
            child.role == SATELLITE
            and merged
            and merged[-1].role == NUCLEUS
            and last_nucleus_after
        ):
            left = merged.pop()
            pair = internal_node(
                fresh(),
                [left.relabel(NUCLEUS, SPAN), child],
                role=NUCLEUS,
                rel2par=left.rel2par,
            )
            merged.append(pair)
        else:
            merged.append(child)

    core_children = [c for c in merged if c.role == NUCLEUS]
    outer_sats = [c for c in merged if c.role == SATELLITE]
    if not outer_sats:
        return merged
    core = internal_node(fresh(), core_children, role=NUCLEUS, rel2par=SPAN)
    kids = [core] + outer_sats
    kids.sort(key=lambda k: k.start)
    return kids


def read_dis(
    path: "Path | str",
    doc_id: Optional[str] = None,
    genre: str = "unknown",
    stoplist: Optional[frozenset[str]] = None,
) -> RstTree:
    """Read one dis file into a constituent tree."""
    path = Path(path)
    raw = _parse_dis(_tokenize_dis(path.read_text(encoding="utf8"), path), path)

    edu_texts: dict[int, str] = {}

    def collect(node: _DisNode) -> None:
        if node.leaf is not None:
            if node.text is None:
                raise FormatError(f"{path}: leaf {node.leaf} has no text payload")
            if node.leaf in edu_texts:
                raise FormatError(f"{path}: duplicate leaf index {node.leaf}")
            edu_texts[node.leaf] = node.text
        for child in node.children:
            collect(child)

    collect(raw)
    n_edus = len(edu_texts)
    if sorted(edu_texts) != list(range(1, n_edus + 1)):
        raise FormatError(f"{path}: leaf indices are not 1..{n_edus}")

    counter = [n_edus]

    def fresh() -> int:
        counter[0] += 1
        return counter[0]

    def build(node: _DisNode, role, rel2par) -> ConstituentNode:
        if node.leaf is not None:
            if node.children:
                raise FormatError(f"{path}: leaf {node.leaf} with children")
            return leaf_node(node.leaf, node.leaf, role, rel2par)
        if not node.children:
            raise FormatError(f"{path}: internal node without children")
        kids = []
        for child in node.children:
            if child.kind == "Root":
                raise FormatError(f"{path}: Root node below the top level")
            crole = NUCLEUS if child.kind == "Nucleus" else SATELLITE
            if child.rel2par is None:
                raise FormatError(f"{path}: non-root node without rel2par")
            kids.append(build(child, crole, child.rel2par))
        kids = _purify(kids, fresh)
        if len(kids) == 1:
            # Redundant unary wrapper: the child takes this node's link.
            return kids[0].relabel(role, rel2par)
        built = internal_node(fresh(), kids, role=role, rel2par=rel2par)
        if node.span is not None and (built.start, built.end) != node.span:
            raise FormatError(
                f"{path}: node declares span {node.span} but covers "
                f"({built.start}, {built.end})"
            )
        return built

    root = build(raw, None, None)
    if (root.start, root.end) != (1, n_edus):
        raise FormatError(f"{path}: tree covers EDUs {root.start}-{root.end} of {n_edus}")

    edu_forms: list[list[str]] = []
    breaks: set[tuple[int, int]] = set()
    saw_paragraph = False
    for edu_id in range(1, n_edus + 1):
        forms: list[str] = []
        break_next = False
        for piece in edu_texts[edu_id].split():
            if piece == "<P>":
                saw_paragraph = True
                break_next = True
                continue
            if break_next:
                # <P> mid-EDU: rare, but keep the break at the right token.
                breaks.add((edu_id - 1, len(forms)))
                break_next = False
            forms.append(piece)
        if break_next and edu_id < n_edus:
            breaks.add((edu_id, 0))
        if not forms:
            raise FormatError(f"{path}: EDU {edu_id} has no tokens")
        edu_forms.append(forms)

    tokens, edus = _make_tokens(edu_forms, breaks, stoplist)
    return RstTree(
        doc_id=doc_id or path.stem.split(".")[0],
        root=root,
        edus=edus,
        tokens=tokens,
        genre=genre,
        boundary_source="markup" if saw_paragraph else "heuristic",
    )


# ---------------------------------------------------------------------------
# rsd


def read_rsd(
    path: "Path | str",
    scheme: Optional[RelationScheme] = None,
    doc_id: Optional[str] = None,
) -> DepGraph:
    """Read a dependency file: one EDU per line, tab-separated, with the
    head id in column 7 and the relation in column 8."""
    path = Path(path)
    rows: list[tuple[int, str, int, str]] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 8:
            raise FormatError(f"{path}:{lineno}: expected at least 8 tab-separated fields")
        try:
            edu_id = int(fields[0])
            head = int(fields[6])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric EDU or head id") from None
        relation = fields[7]
        for suffix in ("_m", "_r"):
            if relation.endswith(suffix):
                relation = relation[: -len(suffix)]
                break
        rows.append((edu_id, fields[1], head, relation))

    if not rows:
        raise FormatError(f"{path}: no EDU lines")
    if [r[0] for r in rows] != list(range(1, len(rows) + 1)):
        raise FormatError(f"{path}: EDU ids are not 1..{len(rows)} in order")

    n = len(rows)
    roots = [r[0] for r in rows if r[2] == ROOT_HEAD]
    if len(roots) != 1:
        raise FormatError(f"{path}: expected exactly one root EDU, found {len(roots)}")
    nodes = []
    texts = []
    for edu_id, text, head, relation in rows:
        if not 0 <= head <= n:
            raise FormatError(f"{path}: EDU {edu_id} has head {head} outside 0..{n}")
        if head == edu_id:
            raise FormatError(f"{path}: EDU {edu_id} is its own head")
        relation = ROOT_LABEL if head == ROOT_HEAD else relation
        rel_class = scheme.class_of(relation) if scheme is not None else None
        nodes.append(DepNode(edu_id, head, relation, rel_class))
        texts.append(text)

    # Reject cycles: every EDU must reach the root.
    heads = {node.edu_id: node.head for node in nodes}
    for start in heads:
        seen = set()
        cur = start
        while cur != ROOT_HEAD:
            if cur in seen:
                raise FormatError(f"{path}: dependency cycle through EDU {cur}")
            seen.add(cur)
            cur = heads[cur]

    return DepGraph(doc_id or path.stem.split(".")[0], tuple(nodes), tuple(texts))


def write_rsd(
    graph: DepGraph, path: "Path | str", header: Optional[Sequence[str]] = None
) -> None:
    """Write a dependency graph in the rsd column layout read by
    :func:`read_rsd`.  ``header`` lines are emitted as ``#`` comments."""
    path = Path(path)
    lines = [f"# {h}" for h in header] if header else []
    for node in graph.nodes:
        text = "_"
        if graph.edu_texts is not None:
            text = graph.edu_texts[node.edu_id - 1].replace("\t", " ") or "_"
        fields = [
            str(node.edu_id),
            text,
            "_",
            "_",
            "_",
            "_",
            str(node.head),
            node.relation,
            "_",
            "_",
        ]
        lines.append("\t".join(fields))
    path.write_text("\n".join(lines) + "\n", encoding="utf8")


# ---------------------------------------------------------------------------
# marker annotations


def read_dm_annotations(path: "Path | str") -> list[DmAnnotation]:
    """Read marker annotations from a TSV file.

    Columns: doc_id, comma-joined token indices, marker form, source EDU,
    target EDU, relation label.  ``NONE`` in the last three columns marks a
    distractor (all three or none).
    """
    path = Path(path)
    out: list[DmAnnotation] = []
    for lineno, raw in enumerate(path.read_text(encoding="utf8").splitlines(), 1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            raise FormatError(f"{path}:{lineno}: expected 6 tab-separated columns")
        doc_id, raw_toks, form, src, tgt, rel = fields
        if not doc_id or not form:
            raise FormatError(f"{path}:{lineno}: empty doc id or marker form")
        try:
            indices = tuple(sorted(int(t) for t in raw_toks.split(",")))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric token indices {raw_toks!r}") from None
        if not indices or indices[0] < 1:
            raise FormatError(f"{path}:{lineno}: token indices must be positive")
        nones = [f == "NONE" for f in (src, tgt, rel)]
        if all(nones):
            out.append(DmAnnotation(doc_id, indices, form, DISTRACTOR))
            continue
        if any(nones):
            raise FormatError(
                f"{path}:{lineno}: source/target/relation must all be NONE or none of them"
            )
        try:
            source_edu, target_edu = int(src), int(tgt)
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-numeric source or target EDU") from None
        out.append(DmAnnotation(doc_id, indices, form, SIGNAL, source_edu, target_edu, rel))
    return out


def write_dm_annotations(
    annotations: Sequence[DmAnnotation], path: "Path | str", header: Optional[Sequence[str]] = None
) -> None:
    path = Path(path)
    lines = [f"# {h}" for h in header] if header else []
    for ann in annotations:
        if ann.is_signal:
            tail = [str(ann.source_edu), str(ann.target_edu), ann.relation or ""]
        else:
            tail = ["NONE", "NONE", "NONE"]
        lines.append(
            "\t".join([ann.doc_id, ",".join(str(i) for i in ann.token_indices), ann.form] + tail)
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf8")


def validate_annotations(
    annotations: Sequence[DmAnnotation],
    trees: dict[str, RstTree],
    graphs: dict[str, DepGraph],
) -> list[str]:
    """Cross-check annotations against the gold corpus; returns violations.

    A signal must point at an existing relation instance (its source EDU's
    gold head is the target EDU); all token indices must lie inside the
    document, within a single EDU.
    """
    problems = []
    for ann in annotations:
        where = f"{ann.doc_id} tokens {','.join(map(str, ann.token_indices))}"
        tree = trees.get(ann.doc_id)
        if tree is None:
            problems.append(f"{where}: unknown document")
            continue
        if ann.token_indices[-1] > len(tree.tokens):
            problems.append(f"{where}: token indices outside the document")
            continue
        containing = {
            e.id
            for e in tree.edus
            if any(e.start <= t <= e.end for t in ann.token_indices)
        }
        if len(containing) != 1:
            problems.append(f"{where}: marker tokens must lie inside a single EDU")
        if not ann.is_signal:
            continue
        graph = graphs.get(ann.doc_id)
        if graph is None:
            continue
        if not 1 <= (ann.source_edu or 0) <= graph.n_edus:
            problems.append(f"{where}: source EDU {ann.source_edu} does not exist")
            continue
        node = graph.node(ann.source_edu)
        if node.head != ann.target_edu or node.relation != ann.relation:
            problems.append(
                f"{where}: no gold relation {ann.relation!r} from EDU "
                f"{ann.source_edu} to {ann.target_edu}"
            )
    return problems


# ---------------------------------------------------------------------------
# vocabulary


@dataclass(frozen=True)
class Vocabulary:
    """Known word forms (casefolded) from a training split or word list."""

    forms: frozenset[str]
    source: str

    def __contains__(self, form: str) -> bool:
        return form.casefold() in self.forms

    def __len__(self) -> int:
        return len(self.forms)


def load_vocabulary(source: "Path | str", scheme: Optional[RelationScheme] = None) -> Vocabulary:
    """Build a vocabulary from a word-list file (one form per line) or a
    directory of gold tree/dependency files."""
    source = Path(source)
    forms: set[str] = set()
    if source.is_dir():
        files = sorted(
            p for p in source.iterdir() if p.suffix in TREE_EXTENSIONS
        )
        if not files:
            raise CorpusError(f"{source}: no corpus files to build a vocabulary from")
        for p in files:
            if p.suffix in (".rs3", ".rs4"):
                tree = read_rs3(p)
                forms.update(t.form.casefold() for t in tree.tokens)
            elif p.suffix == ".dis":
                tree = read_dis(p)
                forms.update(t.form.casefold() for t in tree.tokens)
            else:
                graph = read_rsd(p, scheme)
                for text in graph.edu_texts or ():
                    forms.update(w.casefold() for w in text.split())
        return Vocabulary(frozenset(forms), str(source))
    for line in source.read_text(encoding="utf8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            forms.add(line.casefold())
    if not forms:
        raise CorpusError(f"{source}: empty vocabulary")
    return Vocabulary(frozenset(forms), str(source))


# ---------------------------------------------------------------------------
# corpus assembly


@dataclass(frozen=True)
class Corpus:
    """A loaded corpus: gold analyses plus zero or more prediction sets.

    ``predictions[architecture][run][doc_id]`` holds predicted dependency
    graphs (trees are converted on load); ``pred_trees`` keeps the
    constituent predictions that arrived as trees, for Parseval scoring.
    """

    name: str
    scheme: RelationScheme
    trees: dict[str, RstTree]
    graphs: dict[str, DepGraph]
    predictions: dict[str, dict[int, dict[str, DepGraph]]]
    pred_trees: dict[str, dict[int, dict[str, RstTree]]]
    annotations: tuple[DmAnnotation, ...]
    syntax: dict[str, SyntaxLayer]
    vocabulary: Optional[Vocabulary]

    @property
    def doc_ids(self) -> tuple[str, ...]:
        return tuple(sorted(self.trees))

    def genre_of(self, doc_id: str) -> str:
        return self.trees[doc_id].genre


def genre_from_doc_id(doc_id: str, field_index: int = 1) -> str:
    """Genre by position in an underscore-separated document id
    (``corpus_genre_title`` style); ``unknown`` when too few parts."""
    parts = doc_id.split("_")
    if len(parts) > field_index + 1:
        return parts[field_index]
    return "unknown"


def read_tree_file(
    path: "Path | str",
    scheme: Optional[RelationScheme] = None,
    doc_id: Optional[str] = None,
    genre: str = "unknown",
    stoplist: Optional[frozenset[str]] = None,
):
    """Dispatch on extension; returns an RstTree (rs3/rs4/dis) or DepGraph (rsd)."""
    path = Path(path)
    if path.suffix in (".rs3", ".rs4"):
        return read_rs3(path, doc_id=doc_id, genre=genre, stoplist=stoplist)
    if path.suffix == ".dis":
        return read_dis(path, doc_id=doc_id, genre=genre, stoplist=stoplist)
    if path.suffix == ".rsd":
        return read_rsd(path, scheme=scheme, doc_id=doc_id)
    raise FormatError(f"{path}: unsupported extension {path.suffix!r}")


def split_run_name(path: "Path | str") -> tuple[str, Optional[int]]:
    """Split ``<doc>.run<K>.<ext>`` into (doc_id, K); plain files give
    (doc_id, None)."""
    stem = Path(path).stem
    doc, dot, tag = stem.rpartition(".")
    if dot and tag.startswith("run") and tag[3:].isdigit():
        return doc, int(tag[3:])
    return stem, None


def load_prediction_dir(
    directory: "Path | str",
    scheme: RelationScheme,
    gold: dict[str, RstTree],
    stoplist: Optional[frozenset[str]] = None,
) -> tuple[dict[int, dict[str, DepGraph]], dict[int, dict[str, RstTree]], list[str]]:
    """Load one architecture's predictions.

    Files are ``<doc>.run<K>.<ext>``; files without a run tag become run 1.
    Returns (graphs by run, trees by run, error strings); unreadable files
    are reported, not fatal.
    """
    directory = Path(directory)
    graphs: dict[int, dict[str, DepGraph]] = {}
    trees: dict[int, dict[str, RstTree]] = {}
    errors: list[str] = []
    for path in sorted(directory.iterdir()):
        if path.suffix not in TREE_EXTENSIONS:
            continue
        doc_id, run = split_run_name(path)
        run = 1 if run is None else run
        if doc_id not in gold:
            errors.append(f"{path.name}: no gold document {doc_id!r}")
            continue
        try:
            loaded = read_tree_file(path, scheme=scheme, doc_id=doc_id, stoplist=stoplist)
            if isinstance(loaded, RstTree):
                trees.setdefault(run, {})[doc_id] = loaded
                graph = to_dependencies(loaded, scheme)
            else:
                graph = loaded.with_classes(scheme)
            if graph.n_edus != gold[doc_id].n_edus:
                errors.append(
                    f"{path.name}: {graph.n_edus} EDUs, gold has {gold[doc_id].n_edus}"
                )
                continue
            graphs.setdefault(run, {})[doc_id] = graph
        except CorpusError as exc:
            errors.append(f"{path.name}: {exc}")
    return graphs, trees, errors


def load_corpus(
    name: str,
    scheme: RelationScheme,
    gold_dir: "Path | str",
    pred_dirs: Optional[dict[str, "Path | str"]] = None,
    dm_path: Optional["Path | str"] = None,
    syntax_dir: Optional["Path | str"] = None,
    vocabulary: Optional[Vocabulary] = None,
    genre_field: Optional[int] = 1,
    stoplist: Optional[frozenset[str]] = None,
    strict: bool = True,
) -> tuple[Corpus, list[str]]:
    """Load gold analyses and everything that hangs off them.

    Returns the corpus and a list of per-file error strings.  With
    ``strict`` a gold-side error raises; prediction-side errors are always
    collected rather than fatal so one malformed run cannot sink a batch.
    """
    gold_dir = Path(gold_dir)
    errors: list[str] = []
    trees: dict[str, RstTree] = {}
    for path in sorted(gold_dir.iterdir()):
        if path.suffix not in (".rs3", ".rs4", ".dis"):
            continue
        doc_id, run = split_run_name(path)
        if run is not None:
            errors.append(f"{path.name}: gold files must not carry run tags")
            continue
        try:
            genre = genre_from_doc_id(doc_id, genre_field) if genre_field is not None else "all"
            tree = read_tree_file(path, scheme=scheme, doc_id=doc_id, genre=genre, stoplist=stoplist)
            assert isinstance(tree, RstTree)
            trees[doc_id] = tree
        except CorpusError as exc:
            if strict:
                raise
            errors.append(f"{path.name}: {exc}")
    if not trees:
        raise CorpusError(f"{gold_dir}: no gold documents")

    graphs = {d: to_dependencies(t, scheme) for d, t in trees.items()}

    predictions: dict[str, dict[int, dict[str, DepGraph]]] = {}
    pred_trees: dict[str, dict[int, dict[str, RstTree]]] = {}
    for arch, pdir in (pred_dirs or {}).items():
        p_graphs, p_trees, p_errors = load_prediction_dir(pdir, scheme, trees, stoplist)
        predictions[arch] = p_graphs
        pred_trees[arch] = p_trees
        errors.extend(f"{arch}/{e}" for e in p_errors)

    annotations: tuple[DmAnnotation, ...] = ()
    if dm_path is not None:
        annotations = tuple(read_dm_annotations(dm_path))
        problems = validate_annotations(annotations, trees, graphs)
        if problems and strict:
            raise CorpusError("; ".join(problems[:5]))
        errors.extend(problems)

    syntax: dict[str, SyntaxLayer] = {}
    if syntax_dir is not None:
        syntax_dir = Path(syntax_dir)
        for path in sorted(syntax_dir.glob("*.tsv")):
            doc_id = path.stem
            if doc_id in trees:
                layer = read_syntax(path, doc_id)
                if layer.n_tokens != len(trees[doc_id].tokens):
                    message = (
                        f"{path.name}: {layer.n_tokens} tokens, document has "
                        f"{len(trees[doc_id].tokens)}"
                    )
                    if strict:
                        raise FormatError(message)
                    errors.append(message)
                    continue
                syntax[doc_id] = layer

    corpus = Corpus(
        name=name,
        scheme=scheme,
        trees=trees,
        graphs=graphs,
        predictions=predictions,
        pred_trees=pred_trees,
        annotations=annotations,
        syntax=syntax,
        vocabulary=vocabulary,
    )
    return corpus, errors
