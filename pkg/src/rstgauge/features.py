"""Per-EDU feature rows and corpus marking statistics.

Feature rows join four layers keyed by (doc_id, edu_id): gold trees and
their dependency rendering, multi-run error profiles, structural
profiles, and marker annotations.  Two projections of the same rows are
used downstream: the realistic set keeps only features observable
without gold discourse structure (EDU length, marker presence, incoming
syntactic function, OOV rate, genre); the full set adds the gold-derived
fields.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .core import (
    CorpusError,
    DmAnnotation,
    ROOT_HEAD,
    ROOT_LABEL,
    RstTree,
    Token,
)
from .ingest import Corpus, Vocabulary
from .metrics import ErrorProfile
from .treeops import StructuralProfile, structural_profile

REALISTIC_FEATURES = (
    "length_tokens",
    "dm_present",
    "syn_function",
    "oov_rate",
    "genre",
)

FULL_FEATURES = REALISTIC_FEATURES + (
    "signal_dm",
    "distractor_present",
    "subord",
    "gold_class",
    "n_children",
    "n_descendants",
    "domain_size",
    "inter_sentential",
    "inter_paragraph",
)

MODES = ("realistic", "full")


@dataclass(frozen=True)
class FeatureRow:
    doc_id: str
    edu_id: int
    # observable without gold structure
    length_tokens: int
    dm_present: bool
    syn_function: str
    oov_rate: float
    genre: str
    # gold-derived
    signal_dm: bool
    distractor_present: bool
    subord: bool
    gold_class: str
    n_children: int
    n_descendants: int
    domain_size: int
    inter_sentential: bool
    inter_paragraph: bool
    # responses
    scaled_attach: float
    scaled_label: float
    scaled_either: float
    target_hard: bool

    def value(self, name: str):
        return getattr(self, name)


def feature_names(mode: str) -> tuple[str, ...]:
    if mode == "realistic":
        return REALISTIC_FEATURES
    if mode == "full":
        return FULL_FEATURES
    raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")


def oov_rate(tokens: Sequence[Token], vocab: Optional[Vocabulary]) -> float:
    """Unseen lexical tokens / lexical tokens; 0.0 when the span has no
    lexical tokens or no vocabulary is given."""
    if vocab is None:
        return 0.0
    lexical = [t for t in tokens if t.is_lexical]
    if not lexical:
        return 0.0
    unseen = sum(1 for t in lexical if t.form not in vocab)
    return unseen / len(lexical)


def annotation_edu(tree: RstTree, ann: DmAnnotation) -> int:
    """EDU containing the annotation's first token."""
    first = ann.token_indices[0]
    for edu in tree.edus:
        if edu.start <= first <= edu.end:
            return edu.id
    raise CorpusError(
        f"{ann.doc_id}: annotation tokens {ann.token_indices} outside every EDU"
    )


def _annotations_by_edu(
    corpus: Corpus,
) -> tuple[dict[tuple[str, int], list[DmAnnotation]], dict[tuple[str, int], list[DmAnnotation]]]:
    """Index annotations: (doc, edu) -> signals anchored there / distractors there."""
    signals: dict[tuple[str, int], list[DmAnnotation]] = defaultdict(list)
    distractors: dict[tuple[str, int], list[DmAnnotation]] = defaultdict(list)
    for ann in corpus.annotations:
        tree = corpus.trees.get(ann.doc_id)
        if tree is None:
            continue
        edu = annotation_edu(tree, ann)
        if ann.is_signal:
            signals[(ann.doc_id, edu)].append(ann)
        else:
            distractors[(ann.doc_id, edu)].append(ann)
    return signals, distractors


def build_rows(
    corpus: Corpus,
    profiles: Iterable[ErrorProfile],
    vocab: Optional[Vocabulary] = None,
    structural: Optional[dict[tuple[str, int], StructuralProfile]] = None,
    subord_strategy: str = "syntax",
) -> list[FeatureRow]:
    """One row per gold EDU, joining error profiles, structure and markers.

    ``profiles`` must cover every EDU of every document they mention
    (missing join keys raise).  Rows come back sorted by (doc_id, edu_id)
    so downstream artifacts are order-independent.
    """
    by_key: dict[tuple[str, int], ErrorProfile] = {}
    for prof in profiles:
        by_key[(prof.doc_id, prof.edu_id)] = prof
    doc_ids = sorted({doc for doc, _ in by_key})
    for doc_id in doc_ids:
        if doc_id not in corpus.trees:
            raise CorpusError(f"error profiles mention unknown document {doc_id!r}")

    if structural is None:
        structural = {}
        for doc_id in doc_ids:
            tree = corpus.trees[doc_id]
            per_doc = structural_profile(
                tree,
                corpus.graphs[doc_id],
                syntax=corpus.syntax.get(doc_id),
                subord_strategy=subord_strategy if corpus.syntax.get(doc_id) else "same-sentence",
            )
            for edu_id, sp in per_doc.items():
                structural[(doc_id, edu_id)] = sp

    vocab = vocab if vocab is not None else corpus.vocabulary
    signals, distractors = _annotations_by_edu(corpus)

    rows: list[FeatureRow] = []
    for doc_id in doc_ids:
        tree = corpus.trees[doc_id]
        graph = corpus.graphs[doc_id]
        for edu in tree.edus:
            key = (doc_id, edu.id)
            prof = by_key.get(key)
            if prof is None:
                raise CorpusError(f"no error profile for {doc_id} EDU {edu.id}")
            sp = structural.get(key)
            if sp is None:
                raise CorpusError(f"no structural profile for {doc_id} EDU {edu.id}")
            node = graph.node(edu.id)
            edu_tokens = tree.edu_tokens(edu.id)
            has_signal = key in signals
            has_any_dm = has_signal or key in distractors
            distract_here = key in distractors
            distract_head = node.head != ROOT_HEAD and (doc_id, node.head) in distractors
            gold_class = node.rel_class
            if gold_class is None:
                gold_class = (
                    ROOT_LABEL if node.head == ROOT_HEAD else corpus.scheme.class_of(node.relation)
                )
            rows.append(
                FeatureRow(
                    doc_id=doc_id,
                    edu_id=edu.id,
                    length_tokens=len(edu_tokens),
                    dm_present=has_any_dm,
                    syn_function=sp.syn_function,
                    oov_rate=oov_rate(edu_tokens, vocab),
                    genre=tree.genre,
                    signal_dm=has_signal,
                    distractor_present=distract_here or distract_head,
                    subord=sp.is_subordinate,
                    gold_class=gold_class,
                    n_children=sp.n_children,
                    n_descendants=sp.n_descendants,
                    domain_size=sp.domain_size,
                    inter_sentential=not sp.same_sentence_as_head,
                    inter_paragraph=not sp.same_paragraph_as_head,
                    scaled_attach=prof.scaled_attach,
                    scaled_label=prof.scaled_label,
                    scaled_either=prof.scaled_either,
                    target_hard=prof.is_hard,
                )
            )
    rows.sort(key=lambda r: (r.doc_id, r.edu_id))
    return rows


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def rows_to_csv(
    rows: Sequence[FeatureRow],
    path: "Path | str",
    mode: str = "full",
    header: Optional[Sequence[str]] = None,
) -> None:
    """Write rows as CSV; ``mode`` picks the feature projection.  Response
    columns and the hard-EDU target always ride along."""
    names = feature_names(mode)
    columns = (
        ("doc_id", "edu_id")
        + names
        + ("scaled_attach", "scaled_label", "scaled_either", "target_hard")
    )
    lines = [f"# {h}" for h in header] if header else []
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_format_cell(row.value(c)) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf8")


# ---------------------------------------------------------------------------
# marking statistics


@dataclass(frozen=True)
class MarkingRow:
    """Explicit/implicit/distractor counts for one stratum.

    An instance is one incoming dependency edge (root edges included), so
    the per-instance and per-EDU distractor denominators coincide; both
    are kept because published tables are ambiguous about which they use.
    """

    kind: str  # "overall" | "genre" | "class"
    stratum: str
    n_instances: int
    n_explicit: int
    n_implicit: int
    n_distractor_edus: int

    @property
    def pct_explicit(self) -> float:
        return 100.0 * self.n_explicit / self.n_instances if self.n_instances else 0.0

    @property
    def pct_implicit(self) -> float:
        return 100.0 * self.n_implicit / self.n_instances if self.n_instances else 0.0

    @property
    def pct_distractor_per_instance(self) -> float:
        return 100.0 * self.n_distractor_edus / self.n_instances if self.n_instances else 0.0

    @property
    def pct_distractor_per_edu(self) -> float:
        return self.pct_distractor_per_instance


@dataclass(frozen=True)
class MarkingStats:
    corpus: str
    rows: tuple[MarkingRow, ...]

    def row(self, kind: str, stratum: str) -> MarkingRow:
        for r in self.rows:
            if r.kind == kind and r.stratum == stratum:
                return r
        raise KeyError((kind, stratum))

    @property
    def overall(self) -> MarkingRow:
        return self.row("overall", "ALL")


def marking_stats(corpus: Corpus) -> MarkingStats:
    """Count explicitly signaled vs unmarked relation instances, and EDUs
    bearing a distractor, overall and per genre / relation class.

    An instance is explicit iff at least one signal annotation anchors to
    its dependent EDU.  Every EDU contributes exactly one instance (its
    incoming edge; the root edge counts).
    """
    signals, distractors = _annotations_by_edu(corpus)

    def tally() -> dict[str, int]:
        return {"instances": 0, "explicit": 0, "distractor": 0}

    overall = tally()
    by_genre: dict[str, dict[str, int]] = defaultdict(tally)
    by_class: dict[str, dict[str, int]] = defaultdict(tally)

    for doc_id in corpus.doc_ids:
        tree = corpus.trees[doc_id]
        graph = corpus.graphs[doc_id]
        genre = tree.genre
        for edu in tree.edus:
            node = graph.node(edu.id)
            rel_class = node.rel_class
            if rel_class is None:
                rel_class = (
                    ROOT_LABEL if node.head == ROOT_HEAD else corpus.scheme.class_of(node.relation)
                )
            explicit = (doc_id, edu.id) in signals
            distractor = (doc_id, edu.id) in distractors
            for bucket in (overall, by_genre[genre], by_class[rel_class]):
                bucket["instances"] += 1
                bucket["explicit"] += int(explicit)
                bucket["distractor"] += int(distractor)

    def mk(kind: str, stratum: str, b: dict[str, int]) -> MarkingRow:
        return MarkingRow(
            kind=kind,
            stratum=stratum,
            n_instances=b["instances"],
            n_explicit=b["explicit"],
            n_implicit=b["instances"] - b["explicit"],
            n_distractor_edus=b["distractor"],
        )

    rows = [mk("overall", "ALL", overall)]
    rows.extend(mk("genre", g, b) for g, b in sorted(by_genre.items()))
    rows.extend(mk("class", c, b) for c, b in sorted(by_class.items()))
    return MarkingStats(corpus.name, tuple(rows))


def marking_stats_to_csv(
    stats: MarkingStats, path: "Path | str", header: Optional[Sequence[str]] = None
) -> None:
    columns = (
        "kind,stratum,n_instances,n_explicit,pct_explicit,n_implicit,pct_implicit,"
        "n_distractor_edus,pct_distractor_per_instance,pct_distractor_per_edu"
    )
    lines = [f"# {h}" for h in header] if header else []
    lines.append(columns)
    for r in stats.rows:
        lines.append(
            ",".join(
                [
                    r.kind,
                    r.stratum,
                    str(r.n_instances),
                    str(r.n_explicit),
                    f"{r.pct_explicit:.1f}",
                    str(r.n_implicit),
                    f"{r.pct_implicit:.1f}",
                    str(r.n_distractor_edus),
                    f"{r.pct_distractor_per_instance:.1f}",
                    f"{r.pct_distractor_per_edu:.1f}",
                ]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf8")
