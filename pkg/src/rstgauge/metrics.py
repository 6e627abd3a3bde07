"""Evaluation: Parseval scores over binary trees, multi-run per-EDU error
profiles, and two-annotator agreement over marker spans.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .core import (
    CorpusError,
    DepGraph,
    DmAnnotation,
    NUCLEUS,
    ROOT_HEAD,
    RelationScheme,
    RstTree,
)
from .treeops import binarize

TARGETS = ("attach", "label", "either")


class SegmentationError(CorpusError):
    """Gold and predicted analyses disagree on the EDU segmentation."""


@dataclass(frozen=True)
class ParsevalScore:
    """Original-Parseval scores, in percent.

    With a shared gold segmentation precision equals recall, so a single
    figure per level suffices: S counts matching internal-node EDU spans, N
    additionally requires the nuclearity pattern to match, R additionally
    requires the relation label (the satellite's label, or the shared
    multinuclear relation for NN nodes).  ``n_spans`` is the number of
    internal nodes scored; a one-EDU document has none and scores 100 by
    convention.
    """

    doc_id: str
    S: float
    N: float
    R: float
    n_spans: int


def _check_segmentation(gold: RstTree, pred: RstTree) -> None:
    if gold.n_edus != pred.n_edus:
        raise SegmentationError(
            f"{gold.doc_id}: gold has {gold.n_edus} EDUs, prediction has {pred.n_edus}"
        )
    for g, p in zip(gold.edus, pred.edus):
        if (g.start, g.end) != (p.start, p.end):
            raise SegmentationError(
                f"{gold.doc_id}: EDU {g.id} spans differ "
                f"(gold {g.start}-{g.end}, predicted {p.start}-{p.end})"
            )


def _brackets(tree: RstTree, scheme: Optional[RelationScheme], fine_labels: bool):
    """(span, pattern, label) for every internal node of the binarized tree."""
    out = {}
    for node in binarize(tree).root.walk():
        if node.is_leaf:
            continue
        pattern = "".join("N" if c.role == NUCLEUS else "S" for c in node.children)
        if pattern == "NS":
            label = node.children[1].rel2par
        elif pattern == "SN":
            label = node.children[0].rel2par
        else:
            label = node.children[0].rel2par
        if scheme is not None and not fine_labels:
            label = scheme.class_of(label)
        out[(node.start, node.end)] = (pattern, label)
    return out


def parseval(
    gold: RstTree,
    pred: RstTree,
    scheme: Optional[RelationScheme] = None,
    fine_labels: bool = False,
) -> ParsevalScore:
    """Score one predicted tree against gold under original Parseval.

    Both trees are binarized first (a no-op for binary input).  Relation
    matching is at class level when a scheme is given and ``fine_labels`` is
    false; without a scheme, fine labels are compared as-is.
    """
    _check_segmentation(gold, pred)
    gold_b = _brackets(gold, scheme, fine_labels)
    pred_b = _brackets(pred, scheme, fine_labels)
    total = len(pred_b)
    if total == 0:
        return ParsevalScore(gold.doc_id, 100.0, 100.0, 100.0, 0)
    s = n = r = 0
    for span, (pattern, label) in pred_b.items():
        if span not in gold_b:
            continue
        s += 1
        gpattern, glabel = gold_b[span]
        if pattern == gpattern:
            n += 1
        if label == glabel:
            r += 1
    return ParsevalScore(
        gold.doc_id, 100.0 * s / total, 100.0 * n / total, 100.0 * r / total, total
    )


def micro_average(scores: Iterable[ParsevalScore], doc_id: str = "ALL") -> ParsevalScore:
    """Micro-average: per-document match counts pooled before dividing."""
    scores = list(scores)
    total = sum(sc.n_spans for sc in scores)
    if total == 0:
        return ParsevalScore(doc_id, 100.0, 100.0, 100.0, 0)
    s = sum(sc.S * sc.n_spans for sc in scores) / 100.0
    n = sum(sc.N * sc.n_spans for sc in scores) / 100.0
    r = sum(sc.R * sc.n_spans for sc in scores) / 100.0
    return ParsevalScore(doc_id, 100.0 * s / total, 100.0 * n / total, 100.0 * r / total, total)


@dataclass(frozen=True)
class ErrorProfile:
    """Per-EDU error counts over k runs of one parser configuration.

    ``attach_errors`` counts runs whose predicted head differs from gold;
    ``label_errors`` counts runs that got the head wrong or the head right
    with the wrong relation class; ``either_errors`` counts runs wrong on
    either criterion.  Scaled values divide by ``n_runs``.  ``is_hard``
    applies the configured threshold to the configured target's count.
    """

    doc_id: str
    edu_id: int
    n_runs: int
    attach_errors: int
    label_errors: int
    either_errors: int
    scaled_attach: float
    scaled_label: float
    scaled_either: float
    is_hard: bool
    target: str


def _graph_classes(graph: DepGraph, scheme: Optional[RelationScheme]) -> list[str]:
    if all(n.rel_class is not None for n in graph.nodes):
        return [n.rel_class for n in graph.nodes]  # type: ignore[misc]
    if scheme is None:
        raise CorpusError(
            f"{graph.doc_id}: no relation classes on graph and no scheme given"
        )
    return [scheme.class_of(n.relation) for n in graph.nodes]


def error_profiles(
    gold: DepGraph,
    runs: Sequence[DepGraph],
    scheme: Optional[RelationScheme] = None,
    hard_threshold: int = 3,
    target: str = "attach",
) -> list[ErrorProfile]:
    """Profile every EDU of one document over k predicted dependency graphs.

    The root EDU participates like any other: predicting a head other than
    0 for it is an attachment error.
    """
    if target not in TARGETS:
        raise ValueError(f"target must be one of {TARGETS}, got {target!r}")
    if not runs:
        raise ValueError(f"{gold.doc_id}: at least one run is required")
    for run in runs:
        if run.n_edus != gold.n_edus:
            raise SegmentationError(
                f"{gold.doc_id}: run has {run.n_edus} EDUs, gold has {gold.n_edus}"
            )

    gold_classes = _graph_classes(gold, scheme)
    run_classes = [_graph_classes(run, scheme) for run in runs]

    profiles = []
    k = len(runs)
    for idx, gnode in enumerate(gold.nodes):
        attach = label = either = 0
        for run, classes in zip(runs, run_classes):
            pnode = run.nodes[idx]
            head_wrong = pnode.head != gnode.head
            class_wrong = classes[idx] != gold_classes[idx]
            if head_wrong:
                attach += 1
            if head_wrong or class_wrong:
                label += 1
                either += 1
        counts = {"attach": attach, "label": label, "either": either}
        profiles.append(
            ErrorProfile(
                doc_id=gold.doc_id,
                edu_id=gnode.edu_id,
                n_runs=k,
                attach_errors=attach,
                label_errors=label,
                either_errors=either,
                scaled_attach=attach / k,
                scaled_label=label / k,
                scaled_either=either / k,
                is_hard=counts[target] >= hard_threshold,
                target=target,
            )
        )
    return profiles


def majority_predicted_classes(
    runs: Sequence[DepGraph], scheme: Optional[RelationScheme] = None
) -> dict[int, str]:
    """Most frequent predicted relation class per EDU across runs; ties
    break alphabetically so the result is deterministic."""
    if not runs:
        return {}
    run_classes = [_graph_classes(run, scheme) for run in runs]
    out: dict[int, str] = {}
    for idx, node in enumerate(runs[0].nodes):
        votes = Counter(classes[idx] for classes in run_classes)
        best = min(votes.items(), key=lambda kv: (-kv[1], kv[0]))
        out[node.edu_id] = best[0]
    return out


@dataclass(frozen=True)
class AgreementScore:
    """Two-annotator agreement over marker annotations."""

    dm_f1: float
    relation_f1: float
    n_a: int
    n_b: int
    n_matched: int


def mutual_f1(
    a: Sequence[DmAnnotation], b: Sequence[DmAnnotation]
) -> AgreementScore:
    """Span-level F1 between two annotators, averaged over both directions,
    plus relation agreement among matched markers.

    A marker matches when both annotators marked exactly the same token
    indices in the same document.  ``relation_f1`` is the percentage of
    matched markers whose status and link agree (both distractor, or both
    signals on the same relation instance); with no matched markers it is
    0.0 by convention.
    """

    def keyed(anns: Sequence[DmAnnotation]):
        return {
            (ann.doc_id, ann.token_indices): (
                ann.status,
                ann.source_edu,
                ann.target_edu,
                ann.relation,
            )
            for ann in anns
        }

    ka, kb = keyed(a), keyed(b)
    matched = set(ka) & set(kb)
    m = len(matched)

    def f1(n_pred: int, n_ref: int) -> float:
        if n_pred == 0 or n_ref == 0 or m == 0:
            return 0.0
        precision = m / n_pred
        recall = m / n_ref
        return 200.0 * precision * recall / (precision + recall)

    if not ka and not kb:
        dm = 100.0
    else:
        dm = (f1(len(ka), len(kb)) + f1(len(kb), len(ka))) / 2.0
    if m == 0:
        rel = 0.0 if (ka or kb) else 100.0
    else:
        agree = sum(1 for key in matched if ka[key] == kb[key])
        rel = 100.0 * agree / m
    return AgreementScore(dm, rel, len(ka), len(kb), m)
