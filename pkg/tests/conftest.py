"""Shared fixtures: seeded random tree generation over a small vocabulary.

Generated trees are always structurally valid (pure mononuclear or pure
multinuclear nodes, contiguous spans, EDU partitions), which mirrors what
the readers guarantee after normalization.
"""

from __future__ import annotations

import itertools
import random

import pytest

from rstgauge.core import (
    Edu,
    NUCLEUS,
    RstTree,
    SATELLITE,
    SPAN,
    Token,
    internal_node,
    is_lexical_form,
    leaf_node,
    load_stoplist,
)

MONO_LABELS = [
    "elaboration-additional",
    "causal-cause",
    "adversative-concession",
    "explanation-evidence",
    "purpose-goal",
    "context-circumstance",
    "attribution-positive",
]
MULTI_LABELS = ["joint-list", "joint-sequence", "adversative-contrast", "same-unit"]

WORDS = [
    "the", "a", "villagers", "argued", "rain", "stopped", "play", "quickly",
    "because", "but", "so", "however", "fields", "flooded", "again", "everyone",
    "waited", "inside", "storm", "passed",
]


def split_span(rng: random.Random, start: int, end: int, k: int) -> list[tuple[int, int]]:
    """Split EDUs start..end into k non-empty contiguous blocks."""
    cuts = sorted(rng.sample(range(start, end), k - 1))
    bounds = [start - 1] + cuts + [end]
    return [(bounds[i] + 1, bounds[i + 1]) for i in range(k)]


def random_tokens(rng: random.Random, n_edus: int) -> tuple[tuple[Token, ...], tuple[Edu, ...]]:
    stop = load_stoplist()
    tokens: list[Token] = []
    edus: list[Edu] = []
    sent = par = 1
    pos = 1
    for edu_id in range(1, n_edus + 1):
        if edu_id > 1 and rng.random() < 0.4:
            sent += 1
            if rng.random() < 0.3:
                par += 1
        start = pos
        for _ in range(rng.randint(1, 4)):
            form = rng.choice(WORDS)
            tokens.append(Token(pos, form, is_lexical_form(form, stop), sent, par))
            pos += 1
        edus.append(Edu(edu_id, start, pos - 1))
    return tuple(tokens), tuple(edus)


def random_tree(
    rng: random.Random,
    doc_id: str = "doc",
    n_edus: int | None = None,
    min_edus: int = 1,
    max_edus: int = 10,
    genre: str = "test",
) -> RstTree:
    n = n_edus if n_edus is not None else rng.randint(min_edus, max_edus)
    ids = itertools.count(1)

    def build(start: int, end: int, role, rel2par):
        if start == end:
            return leaf_node(next(ids), start, role, rel2par)
        width = end - start + 1
        k = rng.randint(2, min(4, width))
        blocks = split_span(rng, start, end, k)
        if rng.random() < 0.5:
            label = rng.choice(MULTI_LABELS)
            children = [build(s, e, NUCLEUS, label) for s, e in blocks]
        else:
            nucleus_at = rng.randrange(k)
            children = []
            for i, (s, e) in enumerate(blocks):
                if i == nucleus_at:
                    children.append(build(s, e, NUCLEUS, SPAN))
                else:
                    children.append(build(s, e, SATELLITE, rng.choice(MONO_LABELS)))
        return internal_node(next(ids), children, role, rel2par)

    tokens, edus = random_tokens(rng, n)
    root = build(1, n, None, None)
    return RstTree(doc_id=doc_id, root=root, edus=edus, tokens=tokens, genre=genre)


def random_tree_pair(rng: random.Random, doc_id: str = "doc", **kwargs):
    """Two independent trees over the same tokens and EDUs (gold vs pred)."""
    gold = random_tree(rng, doc_id=doc_id, **kwargs)
    pred_rng = random.Random(rng.random())
    pred = random_tree(pred_rng, doc_id=doc_id, n_edus=gold.n_edus)
    pred = RstTree(
        doc_id=doc_id,
        root=pred.root,
        edus=gold.edus,
        tokens=gold.tokens,
        genre=gold.genre,
    )
    return gold, pred


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240817)


# ---------------------------------------------------------------------------
# A tiny two-document corpus with marker annotations, used by the feature,
# analysis and CLI layers.  Document 1 has a syntax layer, document 2 does
# not, so both subordination strategies get exercised.

TOY_DOC1 = """<rst>
  <header>
    <relations>
      <rel name="causal-cause" type="rst"/>
    </relations>
  </header>
  <body>
    <segment id="1">It rained .</segment>
    <segment id="2" parent="1" relname="causal-cause">So we left .</segment>
  </body>
</rst>
"""

TOY_DOC2 = """<rst>
  <header>
    <relations>
      <rel name="joint-list" type="multinuc"/>
      <rel name="explanation-evidence" type="rst"/>
    </relations>
  </header>
  <body>
    <segment id="1" parent="4" relname="joint-list">But Alice arrived .</segment>
    <segment id="2" parent="4" relname="joint-list">and Bob left .</segment>
    <segment id="3" parent="5" relname="explanation-evidence">because that was odd .</segment>
    <group id="4" type="multinuc" parent="5" relname="span"/>
    <group id="5" type="span"/>
  </body>
</rst>
"""

TOY_DM = """tiny_news_rain\t4\tSo\t2\t1\tcausal-cause
tiny_chat_plan\t1\tBut\tNONE\tNONE\tNONE
tiny_chat_plan\t5\tand\t2\t1\tjoint-list
tiny_chat_plan\t9\tbecause\t3\t1\texplanation-evidence
"""

TOY_SYNTAX_DOC1 = """1\t2\tnsubj
2\t0\troot
3\t2\tpunct
4\t6\tadvmod
5\t6\tnsubj
6\t2\tadvcl
7\t6\tpunct
"""


def write_small_corpus(root) -> None:
    gold = root / "gold"
    gold.mkdir()
    (gold / "tiny_news_rain.rs3").write_text(TOY_DOC1)
    (gold / "tiny_chat_plan.rs3").write_text(TOY_DOC2)
    (root / "dm.tsv").write_text(TOY_DM)
    syntax = root / "syntax"
    syntax.mkdir()
    (syntax / "tiny_news_rain.tsv").write_text(TOY_SYNTAX_DOC1)


@pytest.fixture
def small_corpus(tmp_path):
    from rstgauge import RelationScheme
    from rstgauge.ingest import load_corpus

    write_small_corpus(tmp_path)
    corpus, errors = load_corpus(
        "toy",
        RelationScheme.builtin("gum"),
        tmp_path / "gold",
        dm_path=tmp_path / "dm.tsv",
        syntax_dir=tmp_path / "syntax",
    )
    assert errors == []
    return corpus


def make_feature_row(
    doc_id,
    edu_id,
    *,
    length_tokens=4,
    dm_present=False,
    syn_function="root",
    oov_rate=0.0,
    genre="news",
    signal_dm=False,
    distractor_present=False,
    subord=False,
    gold_class="Joint",
    n_children=0,
    n_descendants=0,
    domain_size=1,
    inter_sentential=False,
    inter_paragraph=False,
    val=0.4,
    target_hard=False,
):
    """Synthetic feature row with sensible defaults for model tests."""
    from rstgauge.features import FeatureRow

    return FeatureRow(
        doc_id=doc_id, edu_id=edu_id, length_tokens=length_tokens,
        dm_present=dm_present, syn_function=syn_function, oov_rate=oov_rate,
        genre=genre, signal_dm=signal_dm, distractor_present=distractor_present,
        subord=subord, gold_class=gold_class, n_children=n_children,
        n_descendants=n_descendants, domain_size=domain_size,
        inter_sentential=inter_sentential, inter_paragraph=inter_paragraph,
        scaled_attach=val, scaled_label=val, scaled_either=val,
        target_hard=target_hard,
    )


def xor_feature_rows(seed=20240818, n=1000, n_docs=25):
    """Sign-product interaction fixture: the label is the XOR of the signs
    of two features, so no main-effects model can beat chance while any
    interaction-capable learner can approach 100%."""
    import numpy as np
    from scipy import special

    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n):
        lt = int(rng.integers(1, 6)) * (1 if rng.random() < 0.5 else -1)
        ov = float(special.ndtri(rng.random()))
        if ov == 0.0:
            ov = 0.5
        rows.append(
            make_feature_row(
                f"doc{i % n_docs:02d}", i,
                length_tokens=lt, oov_rate=ov,
                target_hard=(lt > 0) != (ov > 0),
            )
        )
    return rows
