"""Gradient-boosted decision trees for hard-EDU prediction, from scratch.

Binary logistic objective, exact greedy depth-limited regression trees on
one-hot-expanded features, second-order leaf weights with an L2 penalty,
and gain-based importances re-aggregated to their parent features.

Determinism contract: fits are single-threaded, rows are brought into a
canonical internal order before any accumulation, and split ties are broken
by fixed column order and lowest threshold, so refitting with the same seed
is bit-identical and (at subsample=1) the fit does not depend on row order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence
from urllib.parse import quote, unquote

import numpy as np

from .features import FeatureRow, feature_names as mode_feature_names

UNSEEN = "<unseen>"


class ModelError(ValueError):
    """Raised for invalid training data, schema mismatches, or corrupt
    model files."""


@dataclass(frozen=True)
class GbtParams:
    """Boosting hyperparameters.  ``min_child_weight`` bounds the hessian
    sum of each child, and ``l2_reg`` penalizes leaf weights."""

    n_rounds: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    l2_reg: float = 1.0
    subsample: float = 1.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_rounds < 1:
            raise ModelError("n_rounds must be at least 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ModelError("learning_rate must be in (0, 1]")
        if not 0.0 < self.subsample <= 1.0:
            raise ModelError("subsample must be in (0, 1]")
        if self.max_depth < 1:
            raise ModelError("max_depth must be at least 1")
        if self.min_child_weight < 0:
            raise ModelError("min_child_weight must be non-negative")
        if self.l2_reg < 0:
            raise ModelError("l2_reg must be non-negative")


# ---------------------------------------------------------------------------
# feature schema and vectorization


@dataclass(frozen=True)
class FeatureSchema:
    """Mapping from feature rows to a fixed numeric column layout.

    Numeric and boolean features take one column each; categorical features
    take one column per training level plus an explicit unseen bucket that
    is all-zero during training and lights up for novel levels at predict
    time."""

    mode: str
    features: tuple[str, ...]
    kinds: tuple[str, ...]  # "numeric" | "categorical", parallel to features
    levels: dict[str, tuple[str, ...]]

    @property
    def columns(self) -> tuple[str, ...]:
        out: list[str] = []
        for feat, kind in zip(self.features, self.kinds):
            if kind == "numeric":
                out.append(feat)
            else:
                out.extend(f"{feat}={level}" for level in self.levels[feat])
                out.append(f"{feat}={UNSEEN}")
        return tuple(out)

    def parent_feature(self, column: str) -> str:
        return column.split("=", 1)[0]


def build_schema(rows: Sequence[FeatureRow], mode: str) -> FeatureSchema:
    if not rows:
        raise ModelError("no rows to build a feature schema from")
    features = mode_feature_names(mode)
    kinds: list[str] = []
    levels: dict[str, tuple[str, ...]] = {}
    for feat in features:
        if "=" in feat:
            raise ModelError(f"feature name {feat!r} may not contain '='")
        value = rows[0].value(feat)
        if isinstance(value, str):
            kinds.append("categorical")
            seen = sorted({row.value(feat) for row in rows})
            if UNSEEN in seen:
                raise ModelError(f"feature {feat!r} uses the reserved level {UNSEEN!r}")
            levels[feat] = tuple(seen)
        else:
            kinds.append("numeric")
    return FeatureSchema(mode=mode, features=features, kinds=tuple(kinds), levels=levels)


def vectorize(schema: FeatureSchema, rows: Sequence[FeatureRow]) -> np.ndarray:
    """Rows to a dense (n, n_columns) float matrix under ``schema``."""
    n = len(rows)
    columns = schema.columns
    X = np.zeros((n, len(columns)), dtype=float)
    col = 0
    for feat, kind in zip(schema.features, schema.kinds):
        try:
            values = [row.value(feat) for row in rows]
        except AttributeError as exc:
            raise ModelError(f"rows lack feature {feat!r}: {exc}") from exc
        if kind == "numeric":
            for i, v in enumerate(values):
                if isinstance(v, str):
                    raise ModelError(f"feature {feat!r} is numeric in the schema, got {v!r}")
                X[i, col] = float(v)
            col += 1
        else:
            index = {level: j for j, level in enumerate(schema.levels[feat])}
            width = len(index) + 1  # + unseen bucket
            for i, v in enumerate(values):
                j = index.get(v, width - 1)
                X[i, col + j] = 1.0
            col += width
    return X


# ---------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class TreeNode:
    """Split node (feature >= 0) or leaf (feature == -1, weight in value).
    Rows with column value < threshold go left."""

    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    value: float = 0.0


@dataclass(frozen=True)
class Tree:
    nodes: tuple[TreeNode, ...]

    def scores(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0])
        nodes = self.nodes
        for i in range(X.shape[0]):
            node = nodes[0]
            while node.feature >= 0:
                nid = node.left if X[i, node.feature] < node.threshold else node.right
                node = nodes[nid]
            out[i] = node.value
        return out


def _sigmoid(score: np.ndarray) -> np.ndarray:
    out = np.empty_like(score)
    pos = score >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-score[pos]))
    ex = np.exp(score[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logistic_loss(y: np.ndarray, score: np.ndarray) -> float:
    # mean softplus(score) - y*score, numerically stable
    return float(np.mean(np.logaddexp(0.0, score) - y * score))


def _build_tree(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    idx: np.ndarray,
    params: GbtParams,
    gains: np.ndarray,
) -> Tree:
    """Exact greedy tree on the rows in ``idx``; accumulates split gains
    per column into ``gains``."""
    lam = params.l2_reg
    nodes: list[TreeNode] = []

    def grow(rows: np.ndarray, depth: int) -> int:
        nid = len(nodes)
        nodes.append(TreeNode())  # placeholder
        G = float(g[rows].sum())
        H = float(h[rows].sum())
        best_gain = 0.0
        best: Optional[tuple[int, float, np.ndarray, np.ndarray]] = None
        if depth < params.max_depth and rows.size >= 2:
            parent_score = G * G / (H + lam)
            for col in range(X.shape[1]):
                xv = X[rows, col]
                order = np.argsort(xv, kind="stable")
                xs = xv[order]
                boundaries = np.nonzero(xs[:-1] < xs[1:])[0]
                if boundaries.size == 0:
                    continue
                cg = np.cumsum(g[rows][order])
                ch = np.cumsum(h[rows][order])
                GL = cg[boundaries]
                HL = ch[boundaries]
                GR = G - GL
                HR = H - HL
                ok = (HL >= params.min_child_weight) & (HR >= params.min_child_weight)
                if not ok.any():
                    continue
                gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent_score)
                gain[~ok] = -np.inf
                pick = int(np.argmax(gain))  # first max: lowest threshold wins ties
                if gain[pick] > best_gain:  # strict >: earlier column wins ties
                    best_gain = float(gain[pick])
                    b = boundaries[pick]
                    threshold = float((xs[b] + xs[b + 1]) / 2.0)
                    mask = xv < threshold
                    best = (col, threshold, rows[mask], rows[~mask])
        if best is None:
            nodes[nid] = TreeNode(value=-G / (H + lam))
            return nid
        col, threshold, left_rows, right_rows = best
        gains[col] += best_gain
        left = grow(left_rows, depth + 1)
        right = grow(right_rows, depth + 1)
        nodes[nid] = TreeNode(feature=col, threshold=threshold, left=left, right=right)
        return nid

    grow(idx, 0)
    return Tree(nodes=tuple(nodes))


# ---------------------------------------------------------------------------
# model


@dataclass(frozen=True)
class GbtModel:
    params: GbtParams
    schema: FeatureSchema
    base_score: float  # log-odds of the positive class at round 0
    trees: tuple[Tree, ...]
    column_gains: dict[str, float]
    loss_curve: tuple[float, ...]

    @property
    def gain_importance(self) -> dict[str, float]:
        """Per-feature accumulated loss reduction, one-hot columns folded
        back into their parent categorical feature."""
        out: dict[str, float] = {}
        for column, gain in self.column_gains.items():
            parent = self.schema.parent_feature(column)
            out[parent] = out.get(parent, 0.0) + gain
        return out

    def predict_scores(self, X: np.ndarray) -> np.ndarray:
        score = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            score += self.params.learning_rate * tree.scores(X)
        return score

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return _sigmoid(self.predict_scores(X))


@dataclass(frozen=True)
class Prediction:
    doc_id: str
    edu_id: int
    probability: float
    predicted_hard: bool
    actual_hard: Optional[bool] = None


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Lexicographic row order over (columns..., label): duplicate rows are
    interchangeable, so accumulation becomes independent of input order."""
    keys = tuple(X[:, c] for c in range(X.shape[1] - 1, -1, -1))
    return np.lexsort((y,) + keys)


def fit(rows: Sequence[FeatureRow], mode: str, params: Optional[GbtParams] = None) -> GbtModel:
    """Boosted-tree fit of ``target_hard`` on the ``mode`` feature set."""
    if params is None:
        params = GbtParams()
    if not rows:
        raise ModelError("no rows to fit on")
    schema = build_schema(rows, mode)
    X = vectorize(schema, rows)
    y = np.array([1.0 if row.target_hard else 0.0 for row in rows])
    if y.min() == y.max():
        raise ModelError("training labels contain a single class")

    order = _canonical_order(X, y)
    X = X[order]
    y = y[order]

    n = X.shape[0]
    base = math.log(float(y.mean()) / (1.0 - float(y.mean())))
    score = np.full(n, base)
    gains = np.zeros(X.shape[1])
    trees: list[Tree] = []
    losses: list[float] = [_logistic_loss(y, score)]
    rng = np.random.default_rng(params.seed)
    m = max(1, int(round(params.subsample * n)))

    for _ in range(params.n_rounds):
        p = _sigmoid(score)
        g = p - y
        h = p * (1.0 - p)
        if params.subsample < 1.0:
            idx = np.sort(rng.permutation(n)[:m])
        else:
            idx = np.arange(n)
        tree = _build_tree(X, g, h, idx, params, gains)
        trees.append(tree)
        score += params.learning_rate * tree.scores(X)
        loss = _logistic_loss(y, score)
        if params.subsample == 1.0 and loss > losses[-1] + 1e-9 * max(1.0, abs(losses[-1])):
            raise ModelError(
                f"training loss increased at round {len(trees)}: "
                f"{losses[-1]!r} -> {loss!r}"
            )
        losses.append(loss)

    columns = schema.columns
    column_gains = {columns[c]: float(gains[c]) for c in range(len(columns)) if gains[c] > 0.0}
    return GbtModel(
        params=params,
        schema=schema,
        base_score=base,
        trees=tuple(trees),
        column_gains=column_gains,
        loss_curve=tuple(losses),
    )


def predict(model: GbtModel, rows: Sequence[FeatureRow]) -> list[Prediction]:
    """Per-row hard-EDU probability and the decision at probability > 0.5."""
    X = vectorize(model.schema, rows)
    probs = model.predict_proba(X)
    return [
        Prediction(
            doc_id=row.doc_id,
            edu_id=row.edu_id,
            probability=float(prob),
            predicted_hard=bool(prob > 0.5),
            actual_hard=row.target_hard,
        )
        for row, prob in zip(rows, probs)
    ]


# ---------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class CvResult:
    """Document-grouped k-fold cross-validation summary.

    ``accuracy`` pools all held-out decisions; ``baseline_accuracy`` is the
    majority class prior of the full row set.  ``protocol`` states exactly
    how the numbers were obtained so reports never imply a different split.
    """

    n_folds: int
    fold_accuracies: tuple[float, ...]
    accuracy: float
    baseline_accuracy: float
    importances: dict[str, float]
    predictions: tuple[Prediction, ...]
    protocol: str


def cross_validate(
    rows: Sequence[FeatureRow],
    mode: str,
    params: Optional[GbtParams] = None,
    k_folds: int = 5,
) -> CvResult:
    if params is None:
        params = GbtParams()
    if k_folds < 2:
        raise ModelError("k_folds must be at least 2")
    if not rows:
        raise ModelError("no rows to cross-validate on")
    docs = sorted({row.doc_id for row in rows})
    if len(docs) < k_folds:
        raise ModelError(f"{len(docs)} documents cannot fill {k_folds} folds")
    rng = np.random.default_rng(params.seed)
    shuffled = [docs[i] for i in rng.permutation(len(docs))]
    fold_of = {doc: i % k_folds for i, doc in enumerate(shuffled)}

    fold_accuracies: list[float] = []
    importances: dict[str, float] = {}
    predictions: list[Prediction] = []
    n_correct = 0
    for fold in range(k_folds):
        train = [row for row in rows if fold_of[row.doc_id] != fold]
        held = [row for row in rows if fold_of[row.doc_id] == fold]
        if not held:
            continue
        model = fit(train, mode, params)
        preds = predict(model, held)
        correct = sum(1 for p in preds if p.predicted_hard == p.actual_hard)
        fold_accuracies.append(correct / len(held))
        n_correct += correct
        predictions.extend(preds)
        for feat, gain in model.gain_importance.items():
            importances[feat] = importances.get(feat, 0.0) + gain

    positive = sum(1 for row in rows if row.target_hard) / len(rows)
    baseline = max(positive, 1.0 - positive)
    return CvResult(
        n_folds=k_folds,
        fold_accuracies=tuple(fold_accuracies),
        accuracy=n_correct / len(rows),
        baseline_accuracy=baseline,
        importances=importances,
        predictions=tuple(predictions),
        protocol=f"{k_folds}-fold document-grouped cross-validation",
    )


def importance_report(model_or_importances) -> list[tuple[str, float, float]]:
    """Ranked (feature, gain, share) triples, descending by gain with
    alphabetical tie-break; shares sum to 1 when any gain is positive."""
    if isinstance(model_or_importances, GbtModel):
        importances = model_or_importances.gain_importance
    else:
        importances = dict(model_or_importances)
    total = sum(importances.values())
    ranked = sorted(importances.items(), key=lambda kv: (-kv[1], kv[0]))
    return [(feat, gain, gain / total if total > 0 else 0.0) for feat, gain in ranked]


# ---------------------------------------------------------------------------
# plain-text serialization

FORMAT_NAME = "rstgauge-gbt"
FORMAT_VERSION = 1


def _q(token: str) -> str:
    return quote(token, safe="")


def save_model(
    model: GbtModel, path: "Path | str", header: Sequence[str] = ()
) -> None:
    """Versioned plain-text model file: header, schema, per-tree node
    tables.  Floats are written with ``repr`` so loads are bit-exact.
    ``header`` lines are emitted as leading ``#`` comments, which the
    loader skips."""
    lines: list[str] = [f"# {h}" for h in header]
    lines.append(f"{FORMAT_NAME} {FORMAT_VERSION}")
    p = model.params
    lines.append(f"mode {_q(model.schema.mode)}")
    lines.append(f"n_rounds {p.n_rounds}")
    lines.append(f"max_depth {p.max_depth}")
    lines.append(f"learning_rate {p.learning_rate!r}")
    lines.append(f"min_child_weight {p.min_child_weight!r}")
    lines.append(f"l2_reg {p.l2_reg!r}")
    lines.append(f"subsample {p.subsample!r}")
    lines.append(f"seed {p.seed}")
    lines.append(f"base_score {model.base_score!r}")
    lines.append(f"features {len(model.schema.features)}")
    for feat, kind in zip(model.schema.features, model.schema.kinds):
        if kind == "numeric":
            lines.append(f"feature {_q(feat)} numeric")
        else:
            levels = " ".join(_q(level) for level in model.schema.levels[feat])
            lines.append(f"feature {_q(feat)} categorical {levels}".rstrip())
    lines.append("loss_curve " + " ".join(repr(v) for v in model.loss_curve))
    lines.append(f"column_gains {len(model.column_gains)}")
    for column in sorted(model.column_gains):
        lines.append(f"gain {_q(column)} {model.column_gains[column]!r}")
    lines.append(f"trees {len(model.trees)}")
    for t, tree in enumerate(model.trees):
        lines.append(f"tree {t} {len(tree.nodes)}")
        for nid, node in enumerate(tree.nodes):
            if node.feature < 0:
                lines.append(f"{nid} leaf {node.value!r}")
            else:
                lines.append(
                    f"{nid} split {node.feature} {node.threshold!r} {node.left} {node.right}"
                )
    lines.append("end")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf8")


def load_model(path: "Path | str") -> GbtModel:
    path = Path(path)
    lines = [
        line
        for line in path.read_text(encoding="utf8").splitlines()
        if not line.startswith("#")
    ]
    pos = 0

    def take(expected: Optional[str] = None) -> list[str]:
        nonlocal pos
        if pos >= len(lines):
            raise ModelError(f"{path}: truncated model file")
        parts = lines[pos].split(" ")
        pos += 1
        if expected is not None and parts[0] != expected:
            raise ModelError(f"{path}:{pos}: expected {expected!r}, got {parts[0]!r}")
        return parts

    header = take(FORMAT_NAME)
    if len(header) != 2 or header[1] != str(FORMAT_VERSION):
        raise ModelError(f"{path}: unsupported model format version {header[1:]}")
    mode = unquote(take("mode")[1])
    params = GbtParams(
        n_rounds=int(take("n_rounds")[1]),
        max_depth=int(take("max_depth")[1]),
        learning_rate=float(take("learning_rate")[1]),
        min_child_weight=float(take("min_child_weight")[1]),
        l2_reg=float(take("l2_reg")[1]),
        subsample=float(take("subsample")[1]),
        seed=int(take("seed")[1]),
    )
    base_score = float(take("base_score")[1])
    n_features = int(take("features")[1])
    features: list[str] = []
    kinds: list[str] = []
    levels: dict[str, tuple[str, ...]] = {}
    for _ in range(n_features):
        parts = take("feature")
        name = unquote(parts[1])
        features.append(name)
        kinds.append(parts[2])
        if parts[2] == "categorical":
            levels[name] = tuple(unquote(tok) for tok in parts[3:])
        elif parts[2] != "numeric":
            raise ModelError(f"{path}:{pos}: unknown feature kind {parts[2]!r}")
    schema = FeatureSchema(mode=mode, features=tuple(features), kinds=tuple(kinds), levels=levels)
    loss_curve = tuple(float(v) for v in take("loss_curve")[1:])
    n_gains = int(take("column_gains")[1])
    column_gains: dict[str, float] = {}
    for _ in range(n_gains):
        parts = take("gain")
        column_gains[unquote(parts[1])] = float(parts[2])
    n_trees = int(take("trees")[1])
    trees: list[Tree] = []
    for _ in range(n_trees):
        t_parts = take("tree")
        n_nodes = int(t_parts[2])
        nodes: list[TreeNode] = []
        for nid in range(n_nodes):
            parts = take()
            if int(parts[0]) != nid:
                raise ModelError(f"{path}:{pos}: node ids must be sequential")
            if parts[1] == "leaf":
                nodes.append(TreeNode(value=float(parts[2])))
            elif parts[1] == "split":
                nodes.append(
                    TreeNode(
                        feature=int(parts[2]),
                        threshold=float(parts[3]),
                        left=int(parts[4]),
                        right=int(parts[5]),
                    )
                )
            else:
                raise ModelError(f"{path}:{pos}: unknown node kind {parts[1]!r}")
        trees.append(Tree(nodes=tuple(nodes)))
    take("end")
    return GbtModel(
        params=params,
        schema=schema,
        base_score=base_score,
        trees=tuple(trees),
        column_gains=column_gains,
        loss_curve=loss_curve,
    )
