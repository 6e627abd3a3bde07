"""Analysis artifacts: delimited tables and figure files.

Every artifact starts with comment lines recording the tool version, the
configuration hash and the seed, so any table can be traced back to the
exact run that produced it.  Table builders are pure (rows in, rows out);
``write_table``/``read_table`` handle the on-disk CSV convention; the two
``render_*`` functions draw PNG figures from the same rows the CSVs carry.
"""

from __future__ import annotations

import csv
from collections import Counter
from pathlib import Path
from typing import Optional, Sequence

from .boosting import CvResult, Prediction, importance_report
from .core import CorpusError
from .ingest import Corpus
from .metrics import AgreementScore, ErrorProfile, ParsevalScore
from .stats import BetaRegFit, ConsistencyReport, TestResult

DENSITY_STRATA = ("dm", "no_dm", "distractor", "no_distractor")


def artifact_header(version: str, config_hash: str, seed: int) -> tuple[str, ...]:
    """The provenance lines every artifact begins with."""
    return (f"rstgauge {version}", f"config {config_hash}", f"seed {seed}")


def format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def write_table(
    path: "Path | str",
    columns: Sequence[str],
    rows: Sequence[Sequence],
    header: Sequence[str] = (),
) -> None:
    """Write one CSV artifact: ``# `` comment lines, column line, data."""
    path = Path(path)
    with path.open("w", encoding="utf8", newline="") as handle:
        for line in header:
            handle.write(f"# {line}\n")
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(v) for v in row])


def read_table(path: "Path | str") -> tuple[list[str], list[str], list[list[str]]]:
    """Read a CSV artifact back: (comment lines, columns, string rows)."""
    path = Path(path)
    header: list[str] = []
    body: list[str] = []
    for line in path.read_text(encoding="utf8").splitlines():
        if line.startswith("#"):
            header.append(line[1:].strip())
        elif line or body:
            body.append(line)
    rows = list(csv.reader(body))
    if not rows:
        raise CorpusError(f"{path}: no column line")
    return header, rows[0], rows[1:]


# ---------------------------------------------------------------------------
# table builders


SCORE_COLUMNS = ("doc_id", "S", "N", "R", "n_spans")


def parseval_table(scores: Sequence[ParsevalScore]) -> list[tuple]:
    return [(s.doc_id, s.S, s.N, s.R, s.n_spans) for s in scores]


PROFILE_COLUMNS = (
    "doc_id",
    "edu_id",
    "n_runs",
    "attach_errors",
    "label_errors",
    "either_errors",
    "scaled_attach",
    "scaled_label",
    "scaled_either",
    "is_hard",
    "target",
)


def profile_table(profiles: Sequence[ErrorProfile]) -> list[tuple]:
    return [
        (
            p.doc_id,
            p.edu_id,
            p.n_runs,
            p.attach_errors,
            p.label_errors,
            p.either_errors,
            p.scaled_attach,
            p.scaled_label,
            p.scaled_either,
            p.is_hard,
            p.target,
        )
        for p in sorted(profiles, key=lambda p: (p.doc_id, p.edu_id))
    ]


DENSITY_COLUMNS = ("architecture", "stratum", "error_count", "n_edus")


def density_table(
    profiles_by_arch: dict[str, Sequence[ErrorProfile]],
    marker_flags: dict[tuple[str, int], tuple[bool, bool]],
    target: str = "attach",
) -> list[tuple]:
    """EDU counts per (architecture, marker stratum, error count).

    ``marker_flags`` maps (doc_id, edu_id) to (dm_present,
    distractor_present); every error count from 0 to the run count appears
    for every stratum, zero-filled, so downstream plotting needs no gaps
    logic.
    """
    out: list[tuple] = []
    for arch in sorted(profiles_by_arch):
        profiles = profiles_by_arch[arch]
        if not profiles:
            continue
        n_runs = max(p.n_runs for p in profiles)
        counts: Counter = Counter()
        for p in profiles:
            key = (p.doc_id, p.edu_id)
            if key not in marker_flags:
                raise CorpusError(f"no marker flags for {p.doc_id} EDU {p.edu_id}")
            dm, distractor = marker_flags[key]
            errors = getattr(p, f"{target}_errors")
            counts[(errors, "dm" if dm else "no_dm")] += 1
            counts[(errors, "distractor" if distractor else "no_distractor")] += 1
        for stratum in DENSITY_STRATA:
            for errors in range(n_runs + 1):
                out.append((arch, stratum, errors, counts.get((errors, stratum), 0)))
    return out


TEST_COLUMNS = (
    "comparison",
    "kind",
    "statistic",
    "effect_size",
    "df",
    "p_value",
    "stars",
    "n_a",
    "n_b",
)


def significance_table(results: Sequence[tuple[str, TestResult, int, int]]) -> list[tuple]:
    """Rows for significance tests: (name, result, group sizes)."""
    return [
        (name, r.kind, r.statistic, r.effect_size, r.df, r.p_value, r.stars, n_a, n_b)
        for name, r, n_a, n_b in results
    ]


REGRESSION_COLUMNS = ("term", "coefficient", "std_error", "p_value", "stars")


def regression_table(fit: BetaRegFit) -> list[tuple]:
    from .stats import significance_stars

    return [
        (
            name,
            fit.coefficients[name],
            fit.std_errors[name],
            fit.p_values[name],
            significance_stars(fit.p_values[name]),
        )
        for name in fit.feature_names
    ]


def regression_header_lines(fit: BetaRegFit, lrt_result: Optional[TestResult] = None) -> list[str]:
    lines = [
        f"response {fit.response}",
        f"n_obs {fit.n_obs}",
        f"precision {fit.precision!r}",
        f"log_likelihood {fit.log_likelihood!r}",
        f"n_iter {fit.n_iter}",
        f"converged {'true' if fit.converged else 'false'}",
    ]
    if lrt_result is not None:
        lines.append(
            "lrt_vs_intercept statistic "
            f"{lrt_result.statistic!r} df {lrt_result.df!r} p {lrt_result.p_value!r}"
            f" {lrt_result.stars}".rstrip()
        )
    lines.extend(f"warning {w}" for w in fit.warnings)
    return lines


def regression_grid(
    tables: dict[str, tuple[Sequence[str], Sequence[Sequence[str]]]],
) -> tuple[list[str], list[list[str]]]:
    """Pivot per-architecture coefficient tables into one term-by-arch grid.

    ``tables`` maps architecture to (columns, rows) as read back by
    ``read_table``; the output has one row per term and coefficient,
    p-value and stars columns per architecture.
    """
    archs = sorted(tables)
    terms: list[str] = []
    cells: dict[tuple[str, str], dict[str, str]] = {}
    for arch in archs:
        columns, rows = tables[arch]
        idx = {c: i for i, c in enumerate(columns)}
        for needed in REGRESSION_COLUMNS:
            if needed not in idx:
                raise CorpusError(f"regression table for {arch!r} lacks column {needed!r}")
        for row in rows:
            term = row[idx["term"]]
            if term not in terms:
                terms.append(term)
            cells[(arch, term)] = {c: row[idx[c]] for c in REGRESSION_COLUMNS}
    out_columns = ["term"]
    for arch in archs:
        out_columns += [f"{arch}_coefficient", f"{arch}_p_value", f"{arch}_stars"]
    out_rows: list[list[str]] = []
    for term in terms:
        row = [term]
        for arch in archs:
            cell = cells.get((arch, term))
            if cell is None:
                row += ["", "", ""]
            else:
                row += [cell["coefficient"], cell["p_value"], cell["stars"]]
        out_rows.append(row)
    return out_columns, out_rows


CONSISTENCY_COLUMNS = (
    "doc_id",
    "edu_id",
    "forms",
    "gold_class",
    "predicted_class",
    "erroneous",
    "covered",
    "consistent",
)


def consistency_table(report: ConsistencyReport) -> list[tuple]:
    return [
        (
            c.doc_id,
            c.edu_id,
            "|".join(c.forms),
            c.gold_class,
            c.predicted_class,
            c.erroneous,
            c.covered,
            c.consistent,
        )
        for c in report.cases
    ]


def consistency_header_lines(report: ConsistencyReport) -> list[str]:
    return [
        f"n_distractor_edus {report.n_distractor_edus}",
        f"n_erroneous {report.n_erroneous} ({report.pct_erroneous:.1f}%)",
        f"n_consistent {report.n_consistent} of "
        f"{report.n_consistent + report.n_inconsistent} covered "
        f"({report.pct_consistent:.1f}%)",
        f"n_uncovered {report.n_uncovered}",
    ]


CV_COLUMNS = ("metric", "value")


def cv_table(result: CvResult) -> list[tuple]:
    rows: list[tuple] = [
        (f"fold_{i}_accuracy", acc) for i, acc in enumerate(result.fold_accuracies)
    ]
    rows.append(("accuracy", result.accuracy))
    rows.append(("baseline_accuracy", result.baseline_accuracy))
    rows.append(("n_folds", result.n_folds))
    rows.append(("protocol", result.protocol))
    return rows


IMPORTANCE_COLUMNS = ("feature", "gain", "share")


def importance_table(model_or_importances) -> list[tuple]:
    return list(importance_report(model_or_importances))


PREDICTION_COLUMNS = ("doc_id", "edu_id", "probability", "predicted_hard", "actual_hard")


def prediction_table(predictions: Sequence[Prediction]) -> list[tuple]:
    return [
        (p.doc_id, p.edu_id, p.probability, p.predicted_hard, p.actual_hard)
        for p in predictions
    ]


AGREEMENT_COLUMNS = ("dm_f1", "relation_f1", "n_a", "n_b", "n_matched")


def agreement_table(score: AgreementScore) -> list[tuple]:
    return [(score.dm_f1, score.relation_f1, score.n_a, score.n_b, score.n_matched)]


CORPUS_STAT_COLUMNS = ("statistic", "value")


def corpus_stats_table(corpus: Corpus) -> list[tuple]:
    rows: list[tuple] = [
        ("n_documents", len(corpus.trees)),
        ("n_edus", sum(t.n_edus for t in corpus.trees.values())),
        ("n_tokens", sum(len(t.tokens) for t in corpus.trees.values())),
        ("n_signals", sum(1 for a in corpus.annotations if a.is_signal)),
        ("n_distractors", sum(1 for a in corpus.annotations if not a.is_signal)),
    ]
    genres = Counter(corpus.genre_of(d) for d in corpus.doc_ids)
    for genre in sorted(genres):
        rows.append((f"n_documents_{genre}", genres[genre]))
    for arch in sorted(corpus.predictions):
        runs = corpus.predictions[arch]
        rows.append((f"n_runs_{arch}", len(runs)))
    return rows


# ---------------------------------------------------------------------------
# figures


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


_PNG_METADATA = {"Software": "rstgauge"}


def render_density_figure(
    columns: Sequence[str], rows: Sequence[Sequence[str]], path: "Path | str"
) -> None:
    """Grouped bar chart of EDU counts by error count, one panel per
    architecture, bars per marker stratum; drawn from density-table rows."""
    idx = {c: i for i, c in enumerate(columns)}
    for needed in DENSITY_COLUMNS:
        if needed not in idx:
            raise CorpusError(f"density table lacks column {needed!r}")
    by_arch: dict[str, dict[str, dict[int, int]]] = {}
    for row in rows:
        arch = row[idx["architecture"]]
        stratum = row[idx["stratum"]]
        errors = int(row[idx["error_count"]])
        n = int(row[idx["n_edus"]])
        by_arch.setdefault(arch, {}).setdefault(stratum, {})[errors] = n
    archs = sorted(by_arch)
    if not archs:
        raise CorpusError("density table has no rows")

    plt = _pyplot()
    fig, axes = plt.subplots(
        1, len(archs), figsize=(4.2 * len(archs), 3.4), squeeze=False, sharey=True
    )
    colors = {s: f"C{i}" for i, s in enumerate(DENSITY_STRATA)}
    width = 0.8 / len(DENSITY_STRATA)
    for ax, arch in zip(axes[0], archs):
        strata = by_arch[arch]
        max_err = max((max(d) for d in strata.values() if d), default=0)
        xs = list(range(max_err + 1))
        for i, stratum in enumerate(DENSITY_STRATA):
            counts = strata.get(stratum, {})
            offs = [x + (i - (len(DENSITY_STRATA) - 1) / 2) * width for x in xs]
            ax.bar(
                offs,
                [counts.get(x, 0) for x in xs],
                width=width,
                color=colors[stratum],
                label=stratum,
            )
        ax.set_title(arch)
        ax.set_xlabel("error count")
        ax.set_xticks(xs)
    axes[0][0].set_ylabel("EDUs")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(str(path), format="png", dpi=100, metadata=dict(_PNG_METADATA))
    plt.close(fig)


def render_importance_figure(
    tables: dict[str, tuple[Sequence[str], Sequence[Sequence[str]]]],
    path: "Path | str",
) -> None:
    """Horizontal bars of gain share per feature, one panel per
    architecture; drawn from importance-table rows."""
    if not tables:
        raise CorpusError("no importance tables to draw")
    archs = sorted(tables)
    plt = _pyplot()
    fig, axes = plt.subplots(
        1, len(archs), figsize=(4.2 * len(archs), 3.4), squeeze=False
    )
    for ax, arch in zip(axes[0], archs):
        columns, rows = tables[arch]
        idx = {c: i for i, c in enumerate(columns)}
        for needed in IMPORTANCE_COLUMNS:
            if needed not in idx:
                raise CorpusError(f"importance table for {arch!r} lacks column {needed!r}")
        features = [row[idx["feature"]] for row in rows]
        shares = [float(row[idx["share"]]) for row in rows]
        ys = list(range(len(features)))[::-1]
        ax.barh(ys, shares, color="C0")
        ax.set_yticks(ys)
        ax.set_yticklabels(features, fontsize=8)
        ax.set_xlabel("gain share")
        ax.set_title(arch)
    fig.tight_layout()
    fig.savefig(str(path), format="png", dpi=100, metadata=dict(_PNG_METADATA))
    plt.close(fig)


__all__ = [
    "AGREEMENT_COLUMNS",
    "CONSISTENCY_COLUMNS",
    "CORPUS_STAT_COLUMNS",
    "CV_COLUMNS",
    "DENSITY_COLUMNS",
    "DENSITY_STRATA",
    "IMPORTANCE_COLUMNS",
    "PREDICTION_COLUMNS",
    "PROFILE_COLUMNS",
    "REGRESSION_COLUMNS",
    "SCORE_COLUMNS",
    "TEST_COLUMNS",
    "agreement_table",
    "artifact_header",
    "consistency_header_lines",
    "consistency_table",
    "corpus_stats_table",
    "cv_table",
    "density_table",
    "format_cell",
    "importance_table",
    "parseval_table",
    "prediction_table",
    "profile_table",
    "read_table",
    "regression_grid",
    "regression_header_lines",
    "regression_table",
    "render_density_figure",
    "render_importance_figure",
    "significance_table",
    "write_table",
]
