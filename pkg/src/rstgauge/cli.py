"""Command-line pipeline over a corpus of gold and predicted analyses.

Subcommands cover the full workflow: ``convert`` (trees to dependency
files), ``score`` (Parseval), ``errors`` (per-EDU error profiles),
``features`` (modeling table + marking statistics), ``stats`` (group
tests, beta regression, marker agreement, distractor consistency),
``fit``/``predict`` (gradient-boosted hard-EDU model), ``report``
(corpus statistics, density table, coefficient grid, figures) and
``pipeline`` (everything in order plus a hash manifest).

Configuration lives in one TOML file; command-line flags override file
values; the ``RSTGAUGE_CONFIG`` environment variable supplies the default
config path.  Relative paths inside the file resolve against the file's
directory.  Every artifact starts with a header recording the tool
version, a hash of the effective configuration, and the seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings as _warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Optional, Sequence

try:  # py3.11+
    import tomllib
except ImportError:  # pragma: no cover
    import tomli as tomllib  # type: ignore

from . import __version__
from .boosting import (
    GbtParams,
    ModelError,
    cross_validate,
    fit as fit_gbt,
    load_model,
    predict as predict_gbt,
    save_model,
)
from .core import CorpusError, RelationScheme, RstTree
from .features import build_rows, marking_stats, marking_stats_to_csv, rows_to_csv
from .ingest import (
    Corpus,
    load_corpus,
    load_vocabulary,
    read_dm_annotations,
    read_tree_file,
    write_rsd,
)
from .metrics import (
    ErrorProfile,
    error_profiles,
    majority_predicted_classes,
    micro_average,
    mutual_f1,
    parseval,
)
from .report import (
    AGREEMENT_COLUMNS,
    CONSISTENCY_COLUMNS,
    CORPUS_STAT_COLUMNS,
    CV_COLUMNS,
    DENSITY_COLUMNS,
    IMPORTANCE_COLUMNS,
    PREDICTION_COLUMNS,
    PROFILE_COLUMNS,
    REGRESSION_COLUMNS,
    SCORE_COLUMNS,
    TEST_COLUMNS,
    agreement_table,
    artifact_header,
    consistency_header_lines,
    consistency_table,
    corpus_stats_table,
    cv_table,
    density_table,
    importance_table,
    parseval_table,
    prediction_table,
    profile_table,
    read_table,
    regression_grid,
    regression_header_lines,
    regression_table,
    render_density_figure,
    render_importance_figure,
    significance_table,
    write_table,
)
from .stats import (
    AnalysisError,
    beta_fit,
    chi_square_phi,
    distractor_consistency,
    load_dm_class_map,
    lrt,
    welch_t,
)
from .treeops import to_dependencies

CONFIG_ENV_VAR = "RSTGAUGE_CONFIG"

COMMANDS = (
    "convert",
    "score",
    "errors",
    "features",
    "stats",
    "fit",
    "predict",
    "report",
    "pipeline",
)


class CliError(Exception):
    """A configuration or launch problem the user must fix."""


@dataclass(frozen=True)
class RunConfig:
    """The effective configuration of one run, after merging the config
    file and command-line flags.  Paths are absolute."""

    name: str = "corpus"
    gold_dir: Optional[Path] = None
    pred_dirs: tuple[tuple[str, Path], ...] = ()
    dm_path: Optional[Path] = None
    dm_second_path: Optional[Path] = None
    syntax_dir: Optional[Path] = None
    vocabulary_path: Optional[Path] = None
    out_dir: Optional[Path] = None
    scheme: str = "gum"
    dm_class_map: str = "gum"
    genre_field: int = 1
    hard_threshold: int = 3
    target: str = "attach"
    mode: str = "realistic"
    folds: int = 5
    seed: int = 0
    jobs: int = 1
    regression_features: tuple[str, ...] = ("dm_present", "length_tokens", "genre")
    n_rounds: int = 100
    max_depth: int = 4
    learning_rate: float = 0.1
    min_child_weight: float = 1.0
    l2_reg: float = 1.0
    subsample: float = 1.0

    def gbt_params(self) -> GbtParams:
        return GbtParams(
            n_rounds=self.n_rounds,
            max_depth=self.max_depth,
            learning_rate=self.learning_rate,
            min_child_weight=self.min_child_weight,
            l2_reg=self.l2_reg,
            subsample=self.subsample,
            seed=self.seed,
        )

    def as_dict(self) -> dict:
        out = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, Path):
                value = str(value)
            elif f.name == "pred_dirs":
                value = {arch: str(p) for arch, p in value}
            elif isinstance(value, tuple):
                value = list(value)
            out[f.name] = value
        return out

    @property
    def config_hash(self) -> str:
        identity = self.as_dict()
        del identity["out_dir"]  # where artifacts land doesn't change them
        del identity["jobs"]  # nor does how many workers computed them
        canonical = json.dumps(identity, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf8")).hexdigest()[:12]

    def header(self) -> tuple[str, ...]:
        return artifact_header(__version__, self.config_hash, self.seed)

    @property
    def architectures(self) -> tuple[str, ...]:
        return tuple(arch for arch, _ in self.pred_dirs)

    @property
    def response(self) -> str:
        return f"scaled_{self.target}"


# ---------------------------------------------------------------------------
# configuration loading


_PATH_KEYS = ("gold", "out", "dm", "dm_second", "syntax", "vocabulary", "predictions")
_ANALYSIS_KEYS = (
    "scheme",
    "dm_class_map",
    "genre_field",
    "hard_threshold",
    "target",
    "mode",
    "folds",
    "seed",
    "jobs",
    "regression_features",
)
_MODEL_KEYS = (
    "n_rounds",
    "max_depth",
    "learning_rate",
    "min_child_weight",
    "l2_reg",
    "subsample",
)


def _expect(value, types, where: str):
    allowed = types if isinstance(types, tuple) else (types,)
    ok = isinstance(value, allowed)
    if ok and isinstance(value, bool) and bool not in allowed:
        ok = False  # bool is an int subtype but not an acceptable int here
    if not ok:
        names = "/".join(t.__name__ for t in allowed)
        raise CliError(f"config key {where} must be {names}, got {type(value).__name__}")
    return value


def load_config_file(path: "Path | str") -> dict:
    """Parse and validate one TOML config file into override values.

    Returns a flat dict of RunConfig field overrides; unknown keys are
    rejected so typos fail loudly.
    """
    path = Path(path)
    if not path.is_file():
        raise CliError(f"config file not found: {path}")
    try:
        with path.open("rb") as handle:
            raw = tomllib.load(handle)
    except tomllib.TOMLDecodeError as exc:
        raise CliError(f"{path}: invalid TOML ({exc})") from None
    base = path.parent

    def resolve(p: str) -> Path:
        return (base / p).resolve() if not os.path.isabs(p) else Path(p)

    out: dict = {}
    for key in raw:
        if key not in ("name", "paths", "analysis", "model"):
            raise CliError(f"{path}: unknown config key {key!r}")
    if "name" in raw:
        out["name"] = _expect(raw["name"], str, "name")

    paths = raw.get("paths", {})
    _expect(paths, dict, "paths")
    for key in paths:
        if key not in _PATH_KEYS:
            raise CliError(f"{path}: unknown config key paths.{key!r}")
    if "gold" in paths:
        out["gold_dir"] = resolve(_expect(paths["gold"], str, "paths.gold"))
    if "out" in paths:
        out["out_dir"] = resolve(_expect(paths["out"], str, "paths.out"))
    if "dm" in paths:
        out["dm_path"] = resolve(_expect(paths["dm"], str, "paths.dm"))
    if "dm_second" in paths:
        out["dm_second_path"] = resolve(_expect(paths["dm_second"], str, "paths.dm_second"))
    if "syntax" in paths:
        out["syntax_dir"] = resolve(_expect(paths["syntax"], str, "paths.syntax"))
    if "vocabulary" in paths:
        out["vocabulary_path"] = resolve(_expect(paths["vocabulary"], str, "paths.vocabulary"))
    if "predictions" in paths:
        preds = _expect(paths["predictions"], dict, "paths.predictions")
        out["pred_dirs"] = tuple(
            (arch, resolve(_expect(preds[arch], str, f"paths.predictions.{arch}")))
            for arch in sorted(preds)
        )

    analysis = raw.get("analysis", {})
    _expect(analysis, dict, "analysis")
    for key in analysis:
        if key not in _ANALYSIS_KEYS:
            raise CliError(f"{path}: unknown config key analysis.{key!r}")
    for key in ("scheme", "dm_class_map", "target", "mode"):
        if key in analysis:
            out[key] = _expect(analysis[key], str, f"analysis.{key}")
    for key in ("genre_field", "hard_threshold", "folds", "seed", "jobs"):
        if key in analysis:
            out[key] = _expect(analysis[key], int, f"analysis.{key}")
    if "regression_features" in analysis:
        feats = _expect(analysis["regression_features"], list, "analysis.regression_features")
        out["regression_features"] = tuple(
            _expect(f, str, "analysis.regression_features[*]") for f in feats
        )
    if "scheme" in out and out["scheme"] not in ("gum", "rstdt"):
        out["scheme"] = str(resolve(out["scheme"]))
    if "dm_class_map" in out and out["dm_class_map"] not in ("gum", "rstdt"):
        out["dm_class_map"] = str(resolve(out["dm_class_map"]))

    model = raw.get("model", {})
    _expect(model, dict, "model")
    for key in model:
        if key not in _MODEL_KEYS:
            raise CliError(f"{path}: unknown config key model.{key!r}")
    for key in ("n_rounds", "max_depth"):
        if key in model:
            out[key] = _expect(model[key], int, f"model.{key}")
    for key in ("learning_rate", "min_child_weight", "l2_reg", "subsample"):
        if key in model:
            out[key] = float(_expect(model[key], (int, float), f"model.{key}"))
    return out


_FLAG_FIELDS = {
    "out": "out_dir",
    "seed": "seed",
    "jobs": "jobs",
    "hard_threshold": "hard_threshold",
    "target": "target",
    "mode": "mode",
    "folds": "folds",
}


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge config file (if any) and command-line flags; flags win."""
    overrides: dict = {}
    config_path = args.config or os.environ.get(CONFIG_ENV_VAR)
    if config_path:
        overrides.update(load_config_file(config_path))
    for flag, field_name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            if field_name == "out_dir":
                value = Path(value).resolve()
            overrides[field_name] = value
    cfg = RunConfig(**overrides)
    _validate_config(cfg)
    return cfg


def _validate_config(cfg: RunConfig) -> None:
    if cfg.target not in ("attach", "label", "either"):
        raise CliError(f"target must be attach, label or either, got {cfg.target!r}")
    if cfg.mode not in ("realistic", "full"):
        raise CliError(f"mode must be realistic or full, got {cfg.mode!r}")
    if cfg.hard_threshold < 1:
        raise CliError("hard_threshold must be at least 1")
    if cfg.folds < 2:
        raise CliError("folds must be at least 2")
    if cfg.jobs < 1:
        raise CliError("jobs must be at least 1")
    for label, p in (
        ("paths.gold", cfg.gold_dir),
        ("paths.dm", cfg.dm_path),
        ("paths.dm_second", cfg.dm_second_path),
        ("paths.syntax", cfg.syntax_dir),
        ("paths.vocabulary", cfg.vocabulary_path),
    ):
        if p is not None and not p.exists():
            raise CliError(f"{label}: path does not exist: {p}")
    for arch, p in cfg.pred_dirs:
        if not p.is_dir():
            raise CliError(f"paths.predictions.{arch}: directory does not exist: {p}")
    if cfg.scheme not in ("gum", "rstdt") and not Path(cfg.scheme).is_file():
        raise CliError(f"analysis.scheme: no such builtin or file: {cfg.scheme}")
    if cfg.dm_class_map not in ("gum", "rstdt") and not Path(cfg.dm_class_map).is_file():
        raise CliError(f"analysis.dm_class_map: no such builtin or file: {cfg.dm_class_map}")


_REQUIRED_KEYS: dict[str, tuple[str, ...]] = {
    "convert": ("gold",),
    "score": ("gold", "predictions"),
    "errors": ("gold", "predictions"),
    "features": ("gold", "predictions", "vocabulary"),
    "stats": ("gold", "predictions", "vocabulary"),
    "fit": ("gold", "predictions", "vocabulary"),
    "predict": ("gold", "predictions", "vocabulary"),
    "report": ("gold", "predictions"),
    "pipeline": ("gold", "predictions", "vocabulary"),
}


def _require_keys(cfg: RunConfig, command: str, skip_gold: bool = False) -> None:
    present = {
        "gold": cfg.gold_dir is not None,
        "predictions": bool(cfg.pred_dirs),
        "vocabulary": cfg.vocabulary_path is not None,
        "out": cfg.out_dir is not None,
    }
    needed = _REQUIRED_KEYS[command] + ("out",)
    for key in needed:
        if skip_gold and key == "gold":
            continue
        if not present[key]:
            raise CliError(f"missing required config key: paths.{key}")


# ---------------------------------------------------------------------------
# shared stage plumbing


def _load_scheme(cfg: RunConfig) -> RelationScheme:
    if cfg.scheme in ("gum", "rstdt"):
        return RelationScheme.builtin(cfg.scheme)
    return RelationScheme.from_file(cfg.scheme)


def _load_run_corpus(cfg: RunConfig) -> tuple[Corpus, list[str]]:
    scheme = _load_scheme(cfg)
    vocabulary = None
    if cfg.vocabulary_path is not None:
        vocabulary = load_vocabulary(cfg.vocabulary_path, scheme)
    return load_corpus(
        cfg.name,
        scheme,
        cfg.gold_dir,
        pred_dirs={arch: p for arch, p in cfg.pred_dirs},
        dm_path=cfg.dm_path,
        syntax_dir=cfg.syntax_dir,
        vocabulary=vocabulary,
        genre_field=cfg.genre_field,
        strict=False,
    )


def _arch_profiles(
    cfg: RunConfig, corpus: Corpus, arch: str
) -> tuple[list[ErrorProfile], list[str]]:
    """Error profiles for every document an architecture predicted."""
    runs_by_k = corpus.predictions.get(arch, {})
    profiles: list[ErrorProfile] = []
    errors: list[str] = []
    for doc in corpus.doc_ids:
        doc_runs = [runs_by_k[k][doc] for k in sorted(runs_by_k) if doc in runs_by_k[k]]
        if not doc_runs:
            errors.append(f"{arch}: no predictions for document {doc!r}")
            continue
        try:
            profiles.extend(
                error_profiles(
                    corpus.graphs[doc],
                    doc_runs,
                    scheme=corpus.scheme,
                    hard_threshold=cfg.hard_threshold,
                    target=cfg.target,
                )
            )
        except CorpusError as exc:
            errors.append(f"{arch}: {exc}")
    return profiles, errors


def _arch_rows(cfg: RunConfig, corpus: Corpus, arch: str):
    profiles, errors = _arch_profiles(cfg, corpus, arch)
    if not profiles:
        return [], errors
    try:
        rows = build_rows(corpus, profiles)
    except CorpusError as exc:
        return [], errors + [f"{arch}: {exc}"]
    return rows, errors


def _out_dir(cfg: RunConfig) -> Path:
    assert cfg.out_dir is not None
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


# ---------------------------------------------------------------------------
# stages


def stage_convert(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Write every gold and predicted analysis as a dependency file."""
    header = cfg.header()
    tasks: list[tuple[Path, object]] = []
    gold_dir = out / "rsd" / "gold"
    gold_dir.mkdir(parents=True, exist_ok=True)
    for doc in corpus.doc_ids:
        tasks.append((gold_dir / f"{doc}.rsd", corpus.graphs[doc]))
    for arch in sorted(corpus.predictions):
        arch_dir = out / "rsd" / arch
        arch_dir.mkdir(parents=True, exist_ok=True)
        runs_by_k = corpus.predictions[arch]
        for k in sorted(runs_by_k):
            for doc in sorted(runs_by_k[k]):
                tasks.append((arch_dir / f"{doc}.run{k}.rsd", runs_by_k[k][doc]))

    def write_one(task) -> Optional[str]:
        path, graph = task
        try:
            write_rsd(graph, path, header=header)
            return None
        except OSError as exc:
            return f"{path.name}: {exc}"

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(write_one, tasks))
    else:
        results = [write_one(t) for t in tasks]
    return [r for r in results if r is not None]


def convert_files(cfg: RunConfig, files: Sequence[str], out: Path) -> list[str]:
    """Convert explicitly named tree/dependency files to rsd files.

    Malformed inputs are reported and skipped; every readable file still
    produces an output.
    """
    header = cfg.header()
    scheme = _load_scheme(cfg)

    def convert_one(name: str) -> Optional[str]:
        path = Path(name)
        try:
            loaded = read_tree_file(path, scheme=scheme)
            graph = to_dependencies(loaded) if isinstance(loaded, RstTree) else loaded
            write_rsd(graph, out / f"{path.stem}.rsd", header=header)
            return None
        except (CorpusError, OSError) as exc:
            message = str(exc)
            return message if str(path) in message else f"{path}: {message}"

    ordered = list(files)
    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(convert_one, ordered))
    else:
        results = [convert_one(n) for n in ordered]
    return [r for r in results if r is not None]


def stage_score(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Parseval scores per architecture and run, plus per-run micro rows."""
    header = cfg.header()
    errors: list[str] = []
    for arch in cfg.architectures:
        tree_runs = corpus.pred_trees.get(arch, {})
        runs_with_trees = {k: v for k, v in tree_runs.items() if v}
        if not runs_with_trees:
            errors.append(f"{arch}: no constituent predictions to score")
            continue
        summary_rows: list[tuple] = []
        micros = []
        for k in sorted(runs_with_trees):
            scores = []
            for doc in sorted(runs_with_trees[k]):
                try:
                    scores.append(
                        parseval(corpus.trees[doc], runs_with_trees[k][doc], scheme=corpus.scheme)
                    )
                except CorpusError as exc:
                    errors.append(f"{arch} run {k}: {exc}")
            if not scores:
                continue
            micro = micro_average(scores)
            micros.append(micro)
            write_table(
                out / f"scores_{arch}_run{k}.csv",
                SCORE_COLUMNS,
                parseval_table(scores + [micro]),
                header,
            )
            summary_rows.append((f"run{k}", micro.S, micro.N, micro.R, micro.n_spans))
        if micros:
            n = len(micros)
            summary_rows.append(
                (
                    "mean",
                    sum(m.S for m in micros) / n,
                    sum(m.N for m in micros) / n,
                    sum(m.R for m in micros) / n,
                    sum(m.n_spans for m in micros) / n,
                )
            )
            write_table(
                out / f"scores_{arch}_mean.csv",
                ("run",) + SCORE_COLUMNS[1:],
                summary_rows,
                header,
            )
    return errors


def stage_errors(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Per-EDU error profiles per architecture."""
    header = cfg.header()
    errors: list[str] = []
    for arch in cfg.architectures:
        profiles, errs = _arch_profiles(cfg, corpus, arch)
        errors.extend(errs)
        if profiles:
            write_table(
                out / f"errors_{arch}.csv", PROFILE_COLUMNS, profile_table(profiles), header
            )
    return errors


def stage_features(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Modeling feature table per architecture plus marking statistics.

    The feature artifact always carries the full column set; the
    configured mode only restricts what models may look at.
    """
    header = cfg.header()
    errors: list[str] = []
    for arch in cfg.architectures:
        rows, errs = _arch_rows(cfg, corpus, arch)
        errors.extend(errs)
        if rows:
            rows_to_csv(rows, out / f"features_{arch}.csv", mode="full", header=header)
    try:
        marking_stats_to_csv(marking_stats(corpus), out / "marking.csv", header=header)
    except CorpusError as exc:
        errors.append(f"marking: {exc}")
    return errors


def _group_tests(cfg: RunConfig, rows) -> tuple[list[tuple], list[str]]:
    """Welch and chi-square comparisons over marker strata."""
    response = cfg.response
    results: list[tuple] = []
    errors: list[str] = []
    splits = (
        ("dm_present", "dm"),
        ("distractor_present", "distractor"),
        ("signal_dm", "signal"),
    )
    for feat, label in splits:
        with_marker = [float(r.value(response)) for r in rows if r.value(feat)]
        without = [float(r.value(response)) for r in rows if not r.value(feat)]
        name = f"{response}~{feat}"
        try:
            result = welch_t(with_marker, without)
            results.append((name, result, len(with_marker), len(without)))
        except AnalysisError as exc:
            errors.append(f"{name}: {exc}")
        table = [
            [
                sum(1 for r in rows if r.target_hard and r.value(feat)),
                sum(1 for r in rows if r.target_hard and not r.value(feat)),
            ],
            [
                sum(1 for r in rows if not r.target_hard and r.value(feat)),
                sum(1 for r in rows if not r.target_hard and not r.value(feat)),
            ],
        ]
        name = f"hard~{feat}"
        try:
            result = chi_square_phi(table)
            results.append(
                (name, result, table[0][0] + table[1][0], table[0][1] + table[1][1])
            )
        except AnalysisError as exc:
            errors.append(f"{name}: {exc}")
    return results, errors


def stage_stats(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Group tests, beta regression, agreement and distractor consistency."""
    header = cfg.header()
    errors: list[str] = []
    for arch in cfg.architectures:
        rows, errs = _arch_rows(cfg, corpus, arch)
        errors.extend(errs)
        if not rows:
            continue
        tests, test_errors = _group_tests(cfg, rows)
        errors.extend(f"{arch}: {e}" for e in test_errors)
        if tests:
            write_table(
                out / f"group_tests_{arch}.csv", TEST_COLUMNS, significance_table(tests), header
            )
        try:
            with _warnings.catch_warnings(record=True) as caught:
                _warnings.simplefilter("always")
                full = beta_fit(rows, cfg.regression_features, response=cfg.response)
                reduced = beta_fit(rows, (), response=cfg.response)
                lrt_result = lrt(full, reduced)
            extra = [f"warning {w.message}" for w in caught]
            write_table(
                out / f"regression_{arch}.csv",
                REGRESSION_COLUMNS,
                regression_table(full),
                tuple(header) + tuple(regression_header_lines(full, lrt_result)) + tuple(extra),
            )
        except AnalysisError as exc:
            errors.append(f"{arch}: regression: {exc}")
        if corpus.annotations:
            profiles, _ = _arch_profiles(cfg, corpus, arch)
            majority: dict[tuple[str, int], str] = {}
            runs_by_k = corpus.predictions.get(arch, {})
            for doc in corpus.doc_ids:
                doc_runs = [
                    runs_by_k[k][doc] for k in sorted(runs_by_k) if doc in runs_by_k[k]
                ]
                if not doc_runs:
                    continue
                for edu_id, cls in majority_predicted_classes(doc_runs, corpus.scheme).items():
                    majority[(doc, edu_id)] = cls
            try:
                class_map = load_dm_class_map(cfg.dm_class_map)
                consistency = distractor_consistency(corpus, profiles, majority, class_map)
                write_table(
                    out / f"consistency_{arch}.csv",
                    CONSISTENCY_COLUMNS,
                    consistency_table(consistency),
                    tuple(header) + tuple(consistency_header_lines(consistency)),
                )
            except CorpusError as exc:
                errors.append(f"{arch}: consistency: {exc}")
    if cfg.dm_second_path is not None:
        if cfg.dm_path is None:
            errors.append("agreement: paths.dm_second given without paths.dm")
        else:
            try:
                first = read_dm_annotations(cfg.dm_path)
                second = read_dm_annotations(cfg.dm_second_path)
                score = mutual_f1(first, second)
                write_table(
                    out / "agreement.csv", AGREEMENT_COLUMNS, agreement_table(score), header
                )
            except CorpusError as exc:
                errors.append(f"agreement: {exc}")
    return errors


def stage_fit(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Fit the hard-EDU model per architecture; cross-validate; rank features."""
    header = cfg.header()
    errors: list[str] = []
    for arch in cfg.architectures:
        rows, errs = _arch_rows(cfg, corpus, arch)
        errors.extend(errs)
        if not rows:
            continue
        params = cfg.gbt_params()
        try:
            model = fit_gbt(rows, cfg.mode, params)
            cv = cross_validate(rows, cfg.mode, params, k_folds=cfg.folds)
        except ModelError as exc:
            errors.append(f"{arch}: fit: {exc}")
            continue
        save_model(model, out / f"model_{arch}.txt", header=header)
        write_table(out / f"cv_{arch}.csv", CV_COLUMNS, cv_table(cv), header)
        write_table(
            out / f"importances_{arch}.csv",
            IMPORTANCE_COLUMNS,
            importance_table(model),
            header,
        )
    return errors


def stage_predict(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Score every EDU with a previously fitted model."""
    header = cfg.header()
    errors: list[str] = []
    for arch in cfg.architectures:
        model_path = out / f"model_{arch}.txt"
        if not model_path.is_file():
            errors.append(f"{arch}: missing model artifact {model_path.name}")
            continue
        rows, errs = _arch_rows(cfg, corpus, arch)
        errors.extend(errs)
        if not rows:
            continue
        try:
            model = load_model(model_path)
            predictions = predict_gbt(model, rows)
        except ModelError as exc:
            errors.append(f"{arch}: predict: {exc}")
            continue
        write_table(
            out / f"predictions_{arch}.csv",
            PREDICTION_COLUMNS,
            prediction_table(predictions),
            header,
        )
    return errors


def _parse_bool(cell: str) -> bool:
    return cell == "true"


def _profiles_from_table(path: Path) -> list[ErrorProfile]:
    _, columns, rows = read_table(path)
    idx = {c: i for i, c in enumerate(columns)}
    for needed in PROFILE_COLUMNS:
        if needed not in idx:
            raise CorpusError(f"{path.name}: missing column {needed!r}")
    out = []
    for row in rows:
        out.append(
            ErrorProfile(
                doc_id=row[idx["doc_id"]],
                edu_id=int(row[idx["edu_id"]]),
                n_runs=int(row[idx["n_runs"]]),
                attach_errors=int(row[idx["attach_errors"]]),
                label_errors=int(row[idx["label_errors"]]),
                either_errors=int(row[idx["either_errors"]]),
                scaled_attach=float(row[idx["scaled_attach"]]),
                scaled_label=float(row[idx["scaled_label"]]),
                scaled_either=float(row[idx["scaled_either"]]),
                is_hard=_parse_bool(row[idx["is_hard"]]),
                target=row[idx["target"]],
            )
        )
    return out


def _marker_flags_from_table(path: Path) -> dict[tuple[str, int], tuple[bool, bool]]:
    _, columns, rows = read_table(path)
    idx = {c: i for i, c in enumerate(columns)}
    for needed in ("doc_id", "edu_id", "dm_present", "distractor_present"):
        if needed not in idx:
            raise CorpusError(f"{path.name}: missing column {needed!r}")
    return {
        (row[idx["doc_id"]], int(row[idx["edu_id"]])): (
            _parse_bool(row[idx["dm_present"]]),
            _parse_bool(row[idx["distractor_present"]]),
        )
        for row in rows
    }


def stage_report(cfg: RunConfig, corpus: Corpus, out: Path) -> list[str]:
    """Assemble cross-architecture summaries from earlier artifacts.

    Corpus statistics come from the corpus itself; the density table,
    coefficient grid and figures are built strictly from the artifacts the
    earlier stages wrote, so a missing artifact is reported by name.
    """
    header = cfg.header()
    errors: list[str] = []
    write_table(out / "corpus_stats.csv", CORPUS_STAT_COLUMNS, corpus_stats_table(corpus), header)

    profiles_by_arch: dict[str, list[ErrorProfile]] = {}
    marker_flags: dict[tuple[str, int], tuple[bool, bool]] = {}
    for arch in cfg.architectures:
        errors_path = out / f"errors_{arch}.csv"
        features_path = out / f"features_{arch}.csv"
        missing = [p.name for p in (errors_path, features_path) if not p.is_file()]
        if missing:
            errors.extend(f"{arch}: missing upstream artifact {name}" for name in missing)
            continue
        try:
            profiles_by_arch[arch] = _profiles_from_table(errors_path)
            marker_flags.update(_marker_flags_from_table(features_path))
        except CorpusError as exc:
            errors.append(f"{arch}: {exc}")
    if profiles_by_arch:
        try:
            density_rows = density_table(profiles_by_arch, marker_flags, target=cfg.target)
            write_table(out / "density.csv", DENSITY_COLUMNS, density_rows, header)
            render_density_figure(
                DENSITY_COLUMNS,
                [[str(v) for v in row] for row in density_rows],
                out / "density.png",
            )
        except CorpusError as exc:
            errors.append(f"density: {exc}")

    regression_tables: dict[str, tuple[list[str], list[list[str]]]] = {}
    for arch in cfg.architectures:
        path = out / f"regression_{arch}.csv"
        if not path.is_file():
            errors.append(f"{arch}: missing upstream artifact {path.name}")
            continue
        _, columns, rows = read_table(path)
        regression_tables[arch] = (columns, rows)
    if regression_tables:
        try:
            grid_columns, grid_rows = regression_grid(regression_tables)
            write_table(out / "regression_grid.csv", grid_columns, grid_rows, header)
        except CorpusError as exc:
            errors.append(f"regression grid: {exc}")

    importance_tables: dict[str, tuple[list[str], list[list[str]]]] = {}
    for arch in cfg.architectures:
        path = out / f"importances_{arch}.csv"
        if not path.is_file():
            errors.append(f"{arch}: missing upstream artifact {path.name}")
            continue
        _, columns, rows = read_table(path)
        importance_tables[arch] = (columns, rows)
    if importance_tables:
        try:
            render_importance_figure(importance_tables, out / "importances.png")
        except CorpusError as exc:
            errors.append(f"importances figure: {exc}")
    return errors


def write_manifest(cfg: RunConfig, out: Path) -> Path:
    """Hash every artifact under the output directory into manifest.json."""
    files: dict[str, str] = {}
    for path in sorted(out.rglob("*")):
        if not path.is_file() or path.name == "manifest.json":
            continue
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        files[path.relative_to(out).as_posix()] = digest
    manifest = {
        "version": __version__,
        "config_hash": cfg.config_hash,
        "seed": cfg.seed,
        "files": files,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf8")
    return path


_STAGES: tuple[tuple[str, Callable[[RunConfig, Corpus, Path], list[str]]], ...] = (
    ("convert", stage_convert),
    ("score", stage_score),
    ("errors", stage_errors),
    ("features", stage_features),
    ("stats", stage_stats),
    ("fit", stage_fit),
    ("predict", stage_predict),
    ("report", stage_report),
)


def run_command(command: str, cfg: RunConfig, files: Sequence[str] = ()) -> list[str]:
    """Run one subcommand; returns the error strings it produced."""
    if command == "convert" and files:
        if cfg.out_dir is None:
            raise CliError("missing required config key: paths.out")
        return convert_files(cfg, files, _out_dir(cfg))
    _require_keys(cfg, command)
    out = _out_dir(cfg)
    corpus, load_errors = _load_run_corpus(cfg)
    if command == "pipeline":
        if load_errors:
            return [f"load: {e}" for e in load_errors]
        for stage_name, stage in _STAGES:
            stage_errors_ = stage(cfg, corpus, out)
            if stage_errors_:
                return [f"{stage_name}: {e}" for e in stage_errors_]
        write_manifest(cfg, out)
        return []
    stage = dict(_STAGES)[command]
    return load_errors + stage(cfg, corpus, out)


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rstgauge",
        description="Measure, profile and model the errors of RST discourse parsers.",
    )
    parser.add_argument("--version", action="version", version=f"rstgauge {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "convert": "convert tree files to dependency (.rsd) files",
        "score": "Parseval-score predicted trees against gold",
        "errors": "profile per-EDU errors across runs",
        "features": "extract the modeling feature table",
        "stats": "run group tests, regression, agreement, consistency",
        "fit": "fit and cross-validate the hard-EDU model",
        "predict": "apply a fitted model to the corpus",
        "report": "assemble summary tables and figures from artifacts",
        "pipeline": "run every stage in order and write a manifest",
    }
    for command in COMMANDS:
        p = sub.add_parser(command, help=helps[command])
        p.add_argument("--config", help=f"TOML config file (default: ${CONFIG_ENV_VAR})")
        p.add_argument("--out", help="output directory (overrides paths.out)")
        p.add_argument("--seed", type=int, help="seed recorded in artifacts and used by models")
        p.add_argument("--jobs", type=int, help="per-document parallelism (default 1)")
        p.add_argument(
            "--hard-threshold",
            type=int,
            dest="hard_threshold",
            help="errors (out of k runs) at which an EDU counts as hard",
        )
        p.add_argument(
            "--target", choices=["attach", "label", "either"], help="which error count to analyze"
        )
        p.add_argument(
            "--mode", choices=["realistic", "full"], help="feature set for the boosted model"
        )
        p.add_argument("--folds", type=int, help="cross-validation folds")
        if command == "convert":
            p.add_argument(
                "files",
                nargs="*",
                help="tree/dependency files to convert (default: whole corpus)",
            )
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = build_config(args)
        errors = run_command(args.command, cfg, getattr(args, "files", ()))
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for e in errors:
        print(f"error: {e}", file=sys.stderr)
    return 1 if errors else 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
