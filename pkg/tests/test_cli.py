"""Command-line interface: config handling, stages, artifacts, manifest."""

import hashlib
import json
from pathlib import Path

import pytest

from rstgauge.boosting import load_model
from rstgauge.cli import (
    CliError,
    RunConfig,
    build_config,
    load_config_file,
    main,
)
from rstgauge.core import RelationScheme
from rstgauge.ingest import load_corpus, read_rsd
from rstgauge.report import read_table
from rstgauge.treeops import to_dependencies

TOY = Path(__file__).parent / "data" / "toy"
CONFIG = TOY / "config.toml"

ARCHS = ("bottomup", "topdown")
N_DOCS = 3
N_RUNS = 5
N_EDUS = 24  # 3 documents x 8 EDUs


def run_cli(*args: str) -> int:
    return main([str(a) for a in args])


@pytest.fixture(scope="module")
def pipeline_out(tmp_path_factory) -> Path:
    """One completed pipeline run shared by the artifact checks."""
    out = tmp_path_factory.mktemp("pipeline")
    code = main(["pipeline", "--config", str(CONFIG), "--out", str(out)])
    assert code == 0
    return out


# ---------------------------------------------------------------------------
# config file loading


def test_load_config_file_resolves_paths_and_values():
    values = load_config_file(CONFIG)
    assert values["name"] == "toy"
    assert values["gold_dir"] == (TOY / "gold").resolve()
    assert dict(values["pred_dirs"]) == {
        "bottomup": (TOY / "pred" / "bottomup").resolve(),
        "topdown": (TOY / "pred" / "topdown").resolve(),
    }
    assert values["vocabulary_path"] == (TOY / "vocab.txt").resolve()
    assert values["hard_threshold"] == 3
    assert values["folds"] == 3
    assert values["seed"] == 20240818
    assert values["n_rounds"] == 60
    assert values["max_depth"] == 3


def test_load_config_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[paths]\ngolden = 'x'\n", encoding="utf8")
    with pytest.raises(CliError, match="golden"):
        load_config_file(path)
    path.write_text("[analysis]\nseeds = 3\n", encoding="utf8")
    with pytest.raises(CliError, match="seeds"):
        load_config_file(path)
    path.write_text("mystery = 1\n", encoding="utf8")
    with pytest.raises(CliError, match="mystery"):
        load_config_file(path)


def test_load_config_file_rejects_wrong_types(tmp_path):
    path = tmp_path / "c.toml"
    path.write_text("[analysis]\nfolds = 'three'\n", encoding="utf8")
    with pytest.raises(CliError, match="analysis.folds"):
        load_config_file(path)
    path.write_text("[analysis]\nfolds = true\n", encoding="utf8")
    with pytest.raises(CliError, match="analysis.folds"):
        load_config_file(path)


def test_load_config_file_missing_or_invalid(tmp_path):
    with pytest.raises(CliError, match="not found"):
        load_config_file(tmp_path / "absent.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("= nonsense", encoding="utf8")
    with pytest.raises(CliError, match="invalid TOML"):
        load_config_file(bad)


# ---------------------------------------------------------------------------
# config merging and validation


class Args:
    """Minimal stand-in for the parsed argparse namespace."""

    def __init__(self, **kw):
        self.config = kw.pop("config", None)
        self.out = kw.pop("out", None)
        self.seed = kw.pop("seed", None)
        self.jobs = kw.pop("jobs", None)
        self.hard_threshold = kw.pop("hard_threshold", None)
        self.target = kw.pop("target", None)
        self.mode = kw.pop("mode", None)
        self.folds = kw.pop("folds", None)
        assert not kw


def test_flags_override_config_file(tmp_path):
    cfg = build_config(
        Args(config=str(CONFIG), out=str(tmp_path), seed=99, target="label", jobs=2)
    )
    assert cfg.seed == 99
    assert cfg.target == "label"
    assert cfg.jobs == 2
    assert cfg.out_dir == tmp_path.resolve()
    # untouched values still come from the file
    assert cfg.folds == 3
    assert cfg.hard_threshold == 3


def test_env_var_supplies_default_config(monkeypatch, tmp_path):
    monkeypatch.setenv("RSTGAUGE_CONFIG", str(CONFIG))
    cfg = build_config(Args(out=str(tmp_path)))
    assert cfg.name == "toy"
    assert cfg.seed == 20240818


def test_explicit_config_beats_env_var(monkeypatch, tmp_path):
    other = tmp_path / "other.toml"
    other.write_text('name = "other"\n', encoding="utf8")
    monkeypatch.setenv("RSTGAUGE_CONFIG", str(other))
    cfg = build_config(Args(config=str(CONFIG)))
    assert cfg.name == "toy"


def test_launch_rejects_missing_paths(tmp_path):
    cfg_file = tmp_path / "c.toml"
    cfg_file.write_text('[paths]\ngold = "nowhere"\n', encoding="utf8")
    with pytest.raises(CliError, match="paths.gold"):
        build_config(Args(config=str(cfg_file)))


def test_launch_rejects_bad_enum_values():
    with pytest.raises(CliError, match="target"):
        build_config(Args(config=str(CONFIG), target="sideways"))


def test_config_hash_ignores_execution_knobs_but_not_seed(tmp_path):
    base = RunConfig(out_dir=tmp_path / "a")
    assert base.config_hash == RunConfig(out_dir=tmp_path / "b").config_hash
    assert base.config_hash == RunConfig(out_dir=tmp_path / "a", jobs=8).config_hash
    assert base.config_hash != RunConfig(out_dir=tmp_path / "a", seed=1).config_hash
    assert len(base.config_hash) == 12


def test_missing_required_key_is_named(tmp_path, capsys):
    cfg_file = tmp_path / "c.toml"
    cfg_file.write_text(f'[paths]\ngold = "{TOY / "gold"}"\n', encoding="utf8")
    code = run_cli("fit", "--config", cfg_file, "--out", tmp_path / "out")
    assert code == 2
    err = capsys.readouterr().err
    assert "paths.predictions" in err

    cfg_file.write_text(
        f'[paths]\ngold = "{TOY / "gold"}"\n'
        f'predictions = {{ bottomup = "{TOY / "pred" / "bottomup"}" }}\n',
        encoding="utf8",
    )
    code = run_cli("fit", "--config", cfg_file, "--out", tmp_path / "out")
    assert code == 2
    assert "paths.vocabulary" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# convert


def expect_header(path: Path) -> None:
    header, _, _ = read_table(path)
    assert header[0].startswith("rstgauge ")
    assert header[1].startswith("config ")
    assert header[2].startswith("seed ")


def test_convert_corpus_writes_gold_and_runs(tmp_path):
    out = tmp_path / "out"
    assert run_cli("convert", "--config", CONFIG, "--out", out) == 0
    gold_files = sorted((out / "rsd" / "gold").glob("*.rsd"))
    assert len(gold_files) == N_DOCS
    for arch in ARCHS:
        assert len(list((out / "rsd" / arch).glob("*.rsd"))) == N_DOCS * N_RUNS
    # a converted file starts with the provenance header ...
    first = gold_files[0].read_text(encoding="utf8").splitlines()
    assert first[0].startswith("# rstgauge ")
    assert first[1].startswith("# config ")
    assert first[2].startswith("# seed ")
    # ... and reads back equal to the in-memory conversion of the gold tree
    scheme = RelationScheme.builtin("gum")
    corpus, errors = load_corpus("toy", scheme, TOY / "gold", genre_field=1)
    assert errors == []
    for doc_id, tree in corpus.trees.items():
        assert read_rsd(out / "rsd" / "gold" / f"{doc_id}.rsd") == to_dependencies(tree)


def test_convert_files_skips_malformed_but_converts_rest(tmp_path, capsys):
    src = tmp_path / "in"
    src.mkdir()
    for p in (TOY / "gold").glob("*.rs3"):
        (src / p.name).write_bytes(p.read_bytes())
    (src / "broken_doc_zz.rs3").write_text("<rst><unclosed", encoding="utf8")
    out = tmp_path / "out"
    files = sorted(src.glob("*.rs3"))
    code = run_cli("convert", "--config", CONFIG, "--out", out, *files)
    assert code == 1
    assert len(list(out.glob("*.rsd"))) == N_DOCS
    err = capsys.readouterr().err
    assert "broken_doc_zz" in err


def test_convert_parallel_matches_serial(tmp_path):
    out1 = tmp_path / "serial"
    out2 = tmp_path / "parallel"
    assert run_cli("convert", "--config", CONFIG, "--out", out1) == 0
    assert run_cli("convert", "--config", CONFIG, "--out", out2, "--jobs", "4") == 0
    files1 = sorted(p.relative_to(out1) for p in out1.rglob("*.rsd"))
    files2 = sorted(p.relative_to(out2) for p in out2.rglob("*.rsd"))
    assert files1 == files2
    for rel in files1:
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes()


# ---------------------------------------------------------------------------
# per-stage artifacts (shared pipeline run)


def test_score_artifacts(pipeline_out):
    for arch in ARCHS:
        for run in range(1, N_RUNS + 1):
            path = pipeline_out / f"scores_{arch}_run{run}.csv"
            expect_header(path)
            _, columns, rows = read_table(path)
            assert columns == ["doc_id", "S", "N", "R", "n_spans"]
            assert [r[0] for r in rows] == sorted(r[0] for r in rows[:-1]) + ["ALL"]
            assert len(rows) == N_DOCS + 1
            for r in rows:
                assert 0.0 <= float(r[1]) <= 100.0
        _, columns, rows = read_table(pipeline_out / f"scores_{arch}_mean.csv")
        assert columns == ["run", "S", "N", "R", "n_spans"]
        assert [r[0] for r in rows] == [f"run{k}" for k in range(1, N_RUNS + 1)] + ["mean"]


def test_errors_artifacts(pipeline_out):
    for arch in ARCHS:
        path = pipeline_out / f"errors_{arch}.csv"
        expect_header(path)
        _, columns, rows = read_table(path)
        assert columns[:3] == ["doc_id", "edu_id", "n_runs"]
        assert len(rows) == N_EDUS
        hard = [r for r in rows if r[columns.index("is_hard")] == "true"]
        assert len(hard) == 6


def test_features_artifacts(pipeline_out):
    for arch in ARCHS:
        path = pipeline_out / f"features_{arch}.csv"
        expect_header(path)
        _, columns, rows = read_table(path)
        # the artifact always carries the full feature set
        for needed in ("dm_present", "distractor_present", "gold_class", "target_hard"):
            assert needed in columns
        assert len(rows) == N_EDUS
    expect_header(pipeline_out / "marking.csv")


def test_stats_artifacts(pipeline_out):
    for arch in ARCHS:
        _, columns, rows = read_table(pipeline_out / f"group_tests_{arch}.csv")
        kinds = {r[columns.index("kind")] for r in rows}
        assert kinds == {"welch_t", "chi_square"}
        names = {r[0] for r in rows}
        assert "scaled_attach~dm_present" in names
        assert "hard~distractor_present" in names

        header, columns, rows = read_table(pipeline_out / f"regression_{arch}.csv")
        assert columns == ["term", "coefficient", "std_error", "p_value", "stars"]
        terms = [r[0] for r in rows]
        assert terms[0] == "(intercept)"
        assert "dm_present" in terms and "length_tokens" in terms
        assert any(line.startswith("lrt_vs_intercept") for line in header)

        expect_header(pipeline_out / f"consistency_{arch}.csv")

    _, columns, rows = read_table(pipeline_out / "agreement.csv")
    assert columns == ["dm_f1", "relation_f1", "n_a", "n_b", "n_matched"]
    assert len(rows) == 1
    assert float(rows[0][0]) == pytest.approx(100.0 * 2 * (12 / 13) / 2, abs=1e-9)
    assert float(rows[0][1]) == pytest.approx(100.0 * 11 / 12, abs=1e-9)


def test_fit_artifacts(pipeline_out):
    for arch in ARCHS:
        model = load_model(pipeline_out / f"model_{arch}.txt")
        assert model.params.n_rounds == 60
        assert model.params.seed == 20240818
        _, columns, rows = read_table(pipeline_out / f"cv_{arch}.csv")
        metrics = dict(zip((r[0] for r in rows), (r[1] for r in rows)))
        assert metrics["n_folds"] == "3"
        assert "accuracy" in metrics and "baseline_accuracy" in metrics
        _, columns, rows = read_table(pipeline_out / f"importances_{arch}.csv")
        assert columns == ["feature", "gain", "share"]
        shares = [float(r[2]) for r in rows]
        assert sum(shares) == pytest.approx(1.0, abs=1e-9)


def test_predict_artifacts(pipeline_out):
    for arch in ARCHS:
        _, columns, rows = read_table(pipeline_out / f"predictions_{arch}.csv")
        assert columns == ["doc_id", "edu_id", "probability", "predicted_hard", "actual_hard"]
        assert len(rows) == N_EDUS
        for r in rows:
            assert 0.0 <= float(r[2]) <= 1.0


def test_predict_without_model_names_artifact(tmp_path, capsys):
    out = tmp_path / "out"
    code = run_cli("predict", "--config", CONFIG, "--out", out)
    assert code == 1
    err = capsys.readouterr().err
    assert "model_bottomup.txt" in err and "model_topdown.txt" in err


def test_report_artifacts(pipeline_out):
    _, columns, rows = read_table(pipeline_out / "density.csv")
    assert columns == ["architecture", "stratum", "error_count", "n_edus"]
    by_arch_stratum: dict[tuple, list] = {}
    for r in rows:
        by_arch_stratum.setdefault((r[0], r[1]), []).append(int(r[2]))
    for (arch, stratum), counts in by_arch_stratum.items():
        assert counts == list(range(N_RUNS + 1))  # zero-filled, gap-free
    per_arch = {arch for arch, _ in by_arch_stratum}
    assert per_arch == set(ARCHS)
    # every EDU lands in exactly one dm stratum and one distractor stratum
    for arch in ARCHS:
        total = sum(
            int(r[3]) for r in rows if r[0] == arch and r[1] in ("dm", "no_dm")
        )
        assert total == N_EDUS

    _, columns, rows = read_table(pipeline_out / "regression_grid.csv")
    assert columns[0] == "term"
    assert "bottomup_coefficient" in columns and "topdown_p_value" in columns

    for figure in ("density.png", "importances.png"):
        assert (pipeline_out / figure).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    _, columns, rows = read_table(pipeline_out / "corpus_stats.csv")
    stats = dict((r[0], r[1]) for r in rows)
    assert stats["n_documents"] == "3"
    assert stats["n_edus"] == str(N_EDUS)
    assert stats["n_signals"] == "7"
    assert stats["n_distractors"] == "6"


def test_report_standalone_names_missing_artifacts(tmp_path, capsys):
    out = tmp_path / "fresh"
    code = run_cli("report", "--config", CONFIG, "--out", out)
    assert code == 1
    err = capsys.readouterr().err
    assert "errors_bottomup.csv" in err
    assert "regression_topdown.csv" in err


# ---------------------------------------------------------------------------
# pipeline manifest


def test_manifest_covers_every_artifact_with_correct_hashes(pipeline_out):
    manifest = json.loads((pipeline_out / "manifest.json").read_text(encoding="utf8"))
    assert set(manifest) == {"version", "config_hash", "seed", "files"}
    assert manifest["seed"] == 20240818
    on_disk = {
        p.relative_to(pipeline_out).as_posix()
        for p in pipeline_out.rglob("*")
        if p.is_file() and p.name != "manifest.json"
    }
    assert set(manifest["files"]) == on_disk
    for rel, digest in manifest["files"].items():
        assert hashlib.sha256((pipeline_out / rel).read_bytes()).hexdigest() == digest


def test_artifact_headers_share_one_config_hash(pipeline_out):
    manifest = json.loads((pipeline_out / "manifest.json").read_text(encoding="utf8"))
    expected = f"config {manifest['config_hash']}"
    for path in pipeline_out.glob("*.csv"):
        header, _, _ = read_table(path)
        assert header[1] == expected, path.name
    model_lines = (pipeline_out / "model_bottomup.txt").read_text(encoding="utf8").splitlines()
    assert model_lines[1] == f"# {expected}"
