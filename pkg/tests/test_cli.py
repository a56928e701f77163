import json
import time
from pathlib import Path

import pytest

from aspectsim import cli
from aspectsim.corpus import read_records
from aspectsim.dataset import load_dataset, save_dataset, stratified_folds
from aspectsim.labels import NONE

import golden_oracle
from recheck import cited_sets, violations
from synthetic import toy_samples

GOLDEN = Path(__file__).parent / "fixtures" / "golden50"
GOLDEN_FILES = sorted(p.name for p in (GOLDEN / "expected").iterdir())


def build(out, *extra):
    return cli.main(["build-dataset", "--corpus", str(GOLDEN / "corpus"), "--out", str(out), *extra])


@pytest.fixture(scope="module")
def golden_build(tmp_path_factory):
    out = tmp_path_factory.mktemp("golden") / "data"
    t0 = time.perf_counter()
    assert build(out) == 0
    return out, time.perf_counter() - t0


def test_golden_files_byte_identical(golden_build):
    out, elapsed = golden_build
    for name in GOLDEN_FILES:
        assert (out / name).read_bytes() == (GOLDEN / "expected" / name).read_bytes(), name
    assert elapsed < 10


def test_golden_positives_match_oracle(golden_build):
    out, _ = golden_build
    exp = golden_oracle.expected()
    samples = load_dataset(out / "dataset.jsonl")
    assert list(samples.vocab.positive_classes) == exp["classes"]
    got = {(p.seed_id, p.target_id): p.labels for p in samples.pairs if not p.is_negative}
    assert got == exp["positives"]
    rows = (out / "label_distribution.csv").read_text().splitlines()[1:]
    assert [(r.split(",")[0].lower(), int(r.split(",")[1])) for r in rows] == [
        (c.lower(), n) for c, n in exp["distribution"]
    ]
    assert sorted(r.paper_id for r in read_records(out / "records.jsonl")) == exp["retained"]


def test_golden_negatives_pass_recheck(golden_build):
    out, _ = golden_build
    records = read_records(out / "records.jsonl")
    cited = cited_sets(records)
    negatives = [p for p in load_dataset(out / "dataset.jsonl").pairs if p.is_negative]
    assert len(negatives) == golden_oracle.expected()["negatives"]
    assert all(not violations(p.seed_id, p.target_id, records, cited) for p in negatives)


def test_rerun_same_hash_and_files(golden_build, tmp_path):
    out, _ = golden_build
    assert build(tmp_path / "again", "--seed", "0") == 0
    for name in [*GOLDEN_FILES, cli.MANIFEST]:
        assert (tmp_path / "again" / name).read_bytes() == (out / name).read_bytes()
    m = json.loads((out / cli.MANIFEST).read_text())
    assert m["config_hash"] == load_dataset(out / "dataset.jsonl").provenance["config_hash"]


def test_other_seed_changes_negatives_only(golden_build, tmp_path):
    out, _ = golden_build
    assert build(tmp_path / "s1", "--seed", "1") == 0
    a, b = load_dataset(out / "dataset.jsonl"), load_dataset(tmp_path / "s1" / "dataset.jsonl")
    pos = lambda s: [p for p in s.pairs if not p.is_negative]
    assert pos(a) == pos(b)
    assert a.pairs != b.pairs


def test_missing_corpus_is_usage_error(tmp_path, capsys):
    rc = cli.main(["build-dataset", "--corpus", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "does not exist" in err
    assert not (tmp_path / "o").exists()


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["build-dataset", "--corpus", "x"])
    assert exc.value.code == 2


def test_failure_leaves_no_partial_output(tmp_path, capsys):
    rc = build(tmp_path / "o", "--top-k", "40")
    assert rc == 1
    assert "distinct sections" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_refuses_to_clobber_foreign_directory(tmp_path):
    (tmp_path / "o").mkdir()
    (tmp_path / "o" / "keep.txt").write_text("x")
    assert build(tmp_path / "o") == 2
    assert (tmp_path / "o" / "keep.txt").exists()


def test_inputs_not_mutated(tmp_path):
    before = {p.name: p.read_bytes() for p in (GOLDEN / "corpus").iterdir()}
    assert build(tmp_path / "o") == 0
    assert {p.name: p.read_bytes() for p in (GOLDEN / "corpus").iterdir()} == before


def test_settings_precedence(tmp_path, monkeypatch):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 5\nnegative_ratio = 0.25\n[model]\nepochs = 3\nlr = 0.1\n')
    args = cli.build_parser().parse_args(["--config", str(cfg), "train", "--dataset", "d", "--out", "o", "--lr", "0.5"])
    env = {"ASPECTSIM_SEED": "7", "ASPECTSIM_EPOCHS": "9"}
    s = cli.resolve_settings(args, env)
    assert (s["seed"], s["epochs"], s["lr"], s["negative_ratio"]) == (7, 9, 0.5, 0.25)
    assert s["k"] == 4


def test_unknown_toml_key_is_usage_error(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text("colour = 'blue'\n")
    rc = cli.main(["--config", str(cfg), "build-dataset", "--corpus", str(GOLDEN / "corpus"), "--out", str(tmp_path / "o")])
    assert rc == 2


def test_stats_command(golden_build, tmp_path, capsys):
    out, _ = golden_build
    assert cli.main(["stats", "--dataset", str(out / "dataset.jsonl"), "--out", str(tmp_path / "st")]) == 0
    assert (tmp_path / "st" / "label_distribution.csv").read_bytes() == (out / "label_distribution.csv").read_bytes()
    printed = capsys.readouterr().out
    assert "Total pairs" in printed and "None" in printed
    assert json.loads((tmp_path / "st" / cli.MANIFEST).read_text())["command"] == "stats"


@pytest.fixture(scope="module")
def toy_dataset(tmp_path_factory):
    d = tmp_path_factory.mktemp("toy")
    samples = toy_samples(40, seed=3)
    save_dataset(samples, d / "dataset.jsonl")
    stratified_folds(samples, 4, 0).save(d / "folds.json")
    return d


LSTM_FAST = ["--model", "lstm-baseline", "--epochs", "1", "--lr", "1e-3"]


def test_cross_validate_resume_and_evaluate(toy_dataset, tmp_path):
    ds, folds = str(toy_dataset / "dataset.jsonl"), str(toy_dataset / "folds.json")
    out = tmp_path / "cv"
    for fold in (0, 1):
        rc = cli.main(["cross-validate", "--dataset", ds, "--folds", folds, "--fold", str(fold), "--out", str(out), *LSTM_FAST])
        assert rc == 0
    done = {f: (out / f"fold_{f}" / "predictions.jsonl").stat().st_mtime_ns for f in (0, 1)}
    assert not (out / "fold_2").exists()
    assert cli.main(["cross-validate", "--dataset", ds, "--folds", folds, "--resume", "--out", str(out), *LSTM_FAST]) == 0
    assert {f: (out / f"fold_{f}" / "predictions.jsonl").stat().st_mtime_ns for f in (0, 1)} == done
    assert all((out / f"fold_{f}" / "predictions.jsonl").exists() for f in range(4))
    report = json.loads((out / "report.json").read_text())
    assert report["k"] == 4
    ev = tmp_path / "ev"
    assert cli.main(["evaluate", "--dataset", ds, "--folds", folds, "--predictions", str(out), "--out", str(ev)]) == 0
    assert json.loads((ev / "report.json").read_text()) == report


def test_cross_validate_k_larger_than_dataset(toy_dataset, tmp_path, capsys):
    rc = cli.main(["cross-validate", "--dataset", str(toy_dataset / "dataset.jsonl"), "--k", "41",
                   "--out", str(tmp_path / "cv"), *LSTM_FAST])
    assert rc == 1
    assert "exceeds the number of samples" in capsys.readouterr().err


def test_train_unresolvable_checkpoint_fails_before_training(toy_dataset, tmp_path, capsys):
    rc = cli.main(["train", "--dataset", str(toy_dataset / "dataset.jsonl"), "--out", str(tmp_path / "m"),
                   "--model", str(tmp_path / "no-such-checkpoint")])
    assert rc == 1
    assert "cannot resolve checkpoint" in capsys.readouterr().err
    assert not (tmp_path / "m").exists()


@pytest.fixture(scope="module")
def none_model(tmp_path_factory):
    """An LSTM trained to saturation on pairs that are all None."""
    from aspectsim.labels import DocumentPair
    from aspectsim.dataset import SampleSet

    d = tmp_path_factory.mktemp("none")
    base = toy_samples(24, seed=5)
    samples = SampleSet([DocumentPair(p.seed_id, p.target_id, {NONE}) for p in base.pairs], base.vocab, base.papers)
    save_dataset(samples, d / "dataset.jsonl")
    rc = cli.main(["train", "--dataset", str(d / "dataset.jsonl"), "--out", str(d / "model"),
                   "--model", "lstm-baseline", "--epochs", "15", "--lr", "1e-2"])
    assert rc == 0
    return d / "model"


def _paper_json(tmp_path, name, title, abstract):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps({"title": title, "abstract": abstract}))
    return str(p)


def test_predict_none_model(none_model, tmp_path, capsys):
    seed = _paper_json(tmp_path, "a", "Parsing with grammars", "We parse sentences with a chart parser.")
    target = json.dumps({"title": "Protein folding", "abstract": "A virus protein and vaccine study."})
    assert cli.main(["predict", "--model", str(none_model), "--seed-paper", seed, "--target-paper", target,
                     "--out", str(tmp_path / "pred")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["labels"] == [NONE]
    assert out["verdict"] == "not similar"
    assert len(out["probabilities"]) == 11
    assert json.loads((tmp_path / "pred" / "prediction.json").read_text()) == out


def test_predict_seed_equals_target(none_model, tmp_path, capsys):
    seed = _paper_json(tmp_path, "a", "Parsing", "We parse.")
    assert cli.main(["predict", "--model", str(none_model), "--seed-paper", seed, "--target-paper", seed]) == 0
    assert "labels" in json.loads(capsys.readouterr().out)


def test_predict_unresolvable_paper(none_model, tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("ASPECTSIM_METADATA_OFFLINE", "1")
    monkeypatch.setenv("ASPECTSIM_METADATA_CACHE", str(tmp_path / "cache"))
    seed = _paper_json(tmp_path, "a", "Parsing", "We parse.")
    rc = cli.main(["predict", "--model", str(none_model), "--seed-paper", seed, "--target-paper", "doi:10.9999/missing"])
    assert rc == 1
    assert "paper not found" in capsys.readouterr().err
    rc = cli.main(["predict", "--model", str(none_model), "--seed-paper", seed, "--target-paper", str(tmp_path / "gone.json")])
    assert rc == 1
