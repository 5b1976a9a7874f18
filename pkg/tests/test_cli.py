import json

import pytest

from kgbench.bench import load_bundle
from kgbench.cli import main
from kgbench.llm import API_KEY_ENV, BASE_URL_ENV, FALLBACK_API_KEY_ENV
from tests.synthetic import family_triples, tsv


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    directory = tmp_path_factory.mktemp("cli")
    (directory / "family.tsv").write_text(tsv(family_triples()), encoding="utf-8")
    return directory


@pytest.fixture(scope="module")
def rules(workdir):
    path = workdir / "rules.tsv"
    assert main(["mine", str(workdir / "family.tsv"), "-o", str(path), "--max-len", "3"]) == 0
    return path


@pytest.fixture(scope="module")
def bundle(workdir, rules):
    path = workdir / "bundle"
    args = ["build", str(workdir / "family.tsv"), str(rules), "-o", str(path), "--tau", "1.0"]
    assert main(args) == 0
    return path


class TestMine:
    def test_deterministic(self, workdir, rules):
        again = workdir / "again.tsv"
        assert main(["mine", str(workdir / "family.tsv"), "-o", str(again), "--max-len", "3"]) == 0
        assert again.read_bytes() == rules.read_bytes()

    def test_output(self, rules):
        lines = rules.read_text(encoding="utf-8").splitlines()
        assert lines[0].startswith("# MinerConfig(")
        body = [line for line in lines if not line.startswith("#")]
        assert body
        assert all(len(line.split("\t")) == 5 for line in body)

    def test_histogram(self, workdir, rules, capsys):
        histogram = workdir / "histogram.txt"
        args = ["mine", str(workdir / "family.tsv"), "-o", str(workdir / "h.tsv")]
        assert main(args + ["--max-len", "3", "--histogram", str(histogram)]) == 0
        text = histogram.read_text(encoding="utf-8")
        assert text.startswith("# MinerConfig(")
        assert "Total" in text
        assert "rules" in capsys.readouterr().out

    def test_invalid_config(self, workdir, capsys):
        args = ["mine", str(workdir / "family.tsv"), "-o", str(workdir / "x.tsv"), "--max-len", "1"]
        assert main(args) == 1
        assert "error:" in capsys.readouterr().err
        assert not (workdir / "x.tsv").exists()

    def test_missing_graph(self, workdir):
        assert main(["mine", str(workdir / "absent.tsv"), "-o", str(workdir / "y.tsv")]) == 1


def test_usage_errors_exit_with_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["mine"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 1
    assert "usage:" in capsys.readouterr().err


class TestBuild:
    def test_bundle_files(self, bundle):
        assert sorted(p.name for p in bundle.iterdir()) == [
            "complete.tsv",
            "incomplete.tsv",
            "manifest.json",
            "mapping.tsv",
            "test.jsonl",
            "train.jsonl",
            "validation.jsonl",
        ]
        manifest = json.loads((bundle / "manifest.json").read_text(encoding="utf-8"))
        assert manifest["generator"] == "template"
        assert manifest["config"]["balance"]["tau"] == 1.0
        assert manifest["label_scheme"] == {"variant": "private-id", "seed": 0}

    def test_entities_are_private_ids(self, bundle):
        loaded = load_bundle(bundle)
        mapping = loaded.mapping
        assert set(mapping) == {e for s, _, o in family_triples() for e in (s, o)}
        assert sorted(mapping.values(), key=int) == [str(i) for i in range(len(mapping))]
        for q in loaded.questions:
            assert q.topic_entity in mapping.values()

    def test_entity_id_scheme(self, workdir, rules):
        output = workdir / "entity-id"
        args = ["build", str(workdir / "family.tsv"), str(rules), "-o", str(output)]
        assert main(args + ["--label-scheme", "entity-id"]) == 0
        assert not (output / "mapping.tsv").exists()
        complete = (output / "complete.tsv").read_text(encoding="utf-8")
        assert "139\tbrotherOf\t205\n" in complete

    def test_deterministic(self, workdir, rules, bundle):
        again = workdir / "again"
        args = ["build", str(workdir / "family.tsv"), str(rules), "-o", str(again), "--tau", "1.0"]
        assert main(args) == 0
        for path in sorted(bundle.iterdir()):
            assert path.read_bytes() == (again / path.name).read_bytes()

    def test_llm_generator_needs_an_endpoint(self, workdir, rules, monkeypatch, capsys):
        for name in (BASE_URL_ENV, API_KEY_ENV, FALLBACK_API_KEY_ENV):
            monkeypatch.delenv(name, raising=False)
        output = workdir / "llm"
        args = ["build", str(workdir / "family.tsv"), str(rules), "-o", str(output)]
        assert main(args + ["--generator", "llm"]) == 1
        assert "endpoint" in capsys.readouterr().err
        assert not output.exists()

    def test_bad_split(self, workdir, rules):
        args = ["build", str(workdir / "family.tsv"), str(rules), "-o", str(workdir / "s")]
        with pytest.raises(SystemExit) as info:
            main(args + ["--split", "8:1"])
        assert info.value.code == 1


class TestStats:
    def test_verify(self, bundle, capsys):
        assert main(["stats", str(bundle), "--verify"]) == 0
        out = capsys.readouterr().out
        assert "Dataset statistics" in out
        assert "questions verified" in out

    def test_corrupt_bundle(self, tmp_path, bundle, capsys):
        broken = tmp_path / "broken"
        broken.mkdir()
        for path in bundle.iterdir():
            if path.name != "train.jsonl":
                (broken / path.name).write_bytes(path.read_bytes())
        assert main(["stats", str(broken)]) == 1
        assert "error:" in capsys.readouterr().err


class TestEvaluate:
    def test_gold_predictions(self, bundle, tmp_path):
        questions = load_bundle(bundle).questions
        predictions = tmp_path / "predictions.tsv"
        predictions.write_text(
            "".join(f"{q.id}\t{', '.join(q.answers)}\n" for q in questions), encoding="utf-8"
        )
        report = tmp_path / "report.json"
        args = ["evaluate", str(bundle), str(predictions), "--split", "all", "-o", str(report)]
        assert main(args + ["--breakdown", "rule-type"]) == 0
        written = json.loads(report.read_text(encoding="utf-8"))
        assert written["hits_any"] == 1.0
        assert written["hhr"] == 1.0
        assert written["question_count"] == len(questions)

    def test_unknown_question(self, bundle, tmp_path, capsys):
        predictions = tmp_path / "predictions.tsv"
        predictions.write_text("nope\tParis\n", encoding="utf-8")
        assert main(["evaluate", str(bundle), str(predictions)]) == 1
        assert "nope" in capsys.readouterr().err


class TestRelabel:
    def test_private_ids(self, workdir, tmp_path):
        output, mapping = tmp_path / "private.tsv", tmp_path / "mapping.tsv"
        args = ["relabel", str(workdir / "family.tsv"), "--scheme", "private-id", "--seed", "3"]
        assert main(args + ["-o", str(output), "--mapping", str(mapping)]) == 0
        entities = {e for s, _, o in family_triples() for e in (s, o)}
        rows = mapping.read_text(encoding="utf-8").splitlines()
        assert len(rows) == len(entities)
        assert {row.split("\t")[0] for row in rows} == entities
        written = output.read_text(encoding="utf-8").splitlines()
        assert len(written) == len(set(family_triples()))

    def test_text_labels_need_names(self, workdir, tmp_path):
        args = ["relabel", str(workdir / "family.tsv"), "--scheme", "text-label"]
        args += ["-o", str(tmp_path / "t.tsv"), "--mapping", str(tmp_path / "m.tsv")]
        assert main(args) == 1
