import json
from pathlib import Path

import pytest

from ontomine.cli import main

DATA = Path(__file__).parent / "data"


def run(args, capsys):
    code = main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestMine:
    def test_byte_identical_across_runs(self, tmp_path, capsys):
        payloads = []
        for i in range(3):
            out = tmp_path / f"run{i}.jsonl"
            code, _, err = run(
                ["mine", "--config", str(DATA / "config.phenotype.json"), "--out", str(out)],
                capsys,
            )
            assert code == 0
            payloads.append(out.read_bytes())
        assert payloads[0] == payloads[1] == payloads[2]

    def test_progress_streams_to_stderr(self, tmp_path, capsys):
        out = tmp_path / "ann.jsonl"
        _, stdout, stderr = run(
            ["mine", "--config", str(DATA / "config.phenotype.json"), "--out", str(out)],
            capsys,
        )
        assert "[10/10]" in stderr
        assert json.loads(stdout.strip())["documents"] == 10

    def test_unmatched_sidecar_written(self, tmp_path, capsys):
        out = tmp_path / "ann.jsonl"
        run(["mine", "--config", str(DATA / "config.phenotype.json"), "--out", str(out)], capsys)
        assert (tmp_path / "ann.unmatched.jsonl").exists()

    def test_entity_dump(self, tmp_path, capsys):
        out = tmp_path / "ann.jsonl"
        dump = tmp_path / "entities.jsonl"
        run(
            [
                "mine",
                "--config",
                str(DATA / "config.phenotype.json"),
                "--out",
                str(out),
                "--dump-entities",
                str(dump),
            ],
            capsys,
        )
        records = [json.loads(line) for line in dump.read_text().splitlines()]
        assert any(r["status"] == "rejected" for r in records)
        assert all({"doc_id", "chunk_index", "mention", "status", "trail"} <= set(r) for r in records)

    def test_workers_do_not_change_output(self, tmp_path, capsys):
        single = tmp_path / "single.jsonl"
        multi = tmp_path / "multi.jsonl"
        run(["mine", "--config", str(DATA / "config.phenotype.json"), "--out", str(single)], capsys)
        run(
            [
                "mine",
                "--config",
                str(DATA / "config.phenotype.json"),
                "--out",
                str(multi),
                "--workers",
                "4",
            ],
            capsys,
        )
        assert single.read_bytes() == multi.read_bytes()


class TestRefine:
    def test_fixture_flag_count(self, tmp_path, capsys):
        mined = tmp_path / "mined.jsonl"
        run(["mine", "--config", str(DATA / "config.disease.json"), "--out", str(mined)], capsys)
        flags = tmp_path / "flags.jsonl"
        queue = tmp_path / "queue.jsonl"
        code, stdout, _ = run(
            [
                "refine",
                "--config",
                str(DATA / "config.disease.json"),
                "--prior",
                str(DATA / "refine_prior.jsonl"),
                "--mined",
                str(mined),
                "--flags",
                str(flags),
                "--queue",
                str(queue),
            ],
            capsys,
        )
        assert code == 0
        summary = json.loads(stdout.strip().splitlines()[-1])
        assert summary["flags"] == 12
        assert len(flags.read_text().splitlines()) == 12
        assert len(queue.read_text().splitlines()) == 12 + summary["no_flag"]


class TestEvaluate:
    def test_identical_files_score_one(self, tmp_path, capsys):
        pred = tmp_path / "p.jsonl"
        rows = [
            {"doc_id": "a", "mention": "x", "code": "HP:0000001"},
            {"doc_id": "b", "mention": "y", "code": "HP:0000002"},
        ]
        pred.write_text("".join(json.dumps(r) + "\n" for r in rows))
        code, stdout, stderr = run(
            ["evaluate", "--pred", str(pred), "--gold", str(pred)], capsys
        )
        assert code == 0
        report = json.loads(stdout)
        assert report["f1"] == 1.0
        assert "stratum" in stderr  # aligned table on stderr

    def test_csv_rows(self, tmp_path, capsys):
        pred = tmp_path / "p.jsonl"
        pred.write_text(json.dumps({"doc_id": "a", "code": "HP:1"}) + "\n")
        csv_path = tmp_path / "per_doc.csv"
        run(
            ["evaluate", "--pred", str(pred), "--gold", str(pred), "--csv", str(csv_path)],
            capsys,
        )
        assert csv_path.read_text().splitlines()[0] == "doc_id,tp,fp,fn"

    def test_strata_with_corpus(self, tmp_path, capsys):
        pred = tmp_path / "p.jsonl"
        pred.write_text(json.dumps({"doc_id": "note_01", "code": "HP:1"}) + "\n")
        code, stdout, _ = run(
            [
                "evaluate",
                "--pred",
                str(pred),
                "--gold",
                str(pred),
                "--corpus",
                str(DATA / "corpus.jsonl"),
            ],
            capsys,
        )
        assert "strata" in json.loads(stdout)

    def test_fuzzy_mode(self, tmp_path, capsys):
        pred = tmp_path / "p.jsonl"
        gold = tmp_path / "g.jsonl"
        pred.write_text(json.dumps({"doc_id": "a", "mention": "abcde"}) + "\n")
        gold.write_text(json.dumps({"doc_id": "a", "mention": "abcdX"}) + "\n")
        code, stdout, _ = run(
            ["evaluate", "--pred", str(pred), "--gold", str(gold), "--fuzzy"], capsys
        )
        assert json.loads(stdout)["f1"] == 1.0


class TestCost:
    def test_json_output(self, capsys):
        code, stdout, _ = run(
            [
                "cost",
                "--runtime-minutes",
                "121",
                "--gpu-count",
                "1",
                "--gpu-rate",
                "0.1",
                "--total-notes",
                "331794",
                "--median-note-words",
                "1320",
                "--bench-median-words",
                "271.5",
            ],
            capsys,
        )
        assert code == 0
        payload = json.loads(stdout)
        assert abs(payload["cost_usd"] - (121 * 0.1 / 60) * (1320 * 331794 / 271.5)) < 1.0


class TestIndexBuild:
    def test_ontology_index_round_trip(self, tmp_path, capsys):
        from ontomine.retrieval import load_index

        out = tmp_path / "hpo.idx.jsonl"
        code, stdout, _ = run(
            [
                "index-build",
                "--config",
                str(DATA / "config.phenotype.json"),
                "--what",
                "ontology",
                "--out",
                str(out),
            ],
            capsys,
        )
        assert code == 0
        index = load_index(out)
        assert len(index) == 15


class TestErrorReporting:
    def test_bad_config_exits_nonzero_with_json(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"task": "phenotype", "paths": {"ontology": "missing.jsonl"}}))
        code, _, stderr = run(
            ["mine", "--config", str(bad), "--out", str(tmp_path / "x.jsonl")], capsys
        )
        assert code == 2
        payload = json.loads(stderr.strip().splitlines()[-1])
        assert payload["error"] == "ConfigError"
