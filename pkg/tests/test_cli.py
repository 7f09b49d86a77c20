import json
import math

import pytest
from click.testing import CliRunner

from factgraph.cli import corpus_bleu, main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def dataset_path(tmp_path, calendar_state):
    snap = calendar_state.snapshot()
    doc = {
        "kb": snap["kb"],
        "now": snap["now"],
        "dialogue": [
            {"speaker": "user",
             "text": "What events does Jill Martinez have today?",
             "mentions": [[17, 30]]},
            {"speaker": "system",
             "text": "Jill Martinez attends the Budget review today."},
            {"speaker": "user",
             "text": "Where does the Budget review take place?"},
        ],
        "gold_responses": [
            "Jill Martinez attends the Budget review today.",
            "The Budget review takes place in room Alpha.",
        ],
        "gold_fact_ids": [
            ["attending_today(e_1,p_1)"],
            ["location(e_1,r_1)"],
        ],
    }
    path = tmp_path / "data.json"
    path.write_text(json.dumps(doc))
    return path


class TestCorpusBleu:
    def test_identical_is_one(self):
        refs = ["the cat sat on the mat", "a dog barked loudly today ok"]
        assert corpus_bleu(refs, refs) == pytest.approx(1.0)

    def test_zero_overlap_is_zero(self):
        assert corpus_bleu(["aa bb cc dd"], ["xx yy zz ww"]) == 0.0

    def test_brevity_penalty_example(self):
        # [DERIVED] BP = e^(1 - 4/3), all n-gram precisions 1
        bleu = corpus_bleu(["the cat sat"], ["the cat sat down"])
        assert bleu == pytest.approx(math.exp(1 - 4 / 3), abs=1e-4)
        assert bleu == pytest.approx(0.7165, abs=1e-3)

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            corpus_bleu(["a"], ["a", "b"])

    def test_clipping(self):
        # "the the the" matches at most the reference's two "the" unigrams
        bleu = corpus_bleu(["the the the"], ["the the cat"])
        assert bleu < 1.0


class TestInfer:
    def test_four_world_example(self, runner, tmp_path):
        # [DERIVED] 1 - 0.4*0.5 = 0.8
        rules = tmp_path / "r.pl"
        rules.write_text("0.6::a.\n0.5::b.\nc :- a.\nc :- b.\n")
        result = runner.invoke(main, ["infer", str(rules), "c"])
        assert result.exit_code == 0
        assert result.output.strip() == "0.800000000"

    def test_facts_file(self, runner, tmp_path):
        rules = tmp_path / "r.pl"
        rules.write_text("q :- p(X).\n")
        facts = tmp_path / "f.pl"
        facts.write_text("0.25::p(x1).\n")
        result = runner.invoke(main, ["infer", str(rules), "q",
                                      "--facts", str(facts)])
        assert result.output.strip() == "0.250000000"

    def test_bad_rules_exit_one(self, runner, tmp_path):
        rules = tmp_path / "r.pl"
        rules.write_text("p(X :- q.\n")
        result = runner.invoke(main, ["infer", str(rules), "q"])
        assert result.exit_code == 1

    def test_usage_error_exit_two(self, runner):
        assert runner.invoke(main, ["infer"]).exit_code == 2

    def test_non_atom_query_exit_two(self, runner, tmp_path):
        rules = tmp_path / "r.pl"
        rules.write_text("a.\n")
        result = runner.invoke(main, ["infer", str(rules), "a :- b"])
        assert result.exit_code == 2


class TestLearnWeightsCommand:
    def test_single_switch_fixture(self, runner, tmp_path):
        # [DERIVED] EM fixed point at the empirical frequency
        rules = tmp_path / "r.pl"
        rules.write_text("t(_)::h :- b.\nb.\n")
        facts = tmp_path / "f.pl"
        facts.write_text("")
        interp = tmp_path / "obs.json"
        interp.write_text(json.dumps([{"h": True}] * 7 + [{"h": False}] * 3))
        out = tmp_path / "learned.pl"
        result = runner.invoke(main, ["learn-weights", str(rules), str(facts),
                                      str(interp), "-o", str(out)])
        assert result.exit_code == 0
        assert "0.700000::aux_1." in out.read_text()

    def test_header_present(self, runner, tmp_path):
        rules = tmp_path / "r.pl"
        rules.write_text("t(_)::h :- b.\nb.\n")
        facts = tmp_path / "f.pl"
        facts.write_text("")
        interp = tmp_path / "obs.json"
        interp.write_text(json.dumps([{"h": True}]))
        result = runner.invoke(main, ["learn-weights", str(rules), str(facts),
                                      str(interp)])
        assert result.output.startswith("% ")
        assert "factgraph" in result.output.splitlines()[0]


class TestRespond:
    def test_replay_produces_turns(self, runner, dataset_path):
        result = runner.invoke(main, ["respond", str(dataset_path),
                                      "--mode", "relevance_logic"])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        assert len(doc["turns"]) == 2
        assert all(t["response"] for t in doc["turns"])

    def test_deterministic(self, runner, dataset_path):
        args = ["respond", str(dataset_path), "--seed", "3"]
        assert runner.invoke(main, args).output \
            == runner.invoke(main, args).output


class TestLink:
    def test_fixture_probability(self, runner, dataset_path):
        result = runner.invoke(main, ["link", str(dataset_path)])
        assert result.exit_code == 0
        doc = json.loads(result.output)
        first = doc["turns"][0]["mentions"][0]["candidates"]
        assert first[0]["entity"] == "p_1"
        assert first[0]["prob"] == pytest.approx(0.924521376, abs=1e-6)


class TestEval:
    def test_report_fields(self, runner, dataset_path):
        result = runner.invoke(main, ["eval", str(dataset_path),
                                      "--mode", "relevance_logic"])
        assert result.exit_code == 0
        report = json.loads(result.output)
        assert report["turns"] == 2
        assert 0.0 <= report["bleu4"] <= 1.0
        assert 0.0 <= report["precision_at_k"] <= 1.0
        assert 0.0 <= report["recall_at_k"] <= 1.0
        assert report["meteor"] == "n/a"
        assert "inputs" in report["header"]

    def test_missing_gold_exit_one(self, runner, tmp_path):
        path = tmp_path / "d.json"
        path.write_text(json.dumps({"kb": {"nodes": [], "edges": []},
                                    "dialogue": []}))
        result = runner.invoke(main, ["eval", str(path)])
        assert result.exit_code == 1


class TestAugment:
    def run_augment(self, runner, dataset_path, seed=4):
        result = runner.invoke(main, ["augment", str(dataset_path),
                                      "--base-date", "2025-01-10",
                                      "--seed", str(seed)])
        assert result.exit_code == 0
        return json.loads(result.output)

    def names(self, doc):
        return {n["id"]: n["attrs"]["name"]["value"]
                for n in doc["kb"]["nodes"] if "name" in n.get("attrs", {})}

    def test_names_replaced_consistently(self, runner, dataset_path):
        doc = self.run_augment(runner, dataset_path)
        new_name = self.names(doc)["p_1"]
        assert new_name != "Jill Martinez"
        assert new_name in doc["dialogue"][0]["text"]
        assert new_name in doc["gold_responses"][0]
        assert "Jill Martinez" not in json.dumps(doc["dialogue"])

    def test_dates_shifted_times_kept(self, runner, dataset_path):
        doc = self.run_augment(runner, dataset_path)
        assert doc["now"]["date"] == "2025-01-10"
        assert doc["now"]["time"] == "09:30"
        events = {n["id"]: n["attrs"] for n in doc["kb"]["nodes"]
                  if n["kind"] == "event"}
        assert events["e_1"]["date"]["value"] == "2025-01-10"   # was today
        assert events["e_3"]["date"]["value"] == "2025-01-11"   # was tomorrow
        assert events["e_1"]["start_time"]["value"] == "09:00"

    def test_same_seed_identical(self, runner, dataset_path):
        assert self.run_augment(runner, dataset_path, 4) \
            == self.run_augment(runner, dataset_path, 4)

    def test_stale_mention_spans_dropped(self, runner, dataset_path):
        doc = self.run_augment(runner, dataset_path)
        assert all("mentions" not in t for t in doc["dialogue"])


class TestTrainRelevance:
    def test_writes_model_file(self, runner, dataset_path, tmp_path):
        out = tmp_path / "model.json"
        result = runner.invoke(main, ["train-relevance", str(dataset_path),
                                      "-o", str(out), "--epochs", "2"])
        assert result.exit_code == 0
        doc = json.loads(out.read_text())
        assert doc["hidden"] == 16
        assert len(doc["losses"]) == 2
        assert doc["header"]["tool"].startswith("factgraph")
