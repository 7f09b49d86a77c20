import logging

import pytest
from hypothesis import given, strategies as st

from factgraph.kg import KnowledgeGraph
from factgraph.pipeline import default_templates_path
from factgraph.verbalizer import (TemplateError, load_templates, verbalize)


@pytest.fixture(scope="module")
def templates():
    return load_templates(default_templates_path().read_text())


@pytest.fixture
def graph():
    g = KnowledgeGraph()
    g.add_node("person", node_id="p_123", name="Lisa Wilson")
    g.add_node("event", node_id="e_1", name="Budget review")
    g.add_node("room", node_id="r_1", name="Alpha")
    return g


class TestLoadTemplates:
    def test_basic_parse(self):
        ts = load_templates("person/1\t$name(1) is a person.\n")
        assert ts.get("person", 1) == "$name(1) is a person."

    def test_comments_and_blanks_skipped(self):
        ts = load_templates("# comment\n\nperson/1\tX.\n")
        assert ts.get("person", 1) == "X."

    def test_missing_tab_rejected(self):
        with pytest.raises(TemplateError):
            load_templates("person/1 $1 is a person.\n")

    def test_placeholder_out_of_range_rejected(self):
        with pytest.raises(TemplateError):
            load_templates("person/1\t$2 is a person.\n")

    def test_duplicate_warns_last_wins(self, caplog):
        with caplog.at_level(logging.WARNING):
            ts = load_templates("a/1\tfirst $1.\na/1\tsecond $1.\n")
        assert "duplicate" in caplog.text
        assert ts.get("a", 1) == "second $1."

    def test_default_file_loads(self, templates):
        assert templates.get("person", 1) is not None
        assert templates.get("attending_today", 2) is not None


class TestVerbalize:
    def test_name_resolution(self, graph, templates):
        # [PAPER] "Lisa Wilson is a person."
        fact = verbalize(("person", ("p_123",)), 1.0, graph, templates)
        assert fact.text == "Lisa Wilson is a person."

    def test_attending_today(self, graph, templates):
        fact = verbalize(("attending_today", ("e_1", "p_123")), 0.9, graph,
                         templates, derived=True)
        assert "Lisa Wilson" in fact.text
        assert "Budget review" in fact.text
        assert fact.derived
        assert fact.prob == 0.9

    def test_fallback_for_unknown_predicate(self, graph, templates):
        fact = verbalize(("mystery_pred", ("p_123", 4)), 1.0, graph, templates)
        assert fact.text == "mystery_pred holds for p_123, 4."

    def test_fallback_zero_arity(self, graph, templates):
        assert verbalize(("alarm", ()), 1.0, graph, templates).text \
            == "alarm holds."

    def test_list_join(self, graph):
        ts = load_templates("rooms/1\tAvailable rooms: $list(1)\n")
        fact = verbalize(("rooms", (("r_1", "p_123", "x_9"),)), 1.0, graph, ts)
        assert fact.text == "Available rooms: Alpha, Lisa Wilson and x_9."

    def test_empty_list(self, graph):
        ts = load_templates("rooms/1\tAvailable rooms: $list(1)\n")
        assert verbalize(("rooms", ((),)), 1.0, graph, ts).text \
            == "Available rooms: nothing."

    def test_raw_modifier_keeps_id(self, graph):
        ts = load_templates("whois/1\tnode $raw(1)\n")
        assert verbalize(("whois", ("p_123",)), 1.0, graph, ts).text \
            == "node p_123."

    def test_entity_args_collected(self, graph, templates):
        fact = verbalize(("attending_today", ("e_1", "p_123")), 1.0, graph,
                         templates)
        assert set(fact.entity_args) == {"e_1", "p_123"}

    def test_entity_args_skip_non_nodes(self, graph, templates):
        fact = verbalize(("start_time", ("e_1", "09:00")), 1.0, graph, templates)
        assert fact.entity_args == ["e_1"]

    def test_fact_id_format(self, graph, templates):
        fact = verbalize(("attending_today", ("e_1", "p_123")), 1.0, graph,
                         templates)
        assert fact.fact_id == "attending_today(e_1,p_123)"

    def test_fact_id_with_list(self, graph, templates):
        fact = verbalize(("agenda", ("p_123", ("e_1",))), 1.0, graph, templates)
        assert fact.fact_id == "agenda(p_123,[e_1])"

    @given(pred=st.sampled_from(["person", "unknownpred", "name"]),
           args=st.lists(st.sampled_from(["p_123", "e_1", "zz", 7]), max_size=3))
    def test_total_and_deterministic(self, templates, pred, args):
        graph = KnowledgeGraph()
        graph.add_node("person", node_id="p_123", name="Lisa Wilson")
        graph.add_node("event", node_id="e_1", name="Budget review")
        first = verbalize((pred, tuple(args)), 1.0, graph, templates)
        second = verbalize((pred, tuple(args)), 1.0, graph, templates)
        assert first.text == second.text
        assert first.text.endswith(".")
