import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from factgraph.kg import DialogueState, KnowledgeGraph
from factgraph.pipeline import default_rules_dir
from factgraph.rulelang import desugar, parse_program

LINKING_RULES_PATH = default_rules_dir() / "graphwoz_linking.pl"
COMMONSENSE_RULES_PATH = default_rules_dir() / "graphwoz_commonsense.pl"

# noisy-or of the four rules fired by an exact name match:
# 1 - (1-0.60838635)(1-0.72255423)(1-0.30394455)(1-0.0019686)
EXACT_MATCH_LINK_PROB = 0.92452137631181


@pytest.fixture(scope="session")
def linking_core():
    return desugar(parse_program(LINKING_RULES_PATH.read_text()))


@pytest.fixture(scope="session")
def commonsense_core():
    return desugar(parse_program(COMMONSENSE_RULES_PATH.read_text()))


@pytest.fixture
def jill_state():
    """One person named Jill Martinez plus an empty dialogue."""
    graph = KnowledgeGraph()
    graph.add_node("person", node_id="p_1", name="Jill Martinez")
    return DialogueState(graph, today="2024-04-05", now="10:00")


@pytest.fixture
def calendar_state():
    """Two people, two rooms, two events today and one tomorrow."""
    graph = KnowledgeGraph()
    jill = graph.add_node("person", node_id="p_1", name="Jill Martinez")
    curtis = graph.add_node("person", node_id="p_2", name="Curtis Williams")
    alpha = graph.add_node("room", node_id="r_1", name="Alpha")
    graph.add_node("room", node_id="r_2", name="Beta")
    graph.add_node("group", node_id="g_1", name="Mathematics")
    e1 = graph.add_node("event", node_id="e_1", name="Budget review",
                        date="2024-04-05", start_time="09:00", end_time="10:00")
    e2 = graph.add_node("event", node_id="e_2", name="Planning workshop",
                        date="2024-04-05", start_time="14:00", end_time="15:00")
    e3 = graph.add_node("event", node_id="e_3", name="Demo rehearsal",
                        date="2024-04-06", start_time="09:00", end_time="10:00")
    graph.add_edge(e1.id, "attendee", jill.id)
    graph.add_edge(e2.id, "attendee", jill.id)
    graph.add_edge(e2.id, "attendee", curtis.id)
    graph.add_edge(e3.id, "attendee", curtis.id)
    graph.add_edge(e1.id, "location", alpha.id)
    graph.add_edge(e2.id, "location", alpha.id)
    graph.add_edge(jill.id, "group", "g_1")
    graph.add_edge(curtis.id, "group", "g_1")
    return DialogueState(graph, today="2024-04-05", now="09:30")
