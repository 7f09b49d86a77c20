"""Seeded random dialogue-state generation for tests and live sessions."""

from __future__ import annotations

import random

from .kg import DialogueState, KnowledgeGraph

FIRST_NAMES = [
    "Jill", "Curtis", "Annette", "Angela", "Michael", "Lisa", "Dana",
    "Robert", "Maria", "Kenji", "Priya", "Omar", "Ingrid", "Tomas",
]
LAST_NAMES = [
    "Martinez", "Williams", "Harding", "Jimenez", "Glover", "Wilson",
    "Okafor", "Navarro", "Lindqvist", "Tanaka", "Osei", "Petrov",
]
ROOM_NAMES = ["Alpha", "Beta", "Gamma", "Delta", "Epsilon", "Zeta"]
GROUP_NAMES = ["Mathematics", "Robotics", "Linguistics", "Outreach"]
EVENT_NAMES = [
    "Deliverables team meeting", "Niches team meeting", "Budget review",
    "Planning workshop", "Demo rehearsal", "Quarterly sync",
]
START_TIMES = ["09:00", "10:00", "11:30", "13:00", "14:30", "16:00"]


def random_state(seed: int, today: str = "2024-04-05", now: str = "10:00",
                 n_people: int = 4, n_rooms: int = 2, n_events: int = 3,
                 n_groups: int = 2) -> DialogueState:
    """A calendar-domain dialogue state; byte-identical for equal seeds."""
    rng = random.Random(seed)
    graph = KnowledgeGraph()
    first = rng.sample(FIRST_NAMES, n_people)
    last = rng.sample(LAST_NAMES, n_people)
    people = [graph.add_node("person", prefix="p", name=f"{f} {l}")
              for f, l in zip(first, last)]
    rooms = [graph.add_node("room", prefix="r", name=name)
             for name in rng.sample(ROOM_NAMES, n_rooms)]
    groups = [graph.add_node("group", prefix="g", name=name)
              for name in rng.sample(GROUP_NAMES, n_groups)]
    state = DialogueState(graph, today=today, now=now)
    for person in people:
        graph.add_edge(person.id, "group", rng.choice(groups).id)
    tomorrow = graph.nodes["at_tomorrow"].attrs["date"].value
    for name in rng.sample(EVENT_NAMES, n_events):
        start = rng.choice(START_TIMES)
        end_hour = int(start[:2]) + 1
        event = graph.add_node(
            "event", prefix="e", name=name,
            date=rng.choice([today, today, tomorrow]),
            start_time=start, end_time=f"{end_hour:02d}:{start[3:]}")
        graph.add_edge(event.id, "location", rng.choice(rooms).id)
        organizer = rng.choice(people)
        graph.add_edge(event.id, "organizer", organizer.id)
        for person in rng.sample(people, rng.randint(1, min(3, n_people))):
            graph.add_edge(event.id, "attendee", person.id)
    return state
