from __future__ import annotations

from selfexplain.dot_export import export_dot
from selfexplain.model import Task, TmkModel
from selfexplain.parsing import parse_model, serialize_model


def _node_statements(document: str) -> list[str]:
    return [line for line in document.splitlines() if "shape=" in line]


def test_single_task_model_has_one_node():
    model = TmkModel("Solo", "A one-task agent.", "only",
                     {"only": Task("only", "Only task", "Does the thing.")}, {}, {})
    document = export_dot(model)
    assert len(_node_statements(document)) == 1
    assert document.startswith("digraph")


def test_node_count_is_tasks_plus_states(sami_mini):
    document = export_dot(sami_mini)
    expected = len(sami_mini.tasks) + sum(
        len(m.states) for m in sami_mini.methods.values())
    assert len(_node_statements(document)) == expected


def test_every_transition_becomes_an_edge(sami_mini):
    document = export_dot(sami_mini)
    transition_edges = [line for line in document.splitlines()
                        if "->" in line and "style=dashed" not in line]
    assert len(transition_edges) == sum(
        len(m.transitions) for m in sami_mini.methods.values())


def test_methods_become_clusters(sami_mini):
    document = export_dot(sami_mini)
    assert document.count("subgraph") == len(sami_mini.methods)


def test_output_deterministic_across_serializations(sami_mini):
    twin = parse_model(serialize_model(sami_mini))
    assert export_dot(twin) == export_dot(sami_mini)


def test_quotes_escaped():
    model = TmkModel("Solo", "An agent.", "only",
                     {"only": Task("only", 'Say "hi"', "Greets people.")}, {}, {})
    document = export_dot(model)
    assert '\\"hi\\"' in document
