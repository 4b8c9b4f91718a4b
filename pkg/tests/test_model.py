from __future__ import annotations

import random
from dataclasses import replace

import pytest

from mutants import MUTANTS
from randmodels import random_model
from selfexplain.errors import CycleError
from selfexplain.model import (
    Annotation,
    DegradationLevel,
    KnowledgeEntry,
    Method,
    Task,
    TmkModel,
    Transition,
    compute_layers,
    degrade,
    fsm_walk,
    snippets,
    validate,
)

# Frozen hand computation of the flagship fixture's layer table.
SAMI_MINI_LAYERS = {
    "mediate-social-interaction": 0,
    "monitor-forum": 1, "build-student-profile": 1, "find-matches": 1,
    "deliver-recommendations": 1,
    "collect-introduction": 2, "extract-entities": 2, "update-knowledge-graph": 2,
    "compare-profiles": 2, "rank-matches": 2, "compose-message": 2, "post-to-forum": 2,
    "detect-entity-mentions": 3, "normalize-entities": 3,
    "canonicalize-terms": 4, "resolve-aliases": 4,
    "lookup-alias-table": 5, "score-alias-candidates": 5,
    "compute-overlap": 6,
    "rg-process": 0,
    "profile-construction": 1, "match-search": 1, "compose-and-post": 1,
    "entity-extraction": 2,
    "normalization-procedure": 3,
    "alias-resolution": 4,
    "candidate-scoring": 5,
}


def _chain_model() -> TmkModel:
    """A 3-state linear method inside a minimal host model."""
    tasks = {
        "host": Task("host", "Host", "Runs the chain.", achieved_by=("chain",)),
        "step-one": Task("step-one", "Step one", "The first primitive step."),
        "step-two": Task("step-two", "Step two", "The second primitive step."),
    }
    method = Method(
        id="chain", name="Chain", description="A then B then C.",
        parent_task="host", states=("a", "b", "c"), start_state="a",
        terminal_states=frozenset({"c"}),
        transitions=(
            Transition("a", "b", Annotation("task", "step-one"), "First hop."),
            Transition("b", "c", Annotation("task", "step-two"), "Second hop."),
        ))
    return TmkModel("Tester", "A chain-walking test agent.", "host",
                    tasks, {"chain": method}, {})


class TestValidate:
    def test_clean_fixtures_have_no_violations(self, fixture_paths):
        from selfexplain.parsing import parse_model_file
        for path in fixture_paths:
            assert validate(parse_model_file(path)) == [], path.name

    def test_every_mutant_is_caught_at_its_node(self, sami_mini):
        assert len(MUTANTS) >= 12
        for build in MUTANTS:
            mutant, node_id, expected_rules = build(sami_mini)
            report = validate(mutant)
            assert report, build.__name__
            located = [v for v in report
                       if v.node_id == node_id or node_id in v.detail]
            assert located, (build.__name__, report)
            assert {v.rule for v in located} & expected_rules, (build.__name__, located)

    def test_unreachable_state_violation(self):
        model = _chain_model()
        method = model.methods["chain"]
        bad = replace(method, states=method.states + ("island",))
        report = validate(replace(model, methods={"chain": bad}))
        assert [v.rule for v in report] == ["unreachable-state"]
        assert "island" in report[0].detail

    def test_smallest_decomposition_cycle(self):
        model = _chain_model()
        method = model.methods["chain"]
        transitions = (method.transitions[0],
                       replace(method.transitions[1],
                               annotation=Annotation("task", "host")))
        report = validate(replace(model, methods={"chain": replace(
            method, transitions=transitions)}))
        assert any(v.rule == "decomposition-cycle" for v in report)
        cycle = next(v for v in report if v.rule == "decomposition-cycle")
        assert "host" in cycle.detail

    def test_violations_are_data_not_errors(self):
        model = replace(_chain_model(), root_task="gone")
        report = validate(model)
        assert any(v.rule == "missing-root-task" for v in report)


class TestComputeLayers:
    def test_root_is_layer_zero(self, sami_mini):
        assert compute_layers(sami_mini)[sami_mini.root_task] == 0

    def test_sami_mini_matches_hand_table(self, sami_mini):
        assert compute_layers(sami_mini) == SAMI_MINI_LAYERS

    def test_min_rule_on_two_path_fixture(self, two_path):
        layers = compute_layers(two_path)
        # verify-address is used by a layer-1 method and a layer-3 method;
        # the shallowest use wins: 1 + 1 = 2.
        assert layers["route-planning"] == 1
        assert layers["tile-fetching"] == 3
        assert layers["verify-address"] == 2

    def test_cycle_raises(self):
        model = _chain_model()
        method = model.methods["chain"]
        transitions = (method.transitions[0],
                       replace(method.transitions[1],
                               annotation=Annotation("task", "host")))
        cyclic = replace(model, methods={"chain": replace(method, transitions=transitions)})
        with pytest.raises(CycleError):
            compute_layers(cyclic)

    def test_layer_equations_on_random_models(self):
        # Defining equations: methods inherit their parent's layer and every
        # referenced task takes 1 + the minimum over referencing methods.
        for seed in range(40):
            model = random_model(random.Random(seed))
            layers = compute_layers(model)
            assert layers[model.root_task] == 0
            referencing: dict[str, list[str]] = {}
            for method in model.methods.values():
                assert layers[method.id] == layers[method.parent_task]
                for tr in method.transitions:
                    if tr.annotation.kind == "task":
                        referencing.setdefault(tr.annotation.ref, []).append(method.id)
            for task_id, method_ids in referencing.items():
                if task_id == model.root_task:
                    continue
                assert layers[task_id] == 1 + min(layers[m] for m in method_ids)

    def test_layers_strictly_increase_on_tree_models(self):
        for seed in range(30):
            model = random_model(random.Random(seed), tree_only=True)
            layers = compute_layers(model)
            for method in model.methods.values():
                for tr in method.transitions:
                    if tr.annotation.kind == "task":
                        assert layers[tr.annotation.ref] > layers[method.parent_task]


class TestSnippets:
    def test_single_task_model_has_one_snippet(self):
        model = TmkModel("Solo", "A one-task agent.", "only",
                         {"only": Task("only", "Only", "The only task.")}, {}, {})
        assert len(snippets(model)) == 1

    def test_sami_mini_count(self, sami_mini):
        assert len(snippets(sami_mini)) == (
            len(sami_mini.tasks) + len(sami_mini.methods) + len(sami_mini.knowledge))

    def test_snippets_deterministic(self, sami_mini):
        from selfexplain.parsing import parse_model, serialize_model
        twin = parse_model(serialize_model(sami_mini))
        assert snippets(twin) == snippets(sami_mini)

    def test_order_is_part_then_id(self, sami_mini):
        listed = snippets(sami_mini)
        parts = [s.part for s in listed]
        assert parts == sorted(parts, key=["task", "method", "knowledge"].index)
        for part in ("task", "method", "knowledge"):
            ids = [s.source_id for s in listed if s.part == part]
            assert ids == sorted(ids)

    def test_method_snippet_lists_transitions(self, sami_mini):
        method_snippet = next(s for s in snippets(sami_mini)
                              if s.source_id == "rg-process")
        for tr in sami_mini.methods["rg-process"].transitions:
            assert f"{tr.from_state} -> {tr.to_state}" in method_snippet.text

    def test_knowledge_snippets_carry_layer_zero(self, sami_mini):
        for s in snippets(sami_mini):
            if s.part == "knowledge":
                assert s.layer == 0


class TestFsmWalk:
    def test_linear_chain(self):
        model = _chain_model()
        steps = fsm_walk(model.methods["chain"], model)
        assert [(s.step_index, s.from_state, s.to_state) for s in steps] == [
            (1, "a", "b"), (2, "b", "c")]
        assert "Step one" in steps[0].annotation_text
        assert "first primitive step" in steps[0].annotation_text

    def test_branch_follows_declaration_order(self):
        model = _chain_model()
        method = model.methods["chain"]
        branched = replace(method, transitions=(
            Transition("a", "b", Annotation("task", "step-one"), "To b."),
            Transition("a", "c", Annotation("task", "step-two"), "To c."),
        ))
        steps = fsm_walk(branched, replace(model, methods={"chain": branched}))
        assert [(s.from_state, s.to_state) for s in steps] == [("a", "b"), ("a", "c")]

    def test_rg_process_covers_each_transition_once(self, sami_mini):
        method = sami_mini.methods["rg-process"]
        steps = fsm_walk(method, sami_mini)
        walked = [(s.from_state, s.to_state) for s in steps]
        declared = [(t.from_state, t.to_state) for t in method.transitions]
        assert walked == declared

    def test_loops_listed_but_not_reexpanded(self, looped):
        method = looped.methods["sorting-loop"]
        steps = fsm_walk(method, looped)
        assert len(steps) == len(method.transitions)
        assert ("weighed", "waiting") in [(s.from_state, s.to_state) for s in steps]

    def test_multiset_equality_on_random_methods(self):
        from collections import Counter

        from selfexplain.model import annotation_text
        for seed in range(50):
            model = random_model(random.Random(seed))
            for method in model.methods.values():
                steps = fsm_walk(method, model)
                walked = Counter((s.from_state, s.to_state, s.annotation_text)
                                 for s in steps)
                declared = Counter(
                    (t.from_state, t.to_state, annotation_text(model, t.annotation))
                    for t in method.transitions)
                assert walked == declared


class TestDegrade:
    def test_level_counts_non_increasing(self, sami_mini):
        counts = [len(degrade(sami_mini, level).snippets) for level in range(7)]
        assert counts == sorted(counts, reverse=True)
        assert counts == [32, 25, 14, 7, 0, 0, 0]

    def test_level_one_cuts_deep_layers_keeps_knowledge(self, sami_mini):
        full = degrade(sami_mini, 0)
        cut = degrade(sami_mini, 1)
        full_tm = [s for s in full.snippets if s.part != "knowledge"]
        cut_tm = [s for s in cut.snippets if s.part != "knowledge"]
        assert len(cut_tm) < len(full_tm)
        assert [s for s in cut.snippets if s.part == "knowledge"] == \
               [s for s in full.snippets if s.part == "knowledge"]
        assert all(s.layer <= 3 for s in cut_tm)

    def test_levels_nest(self, sami_mini):
        for level in (0, 1, 2):
            outer = set(degrade(sami_mini, level).snippets)
            inner = set(degrade(sami_mini, level + 1).snippets)
            assert inner <= outer

    def test_level_five_is_overview_only(self, sami_mini):
        context = degrade(sami_mini, 5)
        assert context.overview_only
        assert context.snippets == ()
        assert context.prompt_profile == "no_inner_workings"

    def test_level_six_is_nothing(self, sami_mini):
        context = degrade(sami_mini, 6)
        assert context.snippets == ()
        assert not context.overview_only
        assert context.prompt_profile == "no_inner_workings"

    def test_profiles_by_level(self, sami_mini):
        for level in range(4):
            assert degrade(sami_mini, level).prompt_profile == "full"
        for level in range(4, 7):
            assert degrade(sami_mini, level).prompt_profile == "no_inner_workings"

    def test_out_of_range_level_rejected(self, sami_mini):
        with pytest.raises(ValueError):
            degrade(sami_mini, 7)
        with pytest.raises(ValueError):
            DegradationLevel(-1)


def test_knowledge_properties_survive_equality():
    entry = KnowledgeEntry("k", "K", "Knows things.", {"a": "Property a."})
    same = KnowledgeEntry("k", "K", "Knows things.", {"a": "Property a."})
    assert entry == same
