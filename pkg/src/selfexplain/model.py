"""Core self-model structures: tasks, methods as state machines, knowledge.

A model is immutable after construction. Every operation here is a pure
function over the model, so concurrent callers can share one instance.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .errors import CycleError

PART_TASK = "task"
PART_METHOD = "method"
PART_KNOWLEDGE = "knowledge"
PARTS = (PART_TASK, PART_METHOD, PART_KNOWLEDGE)
_PART_RANK = {p: i for i, p in enumerate(PARTS)}

ANNOTATION_TASK = "task"
ANNOTATION_KNOWLEDGE = "knowledge"

PROFILE_FULL = "full"
PROFILE_NO_INNER_WORKINGS = "no_inner_workings"

MAX_DEGRADATION_LEVEL = 6

# Task/method layers kept at each layer-cut degradation level.
_LAYER_CUTS = {1: 3, 2: 1, 3: 0}


@dataclass(frozen=True)
class Annotation:
    """What a state transition consumes: a subtask or a knowledge entry."""

    kind: str  # ANNOTATION_TASK or ANNOTATION_KNOWLEDGE
    ref: str


@dataclass(frozen=True)
class Transition:
    from_state: str
    to_state: str
    annotation: Annotation
    description: str


@dataclass(frozen=True)
class Task:
    id: str
    name: str
    description: str
    achieved_by: tuple[str, ...] = ()

    @property
    def primitive(self) -> bool:
        return not self.achieved_by


@dataclass(frozen=True)
class Method:
    """A mechanism for achieving a task, specified as a finite state machine."""

    id: str
    name: str
    description: str
    parent_task: str
    states: tuple[str, ...]
    start_state: str
    terminal_states: frozenset[str]
    transitions: tuple[Transition, ...]

    def outgoing(self, state: str) -> list[Transition]:
        return [t for t in self.transitions if t.from_state == state]


@dataclass(frozen=True)
class KnowledgeEntry:
    id: str
    name: str
    description: str
    properties: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class TmkModel:
    agent_name: str
    overview: str
    root_task: str
    tasks: dict[str, Task]
    methods: dict[str, Method]
    knowledge: dict[str, KnowledgeEntry]


@dataclass(frozen=True)
class Snippet:
    """One retrievable natural-language fragment of the self-model."""

    source_id: str
    part: str
    layer: int
    text: str


@dataclass(frozen=True)
class Violation:
    rule: str
    node_id: str
    detail: str

    def __str__(self) -> str:
        return f"[{self.rule}] {self.node_id}: {self.detail}"


@dataclass(frozen=True)
class DegradationLevel:
    level: int

    def __post_init__(self) -> None:
        if not 0 <= self.level <= MAX_DEGRADATION_LEVEL:
            raise ValueError(
                f"degradation level must be in 0..{MAX_DEGRADATION_LEVEL}, got {self.level}"
            )


@dataclass(frozen=True)
class DegradedContext:
    """The slice of the self-model visible to the pipeline at one level."""

    level: DegradationLevel
    snippets: tuple[Snippet, ...]
    overview_only: bool
    prompt_profile: str


@dataclass(frozen=True)
class CoTStep:
    step_index: int
    from_state: str
    to_state: str
    annotation_text: str


def validate(model: TmkModel) -> list[Violation]:
    """Check every model invariant; an empty report means the model is valid.

    Violations are data, not exceptions: each names the offending node and
    the rule it breaks, so a report over a mutated model points at the
    mutation site.
    """
    report: list[Violation] = []

    def flag(rule: str, node_id: str, detail: str) -> None:
        report.append(Violation(rule, node_id, detail))

    if model.root_task not in model.tasks:
        flag("missing-root-task", model.root_task, "root task is not declared")
    if not model.overview.strip():
        flag("empty-description", "model", "overview is empty")

    for task in model.tasks.values():
        if not task.description.strip():
            flag("empty-description", task.id, "task description is empty")
        for method_id in task.achieved_by:
            method = model.methods.get(method_id)
            if method is None:
                flag("dangling-reference", task.id,
                     f"achieved_by names unknown method '{method_id}'")
            elif method.parent_task != task.id:
                flag("parent-mismatch", method_id,
                     f"listed under task '{task.id}' but declares parent '{method.parent_task}'")

    for method in model.methods.values():
        report.extend(_validate_method(model, method))

    seen_names: dict[str, str] = {}
    for entry in model.knowledge.values():
        if not entry.description.strip():
            flag("empty-description", entry.id, "knowledge description is empty")
        for prop, text in entry.properties.items():
            if not text.strip():
                flag("empty-description", entry.id, f"property '{prop}' has empty description")
        if entry.name in seen_names:
            flag("duplicate-knowledge-name", entry.id,
                 f"name '{entry.name}' already used by '{seen_names[entry.name]}'")
        else:
            seen_names[entry.name] = entry.id

    report.extend(_find_decomposition_cycles(model))
    return report


def _validate_method(model: TmkModel, method: Method) -> list[Violation]:
    report: list[Violation] = []

    def flag(rule: str, detail: str) -> None:
        report.append(Violation(rule, method.id, detail))

    if not method.description.strip():
        flag("empty-description", "method description is empty")
    if method.parent_task not in model.tasks:
        flag("dangling-reference", f"parent task '{method.parent_task}' is not declared")
    elif method.id not in model.tasks[method.parent_task].achieved_by:
        flag("parent-mismatch",
             f"parent task '{method.parent_task}' does not list this method")

    states = set(method.states)
    if len(states) != len(method.states):
        flag("duplicate-state", "state list contains duplicates")
    if method.start_state not in states:
        flag("missing-start-state", f"start state '{method.start_state}' is not a declared state")
    if not method.terminal_states:
        flag("missing-terminal-states", "method declares no terminal state")
    for terminal in sorted(method.terminal_states):
        if terminal not in states:
            flag("unknown-terminal-state", f"terminal state '{terminal}' is not a declared state")

    for i, tr in enumerate(method.transitions):
        where = f"transition {i} ({tr.from_state} -> {tr.to_state})"
        if tr.from_state not in states:
            flag("unknown-transition-state", f"{where} leaves undeclared state '{tr.from_state}'")
        if tr.to_state not in states:
            flag("unknown-transition-state", f"{where} enters undeclared state '{tr.to_state}'")
        if not tr.description.strip():
            flag("empty-description", f"{where} has an empty description")
        if tr.annotation.kind == ANNOTATION_TASK:
            if tr.annotation.ref not in model.tasks:
                flag("dangling-reference", f"{where} annotates unknown task '{tr.annotation.ref}'")
        elif tr.annotation.kind == ANNOTATION_KNOWLEDGE:
            if tr.annotation.ref not in model.knowledge:
                flag("dangling-reference",
                     f"{where} annotates unknown knowledge '{tr.annotation.ref}'")
        else:
            flag("invalid-annotation-kind", f"{where} has annotation kind '{tr.annotation.kind}'")

    if method.start_state in states:
        reachable = _reachable_states(method)
        for state in method.states:
            if state not in reachable:
                report.append(Violation("unreachable-state", method.id,
                                        f"state '{state}' cannot be reached from the start state"))
        if method.terminal_states and not (method.terminal_states & reachable):
            report.append(Violation("no-terminal-reachable", method.id,
                                    "no terminal state is reachable from the start state"))
    return report


def _reachable_states(method: Method) -> set[str]:
    states = set(method.states)
    seen = {method.start_state}
    queue = deque([method.start_state])
    while queue:
        current = queue.popleft()
        for tr in method.transitions:
            if tr.from_state == current and tr.to_state in states and tr.to_state not in seen:
                seen.add(tr.to_state)
                queue.append(tr.to_state)
    return seen


def _decomposition_edges(model: TmkModel) -> dict[str, list[str]]:
    """Directed edges of the task -> method -> subtask graph, by node id."""
    edges: dict[str, list[str]] = {}
    for task in model.tasks.values():
        edges[task.id] = [m for m in task.achieved_by if m in model.methods]
    for method in model.methods.values():
        targets = []
        for tr in method.transitions:
            if tr.annotation.kind == ANNOTATION_TASK and tr.annotation.ref in model.tasks:
                targets.append(tr.annotation.ref)
        edges[method.id] = targets
    return edges


def _find_decomposition_cycles(model: TmkModel) -> list[Violation]:
    edges = _decomposition_edges(model)
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {node: WHITE for node in edges}
    violations: list[Violation] = []

    def visit(node: str, stack: list[str]) -> None:
        color[node] = GRAY
        stack.append(node)
        for nxt in edges[node]:
            if color[nxt] == GRAY:
                cycle = stack[stack.index(nxt):] + [nxt]
                violations.append(Violation(
                    "decomposition-cycle", nxt,
                    "decomposition loops: " + " -> ".join(cycle)))
            elif color[nxt] == WHITE:
                visit(nxt, stack)
        stack.pop()
        color[node] = BLACK

    for node in sorted(edges):
        if color[node] == WHITE:
            visit(node, [])
    return violations


def compute_layers(model: TmkModel) -> dict[str, int]:
    """Assign a hierarchy layer to every task and method.

    The root task sits at layer 0, a method inherits its parent task's
    layer, and a subtask referenced from a method's transition sits one
    layer below that method. A task used from several methods takes the
    shallowest assignment. Tasks never referenced anywhere are treated as
    extra roots at layer 0.
    """
    # Edge weights: task -> its method costs 0, method -> its subtask costs 1.
    nodes = list(model.tasks) + list(model.methods)
    out_edges: dict[str, list[tuple[str, int]]] = {n: [] for n in nodes}
    in_degree = {n: 0 for n in nodes}
    for method in model.methods.values():
        if method.parent_task in model.tasks:
            out_edges[method.parent_task].append((method.id, 0))
            in_degree[method.id] += 1
        for tr in method.transitions:
            if tr.annotation.kind == ANNOTATION_TASK and tr.annotation.ref in model.tasks:
                out_edges[method.id].append((tr.annotation.ref, 1))
                in_degree[tr.annotation.ref] += 1

    layers: dict[str, int] = {n: -1 for n in nodes}
    referenced_tasks = {target for edges in out_edges.values() for target, w in edges if w == 1}
    for task_id in model.tasks:
        if task_id == model.root_task or task_id not in referenced_tasks:
            layers[task_id] = 0

    queue = deque(n for n in nodes if in_degree[n] == 0)
    processed = 0
    while queue:
        node = queue.popleft()
        processed += 1
        for target, weight in out_edges[node]:
            candidate = layers[node] + weight
            if layers[target] < 0 or candidate < layers[target]:
                # The root stays at 0 even when some method references it.
                if target != model.root_task:
                    layers[target] = candidate
            in_degree[target] -= 1
            if in_degree[target] == 0:
                queue.append(target)
    if processed != len(nodes):
        unprocessed = sorted(n for n in nodes if in_degree[n] > 0)
        raise CycleError(f"decomposition cycle involving: {', '.join(unprocessed)}")
    return layers


def snippets(model: TmkModel) -> list[Snippet]:
    """One natural-language snippet per task, method, and knowledge entry.

    Order is deterministic: tasks, then methods, then knowledge, each
    sorted by id. Method snippets append a one-line walk of their state
    machine so retrieval can see what the method actually does.
    """
    layers = compute_layers(model)
    result: list[Snippet] = []
    for task_id in sorted(model.tasks):
        task = model.tasks[task_id]
        result.append(Snippet(task_id, PART_TASK, layers[task_id],
                              f"Task '{task.name}': {task.description}"))
    for method_id in sorted(model.methods):
        method = model.methods[method_id]
        parent = model.tasks.get(method.parent_task)
        parent_name = parent.name if parent else method.parent_task
        steps = "; ".join(
            f"{tr.from_state} -> {tr.to_state} via {_annotation_name(model, tr.annotation)}"
            for tr in method.transitions)
        text = (f"Method '{method.name}' (for task '{parent_name}'): "
                f"{method.description} Steps: {steps}.")
        result.append(Snippet(method_id, PART_METHOD, layers[method_id], text))
    for knowledge_id in sorted(model.knowledge):
        entry = model.knowledge[knowledge_id]
        text = f"Knowledge '{entry.name}': {entry.description}"
        if entry.properties:
            props = "; ".join(f"{name}: {entry.properties[name]}"
                              for name in sorted(entry.properties))
            text += f" Properties: {props}."
        result.append(Snippet(knowledge_id, PART_KNOWLEDGE, 0, text))
    return result


def _annotation_name(model: TmkModel, annotation: Annotation) -> str:
    if annotation.kind == ANNOTATION_TASK and annotation.ref in model.tasks:
        return model.tasks[annotation.ref].name
    if annotation.kind == ANNOTATION_KNOWLEDGE and annotation.ref in model.knowledge:
        return model.knowledge[annotation.ref].name
    return annotation.ref


def annotation_text(model: TmkModel, annotation: Annotation) -> str:
    """Resolve an annotation to prose: the target's name and description."""
    if annotation.kind == ANNOTATION_TASK and annotation.ref in model.tasks:
        task = model.tasks[annotation.ref]
        return f"Subtask {task.name}: {task.description}"
    if annotation.kind == ANNOTATION_KNOWLEDGE and annotation.ref in model.knowledge:
        entry = model.knowledge[annotation.ref]
        return f"Knowledge {entry.name}: {entry.description}"
    return f"{annotation.kind} {annotation.ref}"


def fsm_walk(method: Method, model: TmkModel) -> list[CoTStep]:
    """Enumerate a method's transitions once each, in breadth-first order.

    States are visited breadth-first from the start state; a state's
    outgoing transitions are emitted in declaration order. Loop edges are
    listed but never re-expanded, so the walk always terminates.
    """
    steps: list[CoTStep] = []
    states = set(method.states)
    if method.start_state not in states:
        return steps
    seen = {method.start_state}
    queue = deque([method.start_state])
    index = 0
    while queue:
        current = queue.popleft()
        for tr in method.transitions:
            if tr.from_state != current:
                continue
            index += 1
            steps.append(CoTStep(index, tr.from_state, tr.to_state,
                                 annotation_text(model, tr.annotation)))
            if tr.to_state in states and tr.to_state not in seen:
                seen.add(tr.to_state)
                queue.append(tr.to_state)
    return steps


def degrade(model: TmkModel, level: DegradationLevel | int) -> DegradedContext:
    """Produce the view of the self-model available at one degradation level.

    Level 0 keeps everything. Levels 1..3 cut task and method snippets to
    layers <= 3, <= 1, and 0 while keeping all knowledge. Level 4 drops
    every snippet and switches prompts away from inner-workings framing.
    Level 5 keeps only the one-sentence overview, and level 6 keeps
    nothing at all.
    """
    if isinstance(level, int):
        level = DegradationLevel(level)
    n = level.level
    if n == 0:
        kept = snippets(model)
    elif n in _LAYER_CUTS:
        cut = _LAYER_CUTS[n]
        kept = [s for s in snippets(model)
                if s.part == PART_KNOWLEDGE or s.layer <= cut]
    else:
        kept = []
    profile = PROFILE_FULL if n <= 3 else PROFILE_NO_INNER_WORKINGS
    return DegradedContext(level=level, snippets=tuple(kept),
                           overview_only=(n == 5), prompt_profile=profile)


def part_rank(part: str) -> int:
    return _PART_RANK[part]
