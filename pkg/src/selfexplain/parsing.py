"""Reading and writing self-model documents (.tmk.json).

Parsing enforces the document schema: JSON syntax, required fields,
identifier hygiene (lowercase kebab-case, globally unique), and reference
resolution. Semantic invariants beyond that (reachability, cycles, empty
descriptions) are the job of ``model.validate`` so that a structurally
sound but broken model can still be loaded and reported on.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

from .errors import DanglingReferenceError, DuplicateIdError, ModelSyntaxError, SchemaError
from .model import (
    ANNOTATION_KNOWLEDGE,
    ANNOTATION_TASK,
    Annotation,
    KnowledgeEntry,
    Method,
    Task,
    TmkModel,
    Transition,
)

_ID_RE = re.compile(r"^[a-z0-9]+(-[a-z0-9]+)*$")
_TOP_LEVEL_KEYS = ("agent_name", "overview", "root_task", "tasks", "methods", "knowledge")


def _reject_duplicate_keys(pairs: list[tuple[str, object]]) -> dict:
    obj: dict = {}
    for key, value in pairs:
        if key in obj:
            raise DuplicateIdError(f"duplicate key '{key}' in document")
        obj[key] = value
    return obj


def parse_model(text: str) -> TmkModel:
    """Parse a model document into an immutable ``TmkModel``.

    Raises ``ModelSyntaxError``, ``SchemaError``, ``DuplicateIdError`` or
    ``DanglingReferenceError``; each is a distinct kind so callers can
    tell a typo from a broken reference.
    """
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise ModelSyntaxError(exc.msg, exc.lineno, exc.colno) from exc
    if not isinstance(raw, dict):
        raise SchemaError("model document must be a JSON object")
    for key in _TOP_LEVEL_KEYS:
        if key not in raw:
            raise SchemaError(f"missing top-level field '{key}'")
    for key in raw:
        if key not in _TOP_LEVEL_KEYS:
            raise SchemaError(f"unexpected top-level field '{key}'")

    agent_name = _text_field(raw, "agent_name", "document")
    overview = _text_field(raw, "overview", "document")
    root_task = _text_field(raw, "root_task", "document")

    tasks = {tid: _parse_task(tid, body) for tid, body in _node_map(raw, "tasks").items()}
    methods = {mid: _parse_method(mid, body) for mid, body in _node_map(raw, "methods").items()}
    knowledge = {kid: _parse_knowledge(kid, body)
                 for kid, body in _node_map(raw, "knowledge").items()}

    _check_unique_ids(tasks, methods, knowledge)
    model = TmkModel(agent_name=agent_name, overview=overview, root_task=root_task,
                     tasks=tasks, methods=methods, knowledge=knowledge)
    _check_references(model)
    return model


def parse_model_file(path: str | Path) -> TmkModel:
    return parse_model(Path(path).read_text(encoding="utf-8"))


def _node_map(raw: dict, key: str) -> dict[str, dict]:
    section = raw[key]
    if not isinstance(section, dict):
        raise SchemaError(f"'{key}' must be an object keyed by id")
    for node_id, body in section.items():
        if not _ID_RE.match(node_id):
            raise SchemaError(f"invalid id '{node_id}' in '{key}' "
                              "(ids are lowercase kebab-case)")
        if not isinstance(body, dict):
            raise SchemaError(f"'{key}.{node_id}' must be an object")
        if "id" in body and body["id"] != node_id:
            raise SchemaError(f"'{key}.{node_id}' declares mismatched id '{body['id']}'")
    return section


def _text_field(body: dict, name: str, where: str) -> str:
    if name not in body:
        raise SchemaError(f"missing field '{name}' in {where}")
    value = body[name]
    if not isinstance(value, str):
        raise SchemaError(f"field '{name}' in {where} must be text")
    return value


def _list_field(body: dict, name: str, where: str) -> list:
    value = body[name]
    if not isinstance(value, list) or not all(isinstance(v, str) for v in value):
        raise SchemaError(f"field '{name}' in {where} must be a list of ids")
    return value


def _parse_task(task_id: str, body: dict) -> Task:
    where = f"task '{task_id}'"
    _check_fields(body, where, required={"name", "description"}, optional={"id", "achieved_by"})
    achieved_by = tuple(_list_field(body, "achieved_by", where)) if "achieved_by" in body else ()
    return Task(id=task_id, name=_text_field(body, "name", where),
                description=_text_field(body, "description", where),
                achieved_by=achieved_by)


def _parse_method(method_id: str, body: dict) -> Method:
    where = f"method '{method_id}'"
    _check_fields(body, where,
                  required={"name", "description", "parent_task", "states",
                            "start_state", "terminal_states", "transitions"},
                  optional={"id"})
    states = tuple(_list_field(body, "states", where))
    if not isinstance(body["transitions"], list):
        raise SchemaError(f"field 'transitions' in {where} must be a list")
    transitions = tuple(_parse_transition(method_id, i, tr)
                        for i, tr in enumerate(body["transitions"]))
    return Method(id=method_id,
                  name=_text_field(body, "name", where),
                  description=_text_field(body, "description", where),
                  parent_task=_text_field(body, "parent_task", where),
                  states=states,
                  start_state=_text_field(body, "start_state", where),
                  terminal_states=frozenset(_list_field(body, "terminal_states", where)),
                  transitions=transitions)


def _parse_transition(method_id: str, index: int, body: object) -> Transition:
    where = f"transition {index} of method '{method_id}'"
    if not isinstance(body, dict):
        raise SchemaError(f"{where} must be an object")
    _check_fields(body, where, required={"from", "to", "annotation", "description"},
                  optional=set())
    annotation = body["annotation"]
    if not isinstance(annotation, dict) or set(annotation) != {"kind", "ref"}:
        raise SchemaError(f"{where} needs an annotation with exactly 'kind' and 'ref'")
    kind = annotation["kind"]
    if kind not in (ANNOTATION_TASK, ANNOTATION_KNOWLEDGE):
        raise SchemaError(f"{where} has unknown annotation kind '{kind}'")
    return Transition(from_state=_text_field(body, "from", where),
                      to_state=_text_field(body, "to", where),
                      annotation=Annotation(kind=kind, ref=str(annotation["ref"])),
                      description=_text_field(body, "description", where))


def _parse_knowledge(knowledge_id: str, body: dict) -> KnowledgeEntry:
    where = f"knowledge '{knowledge_id}'"
    _check_fields(body, where, required={"name", "description"}, optional={"id", "properties"})
    properties: dict[str, str] = {}
    if "properties" in body:
        if not isinstance(body["properties"], dict) or not all(
                isinstance(v, str) for v in body["properties"].values()):
            raise SchemaError(f"field 'properties' in {where} must map names to text")
        properties = dict(body["properties"])
    return KnowledgeEntry(id=knowledge_id, name=_text_field(body, "name", where),
                          description=_text_field(body, "description", where),
                          properties=properties)


def _check_fields(body: dict, where: str, required: set[str], optional: set[str]) -> None:
    for name in required:
        if name not in body:
            raise SchemaError(f"missing field '{name}' in {where}")
    for name in body:
        if name not in required and name not in optional:
            raise SchemaError(f"unexpected field '{name}' in {where}")


def _check_unique_ids(tasks: dict, methods: dict, knowledge: dict) -> None:
    seen: dict[str, str] = {}
    for section, ids in (("task", tasks), ("method", methods), ("knowledge", knowledge)):
        for node_id in ids:
            if node_id in seen:
                raise DuplicateIdError(
                    f"id '{node_id}' declared as both {seen[node_id]} and {section}")
            seen[node_id] = section


def _check_references(model: TmkModel) -> None:
    def missing(what: str, ref: str, where: str) -> DanglingReferenceError:
        return DanglingReferenceError(f"{where} references unknown {what} '{ref}'")

    if model.root_task not in model.tasks:
        raise missing("task", model.root_task, "root_task")
    for task in model.tasks.values():
        for method_id in task.achieved_by:
            if method_id not in model.methods:
                raise missing("method", method_id, f"task '{task.id}'")
    for method in model.methods.values():
        where = f"method '{method.id}'"
        if method.parent_task not in model.tasks:
            raise missing("task", method.parent_task, where)
        states = set(method.states)
        if method.start_state not in states:
            raise missing("state", method.start_state, where)
        for terminal in method.terminal_states:
            if terminal not in states:
                raise missing("state", terminal, where)
        for tr in method.transitions:
            if tr.from_state not in states:
                raise missing("state", tr.from_state, where)
            if tr.to_state not in states:
                raise missing("state", tr.to_state, where)
            if tr.annotation.kind == ANNOTATION_TASK and tr.annotation.ref not in model.tasks:
                raise missing("task", tr.annotation.ref, where)
            if (tr.annotation.kind == ANNOTATION_KNOWLEDGE
                    and tr.annotation.ref not in model.knowledge):
                raise missing("knowledge", tr.annotation.ref, where)


def serialize_model(model: TmkModel) -> str:
    """Render a model back to canonical document text.

    Node maps are sorted by id and knowledge properties by name, so two
    serializations of equal models are byte-identical, and parsing the
    output yields a model equal to the input.
    """
    doc = {
        "agent_name": model.agent_name,
        "overview": model.overview,
        "root_task": model.root_task,
        "tasks": {
            tid: _task_doc(model.tasks[tid]) for tid in sorted(model.tasks)
        },
        "methods": {
            mid: _method_doc(model.methods[mid]) for mid in sorted(model.methods)
        },
        "knowledge": {
            kid: _knowledge_doc(model.knowledge[kid]) for kid in sorted(model.knowledge)
        },
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _task_doc(task: Task) -> dict:
    doc: dict = {"name": task.name, "description": task.description}
    if task.achieved_by:
        doc["achieved_by"] = list(task.achieved_by)
    return doc


def _method_doc(method: Method) -> dict:
    return {
        "name": method.name,
        "description": method.description,
        "parent_task": method.parent_task,
        "states": list(method.states),
        "start_state": method.start_state,
        "terminal_states": sorted(method.terminal_states),
        "transitions": [
            {
                "from": tr.from_state,
                "to": tr.to_state,
                "annotation": {"kind": tr.annotation.kind, "ref": tr.annotation.ref},
                "description": tr.description,
            }
            for tr in method.transitions
        ],
    }


def _knowledge_doc(entry: KnowledgeEntry) -> dict:
    doc: dict = {"name": entry.name, "description": entry.description}
    if entry.properties:
        doc["properties"] = {name: entry.properties[name] for name in sorted(entry.properties)}
    return doc
