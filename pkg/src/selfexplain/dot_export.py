"""Render a self-model as a Graphviz DOT document.

Tasks become boxes, each method becomes a cluster of circle-shaped
states, and transitions become labeled edges. Output is deterministic:
tasks and methods are sorted by id, states and transitions keep their
declaration order.
"""

from __future__ import annotations

from .model import TmkModel, _annotation_name


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_dot(model: TmkModel) -> str:
    lines = ["digraph self_model {", "  rankdir=LR;",
             f"  label={_quote(model.agent_name)};"]
    for task_id in sorted(model.tasks):
        task = model.tasks[task_id]
        lines.append(f"  {_quote('task:' + task_id)} [shape=box, label={_quote(task.name)}];")
    for method_id in sorted(model.methods):
        method = model.methods[method_id]
        lines.append(f"  subgraph {_quote('cluster:' + method_id)} {{")
        lines.append(f"    label={_quote(method.name)};")
        for state in method.states:
            node = f"state:{method_id}:{state}"
            lines.append(f"    {_quote(node)} [shape=circle, label={_quote(state)}];")
        lines.append("  }")
        start = f"state:{method_id}:{method.start_state}"
        lines.append(f"  {_quote('task:' + method.parent_task)} -> {_quote(start)}"
                     f" [style=dashed, label={_quote(method.name)}];")
        for tr in method.transitions:
            src = f"state:{method_id}:{tr.from_state}"
            dst = f"state:{method_id}:{tr.to_state}"
            label = _annotation_name(model, tr.annotation)
            lines.append(f"  {_quote(src)} -> {_quote(dst)} [label={_quote(label)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
