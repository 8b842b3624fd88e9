"""Search tree serialization and Graphviz rendering.

The JSON form keeps every node's state, scores, and bookkeeping together with
the problem and the search configuration, so a run can be inspected long after
the process is gone.  The DOT form is for eyeballs: the winning path is drawn
heavy, dead ends are dashed.
"""

from __future__ import annotations

import json
from pathlib import Path

from .blocksworld import Problem, problem_to_dict, state_to_dict
from .search import SearchConfig, SearchNode, SearchResult


def _action_dict(node: SearchNode) -> dict | None:
    if node.action is None:
        return None
    return {
        "kind": node.action.kind.value,
        "subject": node.action.subject,
        "target": node.action.target,
    }


def tree_to_dict(result: SearchResult, problem: Problem, config: SearchConfig) -> dict:
    nodes = []
    for n in result.tree.nodes:
        nodes.append(
            {
                "id": n.id,
                "parent": n.parent,
                "action": _action_dict(n),
                "text": n.text,
                "state": state_to_dict(n.state),
                "depth": n.depth,
                "value": n.value,
                "step_reward": n.step_reward,
                "visits": n.visits,
                "path_sum": n.path_sum,
                "path_count": n.path_count,
                "terminal": n.terminal,
                "exhausted": n.exhausted,
                "malformed": n.malformed,
                "end_of_plan": n.end_of_plan,
                "reward_values": n.reward_values,
                "reward_normalized": n.reward_normalized,
                "children": list(n.children),
            }
        )
    return {
        "problem": problem_to_dict(problem),
        "config": config.to_dict(),
        "plan": [a.text() for a in result.plan],
        "solved": result.solved,
        "best_node_id": result.best_node_id,
        "best_value": result.best_value,
        "iterations": result.iterations,
        "expansions": result.expansions,
        "nodes_created": result.nodes_created,
        "rollout_generations": result.rollout_generations,
        "decode_stats": result.decode_stats.to_dict(),
        "edges": [
            {
                "node_id": e.node_id,
                "parent_id": e.parent_id,
                "reward": e.reward,
                "delta_progress": e.delta_progress,
                "values": e.values,
            }
            for e in result.edges
        ],
        "nodes": nodes,
    }


def save_tree(data: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def load_tree(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")


def tree_to_dot(data: dict) -> str:
    """Render an exported tree as a Graphviz digraph."""
    best_path: set[int] = set()
    nodes_by_id = {n["id"]: n for n in data["nodes"]}
    cursor = data.get("best_node_id", 0)
    while cursor is not None:
        best_path.add(cursor)
        cursor = nodes_by_id[cursor]["parent"]

    lines = [
        "digraph search {",
        "  rankdir=TB;",
        '  node [shape=box, fontname="monospace", fontsize=9];',
    ]
    for n in data["nodes"]:
        label = f"#{n['id']} v={n['value']:.3f} N={n['visits']}"
        if n["action"] is not None:
            label = f"{n['text'].strip() or 'step'}\n{label}"
        elif n["end_of_plan"]:
            label = f"end of plan\n{label}"
        elif n["parent"] is None:
            label = f"start\n{label}"
        attrs = [f'label="{_dot_escape(label)}"']
        if n["malformed"]:
            attrs.append("style=dashed")
            attrs.append("color=gray50")
        elif n["terminal"] == "goal":
            attrs.append("color=darkgreen")
            attrs.append("penwidth=2")
        if n["id"] in best_path:
            attrs.append("penwidth=3")
        lines.append(f"  n{n['id']} [{', '.join(attrs)}];")
    for n in data["nodes"]:
        if n["parent"] is None:
            continue
        style = " [penwidth=3]" if n["id"] in best_path and n["parent"] in best_path else ""
        lines.append(f"  n{n['parent']} -> n{n['id']}{style};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def save_dot(data: dict, path: str | Path) -> None:
    Path(path).write_text(tree_to_dot(data))
