"""
LTS serialization: Aldebaran .aut, Graphviz DOT and JSON.

In .aut output the err state, when present, is state 0 and ordinary states keep
their ids; without err, ids are shifted down by one so numbering starts at 0.
"""

import re
import json
import logging
from typing import Any, Dict, Iterator

from compverify.errors import AutFormatError, LtsError
from compverify.lts import ERR, Action, Lts, Transition

logger = logging.getLogger(__name__)

_HEADER_RE = re.compile(r"^des\s*\(\s*(\d+)\s*,\s*(\d+)\s*,\s*(\d+)\s*\)$")
_EDGE_RE = re.compile(r'^\(\s*(\d+)\s*,\s*"([^"]*)"\s*,\s*(\d+)\s*\)$')


# ==================== ALDEBARAN ====================

def write_aut(m: Lts) -> str:
    offset = 0 if m.has_err else 1
    count = m.num_states + (1 if m.has_err else 0)
    lines = [f"des ({m.initial - offset}, {len(m.transitions)}, {count})"]
    for t in m.transitions:
        lines.append(f'({t.src - offset}, "{t.action}", {t.dst - offset})')
    return "\n".join(lines) + "\n"


def read_aut(text: str, has_err: bool = False) -> Lts:
    """
    Parse .aut text. With has_err, state 0 is read as err. The alphabet is the
    set of labels that occur, since the format does not declare one.
    """
    rows = [(n, line.strip()) for n, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not rows:
        raise AutFormatError("empty input")

    n, header = rows[0]
    match = _HEADER_RE.match(header)
    if not match:
        raise AutFormatError(f"bad header {header!r}", n)
    initial, declared, count = (int(g) for g in match.groups())

    offset = 0 if has_err else 1
    transitions = []
    for n, line in rows[1:]:
        edge = _EDGE_RE.match(line)
        if not edge:
            raise AutFormatError(f"bad transition {line!r}", n)
        src, label, dst = int(edge.group(1)), edge.group(2), int(edge.group(3))
        if src >= count or dst >= count:
            raise AutFormatError(f"state out of range in {line!r}", n)
        try:
            action = Action.parse(label)
        except LtsError as e:
            raise AutFormatError(str(e), n)
        transitions.append(Transition(src + offset, action, dst + offset))

    if len(transitions) != declared:
        raise AutFormatError(f"header declares {declared} transitions, found {len(transitions)}")
    if initial >= count:
        raise AutFormatError(f"initial state {initial} out of range")

    alphabet = {t.action for t in transitions if not t.action.is_tau}
    num_states = count - 1 if has_err else count
    try:
        return Lts.make(num_states, alphabet, transitions, initial + offset, has_err)
    except LtsError as e:
        raise AutFormatError(str(e))


# ==================== GRAPHVIZ ====================

def _gvquote(s: str) -> str:
    return '"{}"'.format(s.replace('"', r'\"'))


def dot_lines(m: Lts, name: str = "lts") -> Iterator[str]:
    yield f"digraph {_gvquote(name)} {{\n"
    yield "  rankdir=LR;\n"
    yield '  __start [shape=point label=""];\n'
    for s in m.states:
        if s == ERR:
            yield f'  {s} [label={_gvquote(m.names[s])} shape=doubleoctagon color=red fontcolor=red];\n'
        else:
            yield f"  {s} [label={_gvquote(m.names[s])} shape=circle];\n"
    yield f"  __start -> {m.initial};\n"
    for t in m.transitions:
        yield f"  {t.src} -> {t.dst} [label={_gvquote(str(t.action))}];\n"
    yield "}\n"


def write_dot(m: Lts, name: str = "lts") -> str:
    return "".join(dot_lines(m, name))


# ==================== JSON ====================

def lts_to_dict(m: Lts) -> Dict[str, Any]:
    return {
        "states": m.num_states,
        "has_err": m.has_err,
        "initial": m.initial,
        "alphabet": [str(a) for a in m.sorted_alphabet],
        "transitions": [[t.src, str(t.action), t.dst] for t in m.transitions],
        "names": list(m.names),
    }


def lts_from_dict(data: Dict[str, Any]) -> Lts:
    transitions = [(src, Action.parse(label), dst) for src, label, dst in data["transitions"]]
    return Lts.make(
        data["states"], (Action.parse(a) for a in data["alphabet"]), transitions,
        data["initial"], data["has_err"], data.get("names", ()),
    )


def write_json(m: Lts) -> str:
    return json.dumps(lts_to_dict(m), indent=2) + "\n"


def read_json(text: str) -> Lts:
    return lts_from_dict(json.loads(text))
