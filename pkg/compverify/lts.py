#!/usr/bin/env python3
"""
Labeled Transition Systems
Immutable LTS values and the kernel operations on them: parallel composition,
hiding, tau elimination with subset construction, language membership and
safety checking by err reachability.

State ids are integers. Id 0 is reserved for the err state; ordinary states are
numbered 1..num_states in construction order.
"""

import re
import logging
import random
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import (
    Callable, Dict, FrozenSet, Hashable, Iterable, Iterator, List, NamedTuple,
    Optional, Sequence, Set, Tuple,
)

import networkx as nx
from networkx.algorithms.isomorphism import DiGraphMatcher

from compverify.errors import LtsError

logger = logging.getLogger(__name__)

ERR = 0
ERR_NAME = "ERROR"

_LABEL_RE = re.compile(r"^([a-z][A-Za-z0-9_]*)((?:\[\d+\])*)$")
_INDEX_RE = re.compile(r"\[(\d+)\]")


# ==================== ACTIONS ====================

@dataclass(frozen=True, order=True)
class Action:
    """An observable label such as est[1][0], or the internal action tau"""
    base: str
    indices: Tuple[int, ...] = ()

    def __str__(self) -> str:
        if self.base == TAU_BASE:
            return "tau"
        return self.base + "".join(f"[{i}]" for i in self.indices)

    @property
    def is_tau(self) -> bool:
        return self.base == TAU_BASE

    @classmethod
    def parse(cls, text: str) -> "Action":
        """Parse the printed form of a label; "tau" gives TAU"""
        text = text.strip()
        if text == "tau":
            return TAU
        match = _LABEL_RE.match(text)
        if not match:
            raise LtsError(f"Not an action label: {text!r}")
        return cls(match.group(1), tuple(int(i) for i in _INDEX_RE.findall(match.group(2))))


# Not a valid FSP identifier, so no parsed label can collide with it.
TAU_BASE = "τ"
TAU = Action(TAU_BASE)

Trace = Tuple[Action, ...]


class Transition(NamedTuple):
    src: int
    action: Action
    dst: int


# ==================== LTS ====================

@dataclass(frozen=True, eq=False)
class Lts:
    """
    Finite labeled transition system.

    Attributes:
        num_states: number of ordinary states (ids 1..num_states)
        alphabet: observable actions; never contains TAU
        transitions: sorted, duplicate-free tuple of Transition
        initial: initial state id (0 only when the initial state is err)
        has_err: whether state 0 (err) exists
        names: readable name per state id, index 0 is the err name
    """
    num_states: int
    alphabet: FrozenSet[Action]
    transitions: Tuple[Transition, ...]
    initial: int
    has_err: bool = False
    names: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.names:
            object.__setattr__(self, "names", default_names(self.num_states))
        if len(self.names) != self.num_states + 1:
            raise LtsError(f"Expected {self.num_states + 1} state names, got {len(self.names)}")
        if TAU in self.alphabet:
            raise LtsError("tau cannot be part of an alphabet")
        if not self.has_state(self.initial):
            raise LtsError(f"Initial state {self.initial} is not a state")
        for t in self.transitions:
            if not (self.has_state(t.src) and self.has_state(t.dst)):
                raise LtsError(f"Transition {t} has an endpoint outside the state set")
            if t.src == ERR:
                raise LtsError("err cannot have outgoing transitions")
            if not t.action.is_tau and t.action not in self.alphabet:
                raise LtsError(f"Label {t.action} is not in the alphabet")

    @classmethod
    def make(cls, num_states: int, alphabet: Iterable[Action], transitions: Iterable,
             initial: int, has_err: bool = False, names: Sequence[str] = ()) -> "Lts":
        """Build an LTS, sorting and deduplicating the transitions"""
        trans = tuple(sorted({Transition(*t) for t in transitions}))
        return cls(num_states, frozenset(alphabet), trans, initial, has_err, tuple(names))

    def has_state(self, s: int) -> bool:
        return 1 <= s <= self.num_states or (s == ERR and self.has_err)

    @property
    def states(self) -> range:
        return range(0 if self.has_err else 1, self.num_states + 1)

    @property
    def sorted_alphabet(self) -> Tuple[Action, ...]:
        return tuple(sorted(self.alphabet))

    @cached_property
    def out(self) -> Tuple[Tuple[Tuple[Action, int], ...], ...]:
        """Outgoing (action, target) pairs per state id, sorted"""
        edges: List[List[Tuple[Action, int]]] = [[] for _ in range(self.num_states + 1)]
        for t in self.transitions:
            edges[t.src].append((t.action, t.dst))
        return tuple(tuple(e) for e in edges)

    @cached_property
    def out_by_action(self) -> Tuple[Dict[Action, Tuple[int, ...]], ...]:
        table = []
        for edges in self.out:
            by_action: Dict[Action, List[int]] = {}
            for action, dst in edges:
                by_action.setdefault(action, []).append(dst)
            table.append({a: tuple(d) for a, d in by_action.items()})
        return tuple(table)

    @cached_property
    def labels_used(self) -> FrozenSet[Action]:
        return frozenset(t.action for t in self.transitions)

    def __repr__(self) -> str:
        return (f"Lts(states={self.num_states}, transitions={len(self.transitions)}, "
                f"alphabet={len(self.alphabet)}, has_err={self.has_err})")


def default_names(num_states: int) -> Tuple[str, ...]:
    return (ERR_NAME,) + tuple(f"Q{i - 1}" for i in range(1, num_states + 1))


class SafetyVerdict(NamedTuple):
    safe: bool
    counterexample: Optional[Trace] = None


@dataclass(frozen=True)
class Acceptance:
    """Result of a membership query; truthy when the trace is accepted"""
    accepted: bool
    out_of_alphabet: bool = False

    def __bool__(self) -> bool:
        return self.accepted


# ==================== CONSTRUCTION ====================

def explore(initial: Hashable,
            successors: Callable[[Hashable], Iterable[Tuple[Action, Hashable]]],
            alphabet: Optional[Iterable[Action]],
            is_err: Callable[[Hashable], bool] = lambda key: False,
            name: Callable[[Hashable], str] = str) -> Lts:
    """
    Breadth-first construction of the reachable part of an implicitly given LTS.
    States are numbered in discovery order; keys for which is_err holds all map
    to the single err state. With alphabet None the labels that occur are used.
    """
    ids: Dict[Hashable, int] = {}
    names: List[str] = [ERR_NAME]
    transitions: List[Transition] = []
    queue: deque = deque()
    has_err = False

    def visit(key) -> int:
        nonlocal has_err
        if is_err(key):
            has_err = True
            return ERR
        sid = ids.get(key)
        if sid is None:
            sid = len(names)
            ids[key] = sid
            names.append(name(key))
            queue.append(key)
        return sid

    init = visit(initial)
    while queue:
        key = queue.popleft()
        src = ids[key]
        for action, nxt in successors(key):
            transitions.append(Transition(src, action, visit(nxt)))

    if alphabet is None:
        alphabet = {t.action for t in transitions if not t.action.is_tau}
    return Lts.make(len(names) - 1, alphabet, transitions, init, has_err, names)


def reachable(m: Lts) -> Lts:
    """Restrict to states reachable from the initial state, renumbered BFS order"""
    return explore(m.initial, lambda s: m.out[s], m.alphabet,
                   is_err=lambda s: s == ERR, name=lambda s: m.names[s])


def rename_bfs(m: Lts, prefix: str = "Q") -> Lts:
    """Reachable part with states named prefix0, prefix1, ... in BFS order"""
    r = reachable(m)
    names = (ERR_NAME,) + tuple(f"{prefix}{i}" for i in range(r.num_states))
    return Lts(r.num_states, r.alphabet, r.transitions, r.initial, r.has_err, names)


def universal_property() -> Lts:
    """One state, empty alphabet: composing with it leaves the language unchanged"""
    return Lts.make(1, (), (), 1)


def with_alphabet(m: Lts, extra: Iterable[Action]) -> Lts:
    """Same LTS with a larger alphabet; added actions are never enabled"""
    alphabet = m.alphabet | frozenset(a for a in extra if not a.is_tau)
    return Lts(m.num_states, alphabet, m.transitions, m.initial, m.has_err, m.names)


# ==================== OPERATORS ====================

def compose(m1: Lts, m2: Lts) -> Lts:
    """
    Parallel composition. Shared observable actions synchronize, everything
    else interleaves; any pair with an err coordinate is the err state.
    """
    shared = m1.alphabet & m2.alphabet
    out1, out2 = m1.out, m2.out
    by_action2 = m2.out_by_action

    def successors(pair):
        s1, s2 = pair
        moves = []
        for action, t1 in out1[s1]:
            if action in shared:
                for t2 in by_action2[s2].get(action, ()):
                    moves.append((action, (t1, t2)))
            else:
                moves.append((action, (t1, s2)))
        for action, t2 in out2[s2]:
            if action not in shared:
                moves.append((action, (s1, t2)))
        moves.sort()
        return moves

    product = explore(
        (m1.initial, m2.initial), successors, m1.alphabet | m2.alphabet,
        is_err=lambda pair: pair[0] == ERR or pair[1] == ERR,
        name=lambda pair: f"({m1.names[pair[0]]},{m2.names[pair[1]]})",
    )
    logger.debug(f"compose: {m1.num_states} x {m2.num_states} -> {product.num_states} states, "
                 f"{len(product.transitions)} transitions")
    return product


def compose_all(ms: Sequence[Lts]) -> Lts:
    if not ms:
        return universal_property()
    result = ms[0]
    for m in ms[1:]:
        result = compose(result, m)
    return result


def hide(m: Lts, sigma: Iterable[Action]) -> Lts:
    """Keep alphabet(m) & sigma observable and relabel every other transition as tau"""
    keep = m.alphabet & frozenset(sigma)
    transitions = [t if t.action in keep else Transition(t.src, TAU, t.dst) for t in m.transitions]
    return Lts.make(m.num_states, keep, transitions, m.initial, m.has_err, m.names)


def tau_closure(m: Lts, states: Iterable[int]) -> FrozenSet[int]:
    """All states reachable from the given ones through tau transitions alone"""
    seen: Set[int] = set(states)
    stack = list(seen)
    by_action = m.out_by_action
    while stack:
        s = stack.pop()
        for t in by_action[s].get(TAU, ()):
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return frozenset(seen)


def _step(m: Lts, states: Iterable[int], action: Action) -> Set[int]:
    by_action = m.out_by_action
    targets: Set[int] = set()
    for s in states:
        targets.update(by_action[s].get(action, ()))
    return targets


def determinize(m: Lts) -> Lts:
    """
    Tau elimination and subset construction. A subset that contains err is the
    err state. Subsets are keyed by their members that can do something other
    than tau; states whose moves are all tau add nothing to a subset's future.
    """
    closures: Dict[int, FrozenSet[int]] = {}

    def closure_of(states: Iterable[int]) -> FrozenSet[int]:
        result: Set[int] = set()
        for s in states:
            c = closures.get(s)
            if c is None:
                c = closures[s] = tau_closure(m, (s,))
            result |= c
        return frozenset(result)

    def transient(s: int) -> bool:
        edges = m.out[s]
        return bool(edges) and all(a.is_tau for a, _ in edges)

    def key_of(closure: FrozenSet[int]):
        if ERR in closure:
            return ERR
        return frozenset(s for s in closure if not transient(s))

    def successors(key):
        actions = sorted({a for s in key for a, _ in m.out[s] if not a.is_tau})
        return [(a, key_of(closure_of(_step(m, key, a)))) for a in actions]

    def name(key) -> str:
        return "{" + ",".join(m.names[s] for s in sorted(key)) + "}"

    result = explore(key_of(closure_of((m.initial,))), successors, m.alphabet,
                     is_err=lambda key: key == ERR, name=name)
    logger.debug(f"determinize: {m.num_states} -> {result.num_states} states")
    return result


def is_deterministic(m: Lts) -> bool:
    for by_action in m.out_by_action:
        for action, targets in by_action.items():
            if action.is_tau or len(targets) > 1:
                return False
    return True


def complement(a: Lts) -> Lts:
    """
    Error automaton of a property or assumption: every action a state cannot
    perform leads to err. Nondeterministic inputs are determinized first.
    """
    if not is_deterministic(a):
        a = determinize(a)
    transitions = list(a.transitions)
    for s in range(1, a.num_states + 1):
        enabled = a.out_by_action[s]
        for action in a.sorted_alphabet:
            if action not in enabled:
                transitions.append(Transition(s, action, ERR))
    return Lts.make(a.num_states, a.alphabet, transitions, a.initial, True, a.names)


def property_to_error(p: Lts) -> Lts:
    """P_err for a safety property given as the LTS of its allowed behaviour"""
    return complement(determinize(p))


def remove_err(m: Lts) -> Lts:
    """Drop transitions into err; an err initial state is kept"""
    transitions = [t for t in m.transitions if t.dst != ERR]
    return Lts.make(m.num_states, m.alphabet, transitions, m.initial,
                    m.initial == ERR, m.names)


# ==================== QUERIES ====================

def _simulate(m: Lts, trace: Iterable[Action]) -> Iterator[FrozenSet[int]]:
    current = tau_closure(m, (m.initial,))
    yield current
    for action in trace:
        current = tau_closure(m, _step(m, current, action))
        yield current


def accepts(m: Lts, trace: Iterable[Action]) -> Acceptance:
    """
    Membership in L(m): the trace can be executed and no run over any of its
    prefixes can reach err.

    An m whose initial state is err (or reaches err over tau alone) has the
    empty language, so even the empty trace is rejected. That is how an
    empty assumption shows up.
    """
    trace = tuple(trace)
    if any(a.is_tau or a not in m.alphabet for a in trace):
        return Acceptance(False, True)
    for current in _simulate(m, trace):
        if not current or ERR in current:
            return Acceptance(False)
    return Acceptance(True)


def reaches_err(m: Lts, trace: Iterable[Action]) -> bool:
    """True when some run over the trace (or a prefix of it) reaches err"""
    for current in _simulate(m, trace):
        if ERR in current:
            return True
        if not current:
            return False
    return False


def check_safety(m: Lts, p_err: Lts) -> SafetyVerdict:
    """
    Err reachability in m || p_err. The counterexample is a shortest
    observable trace to err: tau steps cost nothing (0-1 BFS).
    """
    product = compose(m, p_err)
    if not product.has_err:
        return SafetyVerdict(True)
    if product.initial == ERR:
        return SafetyVerdict(False, ())

    parent: Dict[int, Tuple[int, Action]] = {product.initial: (-1, TAU)}
    dist = {product.initial: 0}
    settled: Set[int] = set()
    queue = deque([product.initial])
    while queue:
        s = queue.popleft()
        if s in settled:
            continue
        settled.add(s)
        if s == ERR:
            return SafetyVerdict(False, _trace_to(parent, ERR))
        for action, t in product.out[s]:
            cost = 0 if action.is_tau else 1
            if t in settled or dist.get(t, cost + dist[s] + 1) <= dist[s] + cost:
                continue
            dist[t] = dist[s] + cost
            parent[t] = (s, action)
            if cost:
                queue.append(t)
            else:
                queue.appendleft(t)
    return SafetyVerdict(True)


def _trace_to(parent: Dict[int, Tuple[int, Action]], target: int) -> Trace:
    path: List[Action] = []
    s = target
    while parent[s][0] != -1:
        s, action = parent[s]
        if not action.is_tau:
            path.append(action)
    return tuple(reversed(path))


def size(m: Lts, count_err: bool = False) -> Tuple[int, int]:
    """(states, transitions); err is left out of the state count unless asked"""
    return m.num_states + (1 if count_err and m.has_err else 0), len(m.transitions)


def traces(m: Lts, max_len: int) -> Set[Trace]:
    """Every trace of L(m) up to max_len actions"""
    d = determinize(m)
    found: Set[Trace] = set()
    if d.initial == ERR:
        return found
    frontier = [(d.initial, ())]
    for _ in range(max_len + 1):
        following = []
        for s, trace in frontier:
            found.add(trace)
            for action, t in d.out[s]:
                if t != ERR:
                    following.append((t, trace + (action,)))
        frontier = following
    return found


def _as_graph(m: Lts) -> nx.DiGraph:
    graph = nx.DiGraph()
    for s in m.states:
        graph.add_node(s, initial=(s == m.initial), err=(s == ERR))
    for t in m.transitions:
        if graph.has_edge(t.src, t.dst):
            graph[t.src][t.dst]["labels"] = graph[t.src][t.dst]["labels"] | {t.action}
        else:
            graph.add_edge(t.src, t.dst, labels=frozenset({t.action}))
    return graph


def are_isomorphic(a: Lts, b: Lts) -> bool:
    """Structural isomorphism preserving labels, initial state and err"""
    if (a.alphabet != b.alphabet or a.num_states != b.num_states
            or a.has_err != b.has_err or len(a.transitions) != len(b.transitions)):
        return False
    matcher = DiGraphMatcher(
        _as_graph(a), _as_graph(b),
        node_match=lambda x, y: x["initial"] == y["initial"] and x["err"] == y["err"],
        edge_match=lambda x, y: x["labels"] == y["labels"],
    )
    return matcher.is_isomorphic()


# ==================== RANDOM INSTANCES ====================

def random_lts(rng: random.Random, num_states: int, actions: Sequence[Action],
               density: float = 0.5, branching: float = 0.2,
               tau_prob: float = 0.0, err_prob: float = 0.0) -> Lts:
    """
    Random LTS over the given actions for property tests. Each (state, action)
    pair gets a random target with probability density and a second one with
    probability branching; tau edges and edges into err have their own odds.
    """
    transitions = []
    for s in range(1, num_states + 1):
        for action in actions:
            if rng.random() < density:
                transitions.append((s, action, rng.randint(1, num_states)))
                if rng.random() < branching:
                    transitions.append((s, action, rng.randint(1, num_states)))
            if err_prob and rng.random() < err_prob:
                transitions.append((s, action, ERR))
        if tau_prob and rng.random() < tau_prob:
            transitions.append((s, TAU, rng.randint(1, num_states)))
    has_err = any(t[2] == ERR for t in transitions)
    return Lts.make(num_states, actions, transitions, 1, has_err)
