#!/usr/bin/env python3
"""
Weakest Assumption Generation
Builds the weakest assumption over an interface alphabet for a component M and
a safety property, together with its deterministic err automaton.

Pipeline: compose with the property's error LTS, hide everything outside the
interface, propagate err backwards over tau and actual-tagged edges,
determinize, complete with a sink and finally drop err.
"""

import time
import logging
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, List, Optional, Sequence

from compverify.errors import InterfaceError
from compverify.formats import write_aut
from compverify.lts import (
    ERR, Action, Lts, Transition, check_safety, complement, compose, determinize,
    hide, reachable, remove_err, rename_bfs, with_alphabet,
)

logger = logging.getLogger(__name__)

SINK_NAME = "SINK"
ACTUAL = "actual"
ESTIMATE = "estimate"


# ==================== TYPES ====================

@dataclass(frozen=True)
class InterfaceAlphabet:
    """Interface actions tagged as actuals (ground truth) or estimates (perception output)"""
    actuals: FrozenSet[Action]
    estimates: FrozenSet[Action]

    def __post_init__(self):
        overlap = self.actuals & self.estimates
        if overlap:
            raise InterfaceError(f"Actions tagged both actual and estimate: {sorted(map(str, overlap))}")

    @classmethod
    def of(cls, actuals: Iterable[Action] = (), estimates: Iterable[Action] = ()) -> "InterfaceAlphabet":
        return cls(frozenset(actuals), frozenset(estimates))

    @classmethod
    def from_bases(cls, alphabet: Iterable[Action], actual_bases: Sequence[str] = (),
                   estimate_bases: Sequence[str] = ("est",)) -> "InterfaceAlphabet":
        """Tag the actions of an alphabet by label base, e.g. act[..] and est[..]"""
        alphabet = list(alphabet)
        return cls(frozenset(a for a in alphabet if a.base in actual_bases),
                   frozenset(a for a in alphabet if a.base in estimate_bases))

    @property
    def sigma(self) -> FrozenSet[Action]:
        return self.actuals | self.estimates

    def tag(self, action: Action) -> Optional[str]:
        if action in self.actuals:
            return ACTUAL
        if action in self.estimates:
            return ESTIMATE
        return None

    def tags(self) -> Dict[str, str]:
        return {str(a): self.tag(a) for a in sorted(self.sigma)}


@dataclass(frozen=True)
class AssumptionStats:
    states: int
    transitions: int
    wall_time_ms: float
    peak_mem_kb: int
    sink_counted: bool = True

    def line(self, max_cte: Any = "-") -> str:
        return (f"m={max_cte} states={self.states} time_ms={self.wall_time_ms:.1f} "
                f"mem_kb={self.peak_mem_kb}")


@dataclass(frozen=True)
class AssumptionResult:
    """
    Attributes:
        assumption: deterministic LTS over sigma without err (sink included)
        err_automaton: the completed deterministic automaton with err
        empty: no context over sigma keeps M safe
        stats: sizes and cost of the construction
    """
    assumption: Lts
    err_automaton: Lts
    empty: bool
    stats: AssumptionStats


# ==================== ALGORITHM ====================

def backward_error_propagation(m: Lts, actuals: Iterable[Action] = ()) -> Lts:
    """
    Least fixpoint: a state with a tau or actual-labeled transition into the
    err set joins it. The set collapses into err; transitions leaving it are
    dropped and the remaining states are renumbered in order.
    """
    if not m.has_err:
        return m
    actuals = frozenset(actuals)
    preds: List[List[int]] = [[] for _ in range(m.num_states + 1)]
    for t in m.transitions:
        if t.action.is_tau or t.action in actuals:
            preds[t.dst].append(t.src)

    bad = {ERR}
    stack = [ERR]
    while stack:
        s = stack.pop()
        for p in preds[s]:
            if p not in bad:
                bad.add(p)
                stack.append(p)

    if len(bad) == 1:
        return m

    renumber = {ERR: ERR}
    names = [m.names[ERR]]
    for s in range(1, m.num_states + 1):
        if s not in bad:
            renumber[s] = len(names)
            names.append(m.names[s])
    for s in bad:
        renumber[s] = ERR

    transitions = [Transition(renumber[t.src], t.action, renumber[t.dst])
                   for t in m.transitions if t.src not in bad]
    logger.debug(f"backward propagation collapsed {len(bad) - 1} states into err")
    return Lts.make(len(names) - 1, m.alphabet, transitions, renumber[m.initial], True, names)


def complete_with_sink(a: Lts) -> Lts:
    """Send every missing (state, action) of a deterministic LTS to a fresh sink"""
    if a.initial == ERR:
        return a
    sink = a.num_states + 1
    alphabet = a.sorted_alphabet
    missing = [Transition(s, action, sink)
               for s in range(1, a.num_states + 1)
               for action in alphabet if action not in a.out_by_action[s]]
    if not missing:
        return a
    loops = [Transition(sink, action, sink) for action in alphabet]
    logger.debug(f"completion added {len(missing)} transitions into the sink")
    return Lts.make(sink, a.alphabet, list(a.transitions) + missing + loops,
                    a.initial, a.has_err, a.names + (SINK_NAME,))


def _peak_mem_kb() -> int:
    try:
        import resource
        return int(resource.getrusage(resource.RUSAGE_SELF).ru_maxrss)
    except (ImportError, AttributeError):
        return 0


def build_assume(m: Lts, p_err: Lts, iface: InterfaceAlphabet, count_sink: bool = True) -> AssumptionResult:
    """
    Weakest assumption of m over iface.sigma for the property whose error LTS is p_err.
    """
    start = time.perf_counter()
    sigma = iface.sigma
    unknown = sigma - m.alphabet - p_err.alphabet
    if unknown:
        raise InterfaceError(f"Interface actions not in the model: {sorted(map(str, unknown))[:10]}")

    product = compose(m, p_err)
    projected = hide(product, sigma)
    propagated = backward_error_propagation(projected, iface.actuals)
    a_err = determinize(propagated)
    completed = complete_with_sink(a_err)

    pruned = reachable(remove_err(completed))
    sink_present = SINK_NAME in pruned.names
    assumption = rename_bfs(pruned)
    err_automaton = rename_bfs(completed)
    empty = a_err.initial == ERR

    states = assumption.num_states - (1 if sink_present and not count_sink else 0)
    stats = AssumptionStats(
        states=states,
        transitions=len(assumption.transitions),
        wall_time_ms=(time.perf_counter() - start) * 1000.0,
        peak_mem_kb=_peak_mem_kb(),
        sink_counted=count_sink,
    )
    logger.info(f"assumption over {len(sigma)} actions: {stats.states} states, "
                f"{stats.transitions} transitions (product {product.num_states} states)")
    if empty:
        logger.warning("assumption language is empty: no context over the interface keeps the system safe")
    return AssumptionResult(assumption, err_automaton, empty, stats)


def check_context(n: Lts, a: Lts) -> bool:
    """
    True iff every trace of n projected to alpha(a) is a trace of a. Actions of
    alpha(a) that n never performs are blocked in n.
    """
    projected = with_alphabet(hide(n, a.alphabet), a.alphabet)
    return check_safety(projected, complement(a)).safe


def assumption_to_json(result: AssumptionResult, iface: InterfaceAlphabet) -> Dict[str, Any]:
    return {
        "alphabet": [str(a) for a in sorted(iface.sigma)],
        "tags": iface.tags(),
        "empty": result.empty,
        "assumption": write_aut(result.assumption),
        "err_automaton": write_aut(result.err_automaton),
        "stats": {
            "states": result.stats.states,
            "transitions": result.stats.transitions,
            "wall_time_ms": round(result.stats.wall_time_ms, 3),
            "peak_mem_kb": result.stats.peak_mem_kb,
            "sink_counted": result.stats.sink_counted,
        },
    }
