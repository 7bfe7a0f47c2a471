#!/usr/bin/env python3
"""
Local Specifications
Mines an err automaton over actuals and estimates into per-actual obligations
for the perception component: "when the true state is s, the estimate must be
one of E'". Specs can be concretized to the continuous intervals of the
discretization.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

from compverify.assumptions import ESTIMATE, ACTUAL, InterfaceAlphabet
from compverify.errors import AlternationError
from compverify.lts import ERR, Action, Lts, tau_closure
from compverify.taxinet import (
    HE_BINS, DiscretizationConfig, Interval, SystemState, discretize,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalSpec:
    """
    (s = actual) => (s_est in allowed)

    Attributes:
        actual: the actual whose arrival leads into the constrained state
        allowed: estimates that keep the closed loop safe, sorted
        forbidden: estimates that lead to err, sorted
        provenance: err-automaton states the spec was mined from
    """
    actual: Action
    allowed: Tuple[Action, ...]
    forbidden: Tuple[Action, ...]
    provenance: Tuple[str, ...] = field(default=())

    @property
    def blocked(self) -> bool:
        """No estimate is safe for this actual"""
        return not self.allowed

    @property
    def estimates(self) -> Tuple[Action, ...]:
        return tuple(sorted(self.allowed + self.forbidden))

    def sort_key(self):
        return self.actual.indices, self.actual.base, self.provenance


# ==================== SYNTHESIS ====================

def synthesize_local_specs(a_err: Lts, iface: InterfaceAlphabet, merge: bool = True) -> List[LocalSpec]:
    """
    For every state q with estimate edges into err, each actual-labeled edge
    entering q yields a spec allowing the estimates that avoid err from q.
    Identical (actual, allowed) pairs are reported once with all their states;
    unless merge is off, specs for the same actual are then intersected.
    """
    estimates = iface.estimates
    into_err: Dict[int, set] = {}
    for t in a_err.transitions:
        if t.dst == ERR:
            into_err.setdefault(t.src, set()).add(t.action)
    forbidden_at = {q: frozenset(E) for q, E in into_err.items()}

    grouped: Dict[Tuple[Action, frozenset], List[int]] = {}
    for t in a_err.transitions:
        q = t.dst
        if q not in forbidden_at:
            continue
        tag = iface.tag(t.action)
        if tag == ESTIMATE:
            raise AlternationError(a_err.names[q], str(t.action))
        if tag != ACTUAL:
            continue
        grouped.setdefault((t.action, forbidden_at[q]), []).append(q)

    specs = []
    for (actual, forbidden), states in grouped.items():
        allowed = estimates - forbidden
        names = tuple(a_err.names[q] for q in sorted(set(states)))
        specs.append(LocalSpec(actual, tuple(sorted(allowed)), tuple(sorted(forbidden)), names))
    specs.sort(key=LocalSpec.sort_key)

    logger.info(f"synthesized {len(specs)} local specs from {len(forbidden_at)} err-adjacent states")
    return merge_specs(specs) if merge else specs


def merge_specs(specs: Iterable[LocalSpec]) -> List[LocalSpec]:
    """One spec per actual: allowed sets intersected, provenance joined"""
    by_actual: Dict[Action, List[LocalSpec]] = {}
    for spec in specs:
        by_actual.setdefault(spec.actual, []).append(spec)
    merged = []
    for actual, group in by_actual.items():
        allowed = set(group[0].allowed)
        estimates = set()
        provenance: List[str] = []
        for spec in group:
            allowed &= set(spec.allowed)
            estimates |= set(spec.estimates)
            provenance.extend(p for p in spec.provenance if p not in provenance)
        merged.append(LocalSpec(actual, tuple(sorted(allowed)),
                                tuple(sorted(estimates - allowed)), tuple(provenance)))
    merged.sort(key=LocalSpec.sort_key)
    return merged


def satisfies_specs(m2: Lts, specs: Sequence[LocalSpec]) -> bool:
    """
    Every actual performed by m2 that is immediately followed by an estimate
    must be followed by an allowed one.
    """
    if not specs:
        return True
    allowed: Dict[Action, set] = {}
    estimates = set()
    for spec in specs:
        estimates.update(spec.estimates)
        if spec.actual in allowed:
            allowed[spec.actual] &= set(spec.allowed)
        else:
            allowed[spec.actual] = set(spec.allowed)

    seen = tau_closure(m2, (m2.initial,))
    stack = list(seen)
    seen = set(seen)
    while stack:
        s = stack.pop()
        for action, t in m2.out[s]:
            if action in allowed:
                for u in tau_closure(m2, (t,)):
                    for e, _ in m2.out[u]:
                        if e in estimates and e not in allowed[action]:
                            logger.debug(f"{m2.names[s]}: {action} followed by disallowed {e}")
                            return False
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return True


# ==================== CONCRETIZATION ====================

@dataclass(frozen=True)
class IntervalSpec:
    """(cte* in I and he* in J) => OR of (cte in I' and he in J')"""
    antecedent: Tuple[Interval, Interval]
    consequent: Tuple[Tuple[Interval, Interval], ...]

    def __str__(self) -> str:
        return render_intervals(self)


def concretize(spec: LocalSpec, cfg: DiscretizationConfig) -> IntervalSpec:
    cte_bins = cfg.cte_spec_bins()

    def box(action: Action) -> Tuple[Interval, Interval]:
        state = SystemState.of(action)
        cfg.check(state)
        return cte_bins[state.cte], HE_BINS[state.he]

    return IntervalSpec(box(spec.actual), tuple(box(e) for e in spec.allowed))


def rediscretize(ispec: IntervalSpec, cfg: DiscretizationConfig) -> Tuple[SystemState, Tuple[SystemState, ...]]:
    """Discrete (actual, allowed) recovered from interval midpoints"""
    def point(box: Tuple[Interval, Interval]) -> SystemState:
        return discretize(box[0].midpoint, box[1].midpoint, cfg)

    return point(ispec.antecedent), tuple(point(b) for b in ispec.consequent)


def render(spec: LocalSpec) -> str:
    state = _state_text(spec.actual)
    if spec.blocked:
        return f"(s={state}) ⇒ false"
    options = " ∨ ".join(f"s_est={_state_text(e)}" for e in spec.allowed)
    return f"(s={state}) ⇒ ({options})"


def render_intervals(ispec: IntervalSpec) -> str:
    cte, he = ispec.antecedent
    head = f"(cte* ∈ {cte} ∧ he* ∈ {he})"
    if not ispec.consequent:
        return f"{head} ⇒ false"
    options = " ∨ ".join(f"(cte∈{c} ∧ he∈{h})" for c, h in ispec.consequent)
    return f"{head} ⇒ ({options})"


def _state_text(action: Action) -> str:
    return "".join(f"[{i}]" for i in action.indices) or str(action)


def specs_to_json(specs: Sequence[LocalSpec], cfg: Optional[DiscretizationConfig] = None) -> List[Dict[str, Any]]:
    def state(action: Action) -> Dict[str, Any]:
        if len(action.indices) == 2:
            return {"cte": action.indices[0], "he": action.indices[1]}
        return {"label": str(action)}

    records = []
    for spec in specs:
        record = {
            "actual": state(spec.actual),
            "allowed": [state(e) for e in spec.allowed],
            "provenance": ",".join(spec.provenance),
            "blocked": spec.blocked,
            "text": render(spec),
        }
        if cfg is not None:
            record["intervals"] = render_intervals(concretize(spec, cfg))
        records.append(record)
    return records
