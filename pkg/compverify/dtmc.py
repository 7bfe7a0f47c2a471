#!/usr/bin/env python3
"""
Monitor Permissiveness Analysis
Builds a DTMC from the closed loop M1, an empirical perception confusion
profile and the assumption's err automaton used as a runtime monitor, then
computes bounded-horizon probabilities of the monitor aborting (Q = -1).

Each control cycle takes two DTMC steps:
  pc=0  an estimate is drawn for the current actual; the monitor consumes it
        and aborts when its err automaton reaches err
  pc=1  M1 responds to the estimate with its next actual, or with a safety
        violation
"""

import os
import logging
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import plotly.graph_objects as go
from scipy import sparse

from compverify.errors import DtmcError, ProfileError
from compverify.lts import ERR, Action, Lts, is_deterministic
from compverify.monitor import Monitor
from compverify.taxinet import ACT, EST, DiscretizationConfig, SystemState, reachable_states

logger = logging.getLogger(__name__)

PROFILE_COLUMNS = ["actual_cte", "actual_he", "est_cte", "est_he", "count"]

ABORT = 0
SAFETY_ERR = 1


# ==================== CONFUSION PROFILE ====================

class ConfusionProfile:
    """
    Distribution of estimated states per actual state, kept as a counts matrix
    with actual states along the rows and estimates along the columns.
    """

    def __init__(self, cfg: DiscretizationConfig, counts: np.ndarray):
        self.cfg = cfg
        self.states = cfg.states()
        self.index = {s: i for i, s in enumerate(self.states)}
        counts = np.asarray(counts, dtype=float)
        if counts.shape != (len(self.states), len(self.states)):
            raise ProfileError(f"Expected a {len(self.states)}x{len(self.states)} count matrix, got {counts.shape}")
        if (counts < 0).any():
            raise ProfileError("Counts must be non-negative")
        self.counts = counts
        totals = counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            self.probabilities = np.where(totals > 0, counts / np.where(totals > 0, totals, 1.0), 0.0)

    def covers(self, actual: SystemState) -> bool:
        return self.counts[self.index[actual]].sum() > 0

    def distribution(self, actual: SystemState) -> List[Tuple[SystemState, float]]:
        """Nonzero (estimate, probability) pairs in state order"""
        if actual not in self.index or not self.covers(actual):
            raise ProfileError(f"No profile data for actual state {actual}", missing=[actual])
        row = self.probabilities[self.index[actual]]
        return [(self.states[j], float(p)) for j, p in enumerate(row) if p > 0]

    def probability(self, actual: SystemState, estimate: SystemState) -> float:
        return float(self.probabilities[self.index[actual], self.index[estimate]])

    @property
    def per_actual_accuracy(self) -> Dict[SystemState, float]:
        return {s: float(self.probabilities[i, i]) for i, s in enumerate(self.states) if self.covers(s)}

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total > 0 else 0.0

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for i, actual in enumerate(self.states):
            for j, estimate in enumerate(self.states):
                if self.counts[i, j] > 0:
                    rows.append((actual.cte, actual.he, estimate.cte, estimate.he, self.counts[i, j]))
        return pd.DataFrame(rows, columns=PROFILE_COLUMNS)


def estimate_profile(rows, cfg: DiscretizationConfig,
                     required: Optional[Iterable[SystemState]] = None) -> ConfusionProfile:
    """
    Relative frequencies from (actual_cte, actual_he, est_cte, est_he, count)
    records. Every required actual (by default the reachable ones) needs a
    positive total.
    """
    if isinstance(rows, pd.DataFrame):
        frame = rows
    else:
        rows = list(rows)
        if rows and isinstance(rows[0], dict):
            frame = pd.DataFrame(rows)
        else:
            frame = pd.DataFrame(rows, columns=PROFILE_COLUMNS)

    missing_columns = [c for c in PROFILE_COLUMNS if c not in frame.columns]
    if missing_columns:
        raise ProfileError(f"Profile is missing columns {missing_columns}")
    try:
        frame = frame[PROFILE_COLUMNS].apply(pd.to_numeric, errors="raise")
    except (ValueError, TypeError) as e:
        raise ProfileError(f"Malformed profile row: {str(e)}")
    if frame[PROFILE_COLUMNS[:4]].isna().any().any() or frame["count"].isna().any():
        raise ProfileError("Malformed profile row: empty field")
    if (frame["count"] < 0).any():
        raise ProfileError("Malformed profile row: negative count")

    states = cfg.states()
    index = {s: i for i, s in enumerate(states)}
    counts = np.zeros((len(states), len(states)))
    grouped = frame.groupby(PROFILE_COLUMNS[:4], sort=True)["count"].sum()
    for (ac, ah, ec, eh), count in grouped.items():
        actual, estimate = SystemState(int(ac), int(ah)), SystemState(int(ec), int(eh))
        if actual not in index or estimate not in index:
            raise ProfileError(f"Malformed profile row: state {actual} -> {estimate} out of range")
        counts[index[actual], index[estimate]] += count

    profile = ConfusionProfile(cfg, counts)
    required = list(reachable_states(cfg) if required is None else required)
    missing = [s for s in required if not profile.covers(s)]
    if missing:
        raise ProfileError(
            f"No profile data for actual states {', '.join(map(str, missing))}", missing=missing)
    logger.info(f"profile over {int(counts.sum())} samples, accuracy {profile.accuracy:.4f}")
    return profile


def load_profile_csv(path: str, cfg: DiscretizationConfig,
                     required: Optional[Iterable[SystemState]] = None) -> ConfusionProfile:
    return estimate_profile(pd.read_csv(path), cfg, required)


def write_profile_csv(profile: ConfusionProfile, path: str):
    profile.to_frame().to_csv(path, index=False)


def identity_profile(cfg: DiscretizationConfig) -> ConfusionProfile:
    return ConfusionProfile(cfg, np.eye(len(cfg.states())))


def uniform_profile(cfg: DiscretizationConfig) -> ConfusionProfile:
    n = len(cfg.states())
    return ConfusionProfile(cfg, np.ones((n, n)))


def noisy_profile(cfg: DiscretizationConfig, accuracy: float) -> ConfusionProfile:
    """Correct estimate with the given probability, errors spread evenly over the rest"""
    if not 0.0 <= accuracy <= 1.0:
        raise ProfileError(f"accuracy must lie in [0, 1], got {accuracy}")
    n = len(cfg.states())
    counts = np.full((n, n), (1.0 - accuracy) / (n - 1))
    np.fill_diagonal(counts, accuracy)
    return ConfusionProfile(cfg, counts)


# ==================== CLOSED-LOOP RESPONSE ====================

@dataclass(frozen=True)
class ClosedLoopResponse:
    """
    Deterministic reading of M1 between estimate inputs.

    Attributes:
        initial: the first state of M1 waiting for an estimate
        actual: actual state in force at each waiting state
        response: (waiting state, estimate) -> next waiting state or ERR
    """
    initial: int
    actual: Dict[int, SystemState]
    response: Dict[Tuple[int, Action], int]


def closed_loop_response(m1: Lts, estimates: Iterable[Action]) -> ClosedLoopResponse:
    estimates = frozenset(estimates)

    def run(s: int, actual: Optional[SystemState]) -> Tuple[int, Optional[SystemState]]:
        visited = set()
        while s != ERR:
            edges = m1.out[s]
            if edges and all(a in estimates for a, _ in edges):
                return s, actual
            if len(edges) != 1:
                kind = "deadlocks" if not edges else "has a nondeterministic response"
                raise DtmcError(f"M1 {kind} at state {m1.names[s]}")
            if s in visited:
                raise DtmcError(f"M1 cycles without reading an estimate at {m1.names[s]}")
            visited.add(s)
            action, s = edges[0]
            if action.base == ACT:
                actual = SystemState.of(action)
        return ERR, actual

    initial, first_actual = run(m1.initial, None)
    if initial == ERR or first_actual is None:
        raise DtmcError("M1 must emit an actual state before its first estimate")

    actual = {initial: first_actual}
    response: Dict[Tuple[int, Action], int] = {}
    queue = [initial]
    while queue:
        w = queue.pop(0)
        for e, t in m1.out[w]:
            nxt, act = run(t, actual[w])
            response[(w, e)] = nxt
            if nxt != ERR and nxt not in actual:
                actual[nxt] = act
                queue.append(nxt)
    return ClosedLoopResponse(initial, actual, response)


# ==================== MONITORED DTMC ====================

class StateDescriptor(NamedTuple):
    pc: int
    cte: int
    he: int
    cte_est: Optional[int]
    he_est: Optional[int]
    q: int


@dataclass
class MonitoredDtmc:
    """
    Attributes:
        matrix: row-stochastic CSR transition matrix
        descriptors: (pc, cte, he, cte_est, he_est, Q) per state; Q=-1 is abort
        initial: initial state index
        abort: index of the absorbing abort state
        safety_err: index of the absorbing safety-violation state
    """
    matrix: sparse.csr_matrix
    descriptors: List[StateDescriptor]
    initial: int
    abort: int = ABORT
    safety_err: int = SAFETY_ERR
    monitor_states: int = 0

    @property
    def num_states(self) -> int:
        return self.matrix.shape[0]

    def target_mask(self, target: Union[str, Callable[[StateDescriptor], bool], Iterable[int]]) -> np.ndarray:
        mask = np.zeros(self.num_states, dtype=bool)
        if target == "abort":
            mask[self.abort] = True
        elif target == "safety_err":
            mask[self.safety_err] = True
        elif callable(target):
            mask[:] = [bool(target(d)) for d in self.descriptors]
        else:
            mask[list(target)] = True
        return mask


def build_monitored_dtmc(m1: Lts, profile: ConfusionProfile, monitor: Lts,
                         cfg: DiscretizationConfig) -> MonitoredDtmc:
    """Product of M1's closed-loop response, the profile and the monitor"""
    estimates = frozenset(cfg.actions(EST))
    if monitor.alphabet != estimates:
        raise DtmcError(f"Monitor alphabet has {len(monitor.alphabet)} actions; expected the "
                        f"{len(estimates)} estimates of MaxCTE={cfg.max_cte}")
    if not is_deterministic(monitor):
        raise DtmcError("Monitor must be deterministic")

    loop = closed_loop_response(m1, estimates)
    watcher = Monitor(monitor, cfg)

    def monitor_step(q: int, e: Action) -> int:
        nxt = watcher.successor(q, e)
        if nxt is None:
            raise DtmcError(f"Monitor state {monitor.names[q]} has no move on {e}")
        return nxt

    descriptors: List[StateDescriptor] = [
        StateDescriptor(0, -1, -1, None, None, -1),
        StateDescriptor(2, -1, -1, None, None, -1),
    ]
    ids: Dict[tuple, int] = {}
    entries: Dict[Tuple[int, int], float] = {(ABORT, ABORT): 1.0, (SAFETY_ERR, SAFETY_ERR): 1.0}
    queue: List[tuple] = []

    def visit(key: tuple) -> int:
        sid = ids.get(key)
        if sid is None:
            sid = len(descriptors)
            ids[key] = sid
            if key[0] == 0:
                _, w, q = key
                a = loop.actual[w]
                descriptors.append(StateDescriptor(0, a.cte, a.he, None, None, q - 1))
            else:
                _, w, e, q = key
                a, est = loop.actual[w], SystemState.of(e)
                descriptors.append(StateDescriptor(1, a.cte, a.he, est.cte, est.he, q - 1))
            queue.append(key)
        return sid

    if monitor.initial == ERR:
        initial = ABORT
    else:
        initial = visit((0, loop.initial, monitor.initial))

    head = 0
    while head < len(queue):
        key = queue[head]
        head += 1
        src = ids[key]
        if key[0] == 0:
            _, w, q = key
            for estimate, p in profile.distribution(loop.actual[w]):
                e = estimate.action(EST)
                if (w, e) not in loop.response:
                    raise DtmcError(f"M1 does not accept estimate {e} in state {m1.names[w]}")
                q2 = monitor_step(q, e)
                dst = ABORT if q2 == ERR else visit((1, w, e, q2))
                entries[(src, dst)] = entries.get((src, dst), 0.0) + p
        else:
            _, w, e, q = key
            nxt = loop.response[(w, e)]
            dst = SAFETY_ERR if nxt == ERR else visit((0, nxt, q))
            entries[(src, dst)] = entries.get((src, dst), 0.0) + 1.0

    n = len(descriptors)
    cells = sorted(entries.items())
    rows = np.fromiter((r for (r, _), _ in cells), dtype=np.int64, count=len(cells))
    cols = np.fromiter((c for (_, c), _ in cells), dtype=np.int64, count=len(cells))
    data = np.fromiter((p for _, p in cells), dtype=float, count=len(cells))
    matrix = sparse.csr_matrix((data, (rows, cols)), shape=(n, n))
    matrix.sort_indices()

    sums = np.asarray(matrix.sum(axis=1)).ravel()
    if not np.allclose(sums, 1.0, atol=1e-9):
        bad = int(np.argmax(np.abs(sums - 1.0)))
        raise DtmcError(f"Row {bad} sums to {sums[bad]}")
    logger.info(f"monitored DTMC: {n} states, {matrix.nnz} transitions")
    return MonitoredDtmc(matrix, descriptors, initial, monitor_states=monitor.num_states)


# ==================== REACHABILITY ====================

def reachability_curve(d: MonitoredDtmc, target="abort", horizon: int = 100) -> List[float]:
    """P(reach target within n steps) for n = 0..horizon, by backward recursion"""
    if horizon < 0:
        raise ValueError("horizon must be non-negative")
    mask = d.target_mask(target)
    x = mask.astype(float)
    curve = [float(x[d.initial])]
    for _ in range(horizon):
        x = np.where(mask, 1.0, d.matrix @ x)
        curve.append(float(x[d.initial]))
    return curve


def bounded_reachability(d: MonitoredDtmc, target="abort", n: int = 0) -> float:
    return reachability_curve(d, target, n)[-1]


def simulate(d: MonitoredDtmc, target="abort", n: int = 100, runs: int = 1000, seed: int = 0) -> float:
    """Monte Carlo estimate of bounded_reachability"""
    rng = np.random.default_rng(seed)
    mask = d.target_mask(target)
    indptr, indices, data = d.matrix.indptr, d.matrix.indices, d.matrix.data
    hits = 0
    for _ in range(runs):
        s = d.initial
        for _ in range(n + 1):
            if mask[s]:
                hits += 1
                break
            lo, hi = indptr[s], indptr[s + 1]
            s = int(rng.choice(indices[lo:hi], p=data[lo:hi] / data[lo:hi].sum()))
    return hits / runs


# ==================== OUTPUTS ====================

def write_curve_csv(curve: Sequence[float], path: str):
    pd.DataFrame({"n": range(len(curve)), "probability": list(curve)}).to_csv(path, index=False)


def plot_curve(curves: Dict[str, Sequence[float]], path: str, title: str = "Monitor abort probability"):
    """Write an HTML line chart of one or more reachability curves"""
    fig = go.Figure()
    for label, curve in curves.items():
        fig.add_trace(go.Scatter(x=list(range(len(curve))), y=list(curve), mode="lines", name=label))
    fig.update_layout(
        title=title,
        xaxis_title="horizon n (DTMC steps)",
        yaxis_title="P[F<=n Q=-1]",
        yaxis=dict(range=[0, 1.05]),
        template="plotly_white",
    )
    fig.write_html(path, include_plotlyjs="cdn")


def export_prism(d: MonitoredDtmc, cfg: DiscretizationConfig) -> str:
    """
    PRISM dtmc module over the variables pc, cte, he, cte_est, he_est and Q.
    pc=2 marks a safety violation; Q=-1 marks a monitor abort.
    """
    seen = set()
    for desc in d.descriptors[2:]:
        key = (desc.pc, desc.cte, desc.he, desc.cte_est, desc.he_est, desc.q)
        if key in seen:
            raise DtmcError(f"State {key} is not determined by the PRISM variables")
        seen.add(key)

    init = d.descriptors[d.initial] if d.initial >= 2 else StateDescriptor(0, cfg.center, 0, None, None, -1)
    max_q = max(d.monitor_states - 1, 0)
    lines = [
        "dtmc",
        "",
        "module monitored_taxinet",
        "  pc : [0..2] init 0;",
        f"  cte : [0..{cfg.max_cte}] init {init.cte};",
        f"  he : [0..2] init {init.he};",
        f"  cte_est : [0..{cfg.max_cte}] init 0;",
        "  he_est : [0..2] init 0;",
        f"  Q : [-1..{max_q}] init {init.q};",
        "",
    ]

    matrix = d.matrix
    for s in range(2, d.num_states):
        desc = d.descriptors[s]
        if desc.pc == 0:
            guard = f"pc=0 & cte={desc.cte} & he={desc.he} & Q={desc.q}"
        else:
            guard = (f"pc=1 & cte={desc.cte} & he={desc.he} & cte_est={desc.cte_est} "
                     f"& he_est={desc.he_est} & Q={desc.q}")
        updates = []
        for k in range(matrix.indptr[s], matrix.indptr[s + 1]):
            t, p = int(matrix.indices[k]), float(matrix.data[k])
            updates.append(f"{p!r}:{_update(d.descriptors[t], t)}")
        lines.append(f"  [] {guard} -> {' + '.join(updates)};")

    lines += [
        "  [] Q=-1 -> true;",
        "  [] pc=2 -> true;",
        "endmodule",
        "",
        'label "abort" = Q=-1;',
        'label "unsafe" = pc=2;',
        "",
    ]
    return "\n".join(lines)


def _update(target: StateDescriptor, index: int) -> str:
    if index == ABORT:
        return "(Q'=-1)"
    if index == SAFETY_ERR:
        return "(pc'=2)"
    if target.pc == 1:
        return f"(pc'=1)&(cte_est'={target.cte_est})&(he_est'={target.he_est})&(Q'={target.q})"
    return f"(pc'=0)&(cte'={target.cte})&(he'={target.he})"


def write_prism(d: MonitoredDtmc, cfg: DiscretizationConfig, path: str):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w") as f:
        f.write(export_prism(d, cfg))
