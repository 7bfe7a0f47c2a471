#!/usr/bin/env python3
"""
Runtime Assumption Monitor
Runs the err automaton of an assumption next to the perception component and
aborts as soon as the stream of estimates leaves the assumption's language.

Only labels in the automaton's alphabet are observed; actuals, commands and
other labels fed to an estimates-only monitor are skipped.
"""

import logging
from dataclasses import dataclass
from typing import Iterable, Optional, Union

import pandas as pd

from compverify.assumptions import AssumptionResult
from compverify.errors import MonitorError
from compverify.lts import ERR, Action, Lts, is_deterministic
from compverify.taxinet import EST, DiscretizationConfig, SystemState, discretize

logger = logging.getLogger(__name__)

Observation = Union[Action, SystemState, str]

READING_COLUMNS = ("cte", "he")
BIN_COLUMNS = ("est_cte", "est_he")


@dataclass(frozen=True)
class MonitorVerdict:
    """
    Attributes:
        aborted: the stream left the assumption's language
        steps: observed estimates consumed, the offending one included
        state: monitor state name after the last consumed estimate
        offending: the estimate that triggered the abort
    """
    aborted: bool
    steps: int
    state: str
    offending: Optional[Action] = None

    def __bool__(self) -> bool:
        return not self.aborted

    def line(self) -> str:
        if self.aborted:
            return f"ABORT step={self.steps} estimate={self.offending}"
        return f"OK steps={self.steps} state={self.state}"


class Monitor:
    """
    Stateful monitor over a deterministic err automaton.

    An observed estimate without a move is treated like a move into err: a
    completed err automaton always has one, a bare assumption lacks exactly
    the moves that leave its language.
    """

    def __init__(self, automaton: Lts, cfg: Optional[DiscretizationConfig] = None):
        if not is_deterministic(automaton):
            raise MonitorError("Monitor automaton must be deterministic")
        self.automaton = automaton
        self.cfg = cfg
        self.reset()

    @classmethod
    def from_assumption(cls, result: AssumptionResult,
                        cfg: Optional[DiscretizationConfig] = None) -> "Monitor":
        return cls(result.err_automaton, cfg)

    def reset(self):
        self.state = self.automaton.initial
        self.steps = 0
        self.offending: Optional[Action] = None

    @property
    def aborted(self) -> bool:
        return self.state == ERR

    @property
    def verdict(self) -> MonitorVerdict:
        return MonitorVerdict(self.aborted, self.steps, self.automaton.names[self.state], self.offending)

    def successor(self, q: int, action: Action) -> Optional[int]:
        """Target of the move on action from q, None when there is none"""
        targets = self.automaton.out_by_action[q].get(action)
        return targets[0] if targets else None

    def observes(self, action: Action) -> bool:
        return action in self.automaton.alphabet

    def step(self, observation: Observation) -> bool:
        """Consume one observation; False once the monitor has aborted"""
        if self.aborted:
            return False
        action = _label(observation)
        if not self.observes(action):
            return True

        self.steps += 1
        nxt = self.successor(self.state, action)
        self.state = ERR if nxt is None else nxt
        if self.aborted:
            self.offending = action
            logger.warning(f"monitor abort after {self.steps} estimates on {action}")
        return not self.aborted

    def feed(self, stream: Iterable[Observation]) -> MonitorVerdict:
        """Step through the stream until it ends or the monitor aborts"""
        for observation in stream:
            if not self.step(observation):
                break
        return self.verdict

    def observe_reading(self, cte: float, he: float) -> bool:
        """Discretize one continuous (cte, he) estimate and step on it"""
        if self.cfg is None:
            raise MonitorError("Continuous readings need a discretization config")
        return self.step(discretize(cte, he, self.cfg))

    def feed_readings(self, readings) -> MonitorVerdict:
        """
        Replay a table of estimates: continuous cte/he columns, or est_cte/est_he
        bin indices. Accepts a DataFrame or anything pandas can turn into one.
        """
        frame = readings if isinstance(readings, pd.DataFrame) else pd.DataFrame(list(readings))
        if all(c in frame.columns for c in BIN_COLUMNS):
            for c, h in frame[list(BIN_COLUMNS)].itertuples(index=False):
                estimate = SystemState(int(c), int(h))
                if self.cfg is not None:
                    self.cfg.check(estimate)
                if not self.step(estimate):
                    break
            return self.verdict
        if all(c in frame.columns for c in READING_COLUMNS):
            for cte, he in frame[list(READING_COLUMNS)].itertuples(index=False):
                if not self.observe_reading(float(cte), float(he)):
                    break
            return self.verdict
        raise MonitorError(f"Readings need columns {list(READING_COLUMNS)} or {list(BIN_COLUMNS)}; "
                           f"got {list(frame.columns)}")


def _label(observation: Observation) -> Action:
    if isinstance(observation, SystemState):
        return observation.action(EST)
    if isinstance(observation, str):
        return Action.parse(observation)
    return observation


def load_readings_csv(path: str) -> pd.DataFrame:
    logger.info(f"loading estimate readings from {path}")
    return pd.read_csv(path)
