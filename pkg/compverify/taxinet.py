#!/usr/bin/env python3
"""
TaxiNet Models
Discretization of the taxiing airplane's cross-track error (cte, meters) and
heading error (he, degrees), and generators for the Controller, Dynamics and
perception processes of the closed loop.

Heading codes: 1 heading left, 0 aligned, 2 heading right. Commands: cmd[0]
GoStraight, cmd[1] TurnLeft, cmd[2] TurnRight. A turn moves the heading one
level; the airplane then drifts one cte bin toward its new heading. Leaving the
heading levels or the cte bins is a safety violation (ERROR in Dynamics).
"""

import os
import logging
from dataclasses import dataclass
from decimal import Decimal
from functools import lru_cache
from typing import Dict, List, NamedTuple, Optional, Tuple

from compverify.assumptions import InterfaceAlphabet
from compverify.errors import DiscretizationError
from compverify.formats import write_aut
from compverify.fsp import parse
from compverify.lts import Action, Lts, compose, compose_all, universal_property

logger = logging.getLogger(__name__)

ACT = "act"
EST = "est"
CMD = "cmd"
TURN = "turn"

GO_STRAIGHT, TURN_LEFT, TURN_RIGHT = 0, 1, 2

CTE_LIMIT = Decimal("8")
HE_LIMIT = Decimal("35")

# he code -> signed heading level, and back
HE_LEVEL = {1: -1, 0: 0, 2: 1}
LEVEL_HE = {level: code for code, level in HE_LEVEL.items()}
CMD_DELTA = {GO_STRAIGHT: 0, TURN_LEFT: -1, TURN_RIGHT: 1}


# ==================== INTERVALS ====================

@dataclass(frozen=True)
class Interval:
    lo: Decimal
    hi: Decimal
    lo_closed: bool = True
    hi_closed: bool = False

    def contains(self, x: float) -> bool:
        lo, hi = float(self.lo), float(self.hi)
        above = x >= lo if self.lo_closed else x > lo
        below = x <= hi if self.hi_closed else x < hi
        return above and below

    @property
    def midpoint(self) -> float:
        return float((self.lo + self.hi) / 2)

    def __str__(self) -> str:
        return f"{'[' if self.lo_closed else '('}{self.lo},{self.hi}{']' if self.hi_closed else ')'}"


HE_BINS: Dict[int, Interval] = {
    1: Interval(Decimal("-35"), Decimal("-11.67"), True, False),
    0: Interval(Decimal("-11.67"), Decimal("11.66"), True, True),
    2: Interval(Decimal("11.66"), Decimal("35.0"), False, True),
}

# m=2 edges are fixed; other granularities split [-8, 8] uniformly
_M2_CTE_EDGES = (Decimal("-8"), Decimal("-2.7"), Decimal("2.7"), Decimal("8"))


class SystemState(NamedTuple):
    cte: int
    he: int

    def action(self, base: str) -> Action:
        return Action(base, (self.cte, self.he))

    @classmethod
    def of(cls, action: Action) -> "SystemState":
        return cls(*action.indices)

    def __str__(self) -> str:
        return f"[{self.cte}][{self.he}]"


@dataclass(frozen=True)
class DiscretizationConfig:
    """Granularity of the cte discretization; max_cte + 1 bins indexed 0..max_cte"""
    max_cte: int = 2

    def __post_init__(self):
        if self.max_cte < 1:
            raise DiscretizationError(f"max_cte must be positive, got {self.max_cte}")

    @property
    def center(self) -> int:
        """Middle cte bin, the lower middle one for an even bin count"""
        return self.max_cte // 2

    @property
    def cte_edges(self) -> Tuple[Decimal, ...]:
        if self.max_cte == 2:
            return _M2_CTE_EDGES
        width = Decimal(16) / Decimal(self.max_cte + 1)
        edges = [-CTE_LIMIT]
        for i in range(1, self.max_cte + 1):
            value = (-CTE_LIMIT + width * i).quantize(Decimal("0.01"))
            edges.append(Decimal(format(value.normalize(), "f")))
        edges.append(CTE_LIMIT)
        return tuple(edges)

    def cte_bins(self) -> Tuple[Interval, ...]:
        """Partition of [-8, 8]: left bins half-open on the right, center bin closed, right bins half-open on the left"""
        edges = self.cte_edges
        bins = []
        for i in range(self.max_cte + 1):
            if i < self.center:
                bins.append(Interval(edges[i], edges[i + 1], True, False))
            elif i == self.center:
                bins.append(Interval(edges[i], edges[i + 1], True, True))
            else:
                bins.append(Interval(edges[i], edges[i + 1], False, True))
        return tuple(bins)

    def cte_spec_bins(self) -> Tuple[Interval, ...]:
        """
        Interval text used in concretized specifications: every bin is closed
        below and open above except the closed center bin.
        """
        edges = self.cte_edges
        return tuple(Interval(edges[i], edges[i + 1], True, i == self.center)
                     for i in range(self.max_cte + 1))

    def states(self) -> List[SystemState]:
        return [SystemState(c, h) for c in range(self.max_cte + 1) for h in range(3)]

    def actions(self, base: str) -> List[Action]:
        return [s.action(base) for s in self.states()]

    def initial_state(self) -> SystemState:
        return SystemState(self.center, 0)

    def check(self, state: SystemState):
        if not (0 <= state.cte <= self.max_cte and state.he in HE_LEVEL):
            raise DiscretizationError(f"State {state} outside cte 0..{self.max_cte}, he 0..2")


def discretize(cte_m: float, he_deg: float, cfg: DiscretizationConfig) -> SystemState:
    """Bin indices of a continuous (cte, he) pair"""
    cte_bin = next((i for i, b in enumerate(cfg.cte_bins()) if b.contains(cte_m)), None)
    if cte_bin is None:
        raise DiscretizationError(f"cte {cte_m} m is off the taxiway [-8, 8]")
    he_bin = next((code for code, b in HE_BINS.items() if b.contains(he_deg)), None)
    if he_bin is None:
        raise DiscretizationError(f"he {he_deg} deg exceeds [-35, 35]")
    return SystemState(cte_bin, he_bin)


# ==================== CLOSED-LOOP LAWS ====================

def controller_command(cfg: DiscretizationConfig, estimate: SystemState) -> int:
    """Command the controller issues for an estimated state"""
    c, h, k = estimate.cte, estimate.he, cfg.center
    if (c == k and h == 0) or (c < k and h == 2) or (c > k and h == 1):
        return GO_STRAIGHT
    if (c > k and h != 1) or (c == k and h == 2):
        return TURN_LEFT
    return TURN_RIGHT


def dynamics_step(cfg: DiscretizationConfig, actual: SystemState, command: int) -> Optional[SystemState]:
    """Next actual state, or None when the command violates a safety property"""
    level = HE_LEVEL[actual.he] + CMD_DELTA[command]
    if level not in LEVEL_HE:
        return None
    cte = actual.cte + level
    if not 0 <= cte <= cfg.max_cte:
        return None
    return SystemState(cte, LEVEL_HE[level])


def reachable_states(cfg: DiscretizationConfig) -> List[SystemState]:
    """Actual states the airplane can occupy under some sequence of legal commands"""
    seen = {cfg.initial_state()}
    frontier = [cfg.initial_state()]
    while frontier:
        state = frontier.pop()
        for command in CMD_DELTA:
            following = dynamics_step(cfg, state, command)
            if following is not None and following not in seen:
                seen.add(following)
                frontier.append(following)
    return sorted(seen)


# ==================== FSP SOURCES ====================

def _declarations(cfg: DiscretizationConfig) -> str:
    return (
        f"const MaxCTE = {cfg.max_cte}\n"
        f"const Center = MaxCTE / 2\n"
        f"range CTERange = 0..MaxCTE\n"
        f"range HERange = 0..2\n"
        f"range CmdRange = 0..2\n"
    )


def controller_source(cfg: DiscretizationConfig) -> str:
    return """\
/* Reads any estimate, then steers: cmd[0] GoStraight, cmd[1] TurnLeft, cmd[2] TurnRight */
Controller = (turn -> est[cte:CTERange][he:HERange] -> Steer[cte][he]),
Steer[cte:CTERange][he:HERange] = (
      when ((cte == Center && he == 0) || (cte < Center && he == 2) || (cte > Center && he == 1))
        cmd[0] -> Controller
    | when ((cte > Center && he != 1) || (cte == Center && he == 2))
        cmd[1] -> Controller
    | when ((cte < Center && he != 2) || (cte == Center && he == 1))
        cmd[2] -> Controller
    ).
"""


_LEVEL = "(he == 2 ? 1 : (he == 1 ? -1 : 0))"
_DELTA = "(c == 2 ? 1 : (c == 1 ? -1 : 0))"
_NEW_LEVEL = f"({_LEVEL} + {_DELTA})"
_LEGAL = f"{_NEW_LEVEL} >= -1 && {_NEW_LEVEL} <= 1 && cte + {_NEW_LEVEL} >= 0 && cte + {_NEW_LEVEL} <= MaxCTE"
_NEW_CTE = f"cte + {_NEW_LEVEL}"
_NEW_HE = f"({_NEW_LEVEL} == 1 ? 2 : ({_NEW_LEVEL} == -1 ? 1 : 0))"


def dynamics_source(cfg: DiscretizationConfig) -> str:
    return f"""\
/* Emits the actual state; an illegal command is followed by turn -> ERROR */
Dynamics = (act[Center][0] -> Moved[Center][0]),
Moved[cte:CTERange][he:HERange] = (turn -> Plant[cte][he]),
Plant[cte:CTERange][he:HERange] = (cmd[c:CmdRange] -> Respond[cte][he][c]),
Respond[cte:CTERange][he:HERange][c:CmdRange] = (
      when ({_LEGAL})
        act[{_NEW_CTE}][{_NEW_HE}] -> Moved[{_NEW_CTE}][{_NEW_HE}]
    | when (!({_LEGAL}))
        turn -> ERROR
    )
    + {{act[CTERange][HERange]}}.
"""


PERCEPTIONS = ("Perfect", "Worst")


def perception_source(cfg: DiscretizationConfig, kind: str) -> str:
    if kind == "Perfect":
        return "Perfect = (act[cte:CTERange][he:HERange] -> est[cte][he] -> Perfect).\n"
    if kind == "Worst":
        return "Worst = (act[cte:CTERange][he:HERange] -> est[CTERange][HERange] -> Worst).\n"
    raise ValueError(f"Unknown perception {kind!r}")


def model_source(cfg: DiscretizationConfig, composites: bool = True) -> str:
    """Complete FSP text of the case study for one granularity"""
    parts = [
        f"// TaxiNet closed loop, MaxCTE={cfg.max_cte}\n" + _declarations(cfg),
        controller_source(cfg),
        dynamics_source(cfg),
        perception_source(cfg, "Perfect"),
        perception_source(cfg, "Worst"),
    ]
    if composites:
        parts.append(
            "||M1 = (Controller || Dynamics).\n"
            "||PerfectLoop = (Controller || Dynamics || Perfect).\n"
            "||WorstLoop = (Controller || Dynamics || Worst).\n"
        )
    return "\n".join(parts)


# ==================== GENERATORS ====================

@lru_cache(maxsize=8)
def _processes(cfg: DiscretizationConfig) -> Dict[str, Lts]:
    processes = parse(model_source(cfg, composites=False))
    logger.debug(f"generated TaxiNet processes for m={cfg.max_cte}: "
                 + ", ".join(f"{k}={v.num_states}" for k, v in processes.items()))
    return processes


def gen_controller(cfg: DiscretizationConfig) -> Lts:
    return _processes(cfg)["Controller"]


def gen_dynamics(cfg: DiscretizationConfig) -> Lts:
    return _processes(cfg)["Dynamics"]


def perfect_perception(cfg: DiscretizationConfig) -> Lts:
    return _processes(cfg)["Perfect"]


def worst_perception(cfg: DiscretizationConfig) -> Lts:
    return _processes(cfg)["Worst"]


@lru_cache(maxsize=4)
def gen_m1(cfg: DiscretizationConfig) -> Lts:
    """Controller || Dynamics"""
    m1 = compose(gen_controller(cfg), gen_dynamics(cfg))
    logger.info(f"M1 for m={cfg.max_cte}: {m1.num_states} states, {len(m1.transitions)} transitions")
    return m1


def closed_loop(cfg: DiscretizationConfig, perception: Lts) -> Lts:
    return compose_all([gen_controller(cfg), gen_dynamics(cfg), perception])


def safety_property() -> Lts:
    """Both safety properties live in Dynamics as ERROR, so the property adds nothing"""
    return universal_property()


def interface_alphabet(cfg: DiscretizationConfig, with_actuals: bool = False) -> InterfaceAlphabet:
    actuals = cfg.actions(ACT) if with_actuals else ()
    return InterfaceAlphabet.of(actuals, cfg.actions(EST))


def all_models(cfg: DiscretizationConfig) -> Dict[str, Lts]:
    """Every generated process plus the composed M1, by name"""
    models = dict(_processes(cfg))
    models["M1"] = gen_m1(cfg)
    return models


def write_models(cfg: DiscretizationConfig, out_dir: str) -> List[str]:
    """Write the FSP source and elaborated .aut files; returns the paths written"""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    source_path = os.path.join(out_dir, f"taxinet_m{cfg.max_cte}.fsp")
    with open(source_path, "w") as f:
        f.write(model_source(cfg))
    written.append(source_path)

    models = all_models(cfg)
    models["Property"] = safety_property()
    for name, lts in models.items():
        path = os.path.join(out_dir, f"{name.lower()}_m{cfg.max_cte}.aut")
        with open(path, "w") as f:
            f.write(write_aut(lts))
        written.append(path)
    logger.info(f"wrote {len(written)} model files to {out_dir}")
    return written
