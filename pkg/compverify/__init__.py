"""
compverify: compositional verification for systems with learned perception.

Model-check LTS designs, build weakest assumptions for the perception
interface, mine local perception specifications from them and measure how
often an assumption monitor would abort under a profiled perception model,
or run that monitor on logged estimates.
"""

from compverify.lts import (
    ERR, TAU, Action, Lts, Transition, accepts, check_safety, complement, compose,
    compose_all, determinize, hide, reachable,
)
from compverify.assumptions import InterfaceAlphabet, build_assume, check_context
from compverify.local_specs import LocalSpec, concretize, synthesize_local_specs
from compverify.fsp import parse, print_fsp
from compverify.monitor import Monitor, MonitorVerdict

__version__ = "0.1.0"

__all__ = [
    "ERR", "TAU", "Action", "Lts", "Transition", "accepts", "check_safety", "complement",
    "compose", "compose_all", "determinize", "hide", "reachable",
    "InterfaceAlphabet", "build_assume", "check_context",
    "LocalSpec", "concretize", "synthesize_local_specs",
    "parse", "print_fsp",
    "Monitor", "MonitorVerdict",
]
