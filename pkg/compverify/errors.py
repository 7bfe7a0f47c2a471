"""
Exception hierarchy for compverify.
Every failure the toolkit raises on purpose derives from CompverifyError so the
command-line wrapper can map it to exit code 2 in one place.
"""

from typing import Iterable, Optional


class CompverifyError(Exception):
    """Base class for all compverify errors"""


# ==================== AUTOMATA ====================

class LtsError(CompverifyError):
    """An LTS was constructed in violation of its invariants"""


class AutFormatError(CompverifyError):
    """Malformed Aldebaran .aut text"""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


# ==================== FSP FRONTEND ====================

class FspError(CompverifyError):
    """Base class for FSP parse and elaboration failures"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class FspSyntaxError(FspError):
    pass


class UnboundIdentifierError(FspError):

    def __init__(self, name: str, line: Optional[int] = None, column: Optional[int] = None):
        self.name = name
        super().__init__(f"Unbound identifier '{name}'", line, column)


class IndexOutOfRangeError(FspError):
    pass


class DuplicateProcessError(FspError):

    def __init__(self, name: str, line: Optional[int] = None, column: Optional[int] = None):
        self.name = name
        super().__init__(f"Duplicate process name '{name}'", line, column)


# ==================== ANALYSIS ====================

class AlternationError(CompverifyError):
    """An err-adjacent state is entered by an estimate instead of an actual"""

    def __init__(self, state: str, action: str):
        self.state = state
        self.action = action
        super().__init__(
            f"State {state} can reach err but is entered on estimate {action}; "
            f"actuals and estimates must alternate"
        )


class DiscretizationError(CompverifyError):
    """A continuous value or bin index lies outside the modelled range"""


class ProfileError(CompverifyError):
    """Malformed or incomplete perception profile"""

    def __init__(self, message: str, missing: Iterable = ()):
        self.missing = tuple(missing)
        super().__init__(message)


class DtmcError(CompverifyError):
    """The monitored DTMC could not be built from the given components"""


class InterfaceError(CompverifyError):
    """Interface alphabet tags overlap or name actions the model lacks"""


class MonitorError(CompverifyError):
    """The runtime monitor was given an automaton or a stream it cannot run on"""
