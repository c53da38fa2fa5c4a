"""Exception hierarchy for the package.

Everything raised on purpose derives from TrialearnError so callers (and the
CLI) can distinguish our diagnostics from genuine bugs.
"""

from __future__ import annotations


class TrialearnError(Exception):
    """Base class for all package errors."""


class GameFormatError(TrialearnError):
    """A game file or game description is malformed; message names the culprit."""


class ConfigError(TrialearnError):
    """A run or analysis configuration is invalid."""


class ClassificationError(TrialearnError):
    """A recurrence class does not match any supported structural form."""


class VerificationError(TrialearnError):
    """A structural check that must hold was violated."""


class ConvergenceError(TrialearnError):
    """An iterative solve failed to reach its tolerance."""
