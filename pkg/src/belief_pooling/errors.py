"""Exception hierarchy for belief-pooling.

Every error is a ``ValueError`` so callers that only care about "bad input or
bad state" can catch that, while the CLI maps the concrete classes to exit codes.
"""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from belief_pooling.likelihoods import IdentifiabilityReport


class BeliefPoolingError(ValueError):
    """Base class for all errors raised by the package."""


def _with_location(message: str, time: int | None, realization: int | None) -> str:
    details = []
    if time is not None:
        details.append(f"time {time}")
    if realization is not None:
        details.append(f"realization {realization}")
    if details:
        message = f"{message} ({', '.join(details)})"
    return message


class AllZeroBeliefError(BeliefPoolingError):
    """Every hypothesis carries zero mass, so the belief cannot be normalized."""

    def __init__(
        self,
        message: str = "every entry is -inf",
        time: int | None = None,
        realization: int | None = None,
    ):
        self.time = time
        self.realization = realization
        super().__init__(_with_location(message, time, realization))


class TruthAnnihilatedError(BeliefPoolingError):
    """The belief on the true hypothesis reached exactly zero."""

    def __init__(
        self,
        message: str = "belief on the true hypothesis is zero",
        time: int | None = None,
        realization: int | None = None,
    ):
        self.time = time
        self.realization = realization
        super().__init__(_with_location(message, time, realization))


class OutOfSupportError(BeliefPoolingError):
    """An observation lies outside the support of a likelihood model."""


class DegenerateVarianceError(BeliefPoolingError):
    """A normalization needs a strictly positive variance and got zero."""


class NonFiniteSampleError(BeliefPoolingError):
    """A statistical test received NaN or infinite values."""


class ConstantSampleError(BeliefPoolingError):
    """A statistical test received a sample with no spread."""


class SampleSizeError(BeliefPoolingError):
    """A sample is too small or too large for the requested computation."""


class MissingRuleError(BeliefPoolingError):
    """A report lacks a pooling rule that the caller needs."""


class ConfigParseError(BeliefPoolingError):
    """A configuration file could not be read as JSON or YAML."""


class ConfigError(BeliefPoolingError):
    """A configuration value violates a constraint.

    Attributes:
        field: Dotted name of the offending field.
    """

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"'{field}': {message}")


class IdentifiabilityError(BeliefPoolingError):
    """Some wrong hypothesis cannot be told apart from the truth by any agent."""

    def __init__(self, report: IdentifiabilityReport):
        self.report = report
        undistinguished = ", ".join(str(t) for t in report.undistinguished)
        super().__init__(
            "global identifiability fails: no clear-sighted agent for "
            f"hypotheses {undistinguished}"
        )
