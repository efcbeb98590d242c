"""Exception hierarchy shared across the package.

Everything raised on purpose derives from :class:`MimoCcError` so callers can
catch package failures with a single except clause.  Configuration and input
problems additionally derive from :class:`ValueError`; numerical failures
(rank loss, singular solves, degenerate nullspaces) derive from
:class:`NumericalError` and are reported separately by the command line tool.
"""

from __future__ import annotations


class MimoCcError(Exception):
    """Base class for all package errors."""


class ConfigError(MimoCcError, ValueError):
    """A network configuration is inconsistent or incomplete."""


class NonIntegerEta(ConfigError):
    """Transmit multiplexing is not an integer multiple of receive multiplexing."""


class NonIntegerT(ConfigError):
    """The caching gain K*M/N is not a nonnegative integer."""


class InsufficientUsers(ConfigError):
    """Fewer users than the serving-set size t + eta requires."""


class MultiplexingExceedsAntennas(ConfigError):
    """A multiplexing order exceeds the corresponding antenna count."""


class ConfigFileError(ConfigError):
    """A key-value configuration file could not be parsed.

    Carries the offending key (when known) and 1-based line number so the
    command line tool can point at the problem.
    """

    def __init__(self, message: str, *, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class OutOfRange(MimoCcError, ValueError):
    """An index or combinatorial argument is outside its valid range."""


class InvalidDemand(MimoCcError, ValueError):
    """A demand vector has the wrong length or references unknown files."""


class MalformedBaseline(MimoCcError, ValueError):
    """A single-stream baseline plan violates its structural invariants."""


class LowSubpackInapplicable(MimoCcError, ValueError):
    """The low-subpacketization construction does not cover this parameter range."""


class ConfigMismatch(MimoCcError, ValueError):
    """Two artifacts built for different network configurations were combined."""


class PlanFormatError(MimoCcError, ValueError):
    """A serialized plan file is syntactically or structurally invalid."""


class ModeMismatch(MimoCcError, ValueError):
    """A plan or transmission was handed to a routine for the wrong delivery mode."""


class InsufficientPoints(MimoCcError, ValueError):
    """Too few sweep points for the requested slope estimate."""


class UnsupportedCombination(MimoCcError, ValueError):
    """The requested mode/strategy pair is outside the supported finite-SNR range."""


class NumericalError(MimoCcError):
    """Base class for linear-algebra and optimization failures."""


class RankDeficient(NumericalError):
    """A channel draw stayed rank deficient after the redraw budget."""


class ZeroMatrix(NumericalError):
    """An all-zero (or numerically zero) matrix where a direction is needed."""


class DegenerateNullspace(NumericalError):
    """A zero-forcing nullspace is empty or orthogonal to the target channel."""


class SingularCovariance(NumericalError):
    """A receive covariance could not be inverted."""


class InfeasibleInit(NumericalError):
    """The optimizer could not build a usable starting point."""
