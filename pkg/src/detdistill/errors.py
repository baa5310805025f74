"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes, so library code should raise
the most specific type that applies rather than bare ValueError/RuntimeError
for anything a user can trigger from the command line.
"""

from __future__ import annotations


class DistillError(Exception):
    """Base class for all package errors."""


class ConfigError(DistillError):
    """Invalid configuration: bad flag values, malformed config files,
    mutually exclusive options supplied together."""


class DataError(DistillError):
    """Invalid or unreadable input data: malformed annotation JSON,
    missing image files, undecodable images, schema violations."""


class ObserverError(DistillError):
    """Base class for observer backend failures."""


class ObserverTransportError(ObserverError):
    """The observer could not be reached or the channel broke mid-exchange
    (dead subprocess, connection refused, timeout). Retriable."""


class ObserverProtocolError(ObserverError):
    """The observer answered, but the payload violates the wire protocol
    (wrong canvas_id echo, missing fields, out-of-range scores).
    Not retriable: the peer is misbehaving, not flaky."""

    def __init__(self, message: str, payload_excerpt: str = ""):
        if payload_excerpt:
            message = f"{message} (payload: {payload_excerpt})"
        super().__init__(message)


class StateError(DistillError):
    """An operation was invoked on an object in the wrong state, e.g.
    computing information density over occupants that were never scored."""
