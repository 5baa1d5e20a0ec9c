"""Exception types shared across the package.

The command line maps these onto exit codes: malformed input -> 2,
internal-check failures (a violated theorem-level invariant or a numerically
ill-conditioned instance) -> 3.  Plain ``ValueError`` raised by validation
helpers counts as malformed input as well.
"""

from __future__ import annotations


class InputError(ValueError):
    """Malformed user input: unparseable file, inconsistent shapes, bad values."""


class InternalCheckError(RuntimeError):
    """A structural invariant that should hold by theorem failed at runtime.

    Seeing this means either a bug or an instance so ill-conditioned that
    its combinatorial structure cannot be decided at float precision.
    """
