"""Shared exception base.

Every expected, user-facing failure in the package derives from DomainError
so the CLI can map it to exit code 1; anything else is a bug.
"""


class DomainError(Exception):
    pass
