"""Exception hierarchy shared by every layer of the package."""

from __future__ import annotations


class LicenseGraphError(Exception):
    """Base class for all errors raised by licensegraph."""


class MalformedVersion(LicenseGraphError, ValueError):
    pass


class MalformedRequirement(LicenseGraphError, ValueError):
    pass


class IoFailure(LicenseGraphError, OSError):
    pass


class SchemaViolation(LicenseGraphError, ValueError):
    """A single index line failed validation. Non-fatal during ingestion."""

    def __init__(self, line_no: int, reason: str) -> None:
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no
        self.reason = reason


class NetworkFailure(LicenseGraphError):
    pass


class NotFound(LicenseGraphError, LookupError):
    pass


class RateLimited(NetworkFailure):
    pass


class OutOfMatrix(LicenseGraphError, KeyError):
    def __init__(self, spdx: str) -> None:
        super().__init__(spdx)
        self.spdx = spdx

    def __str__(self) -> str:
        return f"license {self.spdx!r} is not in the compatibility matrix"


class UnknownRoot(LicenseGraphError, LookupError):
    pass


class NodeNotInGraph(LicenseGraphError, LookupError):
    pass


class UniverseTooLarge(LicenseGraphError):
    def __init__(self, size: int, cap: int) -> None:
        super().__init__(f"{size} packages reachable, cap is {cap}; restrict the index")
        self.size = size
        self.cap = cap


class NoSolution(LicenseGraphError):
    pass


class SolverTimeout(LicenseGraphError):
    def __init__(self, message: str, plans: list | None = None) -> None:
        super().__init__(message)
        self.plans = plans or []


class InconsistentSolution(LicenseGraphError):
    pass


class ConfigError(LicenseGraphError):
    pass
