"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class FabulaError(Exception):
    """Base class for all engine errors."""


# -- entity construction -------------------------------------------------


class BuildError(FabulaError):
    """An entity or prefab could not be assembled."""


class NoActingComponent(BuildError):
    pass


class MultipleActingComponents(BuildError):
    pass


class DuplicateComponentName(BuildError):
    pass


class UnknownComponentType(BuildError):
    pass


class DependencyMissing(BuildError):
    """A component requires a sibling component that is not attached."""


# -- prefab / scenario layer ---------------------------------------------


class DuplicatePrefabName(BuildError):
    pass


class InvalidSchema(BuildError):
    pass


class UnknownParameter(BuildError):
    pass


class TypeMismatch(BuildError):
    pass


class ScenarioValidationError(FabulaError):
    """Raised by instantiate() when a scenario document has errors.

    Carries the full aggregated report, not just the first problem.
    """

    def __init__(self, report):
        self.report = list(report)
        lines = "; ".join(f"{item.path}: {item.message}" for item in self.report)
        super().__init__(f"scenario invalid: {lines}")


# -- runtime -------------------------------------------------------------


class ComponentFailure(FabulaError):
    """A lifecycle hook raised; the current top-level call is aborted."""

    def __init__(self, component: str, detail: str):
        self.component = component
        self.detail = detail
        super().__init__(f"component {component!r} failed: {detail}")


class ActingFailure(FabulaError):
    """The acting component could not produce a valid action."""

    def __init__(self, component: str, detail: str):
        self.component = component
        self.detail = detail
        super().__init__(f"acting component {component!r} failed: {detail}")


class MissingGmComponent(FabulaError):
    """The selected engine requires a GM component that is not present."""

    def __init__(self, kind: str):
        self.kind = kind
        super().__init__(f"engine requires GM component {kind!r}")


class SerializationFailure(FabulaError):
    pass


# -- language-model providers --------------------------------------------


class ProviderError(FabulaError):
    pass


class ProviderExhausted(ProviderError):
    """A scripted provider ran out of queued responses."""


class CassetteMiss(ProviderError):
    """Replay was asked for a request the cassette does not contain."""


class RemoteError(ProviderError):
    """The remote completion API failed after the retry budget."""

    def __init__(self, status: int | None, attempts: int, detail: str = ""):
        self.status = status
        self.attempts = attempts
        super().__init__(
            f"remote completion failed (status={status}, attempts={attempts}) {detail}".rstrip()
        )


class ChannelClosed(FabulaError):
    """The human input channel went away; treated as a timeout."""
