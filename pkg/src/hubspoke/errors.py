"""Exception taxonomy for the runtime.

Every failure that crosses a module boundary is one of these; operators
catch them by family (PlanningFailure vs. SpokeError vs. SandboxError)
rather than by message text.
"""


class HubSpokeError(Exception):
    """Base class for all runtime errors."""


class PlanningFailure(HubSpokeError):
    """Planner output unparsable after the single allowed reprompt."""


class UserDeclined(HubSpokeError):
    """The user denied a required permission or selection."""


class SpokeTimeout(HubSpokeError):
    """A spoke did not reply within the configured request-reply timeout."""


class SpokeCrashed(HubSpokeError):
    """A spoke process exited while a request was outstanding."""


class LaunchFailure(HubSpokeError):
    """Spoke process or sandbox policy could not be applied.

    Queries hitting this are refused; execution never falls back to an
    unconfined process.
    """


class ToolFailure(HubSpokeError):
    """A tool handler raised; surfaced after the per-step retry budget."""


class ContextWindowExceeded(HubSpokeError):
    """Estimated prompt tokens exceed the backend context window."""


class RemoteFailure(HubSpokeError):
    """Remote backend unreachable or invalid after retries."""


class ManifestInvalid(HubSpokeError):
    """An app manifest document violates its invariants."""

    def __init__(self, field: str, reason: str = ""):
        self.field = field
        super().__init__(f"manifest field {field!r} invalid" + (f": {reason}" if reason else ""))


class StoreUnavailable(HubSpokeError):
    """The persistent memory store could not be read or written."""


class IrreversiblePermanentBan(HubSpokeError):
    """Permanent grants are never allowed for irreversible actions."""


class NoProvider(HubSpokeError):
    """No app in the catalog offers the probed functionality."""


class SelfOnly(HubSpokeError):
    """The sole provider of a probed functionality is the requester itself."""


class PermissionDenied(HubSpokeError):
    """A relay was refused because no grant covered it and the user denied."""


class InvalidHost(HubSpokeError):
    """Host is not resolvable to a registrable domain (eTLD+1)."""


class BindFailure(HubSpokeError):
    """The gateway could not bind its address."""


class Malformed(HubSpokeError):
    """An ISC message failed validation.

    Carries a reason code naming the first failing field only; never any
    payload bytes (a malicious receiver must not tunnel text back through
    error strings).
    """

    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)
