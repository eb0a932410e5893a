"""Isolated per-app execution runtime for LLM assistants.

A trusted hub plans queries, launches each app in its own sandboxed spoke
process, mediates every exchange through a validated collaboration
protocol, and gates data movement behind user permissions. A shared-context
baseline mode exists to show exactly what the isolation prevents.
"""

__version__ = "0.1.0"

from .config import RuntimeConfig
from .errors import HubSpokeError

__all__ = ["RuntimeConfig", "HubSpokeError", "__version__"]
