"""Discrete-event simulator and audit toolkit for memory- and
message-constrained load balancing."""

from .core import (
    ConfigError,
    JobRecord,
    MemoryState,
    PolicyContractError,
    PolicyDefinition,
    SampleVector,
    ServerQueue,
    SystemState,
)
from .engine import (
    MetricsLog,
    RngStreams,
    Simulation,
    estimate_delay,
    estimate_message_rate,
    run,
)

__version__ = "0.1.0"
