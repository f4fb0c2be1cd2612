from .client import BrokerClient, BrokerConnectionError, BrokerProtocolError
from .core import Broker, Datapoint, Subscription, TraceEntry, TypeMismatch, check_value
from .protocol import Frame, FrameError, parse_frame
from .server import BrokerServer, parse_address, serve


def connect(endpoint, timeout: float = 10.0):
    """Return a broker API object: in-process brokers pass through, addresses dial TCP."""
    if isinstance(endpoint, (Broker, BrokerClient)):
        return endpoint
    return BrokerClient.connect(str(endpoint), timeout)


__all__ = [
    "Broker", "BrokerClient", "BrokerConnectionError", "BrokerProtocolError", "BrokerServer",
    "Datapoint", "Frame", "FrameError", "Subscription", "TraceEntry", "TypeMismatch",
    "check_value", "connect", "parse_address", "parse_frame", "serve",
]
