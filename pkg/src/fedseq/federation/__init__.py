"""Synchronous federated training: wire format, aggregation, server, clients."""
from .aggregate import AggregationRule, aggregate
from .client import ClientPhase, FederatedClient
from .server import FederatedServer, RoundAbortedError, ServerPhase, run_round
from .transport import SimTransport, TcpServerTransport, run_tcp_client
from .wire import (
    ProtocolError,
    RoundMessage,
    Tag,
    decode_message,
    decode_params,
    encode_params,
)

__all__ = [
    "AggregationRule", "aggregate", "ClientPhase", "FederatedClient",
    "FederatedServer", "RoundAbortedError", "ServerPhase", "run_round",
    "SimTransport", "TcpServerTransport", "run_tcp_client",
    "ProtocolError", "RoundMessage", "Tag", "decode_message", "decode_params",
    "encode_params",
]
