from __future__ import annotations

import enum
import logging

from ..params import ParameterSet
from .aggregate import AggregationRule, aggregate
from .wire import ProtocolError, RoundMessage, Tag

log = logging.getLogger(__name__)


class ServerPhase(enum.Enum):
    WAIT_REGISTER = "wait_register"
    BROADCAST = "broadcast"
    COLLECT = "collect"
    AGGREGATE = "aggregate"
    FINISHED = "finished"


class RoundAbortedError(RuntimeError):
    """A client failed to report before the round timeout."""


class FederatedServer:
    """Synchronous parameter server: broadcast, wait for every client, average.

    Transports provide ``send(client_id, msg)`` and ``recv(timeout)``; the
    latter raises ``TimeoutError`` when nothing arrives in time.
    """

    def __init__(self, global_params: ParameterSet, expected_clients, total_rounds: int,
                 rule=AggregationRule.MEAN, timeout: float | None = None):
        self.expected_clients = frozenset(expected_clients)
        if not self.expected_clients:
            raise ValueError("a federation needs at least one client")
        if total_rounds < 0:
            raise ValueError("total_rounds must be non-negative")
        self.global_params = global_params
        self.total_rounds = total_rounds
        self.rule = AggregationRule(rule)
        self.timeout = timeout
        self.phase = ServerPhase.WAIT_REGISTER
        self.registered: set[str] = set()
        self.received: dict[str, tuple[ParameterSet, int]] = {}
        self.round = 0
        self.history: list[ParameterSet] = []

    def _recv(self, transport) -> RoundMessage:
        try:
            return transport.recv(self.timeout)
        except TimeoutError as exc:
            missing = sorted(self.expected_clients - set(self.received) - (
                set() if self.phase is ServerPhase.COLLECT else self.registered))
            raise RoundAbortedError(
                f"round {self.round}: no message within {self.timeout}s (waiting on {missing})"
            ) from exc

    def handle_register(self, msg: RoundMessage) -> None:
        if self.phase is not ServerPhase.WAIT_REGISTER or msg.tag is not Tag.REGISTER:
            raise ProtocolError(f"unexpected {msg.tag.name} during {self.phase.value}")
        if msg.client_id not in self.expected_clients:
            raise ProtocolError(f"unknown client {msg.client_id!r}")
        if msg.client_id in self.registered:
            raise ProtocolError(f"client {msg.client_id!r} registered twice")
        self.registered.add(msg.client_id)
        if self.registered == self.expected_clients:
            self.phase = ServerPhase.BROADCAST

    def handle_update(self, msg: RoundMessage) -> None:
        if self.phase is not ServerPhase.COLLECT:
            raise ProtocolError(f"unexpected {msg.tag.name} during {self.phase.value}")
        if msg.tag is not Tag.UPDATE:
            raise ProtocolError(f"expected UPDATE, got {msg.tag.name}")
        if msg.round != self.round:
            raise ProtocolError(
                f"stale UPDATE from {msg.client_id!r}: round {msg.round}, current {self.round}")
        if msg.client_id not in self.expected_clients:
            raise ProtocolError(f"UPDATE from unknown client {msg.client_id!r}")
        if msg.client_id in self.received:
            raise ProtocolError(f"duplicate UPDATE from {msg.client_id!r}")
        try:
            self.global_params.check_layout(msg.payload)
        except ValueError as exc:
            raise ProtocolError(str(exc)) from exc
        self.received[msg.client_id] = (msg.payload, msg.n_samples)
        if set(self.received) == self.expected_clients:
            self.phase = ServerPhase.AGGREGATE

    def aggregate_round(self) -> ParameterSet:
        if self.phase is not ServerPhase.AGGREGATE:
            raise RuntimeError("aggregation attempted before every client reported")
        assert set(self.received) == self.expected_clients
        self.global_params = aggregate(self.received, self.rule)
        self.history.append(self.global_params)
        self.received = {}
        self.round += 1
        self.phase = (ServerPhase.FINISHED if self.round >= self.total_rounds
                      else ServerPhase.BROADCAST)
        return self.global_params

    def register_all(self, transport) -> None:
        while self.phase is ServerPhase.WAIT_REGISTER:
            self.handle_register(self._recv(transport))
        if self.total_rounds == 0:
            self.phase = ServerPhase.FINISHED

    def run_round(self, transport) -> ParameterSet:
        if self.phase is not ServerPhase.BROADCAST:
            raise RuntimeError(f"cannot start a round in phase {self.phase.value}")
        msg = RoundMessage(Tag.GLOBAL, self.round, payload=self.global_params)
        self.phase = ServerPhase.COLLECT
        for cid in sorted(self.expected_clients):
            transport.send(cid, msg)
        while self.phase is ServerPhase.COLLECT:
            self.handle_update(self._recv(transport))
        log.debug("round %d: %d updates", self.round, len(self.received))
        return self.aggregate_round()

    def finish(self, transport) -> None:
        done = RoundMessage(Tag.DONE, self.round)
        for cid in sorted(self.expected_clients):
            transport.send(cid, done)
        self.phase = ServerPhase.FINISHED

    def run(self, transport) -> ParameterSet:
        """Registration, ``total_rounds`` rounds, then DONE to every client."""
        self.register_all(transport)
        while self.phase is ServerPhase.BROADCAST:
            self.run_round(transport)
        self.finish(transport)
        return self.global_params


def run_round(server: FederatedServer, transport) -> FederatedServer:
    server.run_round(transport)
    return server
