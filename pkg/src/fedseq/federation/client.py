from __future__ import annotations

import enum

from ..nets import NetworkConfig, check_params
from ..optim import AdamState
from ..params import ParameterSet
from ..training import DEFAULT_CLIP_NORM, train_epochs
from .wire import ProtocolError, RoundMessage, Tag


class ClientPhase(enum.Enum):
    REGISTERING = "registering"
    TRAINING = "training"
    REPORTING = "reporting"
    STOPPED = "stopped"


class FederatedClient:
    """One participant's machine: trains locally, reports weights, never data.

    Each round starts from the received global weights. The Adam moments
    persist across rounds unless ``optimizer_mode="reset"``.
    """

    def __init__(self, client_id: str, config: NetworkConfig, windows,
                 epochs_per_round: int = 1, clip_norm: float | None = DEFAULT_CLIP_NORM,
                 optimizer_mode: str = "persistent"):
        if not windows:
            raise ValueError(f"client {client_id!r} has no training windows")
        if optimizer_mode not in ("persistent", "reset"):
            raise ValueError(f"unknown optimizer_mode {optimizer_mode!r}")
        self.client_id = client_id
        self.config = config
        self.local_data = list(windows)
        self.epochs_per_round = epochs_per_round
        self.clip_norm = clip_norm
        self.optimizer_mode = optimizer_mode
        self.phase = ClientPhase.REGISTERING
        self.local_params: ParameterSet | None = None
        self.optimizer: AdamState | None = None
        self.round = -1
        self.loss_history: list[float] = []

    @property
    def n_samples(self) -> int:
        return len(self.local_data)

    def register_message(self) -> RoundMessage:
        return RoundMessage(Tag.REGISTER, 0, self.client_id)

    def local_train(self, global_params: ParameterSet, epochs: int | None = None):
        epochs = self.epochs_per_round if epochs is None else epochs
        if self.local_params is not None:
            self.local_params.check_layout(global_params)
        check_params(global_params, self.config)
        self.local_params = global_params
        if self.optimizer is None or self.optimizer_mode == "reset":
            self.optimizer = AdamState.for_params(global_params, self.config.learning_rate)
        self.local_params, self.optimizer, hist = train_epochs(
            self.local_params, self.config, self.local_data, self.optimizer, epochs,
            self.clip_norm)
        self.loss_history.extend(hist)
        return self.local_params, self.n_samples

    def handle(self, msg: RoundMessage) -> RoundMessage | None:
        if self.phase is ClientPhase.STOPPED:
            raise ProtocolError(f"client {self.client_id} already stopped")
        if msg.tag is Tag.DONE:
            self.phase = ClientPhase.STOPPED
            return None
        if msg.tag is not Tag.GLOBAL:
            raise ProtocolError(f"client cannot handle {msg.tag.name}")
        if msg.round <= self.round:
            raise ProtocolError(f"GLOBAL for round {msg.round} after round {self.round}")
        self.round = msg.round
        self.phase = ClientPhase.TRAINING
        params, n = self.local_train(msg.payload)
        self.phase = ClientPhase.REPORTING
        return RoundMessage(Tag.UPDATE, self.round, self.client_id, params, n)
