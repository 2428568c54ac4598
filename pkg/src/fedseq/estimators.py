"""scikit-learn style estimators wrapping the networks and the federation."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .data import FeatureSequence, fit_normalizer
from .federation import AggregationRule, FederatedClient, FederatedServer, SimTransport
from .metrics import evaluate_predictions
from .nets import CellKind, NetworkConfig, check_params, init_network, predict_sequence
from .optim import AdamState
from .tensor import make_rng
from .training import train_epochs
from .validation import check_sequence_ids, check_sequences


def _windows(x, y, length, stride):
    return [(x[s:s + length], y[s:s + length])
            for s in range(0, len(x) - length + 1, stride)]


class SequenceScaler(TransformerMixin, BaseEstimator):
    """Per-feature z-scoring fitted on a collection of sequences."""

    def fit(self, X, y=None):
        xs, _, _ = check_sequences(X)
        stats = fit_normalizer(
            FeatureSequence(str(i), x, np.zeros((len(x), 2))) for i, x in enumerate(xs))
        self.mean_ = stats.mean
        self.scale_ = stats.std
        self.n_features_in_ = len(self.mean_)
        return self

    def transform(self, X):
        check_is_fitted(self)
        xs, _, single = check_sequences(X, n_features=self.n_features_in_)
        out = [(x - self.mean_) / self.scale_ for x in xs]
        return out[0] if single else out


class RecurrentRegressor(RegressorMixin, BaseEstimator):
    """Per-frame valence/arousal regression with a (Bi)RNN/GRU/LSTM stack.

    ``fit`` slices every training sequence into windows of
    ``sequence_length`` frames (step ``stride``, default non-overlapping)
    and runs ``epochs`` passes, one Adam step per window, in order.
    """

    def __init__(self, cell="GRU", bidirectional=True, hidden_size=64, num_layers=1,
                 fc_hidden=10, sequence_length=600, stride=None, learning_rate=1e-4,
                 epochs=100, clip_norm=5.0, random_state=0):
        self.cell = cell
        self.bidirectional = bidirectional
        self.hidden_size = hidden_size
        self.num_layers = num_layers
        self.fc_hidden = fc_hidden
        self.sequence_length = sequence_length
        self.stride = stride
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.clip_norm = clip_norm
        self.random_state = random_state

    def _network_config(self, n_features: int) -> NetworkConfig:
        return NetworkConfig(
            cell=CellKind(self.cell, bool(self.bidirectional)),
            input_size=n_features, hidden_size=self.hidden_size,
            num_layers=self.num_layers, fc_hidden=self.fc_hidden, outputs=2,
            sequence_length=self.sequence_length, learning_rate=self.learning_rate)

    def _stride(self) -> int:
        return self.sequence_length if self.stride is None else self.stride

    def _init(self, n_features: int):
        self.config_ = self._network_config(n_features)
        self.n_features_in_ = n_features
        return init_network(self.config_, make_rng(self.random_state))

    def fit(self, X, y=None):
        xs, ys, _ = check_sequences(X, y)
        if ys is None:
            raise ValueError("fit requires targets")
        params = self._init(xs[0].shape[1])
        windows = [w for x, t in zip(xs, ys)
                   for w in _windows(x, t, self.sequence_length, self._stride())]
        if not windows:
            raise ValueError(f"no sequence is at least {self.sequence_length} frames long")
        self.n_windows_ = len(windows)
        state = AdamState.for_params(params, self.learning_rate)
        self.params_, self.optimizer_, self.loss_curve_ = train_epochs(
            params, self.config_, windows, state, self.epochs, self.clip_norm)
        return self

    def set_weights(self, params, n_features: int):
        """Adopt trained weights (e.g. from a checkpoint) without fitting."""
        self.config_ = self._network_config(n_features)
        check_params(params, self.config_)
        self.n_features_in_ = n_features
        self.params_ = params
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        xs, _, single = check_sequences(X, n_features=self.n_features_in_)
        out = [predict_sequence(self.params_, self.config_, x) for x in xs]
        return out[0] if single else out

    def score(self, X, y=None, sample_weight=None):
        """Mean of the valence and arousal CCC over all frames."""
        xs, ys, _ = check_sequences(X, y)
        pred = np.concatenate([predict_sequence(self.params_, self.config_, x) for x in xs])
        rep = evaluate_predictions(pred, np.concatenate(ys))
        return 0.5 * (rep.valence_ccc + rep.arousal_ccc)


class FederatedRecurrentRegressor(RecurrentRegressor):
    """Same model, trained by synchronous federated averaging.

    Every sequence passed to ``fit`` is one client. ``epochs`` is the total
    number of local epochs; a round runs ``epochs_per_round`` of them on
    each client before the server averages the weights.
    """

    def __init__(self, cell="GRU", bidirectional=True, hidden_size=64, num_layers=1,
                 fc_hidden=10, sequence_length=600, stride=None, learning_rate=1e-4,
                 epochs=100, clip_norm=5.0, random_state=0, epochs_per_round=1,
                 aggregation="mean", optimizer_mode="persistent", threaded=False,
                 timeout=None):
        super().__init__(cell=cell, bidirectional=bidirectional, hidden_size=hidden_size,
                         num_layers=num_layers, fc_hidden=fc_hidden,
                         sequence_length=sequence_length, stride=stride,
                         learning_rate=learning_rate, epochs=epochs, clip_norm=clip_norm,
                         random_state=random_state)
        self.epochs_per_round = epochs_per_round
        self.aggregation = aggregation
        self.optimizer_mode = optimizer_mode
        self.threaded = threaded
        self.timeout = timeout

    def fit(self, X, y=None, client_ids=None, tap=None):
        xs, ys, _ = check_sequences(X, y)
        if ys is None:
            raise ValueError("fit requires targets")
        if isinstance(X, (list, tuple)) and client_ids is None and all(
                isinstance(s, FeatureSequence) for s in X):
            client_ids = [s.participant_id for s in X]
        ids = check_sequence_ids(client_ids, len(xs))
        if self.epochs_per_round < 1 or self.epochs % self.epochs_per_round:
            raise ValueError("epochs must be a positive multiple of epochs_per_round")
        params = self._init(xs[0].shape[1])
        clients = [
            FederatedClient(cid, self.config_, _windows(x, t, self.sequence_length, self._stride()),
                            self.epochs_per_round, self.clip_norm, self.optimizer_mode)
            for cid, x, t in zip(ids, xs, ys)
        ]
        server = FederatedServer(params, ids, self.epochs // self.epochs_per_round,
                                 AggregationRule(self.aggregation), self.timeout)
        with SimTransport(clients, threaded=self.threaded, tap=tap) as transport:
            self.params_ = server.run(transport)
        self.rounds_ = server.round
        self.n_clients_ = len(clients)
        self.n_windows_ = sum(c.n_samples for c in clients)
        self.round_history_ = server.history
        self.client_loss_curves_ = {c.client_id: c.loss_history for c in clients}
        return self
