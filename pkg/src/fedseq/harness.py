"""Participant-wise k-fold cross validation, run reports and inference timing."""
from __future__ import annotations

import csv
import io
import json
import platform
import statistics
import struct
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, parse_config_text
from .data import (
    FeatureSequence,
    NormalizationStats,
    apply_normalizer,
    fit_normalizer,
    generate_synthetic,
    load_dataset,
    normalize_own,
    plan_folds,
)
from .estimators import FederatedRecurrentRegressor, RecurrentRegressor
from .federation.wire import decode_params, encode_params
from .metrics import MetricReport, evaluate_predictions
from .nets import NetworkConfig, predict_sequence
from .optim import mse_loss
from .params import ParameterSet
from .tensor import make_rng, spawn_seeds


class LeakageError(AssertionError):
    """Evaluation participants leaked into training data or statistics."""


@dataclass
class FoldResult:
    fold: int
    train_participants: list[str]
    eval_participants: list[str]
    metrics: MetricReport
    eval_loss: float
    train_seconds: float
    n_clients: int

    @property
    def parallel_seconds(self) -> float:
        return self.train_seconds / self.n_clients

    def as_dict(self) -> dict:
        d = asdict(self)
        d["metrics"] = self.metrics.as_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FoldResult":
        d = dict(d)
        d["metrics"] = MetricReport(**d["metrics"])
        return cls(**d)


@dataclass
class RunReport:
    folds: list[FoldResult]
    config: dict
    inference_seconds: dict = field(default_factory=dict)   # {"100": s, "500": s}
    fingerprint: dict = field(default_factory=dict)
    mean_valence_ccc: float | None = None
    mean_arousal_ccc: float | None = None
    total_train_seconds: float | None = None
    parallel_train_seconds: float | None = None

    def __post_init__(self):
        if not self.folds:
            raise ValueError("a run report needs at least one fold")
        derived = {
            "mean_valence_ccc": float(np.mean([f.metrics.valence_ccc for f in self.folds])),
            "mean_arousal_ccc": float(np.mean([f.metrics.arousal_ccc for f in self.folds])),
            "total_train_seconds": float(sum(f.train_seconds for f in self.folds)),
            "parallel_train_seconds": float(sum(f.parallel_seconds for f in self.folds)),
        }
        for key, value in derived.items():
            given = getattr(self, key)
            if given is None:
                setattr(self, key, value)
            elif given != value:
                raise ValueError(f"{key}={given} disagrees with per-fold values ({value})")

    @property
    def method(self) -> str:
        return "Federated Learning" if self.config.get("mode") == "federated" else "Action Units"

    @property
    def network(self) -> str:
        cell = self.config.get("cell", "GRU")
        bi = self.config.get("bidirectional", True)
        return ("Bi" if bi else "") + ("RNN" if cell == "SimpleRNN" else cell)

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.config)

    # -- serialization -------------------------------------------------------

    def to_json_lines(self) -> str:
        lines = [json.dumps({"type": "fold", **f.as_dict()}, sort_keys=True) for f in self.folds]
        summary = {
            "type": "run", "config": self.config, "fingerprint": self.fingerprint,
            "inference_seconds": self.inference_seconds,
            "mean_valence_ccc": self.mean_valence_ccc, "mean_arousal_ccc": self.mean_arousal_ccc,
            "total_train_seconds": self.total_train_seconds,
            "parallel_train_seconds": self.parallel_train_seconds,
        }
        lines.append(json.dumps(summary, sort_keys=True))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_json_lines(cls, text: str) -> "RunReport":
        folds, summary = [], None
        for line in text.splitlines():
            if not line.strip():
                continue
            obj = json.loads(line)
            kind = obj.pop("type")
            if kind == "fold":
                folds.append(FoldResult.from_dict(obj))
            elif kind == "run":
                summary = obj
            else:
                raise ValueError(f"unknown record type {kind!r}")
        if summary is None:
            raise ValueError("missing run summary record")
        return cls(folds=folds, **summary)

    CSV_FIELDS = ("fold", "method", "network", "eval_participants", "valence_ccc",
                  "arousal_ccc", "valence_pearson", "arousal_pearson", "n_frames",
                  "eval_loss", "train_seconds", "parallel_seconds", "n_clients")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_FIELDS)
        for f in self.folds:
            m = f.metrics
            writer.writerow([f.fold, self.method, self.network, " ".join(f.eval_participants),
                             repr(m.valence_ccc), repr(m.arousal_ccc), repr(m.valence_pearson),
                             repr(m.arousal_pearson), m.n_frames, repr(f.eval_loss),
                             repr(f.train_seconds), repr(f.parallel_seconds), f.n_clients])
        writer.writerow(["mean", self.method, self.network, "", repr(self.mean_valence_ccc),
                         repr(self.mean_arousal_ccc), "", "", "", "",
                         repr(self.total_train_seconds), repr(self.parallel_train_seconds), ""])
        return buf.getvalue()

    def to_text(self) -> str:
        t100 = self.inference_seconds.get("100")
        t500 = self.inference_seconds.get("500")
        infer = "-" if t100 is None else f"{t100:.4f}/{t500:.4f}"
        header = ("Method", "Network", "Valence CCC", "Arousal CCC",
                  "Train time (s)", "Inference 100/500 frames (s)")
        rows = [(f"{self.method} fold {f.fold}", self.network, f"{f.metrics.valence_ccc:.3f}",
                 f"{f.metrics.arousal_ccc:.3f}", f"{f.parallel_seconds:.1f}", "")
                for f in self.folds]
        rows.append((self.method, self.network, f"{self.mean_valence_ccc:.3f}",
                     f"{self.mean_arousal_ccc:.3f}", f"{self.parallel_train_seconds:.1f}", infer))
        widths = [max(len(str(r[i])) for r in [header, *rows]) for i in range(len(header))]
        fmt = " | ".join(f"{{:<{w}}}" for w in widths)
        sep = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt.format(*header), sep, *(fmt.format(*r) for r in rows)]) + "\n"


def report(run: RunReport, fmt: str = "text-table") -> bytes:
    if fmt == "text-table":
        return run.to_text().encode()
    if fmt == "csv":
        return run.to_csv().encode()
    if fmt == "json-lines":
        return run.to_json_lines().encode()
    raise ValueError(f"unknown report format {fmt!r}")


def fingerprint() -> dict:
    try:
        commit = subprocess.run(["git", "rev-parse", "HEAD"], capture_output=True, text=True,
                                cwd=Path(__file__).parent, timeout=5).stdout.strip() or None
    except (OSError, subprocess.SubprocessError):
        commit = None
    return {"fedseq": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "git": commit}


def load_sequences(cfg: ExperimentConfig) -> list[FeatureSequence]:
    if cfg.data_dir:
        return load_dataset(cfg.data_dir)
    if cfg.synthetic_participants and cfg.synthetic_frames:
        return generate_synthetic(cfg.synthetic_participants, cfg.synthetic_frames,
                                  cfg.synthetic_seed, cfg.input_size)
    raise ConfigError("set data_dir or synthetic_participants/synthetic_frames")


def make_estimator(cfg: ExperimentConfig, random_state: int):
    common = dict(cell=cfg.cell, bidirectional=cfg.bidirectional, hidden_size=cfg.hidden_size,
                  num_layers=cfg.num_layers, fc_hidden=cfg.fc_hidden,
                  sequence_length=cfg.sequence_length, stride=cfg.effective_stride,
                  learning_rate=cfg.learning_rate, epochs=cfg.epochs, clip_norm=cfg.clip_norm,
                  random_state=random_state)
    if cfg.mode == "central":
        return RecurrentRegressor(**common)
    return FederatedRecurrentRegressor(
        **common, epochs_per_round=cfg.epochs_per_round, aggregation=cfg.aggregation,
        optimizer_mode=cfg.client_optimizer, threaded=cfg.threaded,
        timeout=cfg.timeout or None)


def normalize_split(cfg, train: list[FeatureSequence], held: list[FeatureSequence]):
    """Normalise a train/eval split; statistics never see evaluation frames."""
    if cfg.normalization == "participant":
        return [normalize_own(s) for s in train], [normalize_own(s) for s in held], None
    stats = fit_normalizer(train)
    leaked = stats.participants & {s.participant_id for s in held}
    if leaked:
        raise LeakageError(f"normalizer fitted on evaluation participants {sorted(leaked)}")
    return ([apply_normalizer(stats, s) for s in train],
            [apply_normalizer(stats, s) for s in held], stats)


def _run_fold(cfg, index, train_ids, eval_ids, by_id, seed) -> tuple[FoldResult, object]:
    overlap = set(train_ids) & set(eval_ids)
    if overlap:
        raise LeakageError(f"fold {index}: participants {sorted(overlap)} in train and eval")
    train, held, _ = normalize_split(cfg, [by_id[p] for p in train_ids],
                                  [by_id[p] for p in eval_ids])
    est = make_estimator(cfg, seed)
    start = time.perf_counter()
    est.fit(train)
    seconds = time.perf_counter() - start
    preds = est.predict([s.frames for s in held])
    y_pred = np.concatenate(preds)
    y_true = np.concatenate([s.labels for s in held])
    metrics = evaluate_predictions(y_pred, y_true, cfg.ccc_mode, [s.n_frames for s in held])
    n_clients = len(train) if cfg.mode == "federated" else 1
    result = FoldResult(index, list(train_ids), list(eval_ids), metrics,
                        mse_loss(y_pred, y_true)[0], seconds, n_clients)
    return result, est


def run_cross_validation(cfg: ExperimentConfig, sequences=None, time_inference_frames=(100, 500)):
    """Train and score one model per held-out fold; returns ``(RunReport, last estimator)``."""
    sequences = load_sequences(cfg) if sequences is None else list(sequences)
    by_id = {s.participant_id: s for s in sequences}
    if len(by_id) != len(sequences):
        raise ValueError("duplicate participant ids")
    if len(by_id) < cfg.k_folds:
        raise ConfigError(f"{len(by_id)} participants cannot fill {cfg.k_folds} folds")
    widths = {s.n_features for s in sequences}
    if len(widths) != 1:
        raise ValueError("participants disagree on feature width")
    cfg = cfg.replace(input_size=widths.pop())
    plan = plan_folds(by_id, cfg.k_folds, make_rng(cfg.seed))
    seeds = spawn_seeds(cfg.seed, cfg.k_folds)
    jobs = [(i, tr, ev, seeds[i]) for i, (tr, ev) in enumerate(plan.splits())]

    def job(args):
        i, tr, ev, seed = args
        return _run_fold(cfg, i, tr, ev, by_id, seed)

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            outcomes = list(pool.map(job, jobs))
    else:
        outcomes = [job(j) for j in jobs]
    est = outcomes[-1][1]
    inference = {str(n): time_inference(est.params_, est.config_, n)
                 for n in time_inference_frames}
    run = RunReport(folds=[r for r, _ in outcomes], config=cfg.as_dict(),
                    inference_seconds=inference, fingerprint=fingerprint())
    return run, est


def time_inference(params: ParameterSet, config: NetworkConfig, n_frames: int,
                   repeats: int = 5, seed: int = 0) -> float:
    """Median wall time of a forward pass over ``n_frames`` frames."""
    x = make_rng(seed).normal(size=(n_frames, config.input_size))
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        predict_sequence(params, config, x)
        times.append(time.perf_counter() - start)
    return statistics.median(times)


# -- checkpoints ---------------------------------------------------------------

CKPT_MAGIC = b"FSCK"


def save_checkpoint(path, params: ParameterSet, cfg: ExperimentConfig,
                    stats: NormalizationStats | None = None) -> Path:
    """Config header, then the wire-format weights, then optional normaliser."""
    header = cfg.to_text().encode()
    body = encode_params(params)
    norm = b"" if stats is None else encode_params(
        ParameterSet([("norm.mean", stats.mean), ("norm.std", stats.std)]))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join([CKPT_MAGIC, struct.pack("<I", len(header)), header,
                               struct.pack("<Q", len(body)), body,
                               struct.pack("<Q", len(norm)), norm]))
    return path


def load_checkpoint(path):
    """Return ``(params, cfg, stats_or_None)``."""
    buf = Path(path).read_bytes()
    if buf[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a fedseq checkpoint")
    pos = 4
    (hlen,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    cfg = ExperimentConfig.from_dict(parse_config_text(buf[pos:pos + hlen].decode()))
    pos += hlen
    (blen,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    params = decode_params(buf[pos:pos + blen])
    pos += blen
    (nlen,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    stats = None
    if nlen:
        norm = decode_params(buf[pos:pos + nlen])
        stats = NormalizationStats(norm["norm.mean"], norm["norm.std"])
    return params, cfg, stats


def fit_final_model(cfg: ExperimentConfig, sequences):
    """Train on every participant (no held-out fold); returns ``(estimator, stats)``."""
    sequences = list(sequences)
    cfg = cfg.replace(input_size=sequences[0].n_features)
    train, _, stats = normalize_split(cfg, sequences, [])
    est = make_estimator(cfg, spawn_seeds(cfg.seed, 1)[0])
    est.fit(train)
    return est, stats, cfg


def evaluate_checkpoint(path, sequences, ccc_mode: str = "pooled") -> MetricReport:
    params, cfg, stats = load_checkpoint(path)
    net = cfg.network()
    prepared = [normalize_own(s) if stats is None else apply_normalizer(stats, s)
                for s in sequences]
    y_pred = np.concatenate([predict_sequence(params, net, s.frames) for s in prepared])
    y_true = np.concatenate([s.labels for s in prepared])
    return evaluate_predictions(y_pred, y_true, ccc_mode, [s.n_frames for s in prepared])
