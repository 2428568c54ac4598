"""Per-participant feature/label sequences: I/O, normalisation, windowing, folds.

On-disk layout (one directory per dataset)::

    features/<pid>.csv                      time_ms,au_1,...,au_F
    labels/<pid>/<dimension>_<k>.csv        time_ms,value     (k = 1..6)

``dimension`` is ``valence`` or ``arousal``; the six annotator traces are
averaged frame by frame into the ground truth.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .tensor import make_rng, spawn_seeds

DIMENSIONS = ("valence", "arousal")
N_ANNOTATORS = 6
FRAME_PERIOD_MS = 40.0
LABEL_STEP = 0.01


class DataFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureSequence:
    participant_id: str
    frames: np.ndarray       # [N, F]
    labels: np.ndarray       # [N, 2] valence, arousal
    frame_period_ms: float = FRAME_PERIOD_MS

    def __post_init__(self):
        frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if frames.ndim != 2 or labels.ndim != 2 or labels.shape[1] != 2:
            raise ValueError("frames must be [N, F] and labels [N, 2]")
        if len(frames) != len(labels):
            raise ValueError(f"{self.participant_id}: {len(frames)} feature rows "
                             f"but {len(labels)} label rows")
        if not (np.isfinite(frames).all() and np.isfinite(labels).all()):
            raise ValueError(f"{self.participant_id}: non-finite values")
        if np.abs(labels).max(initial=0.0) > 1.0:
            raise ValueError(f"{self.participant_id}: labels outside [-1, 1]")
        if not self.frame_period_ms > 0:
            raise ValueError("frame_period_ms must be positive")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "labels", labels)

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def n_features(self) -> int:
        return self.frames.shape[1]

    @property
    def times_ms(self) -> np.ndarray:
        return np.arange(self.n_frames) * self.frame_period_ms


# -- CSV I/O -----------------------------------------------------------------

def _read_csv(path: Path, expected_header=None) -> tuple[list[str], np.ndarray]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFormatError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if expected_header is not None and header != expected_header:
        raise DataFormatError(f"{path}: header {header} != {expected_header}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != len(header):
        raise DataFormatError(f"{path}: ragged rows")
    if not np.isfinite(data).all():
        raise DataFormatError(f"{path}: non-finite values")
    return header, data


def feature_header(n_features: int) -> list[str]:
    return ["time_ms"] + [f"au_{i}" for i in range(1, n_features + 1)]


def load_participant(features_path, labels_dir) -> FeatureSequence:
    """Read one participant's features and fuse the six annotator traces."""
    features_path = Path(features_path)
    labels_dir = Path(labels_dir)
    header, feat = _read_csv(features_path)
    if header != feature_header(len(header) - 1) or len(header) < 2:
        raise DataFormatError(f"{features_path}: expected header time_ms,au_1,...,au_F")
    times = feat[:, 0]
    fused = []
    for dim in DIMENSIONS:
        traces = []
        for k in range(1, N_ANNOTATORS + 1):
            path = labels_dir / f"{dim}_{k}.csv"
            _, lab = _read_csv(path, ["time_ms", "value"])
            if len(lab) != len(feat):
                raise DataFormatError(f"{path}: {len(lab)} frames, features have {len(feat)}")
            if not np.array_equal(lab[:, 0], times):
                raise DataFormatError(f"{path}: timestamps not aligned with features")
            traces.append(lab[:, 1])
        # running mean: identical annotators reproduce their trace exactly
        mean = traces[0].copy()
        for k, trace in enumerate(traces[1:], start=2):
            mean += (trace - mean) / k
        fused.append(mean)
    labels = np.stack(fused, axis=1)
    if np.abs(labels).max() > 1.0:
        raise DataFormatError(f"{labels_dir}: fused label outside [-1, 1]")
    period = float(times[1] - times[0]) if len(times) > 1 else FRAME_PERIOD_MS
    if not period > 0:
        raise DataFormatError(f"{features_path}: timestamps not increasing")
    return FeatureSequence(features_path.stem, feat[:, 1:], labels, period)


def load_dataset(root) -> list[FeatureSequence]:
    root = Path(root)
    paths = sorted((root / "features").glob("*.csv"))
    if not paths:
        raise DataFormatError(f"no feature files under {root / 'features'}")
    return [load_participant(p, root / "labels" / p.stem) for p in paths]


def annotator_traces(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Six grid-aligned traces per dimension whose frame-wise mean is ``labels``.

    Returns ``[6, N, 2]``. Offsets come in +/- pairs so they cancel; frames
    where an offset would leave [-1, 1] get no offset.
    """
    offsets = np.array([1, -1, 2, -2, 3, -3], dtype=np.float64)
    spread = rng.integers(0, 2, size=labels.shape).astype(np.float64)
    cents = np.round(labels / LABEL_STEP)
    traces = cents[None] + offsets[:, None, None] * spread[None]
    inside = (np.abs(traces) <= 100).all(axis=0)
    traces = np.where(inside[None], traces, cents[None])
    return traces / 100.0


def write_dataset(sequences, root, seed: int = 0) -> Path:
    root = Path(root)
    (root / "features").mkdir(parents=True, exist_ok=True)
    rng = make_rng(seed)
    for seq in sequences:
        times = seq.times_ms
        np.savetxt(root / "features" / f"{seq.participant_id}.csv",
                   np.column_stack([times, seq.frames]), delimiter=",", fmt="%.17g",
                   header=",".join(feature_header(seq.n_features)), comments="")
        label_dir = root / "labels" / seq.participant_id
        label_dir.mkdir(parents=True, exist_ok=True)
        traces = annotator_traces(seq.labels, rng)
        for d, dim in enumerate(DIMENSIONS):
            for k in range(N_ANNOTATORS):
                np.savetxt(label_dir / f"{dim}_{k + 1}.csv",
                           np.column_stack([times, traces[k, :, d]]), delimiter=",",
                           fmt=["%.17g", "%.2f"], header="time_ms,value", comments="")
    return root


# -- normalisation -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    participants: frozenset = field(default_factory=frozenset)   # provenance


def fit_normalizer(train) -> NormalizationStats:
    """Per-feature mean/std over every frame of the training sequences."""
    train = list(train)
    if not train:
        raise ValueError("cannot fit a normalizer on an empty training set")
    stacked = np.concatenate([s.frames for s in train], axis=0)
    mean = stacked.mean(axis=0)
    std = stacked.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    return NormalizationStats(mean, std, frozenset(s.participant_id for s in train))


def apply_normalizer(stats: NormalizationStats, seq: FeatureSequence) -> FeatureSequence:
    if stats.mean.shape != (seq.n_features,):
        raise ValueError("normalizer width does not match sequence")
    return FeatureSequence(seq.participant_id, (seq.frames - stats.mean) / stats.std,
                           seq.labels, seq.frame_period_ms)


def normalize_own(seq: FeatureSequence) -> FeatureSequence:
    """Z-score a sequence with its own statistics (no cross-participant data)."""
    return apply_normalizer(fit_normalizer([seq]), seq)


# -- windowing and folds -----------------------------------------------------

def window(seq: FeatureSequence, length: int, stride: int | None = None):
    """Windows at offsets 0, stride, 2*stride, ...; a short remainder is dropped."""
    stride = length if stride is None else stride
    if length < 1 or stride < 1:
        raise ValueError("length and stride must be >= 1")
    n = seq.n_frames
    return [(seq.frames[s:s + length], seq.labels[s:s + length])
            for s in range(0, n - length + 1, stride)]


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[str, ...], ...]

    def __post_init__(self):
        seen = set()
        for fold in self.folds:
            if not fold:
                raise ValueError("empty fold")
            if seen & set(fold):
                raise ValueError("folds overlap")
            seen |= set(fold)

    @property
    def participants(self) -> list[str]:
        return sorted(p for f in self.folds for p in f)

    def splits(self):
        """Yield ``(train_ids, eval_ids)`` for each held-out fold."""
        everyone = self.participants
        for fold in self.folds:
            held = set(fold)
            yield [p for p in everyone if p not in held], sorted(fold)


def plan_folds(participants, k: int, rng: np.random.Generator) -> FoldPlan:
    """Seeded shuffle of the (sorted) participants, then round-robin into k folds."""
    ids = sorted(participants)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate participant ids")
    if not 1 <= k <= len(ids):
        raise ValueError(f"cannot make {k} folds from {len(ids)} participants")
    order = [ids[i] for i in rng.permutation(len(ids))]
    return FoldPlan(tuple(tuple(order[i::k]) for i in range(k)))


# -- synthetic data ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SyntheticTask:
    """The shared generating process behind :func:`generate_synthetic`.

    Labels are ``tanh(gain * sum_j kernel[j] * readout @ (f[t-j] - center))``
    plus noise, quantised to 0.01; frames before the start repeat frame 0.
    """
    mixing: np.ndarray     # [F, K]
    offset: np.ndarray     # [F]
    readout: np.ndarray    # [2, F]
    kernel: np.ndarray     # [L]
    center: np.ndarray     # [F]
    gain: np.ndarray       # [2]
    ar_coef: float = 0.97
    feature_noise: float = 0.05
    label_noise: float = 0.02

    def drive(self, frames: np.ndarray) -> np.ndarray:
        proj = (frames - self.center) @ self.readout.T
        L = len(self.kernel)
        padded = np.concatenate([np.repeat(proj[:1], L - 1, axis=0), proj], axis=0)
        return sum(self.kernel[j] * padded[L - 1 - j:len(padded) - j] for j in range(L))

    def clean_labels(self, frames: np.ndarray) -> np.ndarray:
        return np.tanh(self.gain * self.drive(frames))

    def sample_frames(self, n_frames: int, rng: np.random.Generator, shift=None) -> np.ndarray:
        K = self.mixing.shape[1]
        innov = rng.normal(size=(n_frames, K)) * np.sqrt(1.0 - self.ar_coef ** 2)
        z = np.empty((n_frames, K))
        z[0] = rng.normal(size=K)
        for t in range(1, n_frames):
            z[t] = self.ar_coef * z[t - 1] + innov[t]
        offset = self.offset if shift is None else self.offset + shift
        pre = z @ self.mixing.T + offset
        au = np.logaddexp(0.0, pre)    # softplus keeps intensities non-negative
        au += self.feature_noise * rng.normal(size=au.shape)
        return np.maximum(au, 0.0)


def synthetic_task(seed: int, n_features: int = 40, n_latent: int = 6,
                   history: int = 10) -> SyntheticTask:
    rng = make_rng(seed)
    mixing = rng.normal(size=(n_features, n_latent)) / np.sqrt(n_latent)
    offset = rng.uniform(-1.0, 0.5, size=n_features)
    readout = np.zeros((2, n_features))
    for d in range(2):
        idx = rng.choice(n_features, size=min(8, n_features), replace=False)
        readout[d, idx] = rng.normal(size=len(idx))
    kernel = 0.7 ** np.arange(history)
    kernel /= kernel.sum()
    task = SyntheticTask(mixing, offset, readout, kernel, np.zeros(n_features), np.ones(2))
    pilot = task.sample_frames(5000, rng)
    center = pilot.mean(axis=0)
    raw = SyntheticTask(mixing, offset, readout, kernel, center, np.ones(2))
    s = raw.drive(pilot)
    gain = 0.8 / s.std(axis=0)
    return SyntheticTask(mixing, offset, readout, kernel, center, gain)


def generate_synthetic(n_participants: int, n_frames: int, seed: int,
                       n_features: int = 40) -> list[FeatureSequence]:
    """AU-like sequences with learnable valence/arousal, reproducible from ``seed``."""
    if n_participants < 1 or n_frames < 1 or n_features < 1:
        raise ValueError("sizes must be positive")
    task = synthetic_task(seed, n_features)
    out = []
    for i, pseed in enumerate(spawn_seeds(seed, n_participants)):
        rng = make_rng(pseed)
        shift = 0.1 * rng.normal(size=n_features)
        frames = task.sample_frames(n_frames, rng, shift)
        y = task.clean_labels(frames) + task.label_noise * rng.normal(size=(n_frames, 2))
        y = np.clip(np.round(y / LABEL_STEP), -100, 100) / 100.0
        out.append(FeatureSequence(f"P{i + 1:02d}", frames, y))
    return out
