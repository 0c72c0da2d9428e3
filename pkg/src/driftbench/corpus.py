"""Timestamped labeled sample streams: bucketization, splits, synthetic drift, file ingestion."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class FeatureFileError(ValueError):
    """Raised when a feature file is malformed; the message names the offending line."""


@dataclass(frozen=True, eq=False)
class Sample:
    """One labeled, timestamped feature point.

    ``id`` is unique within a stream, ``timestamp`` is an arbitrary-unit monotone
    sort key, ``features`` is a finite real vector, ``label`` a dense class index.
    """

    id: int
    timestamp: int
    features: np.ndarray
    label: int


@dataclass(frozen=True)
class Bucket:
    """One time-period partition of the stream; the unit of training and evaluation."""

    index: int
    samples: tuple[Sample, ...]

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class TemporalStream:
    """Time-ordered buckets of equal size, plus the sample count dropped to equalize them."""

    buckets: tuple[Bucket, ...]
    d: int
    C: int
    dropped: int = 0

    @property
    def n_buckets(self) -> int:
        return len(self.buckets)


@dataclass(frozen=True)
class DriftConfig:
    """Synthetic stream parameters: class means rotate on a circle by ``drift_rate`` radians per bucket."""

    C: int
    d: int
    N: int
    n_per_class: int
    radius: float
    drift_rate: float
    noise: float
    seed: int

    def __post_init__(self) -> None:
        if self.C < 1 or self.N < 1 or self.n_per_class < 1:
            raise ValueError("C, N and n_per_class must all be >= 1")
        if self.d < 2:
            raise ValueError("d must be >= 2")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ValueError("radius must be finite and > 0")
        if not (math.isfinite(self.noise) and self.noise > 0):
            raise ValueError("noise must be finite and > 0")
        if not (math.isfinite(self.drift_rate) and self.drift_rate >= 0):
            raise ValueError("drift_rate must be finite and >= 0")


def bucket_shape(n_samples: int, n_buckets: int) -> tuple[int, int]:
    """Return (bucket_size, dropped) for partitioning ``n_samples`` into equal buckets."""
    if n_buckets < 1:
        raise ValueError("n_buckets must be >= 1")
    if n_samples < n_buckets:
        raise ValueError(f"need at least {n_buckets} samples, got {n_samples}")
    size = n_samples // n_buckets
    return size, n_samples - size * n_buckets


def bucketize(
    samples: Sequence[Sample], n_buckets: int, class_count: int | None = None
) -> TemporalStream:
    """Sort samples by (timestamp, id) and partition them into equal contiguous buckets.

    The trailing ``len(samples) mod n_buckets`` samples are dropped so every bucket
    has identical size; the stream records how many were dropped.  Ties in timestamp
    keep ascending-id order, so the partition is deterministic.
    """
    size, dropped = bucket_shape(len(samples), n_buckets)
    ids = [s.id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique within a stream")
    d = int(samples[0].features.shape[0])
    for s in samples:
        if s.features.shape != (d,):
            raise ValueError(f"sample {s.id}: expected dimension {d}, got {s.features.shape}")
    inferred_c = max(s.label for s in samples) + 1
    c = inferred_c if class_count is None else class_count
    if inferred_c > c:
        raise ValueError(f"label {inferred_c - 1} out of range for class_count={c}")
    ordered = sorted(samples, key=lambda s: (s.timestamp, s.id))
    buckets = tuple(
        Bucket(index=i, samples=tuple(ordered[i * size : (i + 1) * size]))
        for i in range(n_buckets)
    )
    return TemporalStream(buckets=buckets, d=d, C=c, dropped=dropped)


def split_iid(
    bucket: Bucket, train_fraction: float, seed: int
) -> tuple[list[Sample], list[Sample]]:
    """Seeded uniform 2-way partition of a bucket into (train, test).

    The first ``ceil(train_fraction * len(bucket))`` samples of a seeded
    permutation become the train set; identical seeds give identical splits.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(bucket) == 0:
        raise ValueError("cannot split an empty bucket")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(bucket))
    n_train = math.ceil(train_fraction * len(bucket))
    train = [bucket.samples[i] for i in perm[:n_train]]
    test = [bucket.samples[i] for i in perm[n_train:]]
    return train, test


def class_means(cfg: DriftConfig, bucket_index: int) -> np.ndarray:
    """Class means for one bucket: radius * (cos, sin) of the rotated class angle, zero-padded to d."""
    means = np.zeros((cfg.C, cfg.d))
    angles = 2.0 * np.pi * np.arange(cfg.C) / cfg.C + bucket_index * cfg.drift_rate
    means[:, 0] = cfg.radius * np.cos(angles)
    means[:, 1] = cfg.radius * np.sin(angles)
    return means


def generate_drift_stream(cfg: DriftConfig) -> TemporalStream:
    """Generate a synthetic drifting stream of Gaussian class clusters.

    Bucket ``t`` draws ``n_per_class`` points per class around means rotated by
    ``t * drift_rate``.  Classes are interleaved by a seeded shuffle within each
    bucket so any contiguous slice is class-balanced on average, mimicking an
    iid upload stream.  Timestamps equal the bucket index and ids are sequential
    in arrival order, so :func:`bucketize` reproduces the same partition.
    Fully deterministic per seed.
    """
    rng = np.random.default_rng(cfg.seed)
    buckets = []
    next_id = 0
    for t in range(cfg.N):
        means = class_means(cfg, t)
        noise = rng.standard_normal((cfg.C, cfg.n_per_class, cfg.d)) * cfg.noise
        points = [
            (c, means[c] + noise[c, j])
            for c in range(cfg.C)
            for j in range(cfg.n_per_class)
        ]
        order = rng.permutation(len(points))
        samples = []
        for pos in order:
            label, features = points[pos]
            samples.append(Sample(id=next_id, timestamp=t, features=features, label=label))
            next_id += 1
        buckets.append(Bucket(index=t, samples=tuple(samples)))
    return TemporalStream(buckets=tuple(buckets), d=cfg.d, C=cfg.C, dropped=0)


def _parse_header(line: str, path: str) -> tuple[int, int]:
    parts = line.strip().lstrip("#").split()
    try:
        fields = dict(p.split("=", 1) for p in parts)
        d, c = int(fields["d"]), int(fields["C"])
    except (ValueError, KeyError) as exc:
        raise FeatureFileError(f"{path}:1: expected header '#d=<d> C=<C>', got {line!r}") from exc
    if d < 1 or c < 1:
        raise FeatureFileError(f"{path}:1: d and C must be >= 1")
    return d, c


def read_feature_header(path: str | Path) -> tuple[int, int]:
    """Read (d, C) from a feature file header without loading the records."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise FeatureFileError(f"{path}:1: missing '#d=<d> C=<C>' header")
    return _parse_header(first, str(path))


def load_feature_file(path: str | Path, normalize: bool = False) -> list[Sample]:
    """Load ``id<TAB>timestamp<TAB>label<TAB>f1,...,fd`` records into samples.

    With ``normalize`` set, each feature vector is scaled to unit L2 norm; zero
    vectors are rejected.  Malformed records raise :class:`FeatureFileError`
    naming the line.
    """
    path = str(path)
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise FeatureFileError(f"{path}:1: missing '#d=<d> C=<C>' header")
        d, c = _parse_header(header, path)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise FeatureFileError(f"{path}:{lineno}: expected 4 tab-separated fields")
            try:
                sid, ts, label = int(parts[0]), int(parts[1]), int(parts[2])
                feats = np.array([float(v) for v in parts[3].split(",")])
            except ValueError as exc:
                raise FeatureFileError(f"{path}:{lineno}: {exc}") from exc
            if feats.shape != (d,):
                raise FeatureFileError(
                    f"{path}:{lineno}: expected {d} features, got {feats.shape[0]}"
                )
            if not np.all(np.isfinite(feats)):
                raise FeatureFileError(f"{path}:{lineno}: non-finite feature value")
            if sid < 0:
                raise FeatureFileError(f"{path}:{lineno}: id must be non-negative")
            if not 0 <= label < c:
                raise FeatureFileError(f"{path}:{lineno}: label {label} outside [0, {c})")
            if normalize:
                norm = float(np.linalg.norm(feats))
                if norm == 0.0:
                    raise FeatureFileError(f"{path}:{lineno}: zero vector cannot be normalized")
                feats = feats / norm
            samples.append(Sample(id=sid, timestamp=ts, features=feats, label=label))
    return samples


def write_feature_file(path: str | Path, samples: Sequence[Sample], d: int, C: int) -> None:
    """Write samples in the feature-file format read by :func:`load_feature_file`."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"#d={d} C={C}\n")
        for s in samples:
            feats = ",".join(repr(float(v)) for v in s.features)
            fh.write(f"{s.id}\t{s.timestamp}\t{s.label}\t{feats}\n")


def stream_manifest(stream: TemporalStream) -> str:
    """One line per bucket: ``index<TAB>first_timestamp<TAB>last_timestamp<TAB>count``."""
    lines = []
    for b in stream.buckets:
        first = min(s.timestamp for s in b.samples)
        last = max(s.timestamp for s in b.samples)
        lines.append(f"{b.index}\t{first}\t{last}\t{len(b)}")
    return "\n".join(lines) + "\n"


def as_arrays(samples: Sequence[Sample]) -> tuple[np.ndarray, np.ndarray]:
    """Stack a sample sequence into (features, labels) arrays."""
    if len(samples) == 0:
        raise ValueError("empty sample sequence")
    x = np.stack([s.features for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y
