"""The iid and streaming evaluation protocols over a stream, a strategy, and a sampler."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .corpus import Sample, TemporalStream, as_arrays, split_iid
from .learner import Architecture, Hyperparams, LearnerState, Strategy, predict_batch, strategy_step
from .sampler import AlphaPolicy, ReplayBuffer, buffer_snapshot, update_buffer

# A run seed r fans out to component seeds at fixed offsets so ablations can
# vary exactly one randomness source.
SPLIT_SEED_OFFSET = 0
SAMPLER_SEED_OFFSET = 1000
LEARNER_SEED_OFFSET = 2000


class ProtocolKind(Enum):
    IID = "iid"
    STREAMING = "streaming"


class ProtocolOrderError(RuntimeError):
    """A bucket was trained on before all evaluations targeting it completed."""


@dataclass(frozen=True)
class Event:
    """One train or evaluate action, recorded in execution order."""

    kind: str
    step: int
    bucket: int


@dataclass(frozen=True)
class AccuracyMatrix:
    """N x N accuracy grid; absent cells are NaN.

    IID matrices have every cell present; streaming matrices have only the
    strict upper triangle (train at i, test on the future j > i).
    """

    cells: np.ndarray
    protocol: ProtocolKind

    def __post_init__(self) -> None:
        cells = self.cells
        if cells.ndim != 2 or cells.shape[0] != cells.shape[1] or cells.shape[0] < 2:
            raise ValueError(f"cells must be square with N >= 2, got shape {cells.shape}")
        present = ~np.isnan(cells)
        values = cells[present]
        if values.size and (values.min() < 0.0 or values.max() > 1.0):
            raise ValueError("accuracy cells must lie in [0, 1]")
        n = cells.shape[0]
        expected = (
            np.ones((n, n), dtype=bool)
            if self.protocol is ProtocolKind.IID
            else np.triu(np.ones((n, n), dtype=bool), k=1)
        )
        if not np.array_equal(present, expected):
            raise ValueError(f"cell presence does not match {self.protocol.value} protocol")

    @property
    def n(self) -> int:
        return self.cells.shape[0]


def matrix_to_text(matrix: AccuracyMatrix) -> str:
    """Plain-text grid: header line, then N comma-separated rows with NA for absent cells."""
    lines = [f"N={matrix.n} protocol={matrix.protocol.value}"]
    for row in matrix.cells:
        lines.append(",".join("NA" if np.isnan(v) else f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"


def matrix_from_text(text: str) -> AccuracyMatrix:
    """Parse the grid format written by :func:`matrix_to_text`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty matrix text")
    header = dict(part.split("=", 1) for part in lines[0].split())
    try:
        n = int(header["N"])
        protocol = ProtocolKind(header["protocol"])
    except (KeyError, ValueError) as exc:
        raise ValueError(f"bad matrix header: {lines[0]!r}") from exc
    if len(lines) - 1 != n:
        raise ValueError(f"expected {n} rows, got {len(lines) - 1}")
    cells = np.full((n, n), np.nan)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != n:
            raise ValueError(f"row {i}: expected {n} cells, got {len(parts)}")
        for j, part in enumerate(parts):
            if part != "NA":
                cells[i, j] = float(part)
    return AccuracyMatrix(cells=cells, protocol=protocol)


@dataclass(frozen=True)
class RunConfig:
    """Everything one protocol run needs besides the stream and the seed."""

    strategy: Strategy
    architecture: Architecture
    hyperparams: Hyperparams
    alpha_policy: AlphaPolicy
    buffer_capacity: int
    train_fraction: float | None = None
    n_seeds: int = 5
    base_seed: int = 0

    def __post_init__(self) -> None:
        if self.buffer_capacity < 1:
            raise ValueError("buffer_capacity must be >= 1")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")


def evaluate(state: LearnerState, test: Sequence[Sample]) -> float:
    """Fraction of test samples whose predicted class equals the label."""
    if len(test) == 0:
        raise ValueError("cannot evaluate on an empty test set")
    x, y = as_arrays(test)
    return _accuracy(state, x, y)


def _accuracy(state: LearnerState, x: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(predict_batch(state, x) == y))


def _learner_hp(cfg: RunConfig, seed: int, step: int) -> Hyperparams:
    return replace(cfg.hyperparams, seed=seed + LEARNER_SEED_OFFSET + step)


def run_iid_protocol(
    stream: TemporalStream,
    cfg: RunConfig,
    seed: int,
    event_log: list[Event] | None = None,
) -> AccuracyMatrix:
    """Per-bucket 70/30-style splits; every predictor is evaluated on all held-out test sets.

    Test sets are fixed once per seed and never trained on.  Training data for
    each step is the replay-buffer snapshot after ingesting the bucket's train
    split (Napping trains once, on the first bucket's train split).
    """
    n = stream.n_buckets
    if n < 2:
        raise ValueError("iid protocol needs at least 2 buckets")
    if cfg.train_fraction is None:
        raise ValueError("iid protocol requires train_fraction")
    events = event_log if event_log is not None else []
    splits = [
        split_iid(b, cfg.train_fraction, seed + SPLIT_SEED_OFFSET + b.index)
        for b in stream.buckets
    ]
    test_xy = [as_arrays(test) for _, test in splits]
    buffer = ReplayBuffer.empty(cfg.buffer_capacity)
    sampler_rng = np.random.default_rng(seed + SAMPLER_SEED_OFFSET)
    cells = np.full((n, n), np.nan)
    prev: LearnerState | None = None
    for i in range(n):
        train_split, _ = splits[i]
        buffer = update_buffer(buffer, train_split, cfg.alpha_policy, sampler_rng)
        events.append(Event(kind="train", step=i, bucket=i))
        if cfg.strategy is Strategy.NAPPING:
            train_data: Sequence[Sample] = splits[0][0]
        else:
            train_data = buffer_snapshot(buffer)
        state = strategy_step(
            cfg.strategy, prev, i, train_data, _learner_hp(cfg, seed, i), cfg.architecture
        )
        for j in range(n):
            cells[i, j] = _accuracy(state, *test_xy[j])
            events.append(Event(kind="evaluate", step=i, bucket=j))
        prev = state
    return AccuracyMatrix(cells=cells, protocol=ProtocolKind.IID)


def run_streaming_protocol(
    stream: TemporalStream,
    cfg: RunConfig,
    seed: int,
    event_log: list[Event] | None = None,
) -> AccuracyMatrix:
    """Train on each full bucket in order, then evaluate on strictly future buckets.

    No held-out splits: bucket j is evaluated by every earlier predictor before
    it is ever ingested for training; the ordering is checked against the event
    log at each step, not merely followed by convention.
    """
    n = stream.n_buckets
    if n < 2:
        raise ValueError("streaming protocol needs at least 2 buckets")
    events = event_log if event_log is not None else []
    bucket_xy = [as_arrays(b.samples) for b in stream.buckets]
    buffer = ReplayBuffer.empty(cfg.buffer_capacity)
    sampler_rng = np.random.default_rng(seed + SAMPLER_SEED_OFFSET)
    cells = np.full((n, n), np.nan)
    prev: LearnerState | None = None
    for i in range(n):
        evaluated = sum(1 for e in events if e.kind == "evaluate" and e.bucket == i)
        if evaluated != i:
            raise ProtocolOrderError(
                f"bucket {i} has {evaluated} of {i} required evaluations before training"
            )
        buffer = update_buffer(buffer, stream.buckets[i], cfg.alpha_policy, sampler_rng)
        events.append(Event(kind="train", step=i, bucket=i))
        if cfg.strategy is Strategy.NAPPING:
            train_data: Sequence[Sample] = stream.buckets[0].samples
        else:
            train_data = buffer_snapshot(buffer)
        state = strategy_step(
            cfg.strategy, prev, i, train_data, _learner_hp(cfg, seed, i), cfg.architecture
        )
        for j in range(i + 1, n):
            cells[i, j] = _accuracy(state, *bucket_xy[j])
            events.append(Event(kind="evaluate", step=i, bucket=j))
        prev = state
    return AccuracyMatrix(cells=cells, protocol=ProtocolKind.STREAMING)


def audit_streaming_order(events: Sequence[Event]) -> None:
    """Verify no evaluation targets a bucket after that bucket was trained on.

    Raises :class:`ProtocolOrderError` on the first violation.
    """
    trained: set[int] = set()
    for pos, e in enumerate(events):
        if e.kind == "train":
            trained.add(e.bucket)
        elif e.kind == "evaluate" and e.bucket in trained:
            raise ProtocolOrderError(
                f"event {pos}: evaluation on bucket {e.bucket} after it was trained on"
            )


def event_log_text(protocol: ProtocolKind, events: Sequence[Event]) -> str:
    """Serialize an event log: a protocol header, then one tab-separated event per line."""
    lines = [f"protocol={protocol.value}"]
    lines.extend(f"{e.kind}\t{e.step}\t{e.bucket}" for e in events)
    return "\n".join(lines) + "\n"


def parse_event_log(text: str) -> tuple[ProtocolKind, list[Event]]:
    """Parse the format written by :func:`event_log_text`."""
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("protocol="):
        raise ValueError("event log must start with a protocol= header")
    protocol = ProtocolKind(lines[0].split("=", 1)[1])
    events = []
    for ln in lines[1:]:
        kind, step, bucket = ln.split("\t")
        events.append(Event(kind=kind, step=int(step), bucket=int(bucket)))
    return protocol, events
