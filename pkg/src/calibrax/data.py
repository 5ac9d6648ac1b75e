"""Calibration datasets: (confidence, hit) pairs and their file formats.

Two on-disk formats are supported:

* pairs CSV with header ``confidence,hit``;
* logits JSON-lines, one ``{"logits": [...], "label": k}`` object per line.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

from calibrax.errors import DataError, InputFileError
from calibrax.rng import RandomStream

CLAMP_SLACK = 1e-12


class CalibrationSample(NamedTuple):
    confidence: float
    hit: int


@dataclass(frozen=True)
class LogitRecord:
    logits: tuple[float, ...]
    label: int

    def __post_init__(self):
        logits = tuple(float(z) for z in self.logits)
        object.__setattr__(self, "logits", logits)
        if len(logits) < 2:
            raise DataError(f"need at least 2 logits, got {len(logits)}")
        if not all(math.isfinite(z) for z in logits):
            raise DataError("non-finite logit")
        if not isinstance(self.label, (int, np.integer)) or not 0 <= self.label < len(logits):
            raise DataError(f"label {self.label!r} does not index {len(logits)} classes")
        object.__setattr__(self, "label", int(self.label))


def _clamp_confidences(conf: np.ndarray) -> np.ndarray:
    bad = (conf < -CLAMP_SLACK) | (conf > 1.0 + CLAMP_SLACK) | ~np.isfinite(conf)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise DataError(f"confidence {conf[i]!r} at index {i} outside [0, 1]")
    return np.clip(conf, 0.0, 1.0)


class Dataset:
    """Immutable ordered collection of calibration samples.

    Stored column-wise: ``confidences`` (float64) and ``hits`` (int8), both
    read-only views.  Iteration yields :class:`CalibrationSample` in
    insertion order.
    """

    __slots__ = ("confidences", "hits")

    def __init__(self, confidences, hits):
        conf = np.array(confidences, dtype=np.float64).reshape(-1)
        raw_hits = np.asarray(hits).reshape(-1)
        if conf.shape != raw_hits.shape:
            raise DataError(f"{conf.size} confidences but {raw_hits.size} hits")
        if raw_hits.size and not np.isin(raw_hits, (0, 1)).all():
            raise DataError("hits must be 0 or 1")
        conf = _clamp_confidences(conf)
        h = raw_hits.astype(np.int8)
        conf.flags.writeable = False
        h.flags.writeable = False
        object.__setattr__(self, "confidences", conf)
        object.__setattr__(self, "hits", h)

    def __setattr__(self, name, value):
        raise AttributeError("Dataset is immutable")

    @classmethod
    def from_samples(cls, samples: Iterable[tuple[float, int]]) -> "Dataset":
        samples = list(samples)
        if not samples:
            return cls([], [])
        conf, hits = zip(*samples)
        return cls(conf, hits)

    def __len__(self) -> int:
        return int(self.confidences.size)

    @property
    def n(self) -> int:
        return len(self)

    def __iter__(self) -> Iterator[CalibrationSample]:
        for s, h in zip(self.confidences.tolist(), self.hits.tolist()):
            yield CalibrationSample(s, h)

    def __getitem__(self, idx) -> "Dataset | CalibrationSample":
        if isinstance(idx, (int, np.integer)):
            return CalibrationSample(float(self.confidences[idx]), int(self.hits[idx]))
        return Dataset(self.confidences[idx], self.hits[idx])

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return np.array_equal(self.confidences, other.confidences) and np.array_equal(self.hits, other.hits)

    def __repr__(self) -> str:
        return f"Dataset(n={len(self)}, accuracy={self.accuracy() if len(self) else float('nan'):.4f})"

    def accuracy(self) -> float:
        return float(self.hits.mean())

    def with_confidences(self, confidences) -> "Dataset":
        return Dataset(confidences, self.hits)

    def require(self, minimum: int = 1) -> None:
        if len(self) == 0:
            raise DataError("empty dataset")
        if len(self) < minimum:
            raise DataError(f"need at least {minimum} samples, got {len(self)}")

    def to_csv(self) -> str:
        """Pairs CSV text; confidences carry 17 significant digits so reloading is exact."""
        lines = ["confidence,hit"]
        lines.extend(f"{s:.17g},{h}" for s, h in zip(self.confidences.tolist(), self.hits.tolist()))
        return "\n".join(lines) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a sibling temporary file and rename into place."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def save_pairs(dataset: Dataset, path: str | os.PathLike) -> None:
    atomic_write_text(path, dataset.to_csv())


def parse_pairs(text: str, source: str = "<string>") -> Dataset:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [c.strip() for c in header] != ["confidence", "hit"]:
        raise DataError(f"{source}: line 1: expected header 'confidence,hit'")
    conf: list[float] = []
    hits: list[int] = []
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise DataError(f"{source}: line {line}: expected 2 fields, got {len(row)}")
        try:
            s = float(row[0])
            h = int(row[1])
        except ValueError:
            raise DataError(f"{source}: line {line}: cannot parse {','.join(row)!r}") from None
        if not (-CLAMP_SLACK <= s <= 1.0 + CLAMP_SLACK):
            raise DataError(f"{source}: line {line}: confidence {s!r} outside [0, 1]")
        if h not in (0, 1):
            raise DataError(f"{source}: line {line}: hit {h!r} not in {{0, 1}}")
        conf.append(min(max(s, 0.0), 1.0))
        hits.append(h)
    if not conf:
        raise DataError(f"{source}: empty dataset")
    return Dataset(conf, hits)


def _read_text(path: str | os.PathLike) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise InputFileError(f"no such file: {path}") from None
    except OSError as exc:
        raise InputFileError(f"cannot read {path}: {exc.strerror}") from None


def load_pairs(path: str | os.PathLike) -> Dataset:
    return parse_pairs(_read_text(path), str(path))


def load_logits(path: str | os.PathLike) -> list[LogitRecord]:
    records = []
    for lineno, line in enumerate(_read_text(path).splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(LogitRecord(tuple(obj["logits"]), obj["label"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: line {lineno}: bad logit record ({exc})") from None
        except DataError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    return records


def dump_logits(records: Sequence[LogitRecord]) -> str:
    return "".join(json.dumps({"logits": list(r.logits), "label": r.label}) + "\n" for r in records)


def softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def ingest_logits(records: Sequence[LogitRecord]) -> Dataset:
    """Reduce logit records to (max softmax probability, top-1 hit) pairs.

    Ties in the arg-max go to the lowest class index.
    """
    if len(records) == 0:
        raise DataError("empty dataset")
    ks = {len(r.logits) for r in records}
    if len(ks) == 1:
        z = np.array([r.logits for r in records], dtype=np.float64)
        if not np.isfinite(z).all():
            raise DataError("non-finite logit")
        probs = softmax_rows(z)
        pred = z.argmax(axis=1)
        conf = probs[np.arange(len(records)), pred]
        labels = np.array([r.label for r in records])
        return Dataset(conf, (pred == labels).astype(np.int8))
    samples = []
    for r in records:
        z = np.array([r.logits], dtype=np.float64)
        k = int(z.argmax())
        samples.append((float(softmax_rows(z)[0, k]), int(k == r.label)))
    return Dataset.from_samples(samples)


def split(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then cut into parts of round(fraction * N) and the rest."""
    n = len(dataset)
    if n < 2:
        raise DataError(f"cannot split a dataset of size {n}")
    if not 0.0 < fraction < 1.0:
        raise DataError(f"fraction must lie in (0, 1), got {fraction}")
    k = int(round(fraction * n))
    if k == 0 or k == n:
        raise DataError(f"fraction {fraction} of {n} samples leaves an empty part")
    stream = RandomStream(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = stream.next_u64() % (i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    perm = np.array(perm)
    return dataset[perm[:k]], dataset[perm[k:]]
