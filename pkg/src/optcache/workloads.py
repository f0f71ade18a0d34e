"""Request, price and budget streams.

Streams are held as flat arrays: ``files[k]`` and ``locations[k]`` for the
``k``-th request, plus ``offsets`` delimiting the requests of each slot (one
request per slot unless batched).  File 0 is the most popular Zipf rank.

Trace files are CSV with header ``slot,file_id,location_id``.  The location
column is optional; ``-1`` or a missing column means "assign by rule".
"""

from __future__ import annotations

import csv
import io
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import InvalidInput, Request, RequestBatch


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named component of a seeded run."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class RequestStream:
    files: np.ndarray
    locations: np.ndarray
    offsets: np.ndarray  # slot t holds requests offsets[t-1]:offsets[t]

    @classmethod
    def unbatched(cls, files, locations) -> "RequestStream":
        files = np.asarray(files, dtype=np.int64)
        locations = np.asarray(locations, dtype=np.int64)
        return cls(files, locations, np.arange(files.size + 1, dtype=np.int64))

    @property
    def num_slots(self) -> int:
        return self.offsets.size - 1

    @property
    def num_requests(self) -> int:
        return int(self.files.size)

    def slot(self, t: int) -> slice:
        """Requests of slot ``t`` (1-based)."""
        return slice(int(self.offsets[t - 1]), int(self.offsets[t]))

    def requests(self) -> list:
        out = []
        for t in range(1, self.num_slots + 1):
            s = self.slot(t)
            out.extend(Request(int(n), int(i), t) for n, i in zip(self.files[s], self.locations[s]))
        return out

    def batches(self) -> list:
        out = []
        for t in range(1, self.num_slots + 1):
            s = self.slot(t)
            out.append(RequestBatch(tuple(Request(int(n), int(i), t)
                                          for n, i in zip(self.files[s], self.locations[s])), t))
        return out

    def __len__(self) -> int:
        return self.num_slots


def batch(stream: RequestStream, B: int) -> RequestStream:
    """Group consecutive requests ``B`` at a time; a short last batch is kept."""
    if B < 1:
        raise InvalidInput("batch size must be at least 1")
    R = stream.num_requests
    offsets = np.append(np.arange(0, R, B, dtype=np.int64), R)
    return RequestStream(stream.files, stream.locations, offsets)


# --------------------------------------------------------------------------
# Zipf


@dataclass(frozen=True)
class ZipfSpec:
    num_files: int
    exponent: float = 1.1
    seed: int = 0

    def __post_init__(self):
        if self.num_files < 1:
            raise InvalidInput("Zipf law needs at least one file")
        if self.exponent < 0:
            raise InvalidInput("Zipf exponent must be nonnegative")


def zipf_probabilities(num_files: int, exponent: float) -> np.ndarray:
    """``p_k proportional to k^-exponent`` for ranks ``k = 1..N``."""
    p = np.arange(1, num_files + 1, dtype=float) ** (-float(exponent))
    return p / p.sum()


def sample_files(p: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling, stable across numpy versions."""
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), p.size - 1)


def zipf_stream(spec: ZipfSpec, T: int, num_locations: int = 1) -> RequestStream:
    """``T`` i.i.d. Zipf requests at uniformly random locations."""
    if T < 1:
        raise InvalidInput("horizon must be at least 1")
    p = zipf_probabilities(spec.num_files, spec.exponent)
    files = sample_files(p, T, named_rng(spec.seed, "zipf-files"))
    locs = named_rng(spec.seed, "zipf-locations").integers(0, num_locations, size=T)
    return RequestStream.unbatched(files, locs)


# --------------------------------------------------------------------------
# traces


@dataclass(frozen=True)
class TraceSpec:
    path: str
    min_requests: int = 1
    location_rule: str = "column"  # "column" or "uniform"
    num_locations: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.location_rule not in ("column", "uniform"):
            raise InvalidInput(f"unknown location rule {self.location_rule!r}")
        if self.min_requests < 1 or self.num_locations < 1:
            raise InvalidInput("min_requests and num_locations must be positive")


@dataclass(frozen=True)
class Trace:
    stream: RequestStream
    num_files: int
    original_ids: tuple  # original file id of each new index


class TraceError(InvalidInput):
    """Malformed trace file."""


def parse_trace(text: str):
    """Rows ``(slot, file_id, location_id or -1)`` of a trace CSV, stably sorted by slot."""
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise TraceError("trace is empty") from None
    if header[:2] != ["slot", "file_id"] or len(header) > 3 or (
            len(header) == 3 and header[2] != "location_id"):
        raise TraceError(f"line 1: expected header slot,file_id[,location_id], got {','.join(header)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise TraceError(f"line {lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            slot = int(row[0])
            fid = row[1].strip()
            if not fid:
                raise ValueError("empty file_id")
            loc = int(row[2]) if len(row) == 3 and row[2].strip() else -1
        except ValueError as e:
            raise TraceError(f"line {lineno}: {e}") from None
        if slot < 0 or loc < -1:
            raise TraceError(f"line {lineno}: negative slot or location")
        rows.append((slot, fid, loc))
    rows.sort(key=lambda r: r[0])
    return rows


def load_trace(spec: TraceSpec) -> Trace:
    """Filter rare files, re-index the rest by first appearance, assign locations."""
    try:
        text = Path(spec.path).read_text(encoding="utf-8")
    except OSError as e:
        raise TraceError(f"cannot read trace {spec.path}: {e}") from None
    return trace_from_rows(parse_trace(text), spec)


def trace_from_rows(rows, spec: TraceSpec) -> Trace:
    counts: dict = {}
    for _, fid, _ in rows:
        counts[fid] = counts.get(fid, 0) + 1
    kept = [r for r in rows if counts[r[1]] >= spec.min_requests]
    if not kept:
        raise TraceError(f"no file has at least {spec.min_requests} requests")
    index: dict = {}
    for _, fid, _ in kept:
        index.setdefault(fid, len(index))
    files = np.array([index[fid] for _, fid, _ in kept], dtype=np.int64)
    locs = np.array([loc for _, _, loc in kept], dtype=np.int64)
    if spec.location_rule == "uniform":
        locs = named_rng(spec.seed, "trace-locations").integers(0, spec.num_locations, size=files.size)
    else:
        missing = locs < 0
        if np.any(locs >= spec.num_locations):
            raise TraceError(f"location_id outside [0, {spec.num_locations})")
        locs[missing] = named_rng(spec.seed, "trace-locations").integers(
            0, spec.num_locations, size=int(missing.sum()))
    return Trace(RequestStream.unbatched(files, locs), len(index), tuple(index))


def write_synthetic_trace(path, num_files: int, num_requests: int, exponent: float = 0.8,
                          epoch: int = 1000, seed: int = 0, num_locations: int = 0) -> None:
    """Write a non-stationary Zipf trace: the popularity ranking is reshuffled every ``epoch`` requests.

    ``num_locations = 0`` omits the location column.
    """
    rng = named_rng(seed, "synthetic-trace")
    p = zipf_probabilities(num_files, exponent)
    out = io.StringIO()
    out.write("slot,file_id" + (",location_id" if num_locations else "") + "\n")
    for start in range(0, num_requests, epoch):
        k = min(epoch, num_requests - start)
        perm = rng.permutation(num_files)
        files = perm[sample_files(p, k, rng)]
        locs = rng.integers(0, num_locations, size=k) if num_locations else None
        for j in range(k):
            line = f"{start + j + 1},f{files[j]}"
            if locs is not None:
                line += f",{locs[j]}"
            out.write(line + "\n")
    Path(path).write_text(out.getvalue(), encoding="utf-8")


def empirical_popularity(stream: RequestStream, num_files: int) -> np.ndarray:
    counts = np.bincount(stream.files, minlength=num_files).astype(float)
    return counts / counts.sum()


# --------------------------------------------------------------------------
# prices and budgets


@dataclass(frozen=True)
class PriceSpec:
    kind: str = "uniform"  # uniform on [0, s_max], constant, or csv
    value: float = 1.0
    s_max: float = 1.0
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "constant", "csv"):
            raise InvalidInput(f"unknown price rule {self.kind!r}")
        if self.kind == "csv" and not self.path:
            raise InvalidInput("csv prices need a path")
        if self.s_max < 0 or self.value < 0:
            raise InvalidInput("prices must be nonnegative")


@dataclass(frozen=True)
class BudgetSpec:
    kind: str = "normal"  # normal(mean, std) * scale, or constant
    mean: float = 0.5
    std: float = 0.05
    scale: float = 10.0
    value: float = 5.0

    def __post_init__(self):
        if self.kind not in ("normal", "constant"):
            raise InvalidInput(f"unknown budget rule {self.kind!r}")
        if self.std < 0 or self.scale < 0:
            raise InvalidInput("budget std and scale must be nonnegative")


def price_stream(spec: PriceSpec, T: int, J: int, rng: np.random.Generator) -> np.ndarray:
    """Prices ``s[t-1, j]``, shape ``(T, J)``."""
    if spec.kind == "uniform":
        return spec.s_max * rng.random((T, J))
    if spec.kind == "constant":
        return np.full((T, J), float(spec.value))
    try:
        data = np.loadtxt(spec.path, delimiter=",", ndmin=2)
    except (OSError, ValueError) as e:
        raise InvalidInput(f"cannot read prices {spec.path}: {e}") from None
    if data.shape[1] != J or data.shape[0] < T:
        raise InvalidInput(f"price file needs at least {T} rows of {J} columns, got {data.shape}")
    if np.any(data < 0):
        raise InvalidInput("prices must be nonnegative")
    return data[:T].astype(float)


def budget_stream(spec: BudgetSpec, T: int, rng: np.random.Generator) -> np.ndarray:
    """Per-slot budgets ``b_t >= 0``, shape ``(T,)``."""
    if spec.kind == "constant":
        return np.full(T, float(spec.value))
    return np.maximum(rng.normal(spec.mean, spec.std, size=T) * spec.scale, 0.0)
