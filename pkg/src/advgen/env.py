"""Network environment model: traces, bounds, and the flat integer encoding.

A trace is a time-ordered list of (bandwidth, latency, duration) intervals
plus time-invariant parameters (buffer length, optional data size).  All
values are integers.  Optimizers operate on a flat integer vector whose
layout is (bw_1, lat_1, dur_1, ..., bw_K, lat_K, dur_K, buffer[, data]).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

FIELD_NAMES = ("bandwidth_mbps", "latency_ms", "duration_ms")

TRACE_HEADER = "duration_ms,bandwidth_mbps,latency_ms"


class LayoutError(ValueError):
    """Trace shape does not match the bounds layout."""


@dataclass(frozen=True)
class Interval:
    """One constant-condition segment of a trace."""

    bandwidth: int  # Mbps
    latency: int    # ms, one-way
    duration: int   # ms

    def __post_init__(self):
        if self.bandwidth < 1:
            raise ValueError(f"bandwidth must be >= 1, got {self.bandwidth}")
        if self.latency < 0:
            raise ValueError(f"latency must be >= 0, got {self.latency}")
        if self.duration < 1:
            raise ValueError(f"duration must be >= 1, got {self.duration}")


@dataclass(frozen=True)
class Trace:
    """A time-varying network environment."""

    intervals: tuple[Interval, ...]
    buffer_len: int               # packets
    data_size: Optional[int] = None  # kilobytes; None = send for full duration

    def __post_init__(self):
        if len(self.intervals) < 1:
            raise ValueError("trace needs at least one interval")
        object.__setattr__(self, "intervals", tuple(self.intervals))

    @property
    def total_duration(self) -> int:
        return sum(iv.duration for iv in self.intervals)

    def mean_bandwidth(self) -> float:
        """Duration-weighted mean bandwidth in Mbps."""
        return sum(iv.bandwidth * iv.duration for iv in self.intervals) / self.total_duration

    def mean_latency(self) -> float:
        """Duration-weighted mean one-way latency in ms."""
        return sum(iv.latency * iv.duration for iv in self.intervals) / self.total_duration

    def min_latency(self) -> int:
        return min(iv.latency for iv in self.intervals)


@dataclass(frozen=True)
class Layout:
    """Maps flat vector positions to trace fields.

    Order is (bw_1, lat_1, dur_1, ..., bw_K, lat_K, dur_K, buffer[, data]);
    fixed so crossover cut points keep a consistent meaning across runs.
    """

    n_intervals: int
    has_data_size: bool = False

    @property
    def size(self) -> int:
        return 3 * self.n_intervals + 1 + int(self.has_data_size)

    def position_name(self, i: int) -> str:
        if i < 3 * self.n_intervals:
            return f"interval[{i // 3}].{FIELD_NAMES[i % 3]}"
        if i == 3 * self.n_intervals:
            return "buffer_packets"
        return "data_kb"

    def matches(self, trace: Trace) -> bool:
        return (len(trace.intervals) == self.n_intervals
                and (trace.data_size is not None) == self.has_data_size)


@dataclass(frozen=True)
class Bounds:
    """Per-position integer lower/upper bounds over the flat encoding."""

    lower: tuple[int, ...]
    upper: tuple[int, ...]
    layout: Layout

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(int(x) for x in self.lower))
        object.__setattr__(self, "upper", tuple(int(x) for x in self.upper))
        if len(self.lower) != self.layout.size or len(self.upper) != self.layout.size:
            raise LayoutError(
                f"bounds length {len(self.lower)}/{len(self.upper)} "
                f"!= layout size {self.layout.size}")
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if lo > hi:
                raise ValueError(f"lower > upper at {self.layout.position_name(i)}")

    @property
    def size(self) -> int:
        return self.layout.size

    def contains(self, values) -> bool:
        v = np.asarray(values)
        return bool(np.all(v >= self.lower) and np.all(v <= self.upper))

    def sample_vector(self, rng: np.random.Generator) -> np.ndarray:
        """Draw each coordinate independently and uniformly over [lower, upper]."""
        lo = np.asarray(self.lower, dtype=np.int64)
        hi = np.asarray(self.upper, dtype=np.int64)
        return rng.integers(lo, hi + 1, dtype=np.int64)


# Default bounds: bandwidth 1-100 Mbps, latency 5-100 ms, duration
# 500-2500 ms, queue 500-10000 packets; applied per interval.
DEFAULT_INTERVAL_LOWER = (1, 5, 500)
DEFAULT_INTERVAL_UPPER = (100, 100, 2500)
DEFAULT_BUFFER_RANGE = (500, 10000)


def default_bounds(n_intervals: int,
                   interval_lower=DEFAULT_INTERVAL_LOWER,
                   interval_upper=DEFAULT_INTERVAL_UPPER,
                   buffer_range=DEFAULT_BUFFER_RANGE,
                   data_range: Optional[tuple[int, int]] = None) -> Bounds:
    layout = Layout(n_intervals, has_data_size=data_range is not None)
    lower = list(interval_lower) * n_intervals + [buffer_range[0]]
    upper = list(interval_upper) * n_intervals + [buffer_range[1]]
    if data_range is not None:
        lower.append(data_range[0])
        upper.append(data_range[1])
    return Bounds(tuple(lower), tuple(upper), layout)


def encode(trace: Trace, layout: Layout) -> np.ndarray:
    """Flatten a trace into its integer vector."""
    if not layout.matches(trace):
        raise LayoutError("trace shape does not match layout")
    values = []
    for iv in trace.intervals:
        values.extend((iv.bandwidth, iv.latency, iv.duration))
    values.append(trace.buffer_len)
    if layout.has_data_size:
        values.append(trace.data_size)
    return np.asarray(values, dtype=np.int64)


def decode(values, layout: Layout) -> Trace:
    """Inverse of :func:`encode`."""
    v = [int(x) for x in np.asarray(values).ravel()]
    if len(v) != layout.size:
        raise LayoutError(f"vector length {len(v)} != layout size {layout.size}")
    intervals = tuple(Interval(v[3 * k], v[3 * k + 1], v[3 * k + 2])
                      for k in range(layout.n_intervals))
    data_size = v[-1] if layout.has_data_size else None
    return Trace(intervals, buffer_len=v[3 * layout.n_intervals], data_size=data_size)


def validate(trace: Trace, bounds: Bounds) -> list[str]:
    """Check a trace against bounds; empty list means valid.

    Raises LayoutError when the trace shape itself does not match the
    bounds layout (distinct from out-of-bounds values).
    """
    vec = encode(trace, bounds.layout)
    violations = []
    for i, (val, lo, hi) in enumerate(zip(vec, bounds.lower, bounds.upper)):
        if not lo <= val <= hi:
            violations.append(
                f"{bounds.layout.position_name(i)}={val} outside [{lo}, {hi}]")
    return violations


def sample_uniform(bounds: Bounds, rng: np.random.Generator) -> Trace:
    """Sample a trace with every coordinate uniform over its integer range."""
    return decode(bounds.sample_vector(rng), bounds.layout)


def write_trace(trace: Trace, path) -> None:
    """Write the on-disk trace format.

    Header line, one CSV row per interval, then key=value lines for the
    invariant parameters.  LF line endings, no trailing whitespace.
    """
    lines = [TRACE_HEADER]
    lines += [f"{iv.duration},{iv.bandwidth},{iv.latency}" for iv in trace.intervals]
    lines.append(f"buffer_packets={trace.buffer_len}")
    if trace.data_size is not None:
        lines.append(f"data_kb={trace.data_size}")
    with open(path, "w", newline="\n") as f:
        f.write("\n".join(lines) + "\n")


def read_trace(path) -> Trace:
    with open(path) as f:
        lines = [ln.rstrip("\n") for ln in f if ln.strip()]
    if not lines or lines[0] != TRACE_HEADER:
        raise ValueError(f"bad trace header in {path}")
    intervals = []
    buffer_len = None
    data_size = None
    for ln in lines[1:]:
        if ln.startswith("buffer_packets="):
            buffer_len = int(ln.split("=", 1)[1])
        elif ln.startswith("data_kb="):
            data_size = int(ln.split("=", 1)[1])
        else:
            parts = ln.split(",")
            if len(parts) != 3:
                raise ValueError(f"bad interval row: {ln!r}")
            dur, bw, lat = (int(p) for p in parts)
            intervals.append(Interval(bw, lat, dur))
    if buffer_len is None:
        raise ValueError(f"missing buffer_packets line in {path}")
    return Trace(tuple(intervals), buffer_len=buffer_len, data_size=data_size)
