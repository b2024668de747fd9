"""Timed memory-usage traces: the medium every other module reads or writes.

A trace is an ordered sequence of (microsecond timestamp, bytes-used)
samples plus a nominal sampling period and free-form string metadata.
Timestamps and values are integers so that the CSV file format round-trips
bit-exactly.
"""

import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np


class MeminfoParseError(ValueError):
    """Raised when a meminfo-format stream is missing keys or malformed."""


class TraceFormatError(ValueError):
    """Raised when a trace file violates the format or its invariants."""


class TimedSample(NamedTuple):
    t_us: int
    used_bytes: int


@dataclass(frozen=True)
class MemStats:
    """The four meminfo fields the used-memory calculation needs, in bytes."""

    mem_total: int
    mem_free: int
    buffers: int
    cache: int

    def __post_init__(self):
        for name in ("mem_total", "mem_free", "buffers", "cache"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.mem_free + self.buffers + self.cache > self.mem_total:
            raise ValueError(
                "free + buffers + cache exceeds total "
                f"({self.mem_free} + {self.buffers} + {self.cache} > {self.mem_total})"
            )


def used_memory(stats: MemStats) -> int:
    """Bytes in use: total minus free, buffers and cache, floored at zero.

    The floor only matters for callers that bypass MemStats validation
    (e.g. a live sampler racing a kernel stats update).
    """
    return max(0, stats.mem_total - stats.mem_free - stats.buffers - stats.cache)


_MEMINFO_LINE = re.compile(r"^(\S+):\s*(\S+)(?:\s+kB)?\s*$")
_REQUIRED_KEYS = ("MemTotal", "MemFree", "Buffers", "Cached")


def parse_meminfo(text: str) -> MemStats:
    """Parse kernel meminfo text into MemStats (values converted kB -> bytes)."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        m = _MEMINFO_LINE.match(line)
        if m is None:
            raise MeminfoParseError(f"line {lineno}: not a 'Key: value' line: {line!r}")
        key, raw = m.group(1), m.group(2)
        if key not in _REQUIRED_KEYS:
            continue
        if not raw.isdigit():
            raise MeminfoParseError(f"line {lineno}: malformed number {raw!r} for {key}")
        values[key] = int(raw) * 1024
    for key in _REQUIRED_KEYS:
        if key not in values:
            raise MeminfoParseError(f"required key missing: {key}")
    return MemStats(
        mem_total=values["MemTotal"],
        mem_free=values["MemFree"],
        buffers=values["Buffers"],
        cache=values["Cached"],
    )


@dataclass
class MemoryTrace:
    """Immutable-by-convention sampled memory-usage signal.

    `t_us` and `used_bytes` are equal-length int64 arrays with strictly
    increasing timestamps. Sharing a trace across threads is safe as long
    as nobody mutates the arrays (no code in this package does).
    """

    t_us: np.ndarray
    used_bytes: np.ndarray
    nominal_period_us: int = 1000
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.t_us = np.asarray(self.t_us, dtype=np.int64)
        self.used_bytes = np.asarray(self.used_bytes, dtype=np.int64)
        if self.t_us.shape != self.used_bytes.shape or self.t_us.ndim != 1:
            raise ValueError("t_us and used_bytes must be 1-d arrays of equal length")
        if self.nominal_period_us <= 0:
            raise ValueError("nominal_period_us must be positive")
        if len(self.t_us):
            if self.t_us[0] < 0:
                raise ValueError("timestamps must be non-negative")
            if np.any(np.diff(self.t_us) <= 0):
                bad = int(np.argmax(np.diff(self.t_us) <= 0)) + 1
                raise ValueError(f"timestamps not strictly increasing at index {bad}")
            if np.any(self.used_bytes < 0):
                raise ValueError("used_bytes must be non-negative")

    def __len__(self):
        return len(self.t_us)

    def __getitem__(self, i) -> TimedSample:
        return TimedSample(int(self.t_us[i]), int(self.used_bytes[i]))

    def __eq__(self, other):
        if not isinstance(other, MemoryTrace):
            return NotImplemented
        return (
            self.nominal_period_us == other.nominal_period_us
            and self.meta == other.meta
            and np.array_equal(self.t_us, other.t_us)
            and np.array_equal(self.used_bytes, other.used_bytes)
        )

    @property
    def duration_us(self) -> int:
        return int(self.t_us[-1]) if len(self) else 0

    def samples(self):
        for i in range(len(self)):
            yield self[i]


class TraceBuilder:
    """Single-writer append-only accumulator for a live sampler."""

    def __init__(self, nominal_period_us: int, meta: dict | None = None):
        self._t = []
        self._v = []
        self.nominal_period_us = nominal_period_us
        self.meta = dict(meta or {})

    def append(self, t_us: int, used_bytes: int):
        if self._t and t_us <= self._t[-1]:
            raise ValueError(f"non-increasing timestamp {t_us} after {self._t[-1]}")
        self._t.append(int(t_us))
        self._v.append(int(used_bytes))

    def __len__(self):
        return len(self._t)

    def finish(self) -> MemoryTrace:
        return MemoryTrace(
            np.array(self._t, dtype=np.int64),
            np.array(self._v, dtype=np.int64),
            self.nominal_period_us,
            self.meta,
        )


_HEADER = "t_us,used_bytes"
_META_LINE = re.compile(r"^#\s*([^=]+?)\s*=\s*(.*)$")


def write_trace(trace: MemoryTrace, sink):
    """Write a trace as CSV: `# key=value` metadata lines, header, then samples.

    `sink` is a path or a text file object. Round-trips bit-exactly through
    read_trace.
    """
    if hasattr(sink, "write"):
        _write_trace_fh(trace, sink)
    else:
        with open(sink, "w", encoding="utf-8", newline="\n") as fh:
            _write_trace_fh(trace, fh)


def _write_trace_fh(trace, fh):
    fh.write(f"# nominal_period_us={trace.nominal_period_us}\n")
    for key in sorted(trace.meta):
        value = str(trace.meta[key])
        if "\n" in value:
            raise ValueError(f"metadata value for {key!r} contains a newline")
        fh.write(f"# {key}={value}\n")
    fh.write(_HEADER + "\n")
    if len(trace):
        t = trace.t_us
        v = trace.used_bytes
        chunk = 65536
        for start in range(0, len(t), chunk):
            rows = (
                f"{a},{b}"
                for a, b in zip(t[start : start + chunk], v[start : start + chunk])
            )
            fh.write("\n".join(rows))
            fh.write("\n")


def read_trace(source) -> MemoryTrace:
    """Read a trace written by write_trace; validates the trace invariants."""
    if hasattr(source, "read"):
        return _read_trace_fh(source)
    with open(source, "r", encoding="utf-8") as fh:
        return _read_trace_fh(fh)


def _read_trace_fh(fh):
    meta = {}
    period = None
    header = None
    for line in fh:
        line = line.rstrip("\n")
        if line.startswith("#"):
            m = _META_LINE.match(line)
            if m is None:
                raise TraceFormatError(f"malformed metadata line: {line!r}")
            key, value = m.group(1), m.group(2)
            if key == "nominal_period_us":
                period = int(value)
            else:
                meta[key] = value
        else:
            header = line
            break
    if header is None:
        raise TraceFormatError("missing header line")
    if header != _HEADER:
        raise TraceFormatError(f"expected header {_HEADER!r}, got {header!r}")
    if period is None:
        raise TraceFormatError("missing '# nominal_period_us=' metadata line")

    times = []
    values = []
    for idx, line in enumerate(fh):
        line = line.strip()
        if not line:
            continue
        try:
            left, right = line.split(",")
            t, v = int(left), int(right)
        except ValueError:
            raise TraceFormatError(f"sample {idx}: malformed row {line!r}") from None
        if times and t <= times[-1]:
            raise TraceFormatError(f"sample {idx}: timestamp {t} not increasing")
        if t < 0 or v < 0:
            raise TraceFormatError(f"sample {idx}: negative field in {line!r}")
        times.append(t)
        values.append(v)
    return MemoryTrace(
        np.array(times, dtype=np.int64),
        np.array(values, dtype=np.int64),
        period,
        meta,
    )
