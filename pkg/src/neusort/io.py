"""On-disk formats: traces, ground truth, sorted spikes and weight snapshots.

Trace files start with one JSON header line
``{"sample_rate_hz": f, "channels": c, "format": "f32le"}`` followed by raw
little-endian float32 samples, channel-interleaved.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .model import GroundTruthEvent, RawTrace, SortedSpike

TRACE_FORMAT = "f32le"
TRUTH_HEADER = ["timestamp_samples", "unit"]


class FormatError(Exception):
    """A file exists but does not follow the expected layout."""


def write_trace(path, samples, sample_rate_hz: float) -> None:
    """Write ``samples`` (shape ``(n,)`` or ``(channels, n)``) as a trace file."""
    x = np.asarray(samples, dtype="<f4")
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("samples must be 1-D or (channels, n)")
    header = {"sample_rate_hz": float(sample_rate_hz), "channels": int(x.shape[0]),
              "format": TRACE_FORMAT}
    with open(path, "wb") as f:
        f.write((json.dumps(header) + "\n").encode())
        f.write(np.ascontiguousarray(x.T).tobytes())


def read_trace(path) -> list[RawTrace]:
    """One RawTrace per channel, channel ids 0..c-1."""
    with open(path, "rb") as f:
        line = f.readline()
        body = f.read()
    try:
        header = json.loads(line)
        fs = float(header["sample_rate_hz"])
        channels = int(header["channels"])
        fmt = header["format"]
    except (ValueError, KeyError, TypeError) as e:
        raise FormatError(f"{path}: bad trace header: {e}") from None
    if fmt != TRACE_FORMAT:
        raise FormatError(f"{path}: unsupported sample format {fmt!r}")
    if channels < 1:
        raise FormatError(f"{path}: channel count must be >= 1")
    if len(body) % (4 * channels):
        raise FormatError(f"{path}: payload is not a whole number of {channels}-channel frames")
    data = np.frombuffer(body, dtype="<f4").reshape(-1, channels)
    try:
        return [RawTrace(data[:, c].astype(np.float32), fs, c) for c in range(channels)]
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None


def write_truth(path, events) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRUTH_HEADER)
        for e in events:
            w.writerow([e.timestamp_samples, e.unit])


def read_truth(path) -> list[GroundTruthEvent]:
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != TRUTH_HEADER:
        raise FormatError(f"{path}: expected header {','.join(TRUTH_HEADER)}")
    try:
        events = [GroundTruthEvent(int(t), int(u)) for t, u in rows[1:]]
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
    ts = [e.timestamp_samples for e in events]
    if any(b < a for a, b in zip(ts, ts[1:])):
        raise FormatError(f"{path}: timestamps must be non-decreasing")
    return events


def write_spikes(path, spikes) -> None:
    with open(path, "w") as f:
        for s in spikes:
            f.write(s.to_json() + "\n")


def read_spikes(path) -> list[SortedSpike]:
    out = []
    with open(path) as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(SortedSpike.from_json(line))
            except (ValueError, KeyError, TypeError) as e:
                raise FormatError(f"{path}:{n}: bad spike record: {e}") from None
    return out


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except ValueError as e:
        raise FormatError(f"{path}: {e}") from None
