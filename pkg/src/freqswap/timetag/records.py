"""Time-tag storage.

Binary layout: a flat sequence of 9-byte little-endian records,
``u1 channel`` followed by ``u8 time`` (integer picoseconds since the start of
the run), sorted by time. A YAML sidecar ``<file>.meta.yaml`` carries the run
metadata (rep period, delay segments, generator bookkeeping).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

TAG_DTYPE = np.dtype([("channel", "<u1"), ("time", "<u8")])
assert TAG_DTYPE.itemsize == 9
DEFAULT_CHUNK = 1 << 20


@dataclass(frozen=True)
class TimeTag:
    channel: int
    time: int
    rep_period: int = 12500

    @property
    def pulse_index(self) -> int:
        return self.time // self.rep_period


def pack(channels, times) -> np.ndarray:
    rec = np.empty(len(times), dtype=TAG_DTYPE)
    rec["channel"] = channels
    rec["time"] = times
    return rec


def meta_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.yaml")


def write_meta(path, meta: dict) -> None:
    with open(meta_path(path), "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)


def read_meta(path) -> dict:
    with open(meta_path(path)) as fh:
        return yaml.safe_load(fh)


class TagWriter:
    """Append-only writer for the binary record format."""

    def __init__(self, path):
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self.count = 0
        self._last = 0

    def write(self, channels, times):
        times = np.asarray(times, dtype=np.uint64)
        if len(times) == 0:
            return
        if times[0] < self._last or np.any(np.diff(times.astype(np.int64)) < 0):
            raise ValueError("tags must be written in non-decreasing time order")
        self._fh.write(pack(channels, times).tobytes())
        self._last = int(times[-1])
        self.count += len(times)

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def iter_chunks(path, chunk: int = DEFAULT_CHUNK):
    """Yield (channels, times) arrays of at most ``chunk`` records."""
    with open(path, "rb") as fh:
        while True:
            buf = fh.read(chunk * TAG_DTYPE.itemsize)
            if not buf:
                break
            if len(buf) % TAG_DTYPE.itemsize:
                raise ValueError(f"{path}: truncated record at end of file")
            rec = np.frombuffer(buf, dtype=TAG_DTYPE)
            yield rec["channel"].astype(np.int64), rec["time"].astype(np.int64)


def read_tags(path):
    ch, t = [], []
    for c, tt in iter_chunks(path):
        ch.append(c)
        t.append(tt)
    if not ch:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(ch), np.concatenate(t)


def to_csv(path, out_csv) -> int:
    n = 0
    with open(out_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["channel", "time_ps"])
        for c, t in iter_chunks(path):
            w.writerows(zip(c.tolist(), t.tolist()))
            n += len(c)
    return n


def from_csv(in_csv, path) -> int:
    with open(in_csv, newline="") as fh:
        r = csv.reader(fh)
        next(r)
        rows = np.array([(int(a), int(b)) for a, b in r], dtype=np.int64).reshape(-1, 2)
    with TagWriter(path) as w:
        w.write(rows[:, 0], rows[:, 1])
    return len(rows)
