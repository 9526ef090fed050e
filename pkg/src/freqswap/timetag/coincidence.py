"""Streaming coincidence finding over a time-ordered multi-channel tag stream.

Tags are grouped by pulse index (time div rep period). For every pulse with
at least one tag the finder records, per role, the number of tags and the
delay-corrected time of the first one. Only the last, possibly incomplete,
pulse of each chunk is carried over, so memory is bounded by the chunk size.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation
from .synth import ROLES, CoincidenceConfig

NONE = -1


@dataclass
class CoincidenceEvents:
    """Per-pulse role occupancy: ``counts`` (n, 4) and first ``times`` (n, 4), -1 if absent."""

    pulse: np.ndarray
    counts: np.ndarray
    times: np.ndarray

    def __len__(self):
        return len(self.pulse)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0, np.int64), np.zeros((0, 4), np.int64), np.zeros((0, 4), np.int64))

    def take(self, mask) -> "CoincidenceEvents":
        return CoincidenceEvents(self.pulse[mask], self.counts[mask], self.times[mask])

    @staticmethod
    def concat(parts) -> "CoincidenceEvents":
        parts = [p for p in parts if len(p)]
        if not parts:
            return CoincidenceEvents.empty()
        return CoincidenceEvents(
            np.concatenate([p.pulse for p in parts]),
            np.concatenate([p.counts for p in parts]),
            np.concatenate([p.times for p in parts]),
        )

    def spread(self, roles) -> np.ndarray:
        t = self.times[:, roles]
        return t.max(axis=1) - t.min(axis=1)


class CoincidenceFinder:
    def __init__(self, config: CoincidenceConfig, rep_period: int = 12500):
        self.config = config
        self.rep = int(rep_period)
        nch = max(config.channels.values()) + 1
        self._role = np.full(max(nch, 256), NONE, dtype=np.int64)
        for i, r in enumerate(ROLES):
            self._role[config.channels[r]] = i
        self._delay = np.array([config.delay(i) for i in range(4)])
        self._carry_c = np.zeros(0, np.int64)
        self._carry_t = np.zeros(0, np.int64)
        self._last = None

    def feed(self, channels, times, final: bool = False) -> CoincidenceEvents:
        channels = np.asarray(channels, dtype=np.int64)
        times = np.asarray(times, dtype=np.int64)
        if len(times):
            if np.any(np.diff(times) < 0) or (self._last is not None and times[0] < self._last):
                raise ContractViolation("tag stream is not sorted by time")
            self._last = int(times[-1])
        c = np.concatenate([self._carry_c, channels])
        t = np.concatenate([self._carry_t, times])
        if not len(t):
            return CoincidenceEvents.empty()
        pulse = t // self.rep
        if final:
            cut = len(t)
        else:
            cut = int(np.searchsorted(pulse, pulse[-1], side="left"))
        self._carry_c, self._carry_t = c[cut:], t[cut:]
        return self._group(c[:cut], t[:cut], pulse[:cut])

    def flush(self) -> CoincidenceEvents:
        return self.feed(np.zeros(0, np.int64), np.zeros(0, np.int64), final=True)

    def _group(self, c, t, pulse) -> CoincidenceEvents:
        if not len(t):
            return CoincidenceEvents.empty()
        role = self._role[c]
        ok = role >= 0
        c, t, pulse, role = c[ok], t[ok], pulse[ok], role[ok]
        key = pulse * 4 + role
        uk, first, cnt = np.unique(key, return_index=True, return_counts=True)
        up = uk // 4
        ur = uk % 4
        pulses, inv = np.unique(up, return_inverse=True)
        counts = np.zeros((len(pulses), 4), np.int64)
        tt = np.full((len(pulses), 4), NONE, np.int64)
        counts[inv, ur] = cnt
        tt[inv, ur] = t[first] - np.rint(self._delay[ur]).astype(np.int64)
        return CoincidenceEvents(pulses, counts, tt)


def _iter_streams(streams):
    """Accept a dict {channel: sorted times}, a (channels, times) pair or an iterable of chunks."""
    if isinstance(streams, dict):
        chans, times = [], []
        for ch, ts in streams.items():
            ts = np.asarray(ts, dtype=np.int64)
            if np.any(np.diff(ts) < 0):
                raise ContractViolation(f"channel {ch} stream is not sorted")
            chans.append(np.full(len(ts), int(ch), np.int64))
            times.append(ts)
        c = np.concatenate(chans) if chans else np.zeros(0, np.int64)
        t = np.concatenate(times) if times else np.zeros(0, np.int64)
        order = np.argsort(t, kind="stable")
        yield c[order], t[order]
    elif isinstance(streams, tuple) and len(streams) == 2 and np.ndim(streams[0]) == 1:
        yield streams
    else:
        yield from streams


def within_window(events: CoincidenceEvents, config: CoincidenceConfig) -> np.ndarray:
    """Mask of pulses whose present tags all fall inside the coincidence window."""
    t = np.where(events.times >= 0, events.times, np.nan)
    with np.errstate(invalid="ignore"):
        spread = np.nanmax(t, axis=1) - np.nanmin(t, axis=1)
    return ~(spread > config.window)


def select(events: CoincidenceEvents, order, config: CoincidenceConfig, roles=None, exclusive: bool = True):
    """Keep pulses with every required role present (exactly once if exclusive) inside the window.

    ``order=None`` keeps every occupied pulse whose tags fit in the window.
    """
    if order is None:
        return events.take(within_window(events, config))
    if order == 4:
        roles = [0, 1, 2, 3]
    elif order == 2:
        roles = [ROLES.index(r) if isinstance(r, str) else int(r) for r in (roles or ("idler_c", "idler_d"))]
        if len(roles) != 2:
            raise ContractViolation("order-2 coincidences need exactly two roles")
    else:
        raise ContractViolation(f"order must be 2, 4 or None, got {order}")
    cnt = events.counts[:, roles]
    mask = (cnt == 1).all(axis=1) if exclusive else (cnt >= 1).all(axis=1)
    ev = events.take(mask)
    return ev.take(ev.spread(roles) <= config.window)


def _stream_events(streams, config, order, roles, exclusive, rep_period):
    finder = CoincidenceFinder(config, rep_period)
    for c, t in _iter_streams(streams):
        yield select(finder.feed(c, t), order, config, roles, exclusive)
    yield select(finder.flush(), order, config, roles, exclusive)


def find_coincidences(
    streams,
    config: CoincidenceConfig,
    order: int | None = 4,
    roles=None,
    exclusive: bool = True,
    rep_period: int = 12500,
    stream: bool = False,
):
    """Group tags by pulse and select coincidences of the requested order.

    With ``stream=True`` a generator of per-chunk events is returned so that
    arbitrarily long files are processed in bounded memory.
    """
    gen = _stream_events(streams, config, order, roles, exclusive, rep_period)
    if stream:
        return gen
    return CoincidenceEvents.concat(list(gen))
