"""Coincidence identification between two tag streams and BBM92 statistics.

Matching policy: events a_i, b_j form a coincidence iff |t_i - t_j| <=
window/2 (closed interval, boundary ties count).  Events are consumed
greedily in time order, earliest first, one use per event.  The engine is a
single two-pointer pass over the sorted streams, so it runs in O(n) with
constant memory beyond the output tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numba import njit

from .rates import qber_from_counts, skr_from_counts
from .timetags import TagStream


class InsufficientStatisticsError(RuntimeError):
    """A basis table is empty, so error rates and SKR are undefined."""


@dataclass(frozen=True)
class CoincidenceStats:
    """Raw outcome of one coincidence scan."""

    window: float                     # s
    pairs_total: int
    basis_matched: int
    counts_z: np.ndarray = field(repr=False)   # [[HH, HV], [VH, VV]]
    counts_x: np.ndarray = field(repr=False)   # [[DD, DA], [AD, AA]]
    singles_sat: int
    singles_fib: int
    duration: float                   # s

    @property
    def heralding(self) -> float:
        """Symmetric heralding efficiency pairs / sqrt(singles_sat * singles_fib)."""
        if self.singles_sat == 0 or self.singles_fib == 0:
            return 0.0
        return self.pairs_total / math.sqrt(self.singles_sat * self.singles_fib)


@dataclass(frozen=True)
class CoincidenceSummary:
    """Per-second rates derived from one CoincidenceStats."""

    window: float       # s
    cc_rate: float      # coincidences / s
    qber: float
    qx: float
    skr: float          # secure bits / s
    heralding: float
    duration: float     # s

    def to_json_dict(self) -> dict:
        return {
            "window_ps": self.window * 1e12,
            "cc": self.cc_rate,
            "qber": self.qber,
            "qx": self.qx,
            "skr_bps": self.skr,
            "heralding": self.heralding,
            "duration_s": self.duration,
        }


@njit(cache=True)
def _match_and_count(ta, ca, tb, cb, window_ps):
    """Greedy earliest-first matching; |dt| <= window/2 as 2|dt| <= window_ps."""
    counts_z = np.zeros((2, 2), dtype=np.int64)
    counts_x = np.zeros((2, 2), dtype=np.int64)
    pairs = 0
    i = 0
    j = 0
    na = ta.size
    nb = tb.size
    while i < na and j < nb:
        dt = ta[i] - tb[j]
        if 2 * dt > window_ps:
            j += 1
        elif -2 * dt > window_ps:
            i += 1
        else:
            pairs += 1
            a = np.int64(ca[i])
            b = np.int64(cb[j])
            if a < 2 and b < 2:
                counts_z[a, b] += 1
            elif a >= 2 and b >= 2:
                counts_x[a - 2, b - 2] += 1
            i += 1
            j += 1
    return pairs, counts_z, counts_x


def find_coincidences(a: TagStream, b: TagStream, window: float) -> CoincidenceStats:
    """Scan two sorted streams for coincidences within ``window`` seconds.

    Stream ``a`` fills table rows (satellite side by convention), ``b`` the
    columns.  Sortedness is enforced by the TagStream type; no re-sorting
    happens here.
    """
    if not (math.isfinite(window) and window >= 0):
        raise ValueError("window must be finite and >= 0")
    window_ps = np.int64(round(window * 1e12))
    pairs, cz, cx = _match_and_count(
        a.timestamps, a.channels, b.timestamps, b.channels, window_ps
    )
    return CoincidenceStats(
        window=window,
        pairs_total=int(pairs),
        basis_matched=int(cz.sum() + cx.sum()),
        counts_z=cz,
        counts_x=cx,
        singles_sat=len(a),
        singles_fib=len(b),
        duration=max(a.duration, b.duration),
    )


def stats_to_rates(stats: CoincidenceStats) -> CoincidenceSummary:
    """Error rates and SKR from one scan's tables.

    Raises InsufficientStatisticsError when either basis table is empty;
    an operating point with zero SKR but populated tables is reported
    normally.
    """
    if stats.duration <= 0:
        raise ValueError("stats.duration must be > 0")
    if stats.counts_z.sum() == 0 or stats.counts_x.sum() == 0:
        raise InsufficientStatisticsError(
            "empty basis table: cannot estimate QBER/Qx from "
            f"{int(stats.counts_z.sum())} Z and {int(stats.counts_x.sum())} X pairs"
        )
    qber = qber_from_counts(stats.counts_z)
    qx = qber_from_counts(stats.counts_x)
    cc_rate = stats.pairs_total / stats.duration
    return CoincidenceSummary(
        window=stats.window,
        cc_rate=cc_rate,
        qber=qber,
        qx=qx,
        skr=skr_from_counts(cc_rate, qber, qx),
        heralding=stats.heralding,
        duration=stats.duration,
    )


def rescan_windows(
    a: TagStream, b: TagStream, windows: Sequence[float]
) -> list[CoincidenceStats]:
    """Re-process the same tag data for a list of ascending window widths."""
    vals = [float(w) for w in windows]
    if not vals:
        raise ValueError("windows must not be empty")
    if any(w2 < w1 for w1, w2 in zip(vals, vals[1:])):
        raise ValueError("windows must be ascending")
    return [find_coincidences(a, b, w) for w in vals]
