"""Monte Carlo synthesis of detection time-tag streams, plus tag-file IO.

Channel convention per party (passive analyzer): 0 = H and 1 = V behind the
Z-basis splitter, 2 = D and 3 = A behind the X-basis splitter.

Synthesized streams are pre-aligned: constant propagation delays are
removed, so the coincidence peak of true pairs is centered at zero time
difference.  Chromatic dispersion on the fibre arm enters as a uniform
offset over the accumulated broadening width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO

import numpy as np
from numba import njit

from .params import N_CHANNELS, LinkParams
from .rates import dispersion_sigma
from .states import TwoQubitState, make_phi_plus, projection_probability

PARTY_SATELLITE = "satellite"
PARTY_FIBER = "fiber-user"
PARTY_IDS = {PARTY_SATELLITE: 0, PARTY_FIBER: 1}
_PARTY_FROM_ID = {v: k for k, v in PARTY_IDS.items()}

CHANNEL_SETTINGS = ("H", "V", "D", "A")

QTAG_MAGIC = b"QTAG"
QTAG_VERSION = 1
_RECORD_DTYPE = np.dtype([("t", "<u8"), ("ch", "u1")])

# Events per generation slice; bounds peak memory, not statistics.
_SLICE_EVENTS = 4_000_000


@dataclass(frozen=True)
class TagStream:
    """Time-ordered detection events of one party."""

    timestamps: np.ndarray = field(repr=False)   # int64 picoseconds
    channels: np.ndarray = field(repr=False)     # uint8, 0..3
    party: str
    duration: float                              # s
    seed: int | None = None

    def __post_init__(self) -> None:
        ts = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        ch = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if ts.ndim != 1 or ch.shape != ts.shape:
            raise ValueError("timestamps and channels must be 1-D arrays of equal length")
        if ts.size and np.any(np.diff(ts) < 0):
            raise ValueError("timestamps must be non-decreasing")
        if ch.size and int(ch.max(initial=0)) >= N_CHANNELS:
            raise ValueError(f"channel ids must be in 0..{N_CHANNELS - 1}")
        if self.party not in PARTY_IDS:
            raise ValueError(f"unknown party {self.party!r}")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError("duration must be finite and >= 0")
        ts.flags.writeable = False
        ch.flags.writeable = False
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "channels", ch)

    def __len__(self) -> int:
        return int(self.timestamps.size)


def link_state(link: LinkParams) -> TwoQubitState:
    """Balanced entangled state matching the link's intrinsic error rates."""
    return make_phi_plus(
        math.pi / 4.0,
        0.0,
        visibility_z=1.0 - 2.0 * link.source.intrinsic_qber,
        visibility_x=1.0 - 2.0 * link.source.intrinsic_qx,
    )


@njit(cache=True)
def _dead_time_mask(ts, ch, dead_ps):
    keep = np.ones(ts.size, dtype=np.bool_)
    last = np.full(4, np.int64(-(1 << 62)), dtype=np.int64)
    for i in range(ts.size):
        c = np.int64(ch[i])
        if ts[i] - last[c] >= dead_ps:
            last[c] = ts[i]
        else:
            keep[i] = False
    return keep


def _categorical(rng: np.random.Generator, cdf: np.ndarray, n: int) -> np.ndarray:
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.uint8)


def _joint_channel_cdf(state: TwoQubitState) -> np.ndarray:
    """CDF over 16 joint channels for a detected pair (50/50 basis per arm)."""
    p = np.empty(16)
    for ia, sa in enumerate(CHANNEL_SETTINGS):
        for ib, sb in enumerate(CHANNEL_SETTINGS):
            p[ia * 4 + ib] = 0.25 * projection_probability(state, sa, sb)
    cdf = np.cumsum(np.maximum(p, 0.0))
    cdf[-1] = 1.0
    return cdf


def _marginal_channel_cdf(state: TwoQubitState, party: int) -> np.ndarray:
    """CDF over 4 channels for a lone detected photon of one party."""
    rho = state.marginal(party)
    from .states import PROJECTOR_STATES

    p = np.empty(4)
    for ic, s in enumerate(CHANNEL_SETTINGS):
        v = PROJECTOR_STATES[s]
        p[ic] = 0.5 * float(np.real(v.conj() @ rho @ v))
    cdf = np.cumsum(np.maximum(p, 0.0))
    cdf[-1] = 1.0
    return cdf


def synthesize(
    link: LinkParams,
    state: TwoQubitState,
    duration: float,
    seed: int,
) -> tuple[TagStream, TagStream]:
    """Generate correlated tag streams for both parties.

    Pair creation is a homogeneous Poisson process; each photon survives its
    arm (heralding times channel transmission) independently, picks a basis
    at a balanced splitter and an outcome from the state's projection
    probabilities.  Detector jitter is Gaussian per event; the fibre arm
    additionally receives a centered uniform dispersion offset.  Dark counts
    are injected per channel at a quarter of the party dark rate, and a
    non-paralyzable dead time is enforced per channel.  Timestamps are
    quantized to integer picoseconds (round half to even); the handful of
    events jittered to negative times is dropped.
    """
    if not (math.isfinite(duration) and duration > 0):
        raise ValueError("duration must be finite and > 0")
    src, ch = link.source, link.channel

    eta_sat = 10.0 ** (-ch.freespace_loss_db / 10.0)
    eta_fib = 10.0 ** (-(ch.fiber_atten_db_per_km * ch.fiber_length_km) / 10.0)
    p_det_sat = src.heralding_sat * eta_sat
    p_det_fib = src.heralding_fib * eta_fib
    pair_rate = src.pair_rate
    created = pair_rate / (src.heralding_sat * src.heralding_fib) if pair_rate > 0 else 0.0

    rate_both = created * p_det_sat * p_det_fib
    rate_sat_only = created * p_det_sat * (1.0 - p_det_fib)
    rate_fib_only = created * (1.0 - p_det_sat) * p_det_fib
    dark_sat = link.det_sat.dark_rate
    dark_fib = link.det_fib.dark_rate

    jit_sat = link.det_sat.jitter_sigma
    jit_fib = link.det_fib.jitter_sigma
    disp_w = dispersion_sigma(ch.fiber_length_km, ch.dispersion_ps_per_km)

    cdf16 = _joint_channel_cdf(state)
    cdf_sat = _marginal_channel_cdf(state, 0)
    cdf_fib = _marginal_channel_cdf(state, 1)

    total_rate = rate_both * 2 + rate_sat_only + rate_fib_only + dark_sat + dark_fib
    n_slices = max(1, math.ceil(duration * total_rate / _SLICE_EVENTS))
    rng = np.random.default_rng(seed)

    sat_t: list[np.ndarray] = []
    sat_c: list[np.ndarray] = []
    fib_t: list[np.ndarray] = []
    fib_c: list[np.ndarray] = []

    def emit(dest_t, dest_c, t, c):
        dest_t.append(np.rint(t * 1e12).astype(np.int64))
        dest_c.append(c)

    for k in range(n_slices):
        lo = duration * k / n_slices
        hi = duration * (k + 1) / n_slices
        dt = hi - lo

        # Pairs detected on both arms (shared creation times).
        n = rng.poisson(rate_both * dt)
        t = rng.uniform(lo, hi, n)
        idx = _categorical(rng, cdf16, n)
        t_a = t + rng.normal(0.0, jit_sat, n) if jit_sat > 0 else t
        t_b = t + rng.normal(0.0, jit_fib, n) if jit_fib > 0 else t.copy()
        if disp_w > 0:
            t_b = t_b + rng.uniform(-0.5 * disp_w, 0.5 * disp_w, n)
        emit(sat_t, sat_c, t_a, idx // 4)
        emit(fib_t, fib_c, t_b, idx % 4)

        # Photons whose partner was lost.
        n = rng.poisson(rate_sat_only * dt)
        t = rng.uniform(lo, hi, n)
        c = _categorical(rng, cdf_sat, n)
        if jit_sat > 0:
            t = t + rng.normal(0.0, jit_sat, n)
        emit(sat_t, sat_c, t, c)

        n = rng.poisson(rate_fib_only * dt)
        t = rng.uniform(lo, hi, n)
        c = _categorical(rng, cdf_fib, n)
        if jit_fib > 0:
            t = t + rng.normal(0.0, jit_fib, n)
        if disp_w > 0:
            t = t + rng.uniform(-0.5 * disp_w, 0.5 * disp_w, n)
        emit(fib_t, fib_c, t, c)

        # Dark counts, uniform over the four channels.
        for dark, dest_t, dest_c in ((dark_sat, sat_t, sat_c), (dark_fib, fib_t, fib_c)):
            n = rng.poisson(dark * dt)
            emit(dest_t, dest_c, rng.uniform(lo, hi, n),
                 rng.integers(0, N_CHANNELS, n, dtype=np.uint8))

    streams = []
    for parts_t, parts_c, party, det in (
        (sat_t, sat_c, PARTY_SATELLITE, link.det_sat),
        (fib_t, fib_c, PARTY_FIBER, link.det_fib),
    ):
        ts = np.concatenate(parts_t) if parts_t else np.empty(0, np.int64)
        cs = np.concatenate(parts_c) if parts_c else np.empty(0, np.uint8)
        order = np.argsort(ts, kind="stable")
        ts, cs = ts[order], cs[order]
        first = np.searchsorted(ts, 0, side="left")
        ts, cs = ts[first:], cs[first:]
        dead_ps = np.int64(round(det.dead_time * 1e12))
        if dead_ps > 0 and ts.size:
            keep = _dead_time_mask(ts, cs, dead_ps)
            ts, cs = ts[keep], cs[keep]
        streams.append(TagStream(ts, cs, party, duration, seed))
    return streams[0], streams[1]


# --- tag file formats ----------------------------------------------------

def write_qtag(stream: TagStream, path: str | Path) -> None:
    """Write the binary tag format: 'QTAG' + version + party id, then
    9-byte little-endian records (u64 timestamp in ps, u8 channel)."""
    ts = stream.timestamps
    if ts.size and ts[0] < 0:
        raise ValueError("negative timestamps cannot be stored")
    rec = np.empty(ts.size, dtype=_RECORD_DTYPE)
    rec["t"] = ts.astype(np.uint64)
    rec["ch"] = stream.channels
    header = QTAG_MAGIC + bytes([QTAG_VERSION, PARTY_IDS[stream.party]])
    with open(path, "wb") as f:
        f.write(header)
        f.write(rec.tobytes())


def read_qtag(path: str | Path, duration: float | None = None) -> TagStream:
    """Read the binary tag format.

    ``duration`` overrides the acquisition time; when omitted it is
    inferred from the last timestamp.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 6 or raw[:4] != QTAG_MAGIC:
        raise ValueError(f"{path}: not a QTAG file")
    version, party_id = raw[4], raw[5]
    if version != QTAG_VERSION:
        raise ValueError(f"{path}: unsupported QTAG version {version}")
    if party_id not in _PARTY_FROM_ID:
        raise ValueError(f"{path}: unknown party id {party_id}")
    body = raw[6:]
    if len(body) % _RECORD_DTYPE.itemsize:
        raise ValueError(f"{path}: truncated record data")
    rec = np.frombuffer(body, dtype=_RECORD_DTYPE)
    ts = rec["t"].astype(np.int64)
    if duration is None:
        duration = float(ts[-1]) * 1e-12 if ts.size else 0.0
    return TagStream(ts, rec["ch"].copy(), _PARTY_FROM_ID[party_id], duration)


def write_tags_csv(stream: TagStream, path_or_file: str | Path | IO[str]) -> None:
    """Write the text format: header 'timestamp_ps,channel', one event per line."""
    def _write(f: IO[str]) -> None:
        f.write("timestamp_ps,channel\n")
        for t, c in zip(stream.timestamps.tolist(), stream.channels.tolist()):
            f.write(f"{t},{c}\n")

    if hasattr(path_or_file, "write"):
        _write(path_or_file)  # type: ignore[arg-type]
    else:
        with open(path_or_file, "w") as f:
            _write(f)


def read_tags_csv(
    path: str | Path,
    party: str = PARTY_SATELLITE,
    duration: float | None = None,
) -> TagStream:
    ts: list[int] = []
    cs: list[int] = []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line.lower().replace(" ", "") == "timestamp_ps,channel":
                continue
            parts = line.split(",")
            try:
                if len(parts) != 2:
                    raise ValueError
                ts.append(int(parts[0]))
                cs.append(int(parts[1]))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed tag row {line!r}") from None
    t_arr = np.array(ts, dtype=np.int64)
    if duration is None:
        duration = float(t_arr[-1]) * 1e-12 if t_arr.size else 0.0
    return TagStream(t_arr, np.array(cs, dtype=np.uint8), party, duration)
