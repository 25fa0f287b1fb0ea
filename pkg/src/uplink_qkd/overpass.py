"""Overpass integration: time-varying up-link loss driving key accumulation.

A profile is a time series of total up-link loss (dB).  A scalar correction
can be subtracted uniformly, e.g. 3 dB to remove double-counted detector
inefficiency and a further 5.9 dB for receiver optics (8.9 dB in total).
Secure key accumulates as the trapezoidal integral of the per-sample SKR.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Sequence

import numpy as np

from .params import LinkParams
from .rates import RateEstimate, estimate

EARTH_RADIUS_KM = 6371.0

_trapezoid = getattr(np, "trapezoid", None) or np.trapz


class ProfileParseError(ValueError):
    """Malformed overpass profile input."""


@dataclass(frozen=True)
class OverpassProfile:
    """Sampled up-link loss over one pass, with a uniform correction."""

    times: np.ndarray = field(repr=False)     # s, strictly increasing
    loss_db: np.ndarray = field(repr=False)   # total loss per sample
    correction_db: float = 0.0

    def __post_init__(self) -> None:
        t = np.ascontiguousarray(self.times, dtype=float)
        loss = np.ascontiguousarray(self.loss_db, dtype=float)
        if t.ndim != 1 or loss.shape != t.shape:
            raise ValueError("times and loss_db must be 1-D arrays of equal length")
        if t.size == 0:
            raise ValueError("profile must contain at least one sample")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(loss))):
            raise ValueError("profile samples must be finite")
        if np.any(np.diff(t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if not math.isfinite(self.correction_db):
            raise ValueError("correction_db must be finite")
        t.flags.writeable = False
        loss.flags.writeable = False
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "loss_db", loss)

    def __len__(self) -> int:
        return int(self.times.size)

    def corrected_loss_db(self) -> np.ndarray:
        """Loss after subtracting the correction, clamped at 0 dB."""
        return np.maximum(self.loss_db - self.correction_db, 0.0)

    def with_correction(self, correction_db: float) -> "OverpassProfile":
        return OverpassProfile(self.times, self.loss_db, correction_db)


def load_profile(
    source: str | Path | IO[str], correction_db: float = 0.0
) -> OverpassProfile:
    """Parse a `t_s,loss_db` CSV (optional header) into a profile.

    Raises ProfileParseError with the offending line number for malformed
    rows, non-monotone times or an empty file.
    """
    name = getattr(source, "name", None) or str(source)
    if hasattr(source, "read"):
        lines = source.read().splitlines()  # type: ignore[union-attr]
    else:
        p = Path(source)
        if not p.exists():
            raise FileNotFoundError(f"profile file not found: {p}")
        lines = p.read_text().splitlines()

    times: list[float] = []
    losses: list[float] = []
    for lineno, line in enumerate(lines, start=1):
        row = line.strip()
        if not row:
            continue
        if lineno == 1 and row.lower().replace(" ", "") == "t_s,loss_db":
            continue
        parts = row.split(",")
        try:
            if len(parts) != 2:
                raise ValueError
            t, loss = float(parts[0]), float(parts[1])
            if not (math.isfinite(t) and math.isfinite(loss)):
                raise ValueError
        except ValueError:
            raise ProfileParseError(f"{name}:{lineno}: malformed row {row!r}") from None
        if times and t <= times[-1]:
            raise ProfileParseError(
                f"{name}:{lineno}: sample time {t} not after previous {times[-1]}"
            )
        times.append(t)
        losses.append(loss)
    if not times:
        raise ProfileParseError(f"{name}: no profile samples found")
    return OverpassProfile(np.array(times), np.array(losses), correction_db)


def save_profile(profile: OverpassProfile, path: str | Path) -> None:
    with open(path, "w") as f:
        f.write("t_s,loss_db\n")
        for t, loss in zip(profile.times, profile.loss_db):
            f.write(f"{t:.6g},{loss:.6g}\n")


def synthetic_pass_profile(
    duration_s: float = 300.0,
    step_s: float = 1.0,
    min_elevation_deg: float = 14.5,
    max_elevation_deg: float = 76.0,
    loss_at_min_db: float = 52.0,
    loss_at_max_db: float = 41.0,
    altitude_km: float = 500.0,
    correction_db: float = 0.0,
) -> OverpassProfile:
    """Loss profile of a circular-orbit LEO pass over a ground station.

    Elevation versus time follows great-circle pass geometry for the given
    altitude, scaled so the pass spends ``duration_s`` above the minimum
    elevation, culminating at ``max_elevation_deg`` mid-pass.  Loss is
    linearly interpolated in dB between the two elevation anchor points
    (52 dB at 14.5 deg and 41 dB at 76 deg by default).
    """
    if duration_s <= 0 or step_s <= 0:
        raise ValueError("duration_s and step_s must be > 0")
    if not (0 < min_elevation_deg < max_elevation_deg <= 90.0):
        raise ValueError("require 0 < min elevation < max elevation <= 90")

    rho = EARTH_RADIUS_KM / (EARTH_RADIUS_KM + altitude_km)

    def central_angle(elev_deg: float) -> float:
        e = math.radians(elev_deg)
        return math.pi / 2.0 - e - math.asin(rho * math.cos(e))

    def elevation_deg(psi: float) -> float:
        return math.degrees(math.atan2(math.cos(psi) - rho, math.sin(psi)))

    psi_min = central_angle(max_elevation_deg)   # culmination, closest approach
    psi_edge = central_angle(min_elevation_deg)
    # Angular rate scaled so the edge elevation is reached at t=0 and t=T.
    half_arc = math.acos(min(1.0, math.cos(psi_edge) / math.cos(psi_min)))
    omega = half_arc / (duration_s / 2.0)

    times = np.arange(0.0, duration_s + step_s * 1e-9, step_s)
    loss = np.empty_like(times)
    slope = (loss_at_max_db - loss_at_min_db) / (max_elevation_deg - min_elevation_deg)
    for k, t in enumerate(times):
        x = omega * (t - duration_s / 2.0)
        cos_psi = math.cos(psi_min) * math.cos(x)
        psi = math.acos(min(1.0, max(-1.0, cos_psi)))
        elev = min(max(elevation_deg(psi), min_elevation_deg), max_elevation_deg)
        loss[k] = loss_at_min_db + slope * (elev - min_elevation_deg)
    return OverpassProfile(times, loss, correction_db)


@dataclass(frozen=True)
class OverpassResult:
    """SKR time series and integrated key for one pass."""

    times: np.ndarray = field(repr=False)     # s
    skr: np.ndarray = field(repr=False)       # bits/s per sample
    peak_skr: float                           # bits/s
    total_key_bits: float
    pump_mw: np.ndarray | None = field(default=None, repr=False)
    window_s: np.ndarray | None = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        d = {
            "t_s": self.times.tolist(),
            "skr_bps": self.skr.tolist(),
            "total_key_bits": self.total_key_bits,
            "peak_skr_bps": self.peak_skr,
        }
        if self.pump_mw is not None:
            d["pump_mw"] = self.pump_mw.tolist()
        if self.window_s is not None:
            d["window_ps"] = (np.asarray(self.window_s) * 1e12).tolist()
        return d


def _link_at(link: LinkParams, loss_db: float,
             pump_mw: float | None = None,
             window_s: float | None = None) -> LinkParams:
    src = link.source if pump_mw is None else replace(link.source, pump_power=pump_mw)
    ch = replace(
        link.channel,
        freespace_loss_db=loss_db,
        coincidence_window=link.channel.coincidence_window if window_s is None else window_s,
    )
    return replace(link, source=src, channel=ch)


def estimate_at_loss(link: LinkParams, loss_db: float) -> RateEstimate:
    """Rate estimate with the up-link loss overridden."""
    return estimate(_link_at(link, loss_db))


def integrate_pass(profile: OverpassProfile, link: LinkParams) -> OverpassResult:
    """Fixed-settings SKR over the pass and its trapezoidal key integral."""
    losses = profile.corrected_loss_db()
    skr = np.array([estimate_at_loss(link, L).skr for L in losses])
    return OverpassResult(
        times=profile.times,
        skr=skr,
        peak_skr=float(skr.max()),
        total_key_bits=float(_trapezoid(skr, profile.times)),
    )


def _refine_axis(grid: np.ndarray, best: int, n: int) -> np.ndarray:
    """Log-spaced sub-grid between the neighbors of the current best point."""
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    if lo == hi:
        return np.array([lo])
    return np.geomspace(lo, hi, n)


def _optimize_point(
    link: LinkParams,
    loss_db: float,
    pump_grid: np.ndarray,
    window_grid: np.ndarray,
    rounds: int = 3,
    refine_n: int = 9,
) -> tuple[float, float, float]:
    """Maximize SKR over (pump, window) at one loss; returns (skr, pump, window)."""

    def scan(pumps: np.ndarray, windows: np.ndarray) -> tuple[float, int, int]:
        best = (-1.0, 0, 0)
        for ip, p in enumerate(pumps):
            for iw, w in enumerate(windows):
                s = estimate(_link_at(link, loss_db, pump_mw=p, window_s=w)).skr
                if s > best[0]:
                    best = (s, ip, iw)
        return best

    pumps, windows = pump_grid, window_grid
    skr, ip, iw = scan(pumps, windows)
    for _ in range(rounds):
        pumps = _refine_axis(pumps, ip, refine_n)
        windows = _refine_axis(windows, iw, refine_n)
        skr, ip, iw = scan(pumps, windows)
    return skr, float(pumps[ip]), float(windows[iw])


def optimize_pass(
    profile: OverpassProfile,
    link: LinkParams,
    pump_bounds_mw: tuple[float, float],
    window_bounds_s: tuple[float, float],
    coarse_n: int = 16,
) -> OverpassResult:
    """Per-sample optimization of pump power and coincidence window.

    A log-spaced coarse grid over both axes is refined locally for three
    rounds.  The link's own operating point is always kept as a candidate
    when it lies within the bounds, so the result dominates
    :func:`integrate_pass` pointwise.
    """
    p_lo, p_hi = map(float, pump_bounds_mw)
    w_lo, w_hi = map(float, window_bounds_s)
    if not (0 < p_lo <= p_hi) or not (0 < w_lo <= w_hi):
        raise ValueError("bounds must be positive with lo <= hi")
    pump_grid = np.geomspace(p_lo, p_hi, 1 if p_lo == p_hi else coarse_n)
    window_grid = np.geomspace(w_lo, w_hi, 1 if w_lo == w_hi else coarse_n)

    fixed_pump = link.source.pump_power
    fixed_window = link.channel.coincidence_window
    fixed_in_bounds = (p_lo <= fixed_pump <= p_hi) and (w_lo <= fixed_window <= w_hi)

    losses = profile.corrected_loss_db()
    skr = np.empty(len(profile))
    pump = np.empty(len(profile))
    window = np.empty(len(profile))
    for k, loss in enumerate(losses):
        s, p, w = _optimize_point(link, loss, pump_grid, window_grid)
        if fixed_in_bounds:
            s_fixed = estimate(_link_at(link, loss)).skr
            if s_fixed > s:
                s, p, w = s_fixed, fixed_pump, fixed_window
        skr[k], pump[k], window[k] = s, p, w
    return OverpassResult(
        times=profile.times,
        skr=skr,
        peak_skr=float(skr.max()),
        total_key_bits=float(_trapezoid(skr, profile.times)),
        pump_mw=pump,
        window_s=window,
    )


def max_tolerable_loss_db(
    link: LinkParams,
    resolution_db: float = 0.05,
    max_loss_db: float = 200.0,
) -> float:
    """Largest added up-link loss with SKR > 0, bisected to ``resolution_db``.

    Returns NaN when the SKR is already zero at 0 dB and +inf when it stays
    positive all the way to ``max_loss_db`` (e.g. with no dark counts).
    """
    if estimate_at_loss(link, 0.0).skr <= 0:
        return math.nan
    lo, hi = 0.0, None
    step = 5.0
    probe = step
    while probe <= max_loss_db:
        if estimate_at_loss(link, probe).skr > 0:
            lo = probe
        else:
            hi = probe
            break
        probe += step
    if hi is None:
        return math.inf
    while hi - lo > resolution_db:
        mid = 0.5 * (lo + hi)
        if estimate_at_loss(link, mid).skr > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def state_fidelity(link: LinkParams) -> float:
    """Overlap of the link's noisy state with the ideal entangled state."""
    return 1.0 - link.source.intrinsic_qber - link.source.intrinsic_qx


def _link_with_fidelity(link: LinkParams, fidelity: float) -> LinkParams:
    base = state_fidelity(link)
    if not (0.0 <= fidelity <= 1.0):
        raise ValueError("fidelity must be in [0, 1]")
    if base >= 1.0:
        if fidelity < 1.0:
            raise ValueError("baseline state is already perfect; cannot degrade it")
        return link
    scale = (1.0 - fidelity) / (1.0 - base)
    return replace(
        link,
        source=replace(
            link.source,
            intrinsic_qber=link.source.intrinsic_qber * scale,
            intrinsic_qx=link.source.intrinsic_qx * scale,
        ),
    )


def _link_with_heralding_scale(link: LinkParams, scale: float) -> LinkParams:
    src = link.source
    h_sat = src.heralding_sat * scale
    h_fib = src.heralding_fib * scale
    if not (0 < h_sat <= 1.0 and 0 < h_fib <= 1.0):
        raise ValueError(f"heralding scale {scale} pushes efficiencies outside (0, 1]")
    # Same created-pair rate: detected brightness grows with both heralding
    # improvements.
    return replace(
        link,
        source=replace(
            src,
            heralding_sat=h_sat,
            heralding_fib=h_fib,
            brightness=src.brightness * scale * scale,
        ),
    )


def loss_budget_sweep(
    link: LinkParams,
    fidelity_grid: Sequence[float],
    heralding_scale_grid: Sequence[float],
    resolution_db: float = 0.05,
) -> np.ndarray:
    """Max tolerable loss (dB) over (state fidelity, heralding scale).

    Fidelity rescales both intrinsic error rates toward zero (1.0 = perfect
    state); the heralding scale multiplies both arm efficiencies at a fixed
    created-pair rate.  Entry [i, j] pairs fidelity_grid[i] with
    heralding_scale_grid[j].
    """
    fids = list(fidelity_grid)
    scales = list(heralding_scale_grid)
    if not fids or not scales:
        raise ValueError("grids must not be empty")
    out = np.empty((len(fids), len(scales)))
    for i, f in enumerate(fids):
        for j, k in enumerate(scales):
            mod = _link_with_heralding_scale(_link_with_fidelity(link, f), k)
            out[i, j] = max_tolerable_loss_db(mod, resolution_db=resolution_db)
    return out
