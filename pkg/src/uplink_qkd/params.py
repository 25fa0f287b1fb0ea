"""System parameter types for the up-link QKD emulator.

All rates are per second, times in seconds, powers in mW and losses in dB
unless a field name says otherwise.  Parameter objects are frozen; derive
variants with :func:`dataclasses.replace`.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

# Per-party detector channels behind the passive basis analyzer:
# 0 = H (Z basis), 1 = V (Z basis), 2 = D (X basis), 3 = A (X basis).
N_CHANNELS = 4

# Time-tagger timing jitter (Gaussian sigma, seconds); one shared tagging
# unit, entering the coincidence-peak width once.
TAGGER_JITTER_S = 6e-12


def _require(cond: bool, field: str, msg: str) -> None:
    if not cond:
        raise ValueError(f"{field}: {msg}")


def _finite(x: float) -> bool:
    return isinstance(x, (int, float)) and math.isfinite(x)


@dataclass(frozen=True)
class SourceParams:
    """Entangled-pair source operating point.

    ``brightness`` is the detected pair (coincidence) rate per mW of pump at
    zero added channel loss; intrinsic collection and detection efficiencies
    are folded into it.  ``heralding_sat``/``heralding_fib`` are the per-arm
    heralding efficiencies (probability that an arm's photon is detected
    given its partner was), which set the singles-to-coincidence ratio.
    ``intrinsic_qber``/``intrinsic_qx`` are the Z- and X-basis error
    probabilities of the emitted state itself.
    """

    brightness: float          # detected pairs / s / mW
    pump_power: float          # mW
    heralding_sat: float       # 0-1, up-link arm
    heralding_fib: float       # 0-1, fibre arm
    intrinsic_qber: float      # 0-0.5
    intrinsic_qx: float        # 0-0.5

    def __post_init__(self) -> None:
        for name in ("brightness", "pump_power", "heralding_sat",
                     "heralding_fib", "intrinsic_qber", "intrinsic_qx"):
            _require(_finite(getattr(self, name)), name, "must be finite")
        _require(self.brightness >= 0, "brightness", "must be >= 0")
        _require(self.pump_power >= 0, "pump_power", "must be >= 0")
        for name in ("heralding_sat", "heralding_fib"):
            v = getattr(self, name)
            _require(0.0 <= v <= 1.0, name, "must be in [0, 1]")
            if self.brightness * self.pump_power > 0:
                _require(v > 0.0, name, "must be > 0 for a bright source")
        for name in ("intrinsic_qber", "intrinsic_qx"):
            v = getattr(self, name)
            _require(0.0 <= v <= 0.5, name, "must be in [0, 0.5]")

    @property
    def pair_rate(self) -> float:
        """Detected pair rate at zero added channel loss (pairs/s)."""
        return self.brightness * self.pump_power


@dataclass(frozen=True)
class DetectorParams:
    """One party's detector bank (four channels behind the analyzer).

    ``dark_rate`` is the party total over its four channels; ``dead_time``
    and ``jitter_sigma`` apply per channel.
    """

    efficiency: float          # 0-1, informational (folded into brightness)
    dark_rate: float           # counts/s, party total
    jitter_sigma: float        # s, Gaussian sigma
    dead_time: float           # s, non-paralyzable, per channel

    def __post_init__(self) -> None:
        for name in ("efficiency", "dark_rate", "jitter_sigma", "dead_time"):
            v = getattr(self, name)
            _require(_finite(v), name, "must be finite")
            _require(v >= 0, name, "must be >= 0")
        _require(self.efficiency <= 1.0, "efficiency", "must be <= 1")


@dataclass(frozen=True)
class ChannelParams:
    """Transmission channels and the coincidence window applied after them."""

    freespace_loss_db: float       # dB added on the up-link arm
    fiber_length_km: float         # km on the telecom arm
    fiber_atten_db_per_km: float   # dB/km
    dispersion_ps_per_km: float    # ps of temporal broadening per km
    coincidence_window: float      # s, full window width

    def __post_init__(self) -> None:
        for name in ("freespace_loss_db", "fiber_length_km",
                     "fiber_atten_db_per_km", "dispersion_ps_per_km",
                     "coincidence_window"):
            v = getattr(self, name)
            _require(_finite(v), name, "must be finite")
            _require(v >= 0, name, "must be >= 0")


@dataclass(frozen=True)
class LinkParams:
    """Full operating point: source, both detector banks, channels."""

    source: SourceParams
    det_sat: DetectorParams
    det_fib: DetectorParams
    channel: ChannelParams

    def to_json_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_json_dict(d: dict) -> "LinkParams":
        try:
            return LinkParams(
                source=SourceParams(**d["source"]),
                det_sat=DetectorParams(**d["det_sat"]),
                det_fib=DetectorParams(**d["det_fib"]),
                channel=ChannelParams(**d["channel"]),
            )
        except KeyError as e:
            raise ValueError(f"missing parameter section {e.args[0]!r}") from e
        except TypeError as e:
            raise ValueError(f"bad parameter file structure: {e}") from e


def reference_link(
    pump_mw: float = 1.0,
    freespace_loss_db: float = 0.0,
    fiber_km: float = 10.0,
    window_s: float = 1e-9,
    dark_sat_cps_per_det: float = 250.0,
    dark_fib_cps_per_det: float = 100.0,
) -> LinkParams:
    """Measured reference operating point of the emulated system.

    Source: 223 kHz/mW detected brightness, 19.3 % symmetric heralding,
    1.7 % / 3.9 % intrinsic Z/X errors.  Up-link arm: Si-APDs (350 ps jitter,
    30 ns dead time); fibre arm: SNSPDs (50 ps jitter, 25 ns dead time).
    Dark rates are quoted per detector and scaled to the four-channel party
    total.  Fibre: 0.2 dB/km attenuation and 40 ps/km effective dispersion
    broadening at the telecom wavelength.
    """
    return LinkParams(
        source=SourceParams(
            brightness=223e3,
            pump_power=pump_mw,
            heralding_sat=0.193,
            heralding_fib=0.193,
            intrinsic_qber=0.017,
            intrinsic_qx=0.039,
        ),
        det_sat=DetectorParams(
            efficiency=0.60,
            dark_rate=N_CHANNELS * dark_sat_cps_per_det,
            jitter_sigma=350e-12,
            dead_time=30e-9,
        ),
        det_fib=DetectorParams(
            efficiency=0.80,
            dark_rate=N_CHANNELS * dark_fib_cps_per_det,
            jitter_sigma=50e-12,
            dead_time=25e-9,
        ),
        channel=ChannelParams(
            freespace_loss_db=freespace_loss_db,
            fiber_length_km=fiber_km,
            fiber_atten_db_per_km=0.2,
            dispersion_ps_per_km=40.0,
            coincidence_window=window_s,
        ),
    )


def load_link(path: str | Path) -> LinkParams:
    """Load link parameters from a JSON file (see ``LinkParams.to_json_dict``)."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"parameter file not found: {p}")
    with p.open() as f:
        try:
            d = json.load(f)
        except json.JSONDecodeError as e:
            raise ValueError(f"{p}: not valid JSON ({e})") from e
    return LinkParams.from_json_dict(d)


def save_link(link: LinkParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(link.to_json_dict(), indent=2) + "\n")
