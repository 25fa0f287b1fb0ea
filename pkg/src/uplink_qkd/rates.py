"""Closed-form link and key-rate model.

From a :class:`~uplink_qkd.params.LinkParams` operating point this module
predicts singles, true and accidental coincidence rates, both error rates
and the asymptotic secure key rate

    SKR = CC/2 * (1 - h(QBER) - h(Qx)),

where CC is the total (pre-sifting) coincidence rate, the factor 1/2 is the
passive 50/50 basis-sifting factor and h is the binary entropy.

Model outline (pair rate R = brightness * pump, detected at zero added loss):

* arm photon rates:  P_sat = (R / heralding_fib) * 10^(-L_fs/10),
  P_fib = (R / heralding_sat) * 10^(-atten*km/10)
* singles S_i = P_i + dark_i; a non-paralyzable dead time is applied per
  detector channel (4 per party): each channel at S/4 throttles to
  (S/4)/(1 + (S/4)*tau)
* coincidence peak width: detector jitters, tagger jitter and the
  uniform-equivalent dispersion sigma (broadening/sqrt(12)) in quadrature;
  the window keeps erf(tcc / (2*sqrt(2)*sigma)) of true pairs
* true pairs additionally survive both parties' dead times with the same
  per-channel throughput factor
* accidentals ACC = S_sat_meas * S_fib_meas * tcc, error weight 0.5
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .params import N_CHANNELS, TAGGER_JITTER_S, LinkParams


def binary_entropy(p: float) -> float:
    """Binary entropy h(p) in bits, with h(0) = h(1) = 0."""
    if not (0.0 <= p <= 1.0):
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def window_efficiency(tcc: float, sigma_total: float) -> float:
    """Fraction of a Gaussian coincidence peak inside a centered window.

    Closed window |dt| <= tcc/2 on a zero-mean Gaussian with standard
    deviation ``sigma_total``; equals erf(tcc / (2*sqrt(2)*sigma_total)).
    """
    if tcc < 0 or sigma_total < 0:
        raise ValueError("tcc and sigma_total must be >= 0")
    if sigma_total == 0.0:
        return 1.0
    return math.erf(tcc / (2.0 * math.sqrt(2.0) * sigma_total))


def dispersion_sigma(fiber_length_km: float, dispersion_ps_per_km: float) -> float:
    """Total chromatic-dispersion temporal broadening, in seconds.

    Linear in fibre length: 40 ps/km accumulates to 400 ps over 10 km.  The
    rate model treats this width as a uniform spread and folds its
    equivalent sigma (width / sqrt(12)) into the timing quadrature.
    """
    if fiber_length_km < 0 or dispersion_ps_per_km < 0:
        raise ValueError("fibre length and dispersion coefficient must be >= 0")
    return fiber_length_km * dispersion_ps_per_km * 1e-12


def _channel_throughput(party_rate: float, dead_time: float) -> float:
    """Per-channel dead-time throughput factor 1/(1 + (S/4)*tau)."""
    return 1.0 / (1.0 + (party_rate / N_CHANNELS) * dead_time)


def timing_sigma(link: LinkParams, include_dispersion: bool = True) -> float:
    """Quadrature width of the coincidence peak for this operating point."""
    ch = link.channel
    s_disp = 0.0
    if include_dispersion:
        s_disp = dispersion_sigma(ch.fiber_length_km, ch.dispersion_ps_per_km) / math.sqrt(12.0)
    return math.sqrt(
        link.det_sat.jitter_sigma ** 2
        + link.det_fib.jitter_sigma ** 2
        + s_disp ** 2
        + TAGGER_JITTER_S ** 2
    )


@dataclass(frozen=True)
class RateEstimate:
    """Predicted per-second observables for one operating point."""

    singles_sat: float
    singles_fib: float
    cc_true: float
    cc_accidental: float
    cc_total: float
    qber: float
    qx: float
    skr: float

    def to_json_dict(self) -> dict:
        return {
            "singles_sat": self.singles_sat,
            "singles_fib": self.singles_fib,
            "cc_true": self.cc_true,
            "cc_accidental": self.cc_accidental,
            "cc_total": self.cc_total,
            "qber": self.qber,
            "qx": self.qx,
            "skr_bps": self.skr,
        }


def skr_from_counts(cc_rate: float, qber: float, qx: float) -> float:
    """Asymptotic secure key rate CC/2 * (1 - h(QBER) - h(Qx)), clamped at 0."""
    if not math.isfinite(cc_rate) or cc_rate < 0:
        raise ValueError(f"coincidence rate must be finite and >= 0, got {cc_rate}")
    fraction = 1.0 - binary_entropy(qber) - binary_entropy(qx)
    return max(0.0, 0.5 * cc_rate * fraction)


def qber_from_counts(counts: Mapping[str, float] | np.ndarray) -> float:
    """Anti-correlated fraction of a 2x2 coincidence table over {H,V}x{H,V}.

    Accepts either a mapping with keys 'HH', 'HV', 'VH', 'VV' or an
    array-like [[HH, HV], [VH, VV]].
    """
    if isinstance(counts, Mapping):
        table = np.array(
            [[counts["HH"], counts["HV"]], [counts["VH"], counts["VV"]]],
            dtype=float,
        )
    else:
        table = np.asarray(counts, dtype=float)
        if table.shape != (2, 2):
            raise ValueError(f"counts table must be 2x2, got shape {table.shape}")
    if np.any(table < 0):
        raise ValueError("counts must be >= 0")
    total = table.sum()
    if total == 0:
        raise ValueError("counts table is empty; error rate undefined")
    # Anti-correlated fraction, computed directly for exact small-count cases.
    return float((table[0, 1] + table[1, 0]) / total)


def estimate(link: LinkParams) -> RateEstimate:
    """Analytic rate prediction for one operating point."""
    src, ch = link.source, link.channel
    eta_sat = 10.0 ** (-ch.freespace_loss_db / 10.0)
    eta_fib = 10.0 ** (-(ch.fiber_atten_db_per_km * ch.fiber_length_km) / 10.0)

    pair_rate = src.pair_rate
    p_sat = (pair_rate / src.heralding_fib) * eta_sat if pair_rate > 0 else 0.0
    p_fib = (pair_rate / src.heralding_sat) * eta_fib if pair_rate > 0 else 0.0

    s_sat = p_sat + link.det_sat.dark_rate
    s_fib = p_fib + link.det_fib.dark_rate
    g_sat = _channel_throughput(s_sat, link.det_sat.dead_time)
    g_fib = _channel_throughput(s_fib, link.det_fib.dead_time)
    s_sat_meas = s_sat * g_sat
    s_fib_meas = s_fib * g_fib

    eta_w = window_efficiency(ch.coincidence_window, timing_sigma(link))
    cc_true = pair_rate * eta_sat * eta_fib * eta_w * g_sat * g_fib
    cc_acc = s_sat_meas * s_fib_meas * ch.coincidence_window
    cc_total = cc_true + cc_acc

    if cc_total > 0:
        e_z = src.intrinsic_qber
        e_x = src.intrinsic_qx
        qber = (e_z * cc_true + 0.5 * cc_acc) / cc_total
        qx = (e_x * cc_true + 0.5 * cc_acc) / cc_total
    else:
        qber = qx = 0.5
    qber = min(max(qber, 0.0), 0.5)
    qx = min(max(qx, 0.0), 0.5)

    return RateEstimate(
        singles_sat=s_sat_meas,
        singles_fib=s_fib_meas,
        cc_true=cc_true,
        cc_accidental=cc_acc,
        cc_total=cc_total,
        qber=qber,
        qx=qx,
        skr=skr_from_counts(cc_total, qber, qx),
    )


def _check_grid(name: str, grid: Sequence[float]) -> list[float]:
    vals = [float(v) for v in grid]
    if not vals:
        raise ValueError(f"{name} must not be empty")
    if any(b < a for a, b in zip(vals, vals[1:])):
        raise ValueError(f"{name} must be ascending")
    return vals


def loss_shoulder_sweep(
    link: LinkParams,
    loss_grid_db: Sequence[float],
    pump_grid_mw: Sequence[float],
) -> list[tuple[float, float, RateEstimate]]:
    """Rate estimates over an (added loss, pump power) grid.

    Returns rows (loss_db, pump_mw, estimate) in loss-major order.
    """
    losses = _check_grid("loss_grid_db", loss_grid_db)
    pumps = _check_grid("pump_grid_mw", pump_grid_mw)
    rows = []
    for loss in losses:
        for pump in pumps:
            mod = replace(
                link,
                source=replace(link.source, pump_power=pump),
                channel=replace(link.channel, freespace_loss_db=loss),
            )
            rows.append((loss, pump, estimate(mod)))
    return rows


def skr_grid(
    link: LinkParams,
    loss_grid_db: Sequence[float],
    fiber_grid_km: Sequence[float],
    dispersion_on: bool = True,
) -> np.ndarray:
    """SKR over (added loss, fibre length); shape (len(loss), len(fiber)).

    With ``dispersion_on`` false the dispersion coefficient is zeroed, so
    the timing width no longer grows with fibre length (attenuation still
    applies).
    """
    losses = _check_grid("loss_grid_db", loss_grid_db)
    fibers = _check_grid("fiber_grid_km", fiber_grid_km)
    disp = link.channel.dispersion_ps_per_km if dispersion_on else 0.0
    out = np.zeros((len(losses), len(fibers)))
    for i, loss in enumerate(losses):
        for j, km in enumerate(fibers):
            mod = replace(
                link,
                channel=replace(
                    link.channel,
                    freespace_loss_db=loss,
                    fiber_length_km=km,
                    dispersion_ps_per_km=disp,
                ),
            )
            out[i, j] = estimate(mod).skr
    return out
