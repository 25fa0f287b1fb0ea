"""Desk-scale emulator for entanglement-based QKD over a satellite up-link.

Analytic rate model, Monte Carlo time-tag synthesis, coincidence counting
and overpass integration/optimization for a BBM92 link with one arm on a
lossy free-space channel and the other on telecom fibre.
"""
from .params import (
    ChannelParams,
    DetectorParams,
    LinkParams,
    SourceParams,
    load_link,
    reference_link,
    save_link,
)
from .states import (
    TwoQubitState,
    basis_error_probability,
    make_phi_plus,
    projection_probability,
    purity,
)
from .rates import (
    RateEstimate,
    binary_entropy,
    dispersion_sigma,
    estimate,
    loss_shoulder_sweep,
    qber_from_counts,
    skr_from_counts,
    skr_grid,
    window_efficiency,
)
from .timetags import (
    TagStream,
    link_state,
    read_qtag,
    read_tags_csv,
    synthesize,
    write_qtag,
    write_tags_csv,
)
from .coincidence import (
    CoincidenceStats,
    CoincidenceSummary,
    InsufficientStatisticsError,
    find_coincidences,
    rescan_windows,
    stats_to_rates,
)
from .overpass import (
    OverpassProfile,
    OverpassResult,
    ProfileParseError,
    integrate_pass,
    load_profile,
    loss_budget_sweep,
    max_tolerable_loss_db,
    optimize_pass,
    save_profile,
    synthetic_pass_profile,
)

__version__ = "0.1.0"
