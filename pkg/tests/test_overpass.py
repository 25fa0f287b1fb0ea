import io
import math
from dataclasses import replace

import numpy as np
import pytest

from uplink_qkd.overpass import (
    OverpassProfile,
    ProfileParseError,
    estimate_at_loss,
    integrate_pass,
    load_profile,
    loss_budget_sweep,
    max_tolerable_loss_db,
    optimize_pass,
    save_profile,
    state_fidelity,
    synthetic_pass_profile,
)
from uplink_qkd.params import reference_link
from uplink_qkd.rates import estimate


class TestProfileType:
    def test_requires_strictly_increasing_times(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            OverpassProfile(np.array([0.0, 1.0, 1.0]), np.array([50.0, 49.0, 48.0]))

    def test_correction_clamps_at_zero(self):
        prof = OverpassProfile(np.array([0.0, 1.0]), np.array([5.0, 50.0]), correction_db=10.0)
        assert prof.corrected_loss_db().tolist() == [0.0, 40.0]

    def test_rejects_empty(self):
        with pytest.raises(ValueError, match="at least one"):
            OverpassProfile(np.array([]), np.array([]))


class TestLoadProfile:
    def test_two_line_file(self):
        prof = load_profile(io.StringIO("0,52\n300,41\n"))
        assert len(prof) == 2
        assert prof.loss_db.tolist() == [52.0, 41.0]
        assert prof.correction_db == 0.0

    def test_header_accepted(self):
        prof = load_profile(io.StringIO("t_s,loss_db\n0,52\n300,41\n"))
        assert len(prof) == 2

    def test_correction_recorded(self):
        prof = load_profile(io.StringIO("0,52\n300,41\n"), correction_db=8.9)
        assert prof.corrected_loss_db()[0] == pytest.approx(43.1)
        assert prof.corrected_loss_db()[1] == pytest.approx(32.1)

    def test_empty_file_rejected(self):
        with pytest.raises(ProfileParseError, match="no profile samples"):
            load_profile(io.StringIO(""))

    def test_malformed_row_names_line(self):
        with pytest.raises(ProfileParseError, match=":2:"):
            load_profile(io.StringIO("0,52\nbanana\n"))

    def test_non_monotone_time_names_line(self):
        with pytest.raises(ProfileParseError, match=":3:"):
            load_profile(io.StringIO("0,52\n10,50\n5,49\n"))

    def test_round_trip_via_file(self, tmp_path):
        prof = synthetic_pass_profile(step_s=10.0)
        path = tmp_path / "pass.csv"
        save_profile(prof, path)
        back = load_profile(path)
        assert np.allclose(back.times, prof.times)
        assert np.allclose(back.loss_db, prof.loss_db, atol=1e-4)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_profile(tmp_path / "nope.csv")


class TestSyntheticProfile:
    def test_anchor_losses_at_edges_and_culmination(self):
        prof = synthetic_pass_profile()
        assert prof.times[0] == 0.0
        assert prof.times[-1] == pytest.approx(300.0)
        assert prof.loss_db[0] == pytest.approx(52.0, abs=0.01)
        assert prof.loss_db[-1] == pytest.approx(52.0, abs=0.01)
        assert prof.loss_db.min() == pytest.approx(41.0, abs=0.01)
        mid = len(prof) // 2
        assert prof.loss_db[mid] == pytest.approx(41.0, abs=0.05)

    def test_symmetric_and_single_dip(self):
        prof = synthetic_pass_profile(step_s=5.0)
        loss = prof.loss_db
        assert np.allclose(loss, loss[::-1], atol=1e-9)
        mid = len(loss) // 2
        assert np.all(np.diff(loss[: mid + 1]) <= 1e-12)
        assert np.all(np.diff(loss[mid:]) >= -1e-12)

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValueError):
            synthetic_pass_profile(duration_s=0.0)
        with pytest.raises(ValueError):
            synthetic_pass_profile(min_elevation_deg=80.0, max_elevation_deg=76.0)


class TestIntegratePass:
    def test_constant_profile_is_skr_times_duration(self):
        link = reference_link(pump_mw=5.0)
        skr = estimate_at_loss(link, 30.0).skr
        prof = OverpassProfile(np.linspace(0.0, 120.0, 13), np.full(13, 30.0))
        result = integrate_pass(prof, link)
        assert result.total_key_bits == pytest.approx(skr * 120.0, rel=1e-12)
        assert result.peak_skr == skr

    def test_profile_above_shoulder_yields_zero(self):
        link = reference_link()
        prof = OverpassProfile(np.array([0.0, 100.0]), np.array([90.0, 95.0]))
        assert integrate_pass(prof, link).total_key_bits == 0.0

    def test_total_is_trapezoid_of_series(self):
        link = reference_link(pump_mw=5.0)
        prof = synthetic_pass_profile(correction_db=8.9, step_s=7.0)
        result = integrate_pass(prof, link)
        expected = np.trapezoid(result.skr, result.times)
        assert result.total_key_bits == pytest.approx(expected, rel=1e-9)
        assert result.peak_skr == result.skr.max()

    def test_monotone_in_correction(self):
        link = reference_link(pump_mw=5.0)
        prof = synthetic_pass_profile(step_s=5.0)
        totals = [integrate_pass(prof.with_correction(c), link).total_key_bits
                  for c in (0.0, 3.0, 5.9, 8.9, 12.0)]
        assert all(b >= a for a, b in zip(totals, totals[1:]))


class TestOptimizePass:
    def test_single_sample_matches_dense_grid(self):
        link = reference_link(pump_mw=5.0)
        prof = OverpassProfile(np.array([0.0]), np.array([35.0]))
        bounds_p = (0.5, 50.0)
        bounds_w = (100e-12, 2e-9)
        result = optimize_pass(prof, link, bounds_p, bounds_w)
        dense = max(
            estimate(replace(
                link,
                source=replace(link.source, pump_power=p),
                channel=replace(link.channel, freespace_loss_db=35.0,
                                coincidence_window=w),
            )).skr
            for p in np.geomspace(*bounds_p, 100)
            for w in np.geomspace(*bounds_w, 100)
        )
        assert result.skr[0] == pytest.approx(dense, rel=1e-3)
        assert result.pump_mw is not None and result.window_s is not None

    def test_collapsed_bounds_equal_integrate(self):
        link = reference_link(pump_mw=5.0)
        prof = synthetic_pass_profile(correction_db=8.9, step_s=25.0)
        fixed = integrate_pass(prof, link)
        pinned = optimize_pass(
            prof, link,
            (link.source.pump_power, link.source.pump_power),
            (link.channel.coincidence_window, link.channel.coincidence_window),
        )
        assert np.array_equal(pinned.skr, fixed.skr)
        assert pinned.total_key_bits == fixed.total_key_bits

    def test_dominates_fixed_settings_pointwise(self):
        link = reference_link(pump_mw=5.0)
        prof = synthetic_pass_profile(correction_db=8.9, step_s=20.0)
        fixed = integrate_pass(prof, link)
        opt = optimize_pass(prof, link, (0.5, 50.0), (100e-12, 2e-9))
        assert np.all(opt.skr >= fixed.skr * (1 - 1e-6))
        assert opt.total_key_bits >= fixed.total_key_bits

    def test_settings_stay_within_bounds(self):
        link = reference_link(pump_mw=5.0)
        prof = synthetic_pass_profile(correction_db=8.9, step_s=50.0)
        opt = optimize_pass(prof, link, (1.0, 20.0), (200e-12, 1.5e-9))
        assert np.all((opt.pump_mw >= 1.0) & (opt.pump_mw <= 20.0))
        assert np.all((opt.window_s >= 200e-12) & (opt.window_s <= 1.5e-9))

    def test_rejects_bad_bounds(self):
        link = reference_link()
        prof = OverpassProfile(np.array([0.0]), np.array([35.0]))
        with pytest.raises(ValueError):
            optimize_pass(prof, link, (0.0, 1.0), (1e-10, 1e-9))
        with pytest.raises(ValueError):
            optimize_pass(prof, link, (2.0, 1.0), (1e-10, 1e-9))


class TestLossBudget:
    def test_baseline_scale_gives_zero_gain(self):
        link = reference_link()
        base_fid = state_fidelity(link)
        table = loss_budget_sweep(link, [base_fid], [1.0])
        assert table.shape == (1, 1)
        assert table[0, 0] == pytest.approx(max_tolerable_loss_db(link), abs=1e-12)

    def test_better_state_and_heralding_extend_budget(self):
        link = reference_link()
        base_fid = state_fidelity(link)
        table = loss_budget_sweep(link, [base_fid, 1.0], [1.0, 2.0])
        assert table[1, 0] > table[0, 0]          # perfect state helps
        assert table[0, 1] > table[0, 0]          # doubled heralding helps

    def test_budget_stable_under_resolution_halving(self):
        link = reference_link()
        a = max_tolerable_loss_db(link, resolution_db=0.05)
        b = max_tolerable_loss_db(link, resolution_db=0.025)
        assert abs(a - b) < 0.1

    def test_no_darks_means_unbounded_budget(self):
        link = reference_link(dark_sat_cps_per_det=0.0, dark_fib_cps_per_det=0.0)
        assert math.isinf(max_tolerable_loss_db(link, max_loss_db=120.0))

    def test_dead_link_returns_nan(self):
        link = reference_link()
        dead = replace(link, source=replace(link.source, brightness=0.0))
        assert math.isnan(max_tolerable_loss_db(dead))

    def test_heralding_scale_validated(self):
        link = reference_link()
        with pytest.raises(ValueError, match="heralding scale"):
            loss_budget_sweep(link, [state_fidelity(link)], [6.0])
