import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attcal.calibrate import (
    THERMOMETER_CONVENTIONS, OverlapError, WindowError, a_line_from_total, added_noise_from_iq,
    attenuation_profile, calibrate_iq, contamination_fraction, fit_psd_shift, select_fit_window,
    thermometer_attenuation, thermometer_attenuation_from_rabi,
)
from attcal.presets import joule_drive_axis, device_scenario, rf_drive_axis
from attcal.synth import (
    JOULE, RF, RF_REFERENCE, IqRecord, PsdTrace, input_power, noise_floor_std, synth_iq, synth_psd_trace,
)
from attcal.units import PLANCK, db_to_ratio, dbm_to_watts, ratio_to_db

F_DET = 5.496e9
F_SIG = 5.5e9


def pair(sc, noise=False, f_sig=F_SIG, f_det=F_DET):
    joule = synth_psd_trace(sc, JOULE, joule_drive_axis(), f_det, noise=noise)
    rf = synth_psd_trace(sc, RF, rf_drive_axis(), f_det, f_sig, noise=noise)
    return joule, rf


def recover(sc, noise=False, n_boot=0, p_hi=None):
    joule, rf = pair(sc, noise)
    window = select_fit_window(rf, noise_floor_std(sc, F_DET), p_max_override=p_hi)
    fit = fit_psd_shift(joule, rf, window, n_boot=n_boot, seed=sc.rng_seed)
    a_line = ratio_to_db(a_line_from_total(db_to_ratio(fit["a_total_db"]), sc.a_att))
    return float(a_line), fit


def test_window_lower_edge_near_floor_crossing():
    sc = device_scenario(bulkhead=False)
    _, rf = pair(sc)
    lo, hi = select_fit_window(rf, noise_floor_std(sc, F_DET))
    # 5 sigma above the floor, a few dB below where heating matches the floor itself
    assert -32.0 < lo < -24.0
    assert hi == -5.0


def test_window_upper_edge_from_reference():
    sc = device_scenario()
    _, rf = pair(sc)
    ref = synth_psd_trace(sc, RF_REFERENCE, rf_drive_axis(), F_DET, F_SIG, noise=False)
    lo, hi = select_fit_window(rf, noise_floor_std(sc, F_DET), reference=ref)
    assert lo < hi < -5.0


def test_window_override_and_empty():
    sc = device_scenario(bulkhead=False)
    _, rf = pair(sc)
    floor = noise_floor_std(sc, F_DET)
    assert select_fit_window(rf, floor, p_max_override=-8.0)[1] == -8.0
    with pytest.raises(WindowError, match="widen"):
        select_fit_window(rf, floor, p_max_override=-30.0)
    with pytest.raises(WindowError):
        select_fit_window(rf, floor * 1e9)


def test_identical_traces_zero_shift():
    sc = device_scenario(bulkhead=False)
    joule, _ = pair(sc)
    fake_rf = PsdTrace(RF, joule.drive_dbm, joule.added_psd, F_DET, F_SIG)
    fit = fit_psd_shift(joule, fake_rf, (-95.0, -75.0), n_boot=0)
    # cubic smoothing of the reference leaves a few mdB over a 20 dB window
    assert fit["a_total_db"] == pytest.approx(0.0, abs=5e-3)


def test_noise_free_recovery():
    a_line, fit = recover(device_scenario(bulkhead=False))
    assert a_line == pytest.approx(-74.2, abs=0.01)
    assert fit["a_total_db"] == pytest.approx(-74.577142052, abs=0.01)


def test_shift_is_antisymmetric():
    sc = device_scenario(bulkhead=False)
    joule, rf = pair(sc)
    forward = fit_psd_shift(joule, rf, (-20.0, -5.0), n_boot=0)["a_total_db"]
    # swapping roles: the joule trace seen in the rf frame needs the opposite shift
    j_as_rf = PsdTrace(RF, joule.drive_dbm, joule.added_psd, F_DET, F_SIG)
    rf_as_j = PsdTrace(JOULE, dbm_to_watts(rf.drive), rf.added_psd, F_DET)
    lo, hi = -20.0 + forward, -5.0 + forward
    backward = fit_psd_shift(rf_as_j, j_as_rf, (lo, hi), n_boot=0)["a_total_db"]
    assert backward == pytest.approx(-forward, abs=0.01)


def test_too_few_points_overlap():
    sc = device_scenario(bulkhead=False)
    joule, rf = pair(sc)
    with pytest.raises(OverlapError):
        fit_psd_shift(joule, rf, (-5.2, -5.0), n_boot=0)


def test_a_line_from_total():
    a_att = db_to_ratio(-10.8)
    frozen = -74.22285795
    assert ratio_to_db(a_line_from_total(db_to_ratio(-74.6), a_att)) == pytest.approx(frozen, abs=1e-8)
    with pytest.raises(ValueError):
        a_line_from_total(1e-7, 1.0)


def test_contamination_share():
    drive = np.array([-10.0, -5.0])
    tot = PsdTrace(RF, drive, [1.0, 1.0], F_DET, F_SIG)
    other = PsdTrace(RF_REFERENCE, drive, [0.34, 0.34], F_DET, F_SIG)
    share = contamination_fraction(tot, other, db_to_ratio(-10.8), -5.0)
    assert share == pytest.approx(0.02827996822, rel=1e-9)
    with pytest.raises(ValueError):
        contamination_fraction(tot, other, 0.1, 0.0)


def test_profile_flat_line():
    sc = device_scenario(bulkhead=False)
    entries = []
    for f_sig, f_det in [(4e9, 7e9), (5.5e9, 7e9), (5.5e9, 4e9), (7e9, 5.5e9)]:
        j = synth_psd_trace(sc, JOULE, joule_drive_axis(), f_det, noise=False)
        r = synth_psd_trace(sc, RF, rf_drive_axis(), f_det, f_sig, noise=False)
        entries.append((f_sig, j, r, (-20.0, -5.0)))
    prof = attenuation_profile(entries, sc.a_att, n_boot=0)
    assert prof.frequencies() == [4e9, 5.5e9, 7e9]
    assert all(p.a_line_db == pytest.approx(-74.2, abs=0.01) for p in prof.points)
    assert prof.discrepancies[5.5e9] < 0.01
    assert prof.a_line_db_at(4.75e9)[0] == pytest.approx(-74.2, abs=0.01)


def test_profile_keeps_failures():
    sc = device_scenario(bulkhead=False)
    j, r = pair(sc)
    prof = attenuation_profile([(F_SIG, j, r, (-5.1, -5.0)), (6e9, j, r, (-20.0, -5.0))], sc.a_att, n_boot=0)
    assert [p.ok for p in prof.points] == [False, True]
    assert "OverlapError" in prof.points[0].error
    assert prof.frequencies() == [6e9]


def test_shift_error_bar_is_bootstrap():
    sc = device_scenario(seed=4, bulkhead=False)
    a_line, fit = recover(sc, noise=True, n_boot=200)
    assert 0.05 < fit.std_errors["a_total_db"] < 1.0
    assert abs(a_line + 74.2) < 4 * fit.std_errors["a_total_db"]


@pytest.mark.slow
def test_two_band_monte_carlo():
    sc = device_scenario(bulkhead=False)
    diffs = []
    for seed in range(40):
        s = sc.with_seed(seed)
        vals = []
        for f_det in (7e9, 4e9):
            j = synth_psd_trace(s, JOULE, joule_drive_axis(), f_det)
            r = synth_psd_trace(s, RF, rf_drive_axis(), f_det, F_SIG)
            w = select_fit_window(r, noise_floor_std(s, f_det))
            fit = fit_psd_shift(j, r, w, n_boot=0)
            vals.append(fit["a_total_db"])
        diffs.append(abs(vals[0] - vals[1]))
    assert np.mean(np.array(diffs) < 1.0) >= 0.95


def iq_record(sc=None, n=200_000, **kw):
    sc = sc or device_scenario(bulkhead=False)
    return sc, synth_iq(sc, F_SIG, dbm_to_watts(-28.0), n, 1e-6, **kw)


def test_iq_recovers_added_noise():
    sc, rec = iq_record()
    fit = added_noise_from_iq(rec, input_power(sc, rec.p_sig, F_SIG))
    assert abs(fit["n_add"] - 23.6) < 4 * fit.std_errors["n_add"]
    assert abs(fit.diagnostics["iq_correlation"]) < 0.01


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 2 * np.pi), st.floats(1e-3, 1e3))
def test_iq_rotation_and_scale_invariance(theta, scale):
    sc, rec = iq_record(n=2000)
    p_in = input_power(sc, rec.p_sig, F_SIG)
    base = added_noise_from_iq(rec, p_in)["n_add"]
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    moved = IqRecord(scale * rec.samples @ rot.T, rec.t_int, rec.f_sig, rec.p_sig)
    assert added_noise_from_iq(moved, p_in)["n_add"] == pytest.approx(base, rel=1e-9)


def test_iq_noise_free_cloud():
    sc, rec = iq_record(n=500, noise=False)
    with pytest.raises(Exception, match="zero spread"):
        added_noise_from_iq(rec, 1e-18)


def test_gain_and_error_propagation():
    sc, rec = iq_record(digitizer_scale=1.0)
    gain, n_add, fit = calibrate_iq(rec, -74.2, sc.a_att, attenuation_uncertainty_db=0.5)
    assert gain.value == pytest.approx(70.2, abs=0.05)
    assert gain.std_error == 0.5
    # n_add + 1/2 scales linearly with the assumed input power
    rel = np.log(10) / 10 * 0.5
    assert n_add.std_error >= (n_add.value + 0.5) * rel
    # misstating the line by +1 dB moves the gain by -1 dB
    gain_off, n_off, _ = calibrate_iq(rec, -73.2, sc.a_att)
    assert gain_off.value == pytest.approx(gain.value - 1.0, abs=1e-9)
    assert n_off.value + 0.5 == pytest.approx((n_add.value + 0.5) * db_to_ratio(1.0), rel=1e-9)


def test_digitizer_scale_divides_out():
    sc = device_scenario(bulkhead=False)
    _, a = iq_record(sc, digitizer_scale=1.0)
    _, b = iq_record(sc, digitizer_scale=3e-4)
    ga = calibrate_iq(a, -74.2, sc.a_att)[0].value
    gb = calibrate_iq(b, -74.2, sc.a_att)[0].value
    assert ga == pytest.approx(gb, abs=1e-9)


def test_thermometer_value():
    frozen = 7.0839528431827533e-13  # mpmath
    a = thermometer_attenuation(5.496e9, 2 * np.pi * 35.8e6, dbm_to_watts(-8.4))
    assert a == pytest.approx(frozen, rel=1e-12)


def test_thermometer_conventions():
    args = (5.496e9, 2 * np.pi * 35.8e6, 1e-4)
    assert THERMOMETER_CONVENTIONS == ("si-angular", "ordinary")
    ratio = thermometer_attenuation(*args) / thermometer_attenuation(*args, convention="ordinary")
    assert ratio == pytest.approx(2 * np.pi)
    with pytest.raises(ValueError, match="convention"):
        thermometer_attenuation(*args, convention="natural")


@given(st.floats(1e9, 1e10), st.floats(1e5, 1e9), st.floats(1e-12, 1e-2), st.floats(0.1, 10.0))
def test_thermometer_homogeneity(f, gamma, p, k):
    a = thermometer_attenuation(f, gamma, p)
    assert thermometer_attenuation(f, k * gamma, p) == pytest.approx(k * a, rel=1e-12)
    assert thermometer_attenuation(f, gamma, k * p) == pytest.approx(a / k, rel=1e-12)
    # at the reflection minimum the general form agrees
    assert thermometer_attenuation_from_rabi(f, gamma, gamma / np.sqrt(2), p) == pytest.approx(a, rel=1e-12)
