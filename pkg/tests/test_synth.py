import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attcal.photons import bose_einstein
from attcal.presets import joule_drive_axis, device_scenario, rf_drive_axis
from attcal.synth import (
    JOULE, RF, RF_REFERENCE, Acquisition, PsdTrace, clean_added_psd, dissipated_power,
    floor_occupation, input_power, noise_floor_std, synth_iq, synth_psd_trace,
    synth_thermometry, synth_transient,
)
from attcal.thermal import steady_state_temperature
from attcal.units import PLANCK, db_to_ratio, dbm_to_watts

F_DET = 5.496e9
F_SIG = 5.5e9


def test_radiometer_scale():
    # 1 / sqrt(span * averages) at the default analyzer settings
    assert Acquisition().relative_std == pytest.approx(1 / np.sqrt(5e6 * 100), rel=1e-12)
    with pytest.raises(ValueError):
        Acquisition(rbw=1e7, span=5e6)


def test_same_seed_same_trace(scenario):
    a = synth_psd_trace(scenario, RF, rf_drive_axis(), F_DET, F_SIG)
    b = synth_psd_trace(scenario, RF, rf_drive_axis(), F_DET, F_SIG)
    assert np.array_equal(a.added_psd, b.added_psd)
    c = synth_psd_trace(scenario.with_seed(12), RF, rf_drive_axis(), F_DET, F_SIG)
    assert not np.array_equal(a.added_psd, c.added_psd)


def test_record_streams_do_not_depend_on_order(scenario):
    first = synth_psd_trace(scenario, JOULE, joule_drive_axis(), F_DET)
    synth_iq(scenario, F_SIG, 1e-6, 200, 1e-6)
    again = synth_psd_trace(scenario, JOULE, joule_drive_axis(), F_DET)
    assert np.array_equal(first.added_psd, again.added_psd)


@settings(max_examples=50, deadline=None)
@given(st.floats(-40.0, -5.0))
def test_joule_rf_equivalence(dbm):
    sc = device_scenario(bulkhead=False)
    p_diss = float(dissipated_power(sc, RF, dbm, F_SIG))
    rf = clean_added_psd(sc, RF, np.array([dbm]), F_DET, F_SIG)[0]
    joule = clean_added_psd(sc, JOULE, np.array([p_diss]), F_DET)[0]
    assert rf == pytest.approx(joule, rel=1e-12)


def test_added_psd_closed_form(scenario):
    p = 1e-12
    t_e = steady_state_temperature(scenario.noise_source.thermal, p)
    a = scenario.a_att
    dn = (1 - a) * (bose_einstein(t_e, F_DET) - bose_einstein(0.0604, F_DET))
    expected = db_to_ratio(70.2) * PLANCK * F_DET * dn
    assert clean_added_psd(scenario, JOULE, np.array([p]), F_DET)[0] == pytest.approx(expected, rel=1e-12)


def test_dissipation_at_crossing():
    sc = device_scenario(bulkhead=False)
    frozen = 1.960134148e-13  # W at -22.5 dBm
    assert float(dissipated_power(sc, RF, -22.5, F_SIG)) == pytest.approx(frozen, rel=1e-6)


def test_reference_trace_zero_without_bulkhead(scenario):
    ref = clean_added_psd(scenario, RF_REFERENCE, rf_drive_axis(), F_DET, F_SIG)
    assert np.all(ref == 0)


def test_reference_trace_positive_with_bulkhead(scenario_bulkhead):
    ref = clean_added_psd(scenario_bulkhead, RF_REFERENCE, rf_drive_axis(), F_DET, F_SIG)
    assert ref[-1] > 0
    assert np.all(np.diff(ref) >= 0)


def test_noise_ensemble_mean_and_std():
    sc = device_scenario(bulkhead=False)
    drive = rf_drive_axis(-30, -10, 5.0)
    clean = clean_added_psd(sc, RF, drive, F_DET, F_SIG)
    runs = np.array([
        synth_psd_trace(sc.with_seed(s), RF, drive, F_DET, F_SIG).added_psd for s in range(200)
    ])
    std = noise_floor_std(sc, F_DET)
    se = runs.std(axis=0, ddof=1) / np.sqrt(len(runs))
    assert np.all(np.abs(runs.mean(axis=0) - clean) < 3 * se)
    # heater-off points scatter at the floor level
    assert runs[:, 0].std(ddof=1) == pytest.approx(std, rel=0.15)


def test_base_offset_raises_floor_only(scenario):
    import dataclasses
    hot = dataclasses.replace(scenario, base_occupation_offset=0.5)
    assert floor_occupation(hot, F_DET) == pytest.approx(floor_occupation(scenario, F_DET) + 0.5)
    drive = rf_drive_axis()
    assert np.array_equal(
        clean_added_psd(hot, RF, drive, F_DET, F_SIG), clean_added_psd(scenario, RF, drive, F_DET, F_SIG)
    )


def test_psd_trace_validation():
    with pytest.raises(ValueError):
        PsdTrace("bogus", [1.0], [1.0], F_DET)
    with pytest.raises(ValueError):
        PsdTrace(RF, [1.0], [1.0], F_DET)
    with pytest.raises(ValueError):
        PsdTrace(JOULE, [1.0, 2.0], [np.nan, 1.0], F_DET)


def test_unsorted_drive_rejected(scenario):
    with pytest.raises(ValueError):
        synth_psd_trace(scenario, RF, [-5.0, -10.0], F_DET, F_SIG)


def test_transient_pulse_flags(scenario):
    t = np.linspace(0, 15e-3, 3001)
    tr = synth_transient(scenario, 3e-12, t, (2e-3, 7e-3))
    assert tr.pulse_window[0] in t and tr.pulse_window[1] in t
    assert tr.value[0] == pytest.approx(0.0604, rel=1e-9)
    assert tr.value.max() == pytest.approx(steady_state_temperature(scenario.noise_source.thermal, 3e-12), rel=1e-3)


def test_thermometry_noise_free(scenario):
    p = np.array([0.0, 1e-12, 1e-9])
    _, t = synth_thermometry(scenario, p)
    assert t[2] == pytest.approx(0.257, rel=0.02)


def test_iq_cloud_moments(scenario):
    rec = synth_iq(scenario, F_SIG, dbm_to_watts(-28.0), 200_000, 1e-6)
    x = rec.samples
    g = scenario.readout_gain
    sigma = np.sqrt(g * (23.6 + 0.5))
    assert x.std(axis=0, ddof=1) == pytest.approx([sigma, sigma], rel=0.01)
    # isotropic noise: no I/Q correlation
    assert abs(np.corrcoef(x.T)[0, 1]) < 0.01
    n_sig = input_power(scenario, dbm_to_watts(-28.0), F_SIG) * 1e-6 / (PLANCK * F_SIG)
    assert np.linalg.norm(x.mean(axis=0)) == pytest.approx(np.sqrt(g * n_sig), rel=0.01)


def test_iq_integration_time_scaling(scenario):
    a = synth_iq(scenario, F_SIG, 1e-6, 200, 1e-6, noise=False)
    b = synth_iq(scenario, F_SIG, 1e-6, 200, 4e-6, noise=False)
    ratio = np.linalg.norm(b.samples[0]) / np.linalg.norm(a.samples[0])
    assert ratio == pytest.approx(2.0, rel=1e-12)


def test_iq_snr_ten_at_fifty_photons():
    import dataclasses
    sc = dataclasses.replace(device_scenario(bulkhead=False), readout_added_photons=0.0)
    # choose p_sig so N_sig = 50, i.e. mu / sigma = sqrt(50 / 0.5) = 10
    t_int = 1e-6
    p_in = 50 * PLANCK * F_SIG / t_int
    p_sig = p_in / (sc.a_line * sc.a_att)
    rec = synth_iq(sc, F_SIG, p_sig, 100_000, t_int)
    mu = np.linalg.norm(rec.samples.mean(axis=0))
    sigma = rec.samples.std(axis=0, ddof=1).mean()
    assert mu / sigma == pytest.approx(10.0, rel=0.01)


def test_iq_guards(scenario):
    with pytest.warns(UserWarning):
        synth_iq(scenario, F_SIG, 1e-6, 50, 1e-6)
    with pytest.raises(ValueError):
        synth_iq(scenario, F_SIG, 0.0, 1000, 1e-6)
