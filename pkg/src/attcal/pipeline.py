"""simulate -> fit -> report orchestration behind the command-line front-end."""

import dataclasses
import hashlib
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .calibrate import (
    CalibrationResult, Estimate, FrequencyCalibration, attenuation_profile, calibrate_iq,
    select_fit_window, thermometer_attenuation,
)
from .config import FitConfig, FloorConfig, RecordsConfig, config_hash, to_dict
from .fitting import FitError, fit_exponential, fit_power_law
from .network import tpad_from_attenuation, tpad_transmission
from .photons import Attenuator, ChainSpec
from .records import (
    SchemaError, read_iq, read_psd, read_thermometry, read_transient, write_iq, write_json,
    write_psd, write_thermometry, write_transient,
)
from .synth import (
    JOULE, RF, RF_REFERENCE, Acquisition, Bulkhead, NoiseSource, Scenario, noise_floor_std,
    synth_iq, synth_psd_trace, synth_thermometry, synth_transient,
)
from .thermal import ThermalModel, power_for_temperature
from .units import db_to_ratio, dbm_to_watts, ratio_to_db

PSD_FILE = "psd.csv"
TRANSIENT_FILE = "transient.csv"
IQ_FILE = "iq.csv"
IQ_META_FILE = "iq.json"
THERMOMETRY_FILE = "thermometry.csv"
MANIFEST_FILE = "manifest.json"
TRUTH_FILE = "truth.json"
REPORT_FILE = "report.json"


class FitFailure(RuntimeError):
    """No line attenuation could be extracted, so nothing downstream is meaningful."""


def build_scenario(sc_cfg, seed):
    th = sc_cfg.thermal
    thermal = ThermalModel(th.sigma, th.alpha, th.volume, th.t_bath, th.gamma)
    att = sc_cfg.attenuator
    source = NoiseSource(thermal, tpad_from_attenuation(att.a_att_db, att.z0), att.r_att)
    chain = ChainSpec([Attenuator(float(db_to_ratio(s.attenuation_db)), s.temperature_k) for s in sc_cfg.drive_chain])
    bulkhead = None
    if sc_cfg.bulkhead is not None:
        b = sc_cfg.bulkhead
        a_b = float(db_to_ratio(b.attenuation_db))
        volume = 1e-6
        bulkhead = Bulkhead(ThermalModel(b.sigma_v / volume, b.alpha, volume, b.t_bath), a_b, chain.transmission / a_b)
    for pair in sc_cfg.line_excess_db:
        if len(pair) != 2:
            raise ValueError("line_excess_db entries must be [frequency_hz, loss_db] pairs")
    return Scenario(
        drive_chain=chain,
        noise_source=source,
        readout_gain=float(db_to_ratio(sc_cfg.readout.gain_db)),
        readout_added_photons=sc_cfg.readout.added_photons,
        base_occupation_offset=sc_cfg.base_occupation_offset,
        rng_seed=seed,
        bulkhead=bulkhead,
        line_excess_db=tuple(tuple(p) for p in sc_cfg.line_excess_db),
    )


def sweep(s):
    if s.step <= 0 or s.stop < s.start:
        raise ValueError(f"bad sweep {s}")
    n = int(np.floor((s.stop - s.start) / s.step + 1e-9)) + 1
    return s.start + s.step * np.arange(n)


def _psd_job(job):
    sc, kind, drive, f_det, f_sig, acq, noise = job
    return synth_psd_trace(sc, kind, drive, f_det, f_sig, acq, noise)


def _iq_job(job):
    sc, f, p_sig, n, t_int, scale = job
    return synth_iq(sc, f, p_sig, n, t_int, scale)


def _map(fn, jobs, n_workers):
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(n_workers) as ex:
            return list(ex.map(fn, jobs))
    return [fn(j) for j in jobs]


def simulate(cfg, out_dir, jobs=1):
    """Write every record of ``cfg`` to ``out_dir`` plus a fit manifest and the ground truth."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sc = build_scenario(cfg.scenario, cfg.seed)
    a = cfg.acquisition
    acq = Acquisition(a.rbw_hz, a.span_hz, a.n_averages, a.drift)

    psd_jobs = []
    f_dets = list(dict.fromkeys(t.f_det_hz for t in cfg.psd.tones))
    joule_w = dbm_to_watts(sweep(cfg.psd.joule_dbm))
    rf_dbm = sweep(cfg.psd.rf_dbm)
    for f_det in f_dets:
        psd_jobs.append((sc, JOULE, joule_w, f_det, None, acq, cfg.psd.noise))
    for tone in cfg.psd.tones:
        psd_jobs.append((sc, RF, rf_dbm, tone.f_det_hz, tone.f_sig_hz, acq, cfg.psd.noise))
        if cfg.psd.reference:
            psd_jobs.append((sc, RF_REFERENCE, rf_dbm, tone.f_det_hz, tone.f_sig_hz, acq, cfg.psd.noise))
    traces = _map(_psd_job, psd_jobs, jobs)
    write_psd(out / PSD_FILE, traces)

    records = RecordsConfig(PSD_FILE, None, None, None, None)
    if cfg.transient is not None:
        tc = cfg.transient
        t_grid = np.linspace(0.0, tc.t_stop_s, tc.n_points)
        p_pulse = float(power_for_temperature(sc.noise_source.thermal, tc.pulse_temperature_k))
        tr = synth_transient(sc, p_pulse, t_grid, (tc.t_on_s, tc.t_off_s), tc.noise_std_k)
        write_transient(out / TRANSIENT_FILE, tr)
        records.transient = TRANSIENT_FILE
    if cfg.iq is not None:
        ic = cfg.iq
        p_sig = float(dbm_to_watts(ic.p_sig_dbm))
        iq_jobs = [(sc, f, p_sig, ic.n_samples, ic.t_int_s, ic.digitizer_scale) for f in ic.tones_hz]
        write_iq(out / IQ_FILE, out / IQ_META_FILE, _map(_iq_job, iq_jobs, jobs))
        records.iq, records.iq_meta = IQ_FILE, IQ_META_FILE
    if cfg.thermometry is not None:
        p, t = synth_thermometry(sc, dbm_to_watts(sweep(cfg.thermometry.joule_dbm)), cfg.thermometry.rel_noise)
        write_thermometry(out / THERMOMETRY_FILE, p, t)
        records.thermometry = THERMOMETRY_FILE

    opts = cfg.fit
    fit_cfg = FitConfig(
        records=records,
        a_att_db=float(ratio_to_db(sc.a_att)),
        t_bath_k=sc.noise_source.thermal.t_bath,
        floor_std=[FloorConfig(f, float(noise_floor_std(sc, f, acq))) for f in f_dets],
        k_floor=opts.k_floor,
        window=opts.window,
        use_reference=opts.use_reference and cfg.psd.reference,
        attenuation_uncertainty_db=opts.attenuation_uncertainty_db,
        bootstrap=opts.bootstrap,
        thermometer=opts.thermometer,
        seed=cfg.seed,
    )
    write_json(out / MANIFEST_FILE, to_dict(fit_cfg))
    write_json(out / TRUTH_FILE, ground_truth(sc, cfg))
    return fit_cfg


def ground_truth(sc, cfg):
    tones = sorted({t.f_sig_hz for t in cfg.psd.tones} | set(cfg.iq.tones_hz if cfg.iq else []))
    th = sc.noise_source.thermal
    return {
        "seed": cfg.seed,
        "config_sha256": config_hash(cfg),
        "a_att_db": float(ratio_to_db(sc.a_att)),
        "gain_db": float(ratio_to_db(sc.readout_gain)),
        "n_add_photons": sc.readout_added_photons,
        "sigma_v_w_per_k_alpha": th.sigma_v,
        "alpha": th.alpha,
        "a_line_db": [{"f_sig_hz": f, "a_line_db": float(ratio_to_db(sc.a_line_at(f)))} for f in tones],
    }


def _floor_for(cfg, trace):
    for fl in cfg.floor_std:
        if np.isclose(fl.f_det_hz, trace.f_det):
            return fl.std_w_per_hz
    # no heater-off statistics given: assume the lowest drive points are pure noise
    head = trace.added_psd[: max(5, len(trace) // 10)]
    return float(1.4826 * np.median(np.abs(head - np.median(head))))


def _resolve(base, name):
    return None if name is None else Path(base) / name


def fit(cfg, base_dir, jobs=1, provenance=None):
    """Run every estimator the manifest has records for and return the report document."""
    psd = read_psd(_resolve(base_dir, cfg.records.psd))
    joule = {tr.f_det: tr for tr in psd if tr.kind == JOULE}
    refs = {(tr.f_sig, tr.f_det): tr for tr in psd if tr.kind == RF_REFERENCE}
    rfs = [tr for tr in psd if tr.kind == RF]
    if not rfs:
        raise SchemaError(_resolve(base_dir, cfg.records.psd), "no rf traces to calibrate against")
    a_att = float(db_to_ratio(cfg.a_att_db))
    errors = {}

    def windows(use_ref):
        entries = []
        for rf in rfs:
            key = f"window[f_sig={rf.f_sig:.6g},f_det={rf.f_det:.6g}]"
            if rf.f_det not in joule:
                errors[key] = f"no joule trace detected at {rf.f_det:.6g} Hz"
                continue
            ref = refs.get((rf.f_sig, rf.f_det)) if use_ref else None
            try:
                lo, hi = select_fit_window(rf, _floor_for(cfg, rf), ref, cfg.window.max_dbm, cfg.k_floor)
            except FitError as exc:
                errors[key] = str(exc)
                continue
            if cfg.window.min_dbm is not None:
                lo = max(lo, cfg.window.min_dbm)
            if ref is None and cfg.window.max_dbm is not None:
                hi = min(hi, cfg.window.max_dbm)
            entries.append((rf.f_sig, joule[rf.f_det], rf, (lo, hi)))
        return entries

    bs = cfg.bootstrap
    executor = ProcessPoolExecutor(jobs) if jobs > 1 else None
    try:
        profile = attenuation_profile(windows(cfg.use_reference), a_att, bs.n, bs.seed, executor)
        alt = None
        if cfg.use_reference and refs:
            alt = attenuation_profile(windows(False), a_att, bs.n, bs.seed, executor)
    finally:
        if executor is not None:
            executor.shutdown()

    for p in profile.points:
        if not p.ok:
            errors[f"psd_shift[f_sig={p.f_sig:.6g},f_det={p.f_det:.6g}]"] = p.error
    if not profile.frequencies():
        raise FitFailure("no line attenuation could be extracted: " + "; ".join(errors.values()))

    result = CalibrationResult(a_att_db=cfg.a_att_db)
    freqs = {}
    for f in profile.frequencies():
        val, err = profile.a_line_db_at(f)
        fc = FrequencyCalibration(f)
        fc.a_line_db = Estimate(val, err, "dB")
        freqs[f] = fc
    for p in profile.points:
        if not p.ok and p.f_sig not in freqs:
            freqs[p.f_sig] = FrequencyCalibration(p.f_sig, errors={"psd_shift": p.error})

    iq_fits = []
    if cfg.records.iq is not None:
        recs = read_iq(_resolve(base_dir, cfg.records.iq), _resolve(base_dir, cfg.records.iq_meta))
        for rec in recs:
            fc = freqs.setdefault(rec.f_sig, FrequencyCalibration(rec.f_sig))
            try:
                a_line_db, _ = profile.a_line_db_at(rec.f_sig)
                gain, n_add, fit_iq = calibrate_iq(rec, a_line_db, a_att, cfg.attenuation_uncertainty_db)
            except (FitError, ValueError) as exc:
                fc.errors["iq"] = str(exc)
                continue
            fc.gain_db, fc.n_add = gain, n_add
            iq_fits.append({"f_sig_hz": rec.f_sig, **fit_iq.to_dict()})
    result.frequencies = [freqs[f] for f in sorted(freqs)]

    fits = {"psd_shift": [_point_dict(p) for p in profile.points], "iq": iq_fits}
    if alt is not None:
        fits["psd_shift_no_reference"] = [_point_dict(p) for p in alt.points]

    if cfg.records.thermometry is not None:
        p, t = read_thermometry(_resolve(base_dir, cfg.records.thermometry))
        try:
            pl = fit_power_law(p, t, cfg.t_bath_k)
            result.sigma_v = Estimate(pl["sigma_v"], pl.std_errors["sigma_v"], "W/K^alpha")
            result.alpha = Estimate(pl["alpha"], pl.std_errors["alpha"], "1")
            fits["power_law"] = pl.to_dict()
        except (FitError, ValueError) as exc:
            errors["power_law"] = str(exc)

    if cfg.records.transient is not None:
        tr = read_transient(_resolve(base_dir, cfg.records.transient))
        for seg, attr in (("heat", "tau_heat_s"), ("cool", "tau_cool_s")):
            try:
                ex = fit_exponential(tr, seg)
            except (FitError, ValueError) as exc:
                errors[f"transient_{seg}"] = str(exc)
                continue
            setattr(result, attr, Estimate(ex["tau"], ex.std_errors["tau"], "s"))
            fits[f"transient_{seg}"] = ex.to_dict()

    thermo = None
    if cfg.thermometer is not None:
        t = cfg.thermometer
        try:
            a = thermometer_attenuation(t.f_ge_hz, t.linewidth_rad_s, float(dbm_to_watts(t.p_in_min_dbm)), t.convention)
            thermo = {"f_ge_hz": t.f_ge_hz, "convention": t.convention, "attenuation_db": float(ratio_to_db(a))}
        except ValueError as exc:
            errors["thermometer"] = str(exc)

    result.errors = errors
    return report_document(result, profile, alt, fits, thermo, cfg, provenance or {})


def _point_dict(p):
    d = {"f_sig_hz": p.f_sig, "f_det_hz": p.f_det, "error": p.error}
    if p.ok:
        d["a_line_db"] = p.a_line_db
        d["a_line_std_error_db"] = p.a_line_err_db
        d["fit"] = p.fit.to_dict()
    return d


def _est(e):
    return None if e is None else e.to_dict()


def report_document(result, profile, alt, fits, thermo, cfg, provenance):
    rows = []
    for fc in result.frequencies:
        rows.append({
            "f_sig_hz": fc.f_sig,
            "a_line_db": _est(fc.a_line_db),
            "gain_db": _est(fc.gain_db),
            "n_add_photons": _est(fc.n_add),
            "errors": fc.errors,
        })
    comparison = []
    if alt is not None:
        ref_pts = {(p.f_sig, p.f_det): p for p in profile.points if p.ok}
        for p in alt.points:
            q = ref_pts.get((p.f_sig, p.f_det))
            if p.ok and q is not None:
                comparison.append({
                    "f_sig_hz": p.f_sig, "f_det_hz": p.f_det,
                    "a_line_with_reference_db": q.a_line_db,
                    "a_line_without_reference_db": p.a_line_db,
                    "difference_db": p.a_line_db - q.a_line_db,
                })
    return {
        "provenance": {
            "tool": "attcal",
            "version": __version__,
            "config_sha256": config_hash(cfg),
            "seed": cfg.seed,
            **provenance,
        },
        "calibration": {
            "a_att_db": result.a_att_db,
            "sigma_v_w_per_k_alpha": _est(result.sigma_v),
            "alpha_dimensionless": _est(result.alpha),
            "tau_heat_s": _est(result.tau_heat_s),
            "tau_cool_s": _est(result.tau_cool_s),
            "frequencies": rows,
        },
        "band_discrepancies_db": [{"f_sig_hz": f, "spread_db": d} for f, d in sorted(profile.discrepancies.items())],
        "reference_comparison": comparison,
        "thermometer": thermo,
        "fits": fits,
        "errors": result.errors,
    }


def file_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def format_report(doc):
    """Plain-text table of the per-frequency calibration."""
    def cell(e, fmt):
        if e is None:
            return "-"
        if e["value"] is None:
            return "nan"
        err = e["std_error"]
        return (fmt % e["value"]) + ("" if err is None else " ± " + (fmt % err))

    cal = doc["calibration"]
    head = f"{'f_sig [GHz]':>12}  {'A_line [dB]':>18}  {'G [dB]':>16}  {'n_add [photons]':>18}  note"
    lines = [head, "-" * len(head)]
    for row in cal["frequencies"]:
        note = "; ".join(f"{k} failed: {v}" for k, v in row["errors"].items())
        lines.append(
            f"{row['f_sig_hz'] / 1e9:>12.4f}  {cell(row['a_line_db'], '%.2f'):>18}  "
            f"{cell(row['gain_db'], '%.2f'):>16}  {cell(row['n_add_photons'], '%.2f'):>18}  {note}"
        )
    lines.append("")
    lines.append(f"A_att = {cal['a_att_db']:.2f} dB")
    for key, label, fmt in (
        ("sigma_v_w_per_k_alpha", "Sigma V [W/K^alpha]", "%.4g"),
        ("alpha_dimensionless", "alpha", "%.4f"),
        ("tau_heat_s", "tau heat [s]", "%.4g"),
        ("tau_cool_s", "tau cool [s]", "%.4g"),
    ):
        if cal.get(key) is not None:
            lines.append(f"{label} = {cell(cal[key], fmt)}")
    for d in doc.get("band_discrepancies_db", []):
        lines.append(f"band spread at {d['f_sig_hz'] / 1e9:.4f} GHz: {d['spread_db']:.3f} dB")
    for c in doc.get("reference_comparison", []):
        lines.append(
            f"reference-window vs full-window at {c['f_sig_hz'] / 1e9:.4f} GHz "
            f"(det {c['f_det_hz'] / 1e9:.4f} GHz): {c['difference_db']:+.3f} dB"
        )
    if doc.get("thermometer"):
        t = doc["thermometer"]
        lines.append(f"thermometer attenuation ({t['convention']}) = {t['attenuation_db']:.2f} dB")
    for stage, msg in doc.get("errors", {}).items():
        lines.append(f"FAILED {stage}: {msg}")
    return "\n".join(lines)
