"""Inverse procedures: line attenuation from PSD overlap, added noise and gain from IQ clouds."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .fitting import FitError, FitResult
from .units import HBAR, PLANCK, angular, db_to_ratio, ratio_to_db, watts_to_dbm


class WindowError(FitError):
    pass


class OverlapError(FitError):
    pass


def _median3(y):
    y = np.asarray(y, dtype=float)
    if y.size < 3:
        return y.copy()
    out = y.copy()
    out[1:-1] = np.median(np.stack([y[:-2], y[1:-1], y[2:]]), axis=0)
    out[0] = 0.5 * (y[0] + y[1])
    out[-1] = 0.5 * (y[-2] + y[-1])
    return out


def _onset(trace, threshold):
    smooth = _median3(trace.added_psd)
    above = np.nonzero(smooth > threshold)[0]
    return None if above.size == 0 else float(trace.drive_dbm[above[0]])


def select_fit_window(rf, floor_std, reference=None, p_max_override=None, k_floor=5.0):
    """Drive-power window (dBm) where the RF trace is usable for the overlap fit.

    The lower edge is the first point whose median-smoothed added PSD exceeds
    ``k_floor * floor_std``. The upper edge is the onset of the reference-line
    trace when one is given, else ``p_max_override``, else the last point.
    """
    threshold = k_floor * floor_std
    p_lo = _onset(rf, threshold)
    if p_lo is None:
        raise WindowError("no RF point rises above the noise floor; extend the drive sweep to higher power")
    p_hi = None
    if reference is not None:
        p_hi = _onset(reference, threshold)
    if p_hi is None:
        p_hi = float(p_max_override) if p_max_override is not None else float(rf.drive_dbm[-1])
    if p_hi <= p_lo:
        raise WindowError(
            f"empty fit window [{p_lo:.2f}, {p_hi:.2f}] dBm; widen the drive sweep "
            "or lower the noise floor with more averaging"
        )
    return p_lo, p_hi


class _Overlap:
    """log-PSD of the RF points against the Joule trace interpolated at shifted drive."""

    def __init__(self, joule, rf, window):
        jx, jy = joule.drive_dbm, joule.added_psd
        keep = jy > 0
        if np.count_nonzero(keep) < 2:
            raise OverlapError("Joule trace has fewer than two positive points")
        order = np.argsort(jx[keep])
        self.jx = jx[keep][order]
        self.jy = np.log(jy[keep][order])
        rx, ry = rf.drive_dbm, rf.added_psd
        sel = (rx >= window[0]) & (rx <= window[1]) & (ry > 0)
        self.rx = rx[sel]
        self.ry = np.log(ry[sel])
        if self.rx.size < 3:
            raise OverlapError(f"only {self.rx.size} usable RF points in window {window}")

    def inside(self, s):
        x = self.rx + s
        return (x >= self.jx[0]) & (x <= self.jx[-1])

    def model(self, s, y=None):
        return np.interp(self.rx + s, self.jx, self.jy)

    def cost(self, s, y=None):
        y = self.ry if y is None else y
        m = self.inside(s)
        if np.count_nonzero(m) < 3:
            return np.inf
        d = y[m] - self.model(s)[m]
        return d @ d / d.size

    def shift_range(self):
        return self.jx[0] - self.rx[-1], self.jx[-1] - self.rx[0]

    def grid_costs(self, shifts, ys):
        """Mean squared residual for every (sample, shift); shifts with < 3 overlap points get inf."""
        x = self.rx[None, :] + shifts[:, None]
        inside = (x >= self.jx[0]) & (x <= self.jx[-1])
        model = np.interp(x, self.jx, self.jy)
        count = inside.sum(axis=1)
        w = inside.astype(float)
        # sum over points of w (y - m)^2 expanded so all samples share one matmul
        sse = (ys**2) @ w.T - 2 * ys @ (w * model).T + (w * model**2).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(count >= 3, sse / count, np.inf)
        return out


def _refine(shifts, costs):
    """Parabolic refinement of the grid minimum along the last axis."""
    i = np.argmin(costs, axis=-1)
    i = np.clip(i, 1, shifts.size - 2)
    rows = np.arange(costs.shape[0])
    c0, c1, c2 = costs[rows, i - 1], costs[rows, i], costs[rows, i + 1]
    denom = c0 - 2 * c1 + c2
    h = shifts[1] - shifts[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        off = np.where(np.isfinite(denom) & (denom > 0), 0.5 * (c0 - c2) / denom, 0.0)
    return shifts[i] + np.clip(off, -1, 1) * h


def _minimise_shift(ov, y=None, lo=None, hi=None, n=2001):
    lo_, hi_ = ov.shift_range()
    lo = lo_ if lo is None else max(lo, lo_)
    hi = hi_ if hi is None else min(hi, hi_)
    ys = (ov.ry if y is None else y)[None, :]
    shifts = np.linspace(lo, hi, n)
    costs = ov.grid_costs(shifts, ys)
    if not np.any(np.isfinite(costs)):
        raise OverlapError("fewer than 3 RF points overlap the Joule trace at any shift")
    # zoom twice around the coarse optimum
    for _ in range(2):
        best = shifts[np.argmin(costs[0])]
        step = shifts[1] - shifts[0]
        shifts = np.linspace(best - 3 * step, best + 3 * step, 61)
        costs = ov.grid_costs(shifts, ys)
    return float(_refine(shifts, costs)[0])


def _shift_newton(coef, rx, ry, s, lo, hi, iters=8):
    """Least-squares shift against a fixed polynomial reference, by 1-D Gauss-Newton."""
    d1 = np.polynomial.polynomial.polyder(coef)
    for _ in range(iters):
        x = np.clip(rx + s, lo, hi)
        r = ry - np.polynomial.polynomial.polyval(x, coef)
        g = np.polynomial.polynomial.polyval(x, d1)
        den = g @ g
        if den <= 0:
            break
        step = (g @ r) / den
        s = s + step
        if abs(step) < 1e-10:
            break
    return s


def fit_psd_shift(joule, rf, window, n_boot=500, seed=0, degree=3, margin_db=3.0):
    """Drive-power offset (dB) that overlays ``rf`` on ``joule`` in log-PSD.

    The result ``a_total_db`` satisfies joule(P + a_total_db) ~ rf(P) for P in the
    window; for a Joule/RF pair it is the dissipated-power ratio A_line (1 - A_att)
    in dB. A coarse search against the piecewise-linear Joule trace locates the
    overlap; the Joule points covering it (plus ``margin_db``) are then replaced
    by a least-squares polynomial of ``degree`` in (dBm, log PSD) and the shift is
    refined against that curve. The standard error is a wild bootstrap over the
    residuals of both traces with ``n_boot`` replicas.
    """
    if joule.f_det != rf.f_det:
        raise ValueError("traces must be detected at the same frequency")
    ov = _Overlap(joule, rf, window)
    s0 = _minimise_shift(ov)

    lo = ov.rx[0] + s0 - margin_db
    hi = ov.rx[-1] + s0 + margin_db
    jsel = (ov.jx >= lo) & (ov.jx <= hi)
    jx, jy = ov.jx[jsel], ov.jy[jsel]
    if jx.size < degree + 2:
        raise OverlapError(f"only {jx.size} Joule points cover the shifted window")
    support = (jx[0], jx[-1])
    inside = (ov.rx + s0 >= support[0]) & (ov.rx + s0 <= support[1])
    n_overlap = int(np.count_nonzero(inside))
    if n_overlap < 3:
        raise OverlapError(f"only {n_overlap} points overlap after the shift")
    rx, ry = ov.rx[inside], ov.ry[inside]

    poly = np.polynomial.polynomial
    coef = poly.polyfit(jx, jy, degree)
    s = _shift_newton(coef, rx, ry, s0, *support)
    j_fit = poly.polyval(jx, coef)
    r_fit = poly.polyval(rx + s, coef)
    j_res = jy - j_fit
    r_res = ry - r_fit

    slope = poly.polyval(rx + s, poly.polyder(coef))
    dof = max(n_overlap - 1, 1)
    s2 = r_res @ r_res / dof
    den = slope @ slope
    se_lin = float(np.sqrt(s2 / den)) if den > 0 else np.inf

    se_boot = np.nan
    if n_boot > 1:
        rng = np.random.default_rng(seed)
        boot = np.empty(n_boot)
        for b in range(n_boot):
            jy_b = j_fit + j_res * rng.choice((-1.0, 1.0), size=j_res.size)
            ry_b = r_fit + r_res * rng.choice((-1.0, 1.0), size=r_res.size)
            coef_b = poly.polyfit(jx, jy_b, degree)
            boot[b] = _shift_newton(coef_b, rx, ry_b, s, *support)
        se_boot = float(np.std(boot, ddof=1))

    return FitResult(
        {"a_total_db": float(s)},
        {"a_total_db": se_boot if np.isfinite(se_boot) else se_lin},
        float(np.linalg.norm(r_res)),
        n_overlap,
        window=tuple(float(w) for w in window),
        diagnostics={
            "n_overlap": n_overlap,
            "n_window": int(ov.rx.size),
            "n_joule": int(jx.size),
            "coarse_shift_db": float(s0),
            "se_linearised": se_lin,
            "joule_rms_log": float(np.sqrt(np.mean(j_res**2))),
        },
    )


def a_line_from_total(a_total, a_att):
    """Line transmission A_line = A / (1 - A_att) from the dissipated-power ratio A."""
    if not 0 < a_att < 1:
        raise ValueError("a_att must lie strictly between 0 and 1")
    return a_total / (1.0 - a_att)


def contamination_fraction(total, reference, a_att, at_power):
    """Share of the measured PSD due to heated bulkheads: A_att PSD_other / PSD_tot."""
    for tr in (total, reference):
        x = tr.drive_dbm
        if not x.min() <= at_power <= x.max():
            raise ValueError(f"{at_power} dBm lies outside the {tr.kind} trace")
    psd_tot = np.interp(at_power, total.drive_dbm, total.added_psd)
    psd_other = np.interp(at_power, reference.drive_dbm, reference.added_psd)
    if psd_tot <= 0:
        raise ValueError("total PSD must be positive at the evaluation point")
    return float(np.clip(a_att * psd_other / psd_tot, 0.0, 1.0))


@dataclass
class ProfilePoint:
    f_sig: float
    f_det: float
    a_line_db: float = np.nan
    a_line_err_db: float = np.nan
    fit: Optional[FitResult] = None
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


@dataclass
class AttenuationProfile:
    points: list
    discrepancies: dict = field(default_factory=dict)

    def frequencies(self):
        return sorted({p.f_sig for p in self.points if p.ok})

    def a_line_db_at(self, f_sig):
        """Mean over detection bands at ``f_sig``, linear interpolation in dB between tones."""
        freqs = self.frequencies()
        if not freqs:
            raise FitError("profile has no successful points")
        vals = [np.mean([p.a_line_db for p in self.points if p.ok and p.f_sig == f]) for f in freqs]
        errs = [np.mean([p.a_line_err_db for p in self.points if p.ok and p.f_sig == f]) for f in freqs]
        return float(np.interp(f_sig, freqs, vals)), float(np.interp(f_sig, freqs, errs))


def profile_point(f_sig, joule, rf, window, a_att, n_boot=500, seed=0):
    point = ProfilePoint(float(f_sig), float(rf.f_det))
    try:
        fit = fit_psd_shift(joule, rf, window, n_boot=n_boot, seed=seed)
        a_line = a_line_from_total(db_to_ratio(fit["a_total_db"]), a_att)
    except (FitError, ValueError) as exc:
        point.error = f"{type(exc).__name__}: {exc}"
        return point
    point.fit = fit
    point.a_line_db = float(ratio_to_db(a_line))
    # 1 - A_att is an exact input, so the dB error carries over unchanged
    point.a_line_err_db = float(fit.std_errors["a_total_db"])
    return point


def attenuation_profile(entries, a_att, n_boot=500, seed=0, executor=None):
    """A_line(f_sig) from a list of ``(f_sig, joule, rf, window)`` entries.

    Failed fits are kept as flagged points. Where one tone frequency was measured
    in several detection bands, the spread of their A_line values is reported in
    ``discrepancies`` keyed by f_sig.
    """
    args = [(f, j, r, w, a_att, n_boot, seed) for f, j, r, w in entries]
    if executor is None:
        points = [profile_point(*a) for a in args]
    else:
        points = list(executor.map(_profile_star, args))
    by_freq = {}
    for p in points:
        if p.ok:
            by_freq.setdefault(p.f_sig, []).append(p.a_line_db)
    disc = {f: float(max(v) - min(v)) for f, v in by_freq.items() if len(v) > 1}
    return AttenuationProfile(points, disc)


def _profile_star(a):
    return profile_point(*a)


def iq_moments(samples):
    """Mean vector, pooled per-quadrature variance and the delta-method pieces needed downstream."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    mean = x.mean(axis=0)
    dev = x - mean
    z = 0.5 * (dev**2).sum(axis=1)
    var = z.sum() / (n - 1)
    mu = float(np.hypot(*mean))
    u = mean / mu if mu > 0 else np.array([1.0, 0.0])
    proj = dev @ u
    cov = np.cov(dev.T)
    return {
        "n": n, "mean": mean, "mu": mu, "var": float(var),
        "var_mu": float(proj.var(ddof=1) / n),
        "var_var": float(z.var(ddof=1) / n),
        "cov_mu_var": float(np.mean(proj * (z - z.mean())) / n),
        "cov": cov,
    }


def added_noise_from_iq(rec, p_input):
    """Input-referred added noise from the IQ cloud of a tone of ``p_input`` W at the chain input.

    n_add = N_sig sigma^2 / mu^2 - 1/2, with N_sig = p_input t_int / (h f_sig),
    mu the length of the mean vector and sigma^2 the variance pooled over I and Q.
    """
    if p_input <= 0:
        raise ValueError("p_input must be positive")
    m = iq_moments(rec.samples)
    if m["var"] <= (1e-12 * m["mu"]) ** 2:
        raise FitError("IQ cloud has zero spread; added noise undefined")
    if m["mu"] == 0:
        raise FitError("IQ cloud is centred on the origin; no tone detected")
    n_sig = p_input * rec.t_int / (PLANCK * rec.f_sig)
    mu, var = m["mu"], m["var"]
    ratio = var / mu**2
    var_ratio = (
        m["var_var"] / mu**4
        + 4 * var**2 * m["var_mu"] / mu**6
        - 4 * var * m["cov_mu_var"] / mu**5
    )
    n_add = n_sig * ratio - 0.5
    se = n_sig * np.sqrt(max(var_ratio, 0.0))
    cov = m["cov"]
    diag = np.sqrt(cov[0, 0] * cov[1, 1])
    flags = []
    if m["n"] < 100:
        flags.append("fewer than 100 samples")
    if n_add < -0.5 - 2 * se:
        flags.append("n_add below the quantum limit: p_input is likely overestimated")
    return FitResult(
        {"n_add": float(n_add), "mu": mu, "sigma": float(np.sqrt(var))},
        {"n_add": float(se), "mu": float(np.sqrt(m["var_mu"])),
         "sigma": float(np.sqrt(m["var_var"]) / (2 * np.sqrt(var)))},
        0.0, m["n"], flags=flags,
        diagnostics={
            "n_sig": float(n_sig),
            "snr": float(mu / np.sqrt(var)),
            "iq_correlation": float(cov[0, 1] / diag) if diag > 0 else np.nan,
            "iq_variance_ratio": float(cov[0, 0] / cov[1, 1]) if cov[1, 1] > 0 else np.nan,
        },
    )


def output_tone_power(rec, mu=None):
    """Tone power (W) at the digitizer plane: (mu / scale)^2 h f / t_int."""
    if mu is None:
        mu = float(np.hypot(*np.asarray(rec.samples).mean(axis=0)))
    return (mu / rec.digitizer_scale) ** 2 * PLANCK * rec.f_sig / rec.t_int


def gain_estimate(output_power, p_input):
    if output_power <= 0 or p_input <= 0:
        raise ValueError("powers must be positive")
    return output_power / p_input


THERMOMETER_CONVENTIONS = ("si-angular", "ordinary")


def thermometer_attenuation(f_ge, linewidth, p_in_min, convention="si-angular"):
    """Line transmission from the drive power that minimises the thermometer reflection.

    With the drive rate at Omega = Gamma / sqrt(2) at the minimum,
    A = hbar omega Omega^2 / (4 Gamma P) = hbar omega Gamma / (8 P).
    ``linewidth`` is an angular rate (rad/s). The ``ordinary`` convention instead
    uses Gamma / 2pi, i.e. treats the linewidth as a frequency in Hz.
    """
    if min(f_ge, linewidth, p_in_min) <= 0:
        raise ValueError("all inputs must be positive")
    if convention == "si-angular":
        gamma = linewidth
    elif convention == "ordinary":
        gamma = linewidth / (2 * np.pi)
    else:
        raise ValueError(f"unknown convention {convention!r}; choose from {THERMOMETER_CONVENTIONS}")
    return HBAR * float(angular(f_ge)) * gamma / (8.0 * p_in_min)


def thermometer_attenuation_from_rabi(f_ge, linewidth, drive_rate, p_in):
    """General form hbar omega Omega^2 / (4 Gamma P) for an arbitrary drive rate."""
    return HBAR * float(angular(f_ge)) * drive_rate**2 / (4.0 * linewidth * p_in)


@dataclass
class Estimate:
    value: float
    std_error: float
    unit: str

    def to_dict(self):
        return {"value": _none_if_nan(self.value), "std_error": _none_if_nan(self.std_error), "unit": self.unit}


def _none_if_nan(x):
    x = float(x)
    return None if not np.isfinite(x) else x


@dataclass
class FrequencyCalibration:
    """Per-tone outcome: A_line and, where an IQ record exists, gain and added noise."""

    f_sig: float
    a_line_db: Optional[Estimate] = None
    gain_db: Optional[Estimate] = None
    n_add: Optional[Estimate] = None
    errors: dict = field(default_factory=dict)


@dataclass
class CalibrationResult:
    a_att_db: float
    frequencies: list = field(default_factory=list)
    sigma_v: Optional[Estimate] = None
    alpha: Optional[Estimate] = None
    tau_heat_s: Optional[Estimate] = None
    tau_cool_s: Optional[Estimate] = None
    errors: dict = field(default_factory=dict)


def calibrate_iq(rec, a_line_db, a_att, attenuation_uncertainty_db=0.5):
    """Gain (dB) and added noise at one tone given the line attenuation.

    Returns ``(gain, n_add, fit)``; the gain error is the attenuation
    uncertainty, which maps one-to-one in dB, and the n_add error combines the
    sample statistics with that uncertainty.
    """
    p_in = float(db_to_ratio(a_line_db)) * a_att * rec.p_sig
    fit = added_noise_from_iq(rec, p_in)
    gain = gain_estimate(output_tone_power(rec, fit["mu"]), p_in)
    gain_db = float(ratio_to_db(gain))
    # n_add + 1/2 scales with p_input
    rel = np.log(10) / 10 * attenuation_uncertainty_db
    sys = (fit["n_add"] + 0.5) * rel
    n_add_err = float(np.hypot(fit.std_errors["n_add"], sys))
    fit.diagnostics["n_add_statistical_error"] = fit.std_errors["n_add"]
    fit.diagnostics["p_input_dbm"] = float(watts_to_dbm(p_in))
    return (
        Estimate(gain_db, float(attenuation_uncertainty_db), "dB"),
        Estimate(fit["n_add"], n_add_err, "photons"),
        fit,
    )
