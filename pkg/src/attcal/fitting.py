"""Damped Gauss-Newton least squares and the two curve fits built on it."""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class FitError(RuntimeError):
    pass


class SingularFitError(FitError):
    """The data do not constrain every parameter."""


@dataclass
class FitResult:
    params: dict
    std_errors: dict
    residual_norm: float
    n_points: int
    window: Optional[tuple] = None
    flags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    def __getitem__(self, name):
        return self.params[name]

    def to_dict(self):
        return {
            "params": {k: float(v) for k, v in self.params.items()},
            "std_errors": {k: float(v) for k, v in self.std_errors.items()},
            "residual_norm": float(self.residual_norm),
            "n_points": int(self.n_points),
            "window": None if self.window is None else [float(w) for w in self.window],
            "flags": list(self.flags),
            "diagnostics": {k: _plain(v) for k, v in self.diagnostics.items()},
        }


def _plain(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def levenberg_marquardt(residual, jacobian, x0, max_iter=200, rtol=1e-10):
    """Minimise ||residual(x)||^2 by Gauss-Newton steps with Marquardt damping.

    Returns ``(x, r, J, n_iter)`` at the solution. Raises SingularFitError when
    the Jacobian at the solution is rank deficient.
    """
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = r @ r
    lam = 1e-3
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        jac = jacobian(x)
        grad = jac.T @ r
        hess = jac.T @ jac
        scale = np.diag(hess).copy()
        scale[scale == 0] = 1.0
        improved = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(hess + lam * np.diag(scale), -grad)
            except np.linalg.LinAlgError:
                lam *= 10
                continue
            x_new = x + step
            r_new = residual(x_new)
            cost_new = r_new @ r_new
            if np.isfinite(cost_new) and cost_new <= cost:
                improved = True
                break
            lam *= 10
        if not improved:
            break
        drop = cost - cost_new
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / 10, 1e-12)
        if np.all(np.abs(step) <= rtol * (np.abs(x) + rtol)) or drop <= rtol * cost:
            break
    jac = jacobian(x)
    if np.linalg.matrix_rank(jac, tol=np.finfo(float).eps * max(jac.shape) * np.abs(jac).max()) < x.size:
        raise SingularFitError("Jacobian is rank deficient at the solution")
    return x, r, jac, n_iter


def _covariance(r, jac):
    n, p = jac.shape
    dof = n - p
    if dof <= 0:
        return np.full((p, p), np.nan)
    s2 = (r @ r) / dof
    return s2 * np.linalg.pinv(jac.T @ jac)


def fit_power_law(power, temperature, t_bath, alpha=None):
    """Fit T(P) = (P / sigma_v + T0^alpha)^(1/alpha) to thermometry points.

    Residuals are taken in temperature, the measured quantity. ``alpha`` may be
    held fixed, in which case only ``sigma_v`` is fitted. Returns a FitResult with
    parameters ``sigma_v`` (W K^-alpha) and ``alpha``.
    """
    p = np.asarray(power, dtype=float)
    t = np.asarray(temperature, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("power and temperature must be 1-D arrays of equal length")
    free_alpha = alpha is None
    if free_alpha and p.size < 4:
        raise ValueError("need at least 4 points to fit sigma_v and alpha")
    hot = t > t_bath
    if free_alpha and np.count_nonzero(hot) < 3:
        raise SingularFitError("need at least 3 points above the bath temperature")
    if np.ptp(t) == 0 or np.ptp(p) == 0:
        raise SingularFitError("all points coincide; the power law is not identifiable")
    if not np.any(hot & (p > 0)):
        raise SingularFitError("no heated points to fix the coupling")

    if free_alpha:
        order = np.argsort(t[hot])
        top = order[len(order) // 2:]
        hp, ht = p[hot][top], t[hot][top]
        ok = hp > 0
        if np.count_nonzero(ok) >= 2:
            alpha0 = np.polyfit(np.log(ht[ok] - t_bath), np.log(hp[ok]), 1)[0]
        else:
            alpha0 = 5.0
        alpha0 = float(np.clip(alpha0, 1.5, 20.0))
    else:
        alpha0 = float(alpha)
    i_last = np.argmax(np.where(p > 0, t, -np.inf))
    sv0 = p[i_last] / (t[i_last] ** alpha0 - t_bath**alpha0)

    def unpack(x):
        return np.exp(x[0]), (x[1] if free_alpha else alpha0)

    def model(x):
        sv, a = unpack(x)
        u = p / sv + t_bath**a
        return u, u ** (1.0 / a)

    def residual(x):
        return model(x)[1] - t

    def jacobian(x):
        sv, a = unpack(x)
        u, tm = model(x)
        d_logsv = (1.0 / a) * u ** (1.0 / a - 1.0) * (-p / sv)
        cols = [d_logsv]
        if free_alpha:
            d_alpha = tm * (-np.log(u) / a**2 + (t_bath**a * np.log(t_bath)) / (a * u))
            cols.append(d_alpha)
        return np.column_stack(cols)

    x0 = [np.log(sv0), alpha0] if free_alpha else [np.log(sv0)]
    x, r, jac, n_iter = levenberg_marquardt(residual, jacobian, x0)
    cov = _covariance(r, jac)
    sv, a = unpack(x)
    params = {"sigma_v": sv, "alpha": a}
    errors = {"sigma_v": sv * np.sqrt(cov[0, 0]), "alpha": np.sqrt(cov[1, 1]) if free_alpha else 0.0}
    return FitResult(
        params, errors, float(np.linalg.norm(r)), p.size,
        diagnostics={"iterations": n_iter, "t_bath": t_bath},
    )


def segment_slice(trace, segment):
    """Boolean mask of the heating (pulse on) or cooling (after pulse) samples."""
    t_on, t_off = trace.pulse_window
    if segment == "heat":
        return (trace.time >= t_on) & (trace.time <= t_off)
    if segment == "cool":
        return trace.time >= t_off
    raise ValueError(f"segment must be 'heat' or 'cool', got {segment!r}")


def fit_exponential(trace, segment, window=None):
    """Fit y = asymptote + amplitude * exp(-(t - t_start) / tau) to one segment.

    ``window`` optionally restricts the fit to absolute times ``(t_lo, t_hi)``
    within the segment; t_start is the first sample used.
    """
    mask = segment_slice(trace, segment)
    if window is not None:
        mask &= (trace.time >= window[0]) & (trace.time <= window[1])
    x = trace.time[mask]
    y = trace.value[mask]
    if x.size < 10:
        raise ValueError(f"{segment} segment has {x.size} samples; need at least 10")
    x = x - x[0]

    tail = max(1, x.size // 10)
    asym0 = float(np.mean(y[-tail:]))
    amp0 = float(y[0] - asym0)
    level = max(abs(asym0), abs(y).max())
    flags = []
    if abs(amp0) <= 1e-12 * level or np.ptp(y) <= 1e-12 * level:
        flags.append("tau unidentifiable: no relaxation in segment")
        return FitResult(
            {"tau": np.nan, "asymptote": asym0, "amplitude": 0.0},
            {"tau": np.nan, "asymptote": float(np.std(y) / np.sqrt(y.size)), "amplitude": np.nan},
            float(np.linalg.norm(y - asym0)), int(y.size), flags=flags,
            diagnostics={"r_squared": np.nan},
        )
    below = np.nonzero(np.abs(y - asym0) < abs(amp0) / np.e)[0]
    tau0 = x[below[0]] if below.size and x[below[0]] > 0 else x[-1] / 5

    def residual(v):
        return v[0] + v[1] * np.exp(-x / np.exp(v[2])) - y

    def jacobian(v):
        e = np.exp(-x / np.exp(v[2]))
        return np.column_stack([np.ones_like(x), e, v[1] * e * x / np.exp(v[2])])

    v, r, jac, n_iter = levenberg_marquardt(residual, jacobian, [asym0, amp0, np.log(tau0)])
    cov = _covariance(r, jac)
    tau = float(np.exp(v[2]))
    errors = {
        "tau": tau * np.sqrt(cov[2, 2]),
        "asymptote": np.sqrt(cov[0, 0]),
        "amplitude": np.sqrt(cov[1, 1]),
    }
    ss_tot = np.sum((y - y.mean()) ** 2)
    r2 = 1.0 - (r @ r) / ss_tot if ss_tot > 0 else np.nan
    if np.isfinite(errors["amplitude"]) and abs(v[1]) < 3 * errors["amplitude"]:
        flags.append("tau unidentifiable: amplitude within noise")
    noise = np.std(r)
    steps = np.diff(y)
    against = steps * np.sign(v[1]) > 5 * np.sqrt(2) * noise + 1e-15 * level
    if np.any(against):
        flags.append("segment not monotone beyond noise")
        warnings.warn(f"{segment} segment is not monotone beyond noise", stacklevel=2)
    return FitResult(
        {"tau": tau, "asymptote": float(v[0]), "amplitude": float(v[1])},
        errors, float(np.linalg.norm(r)), int(y.size), flags=flags,
        diagnostics={"r_squared": float(r2), "iterations": n_iter},
    )


def settling_window(trace, segment, tol=0.01, skip=0.2):
    """Time window covering the last ``1 - skip`` of a segment's settling span.

    The settling span ends where the deviation from the final value last exceeds
    ``tol`` of the initial excursion.
    """
    mask = segment_slice(trace, segment)
    x, y = trace.time[mask], trace.value[mask]
    dev = np.abs(y - y[-1])
    above = np.nonzero(dev > tol * dev[0])[0]
    end = x[above[-1]] if above.size else x[-1]
    return (x[0] + skip * (end - x[0]), end)
