"""Electron-phonon heat balance of the resistive film."""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .units import _positive


@dataclass(frozen=True)
class ThermalModel:
    """Electron-phonon parameters of a thin metal film.

    sigma: coupling constant, W m^-3 K^-alpha
    alpha: power-law exponent
    volume: film volume, m^3
    t_bath: phonon (bath) temperature, K
    gamma: Sommerfeld coefficient, J m^-3 K^-2, heat capacity C = gamma V T
    """

    sigma: float
    alpha: float
    volume: float
    t_bath: float
    gamma: float = 220.0

    def __post_init__(self):
        _positive("sigma", self.sigma)
        _positive("volume", self.volume)
        _positive("t_bath", self.t_bath)
        _positive("gamma", self.gamma)
        if self.alpha <= 1:
            raise ValueError(f"alpha must exceed 1, got {self.alpha}")

    @property
    def sigma_v(self):
        return self.sigma * self.volume

    def heat_flow(self, temperature):
        """Power (W) the electrons shed to the phonons at ``temperature``."""
        t = np.asarray(temperature, dtype=float)
        return self.sigma_v * (t**self.alpha - self.t_bath**self.alpha)

    def time_constant(self, temperature):
        """Small-signal relaxation time C/G_th = gamma T^(2-alpha) / (alpha sigma)."""
        t = np.asarray(temperature, dtype=float)
        return self.gamma * t ** (2.0 - self.alpha) / (self.alpha * self.sigma)


def steady_state_temperature(tm, power):
    """Electron temperature (K) at which ``power`` (W) balances the phonon heat flow."""
    p = np.asarray(power, dtype=float)
    if np.any(p < 0):
        raise ValueError("dissipated power must be non-negative")
    return (p / tm.sigma_v + tm.t_bath**tm.alpha) ** (1.0 / tm.alpha)


def power_for_temperature(tm, temperature):
    """Dissipated power (W) needed to hold the electrons at ``temperature``."""
    t = np.asarray(temperature, dtype=float)
    if np.any(t < tm.t_bath):
        raise ValueError("cannot cool below the bath temperature by heating")
    return tm.heat_flow(t)


def joule_power(r_att, current):
    _positive("r_att", r_att)
    return r_att * np.asarray(current, dtype=float) ** 2


def dissipated_rf_power(a_line, a_att, p_sig):
    """Power absorbed in the attenuator from a tone of ``p_sig`` watts at the generator."""
    for name, a in (("a_line", a_line), ("a_att", a_att)):
        if np.any(np.asarray(a) <= 0) or np.any(np.asarray(a) > 1):
            raise ValueError(f"{name} must lie in (0, 1]")
    return a_line * (1.0 - a_att) * np.asarray(p_sig, dtype=float)


def _power_at(schedule, t):
    p = schedule[0][1]
    for start, level in schedule:
        if start <= t:
            p = level
    return p


def transient_temperature(tm, schedule, t_grid, rtol=1e-8):
    """Integrate gamma V T dT/dt = P(t) - sigma V (T^alpha - T0^alpha) on ``t_grid``.

    ``schedule`` is a sequence of ``(t_start, power)`` steps; the power before the
    first step equals the first level and the film starts in its steady state there.
    Each constant-power segment is integrated separately so that the adaptive
    stepper never straddles a discontinuity.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or t_grid.size < 1 or np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    schedule = sorted((float(s), float(p)) for s, p in schedule)
    if not schedule:
        raise ValueError("empty power schedule")
    if any(p < 0 for _, p in schedule):
        raise ValueError("power levels must be non-negative")

    heat_capacity = tm.gamma * tm.volume

    def rhs(_, y, p):
        t = y[0]
        return [(p - tm.heat_flow(t)) / (heat_capacity * t)]

    edges = [s for s, _ in schedule if t_grid[0] < s < t_grid[-1]]
    bounds = [t_grid[0], *edges, t_grid[-1]]
    temp = float(steady_state_temperature(tm, _power_at(schedule, t_grid[0])))
    out = np.empty_like(t_grid)
    out[0] = temp
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        p = _power_at(schedule, lo)
        mask = (t_grid > lo) & (t_grid <= hi)
        t_eval = t_grid[mask]
        if hi not in t_eval:
            t_eval = np.append(t_eval, hi)
        sol = solve_ivp(
            rhs, (lo, hi), [temp], method="DOP853", t_eval=t_eval, args=(p,),
            rtol=rtol, atol=rtol * tm.t_bath * 1e-3,
        )
        if not sol.success:
            raise RuntimeError(f"thermal integration failed: {sol.message}")
        out[mask] = sol.y[0][: mask.sum()]
        temp = float(sol.y[0][-1])
    if not np.all(np.isfinite(out)):
        raise RuntimeError("thermal integration produced non-finite temperatures")
    return out
