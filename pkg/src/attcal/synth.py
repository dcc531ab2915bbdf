"""Seeded synthesis of PSD sweeps, thermal transients and IQ records from a ground-truth scenario."""

import dataclasses
import warnings
import zlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import TPadNetwork, tpad_transmission
from .photons import ChainSpec, bose_einstein, propagate_occupation
from .thermal import ThermalModel, dissipated_rf_power, steady_state_temperature, transient_temperature
from .units import PLANCK, dbm_to_watts, watts_to_dbm

ROOM_TEMPERATURE = 300.0

JOULE = "joule"
RF = "rf"
RF_REFERENCE = "rf_reference"
PSD_KINDS = (JOULE, RF, RF_REFERENCE)


@dataclass(frozen=True)
class NoiseSource:
    """The heatable on-chip attenuator: thermal film, pad network and four-probe DC resistance."""

    thermal: ThermalModel
    network: TPadNetwork
    r_att: float = 67.0

    @property
    def a_att(self):
        return tpad_transmission(self.network)


@dataclass(frozen=True)
class Bulkhead:
    """Last bulkhead attenuator of the drive line, heated only by the RF tone.

    ``coupling`` is the power ratio from the generator to the bulkhead input.
    """

    thermal: ThermalModel
    attenuation: float
    coupling: float

    def added_occupation(self, p_sig_w, frequency):
        p = self.coupling * (1.0 - self.attenuation) * np.asarray(p_sig_w, dtype=float)
        t = steady_state_temperature(self.thermal, p)
        n0 = bose_einstein(self.thermal.t_bath, frequency)
        return (1.0 - self.attenuation) * (bose_einstein(t, frequency) - n0)


@dataclass(frozen=True)
class Acquisition:
    """Spectrum-analyzer settings for one PSD point."""

    rbw: float = 3052.0
    span: float = 5e6
    n_averages: int = 100
    # fractional std of residual on/off baseline mismatch; 0 means ideal interleaving
    drift: float = 0.0

    def __post_init__(self):
        if not 0 < self.rbw <= self.span:
            raise ValueError("need 0 < rbw <= span")
        if self.n_averages < 1:
            raise ValueError("n_averages must be a positive integer")

    @property
    def relative_std(self):
        # radiometer std per bin, averaged over the span/rbw bins of the integration
        per_bin = 1.0 / np.sqrt(self.rbw * self.n_averages)
        return per_bin / np.sqrt(self.span / self.rbw)


@dataclass(frozen=True)
class Scenario:
    drive_chain: ChainSpec
    noise_source: NoiseSource
    readout_gain: float
    readout_added_photons: float
    base_occupation_offset: float = 0.0
    rng_seed: int = 0
    bulkhead: Optional[Bulkhead] = None
    # (frequency Hz, extra loss dB <= 0) pairs added to the chain, linear in between
    line_excess_db: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "line_excess_db", tuple((float(f), float(d)) for f, d in self.line_excess_db))
        if any(d > 0 for _, d in self.line_excess_db):
            raise ValueError("excess line loss must be <= 0 dB")
        if self.readout_gain < 1:
            raise ValueError("readout_gain must be >= 1")
        if self.readout_added_photons < 0 or self.base_occupation_offset < 0:
            raise ValueError("photon numbers must be non-negative")

    @property
    def a_line(self):
        """Chain transmission without the frequency-dependent excess."""
        return self.drive_chain.transmission

    def a_line_at(self, frequency):
        if not self.line_excess_db:
            return self.a_line
        f, d = zip(*sorted(self.line_excess_db))
        return self.a_line * 10.0 ** (np.interp(frequency, f, d) / 10.0)

    @property
    def a_att(self):
        return self.noise_source.a_att

    def with_seed(self, seed):
        return dataclasses.replace(self, rng_seed=int(seed))


@dataclass(frozen=True, eq=False)
class PsdTrace:
    """Added PSD (heater on minus off, W/Hz at the analyzer) versus drive.

    ``drive`` is dissipated Joule power in W for the joule kind and generator
    power in dBm for the two RF kinds.
    """

    kind: str
    drive: np.ndarray
    added_psd: np.ndarray
    f_det: float
    f_sig: Optional[float] = None
    rbw: float = 3052.0
    span: float = 5e6
    n_averages: int = 100

    def __post_init__(self):
        if self.kind not in PSD_KINDS:
            raise ValueError(f"unknown PSD kind {self.kind!r}")
        drive = np.asarray(self.drive, dtype=float)
        psd = np.asarray(self.added_psd, dtype=float)
        object.__setattr__(self, "drive", drive)
        object.__setattr__(self, "added_psd", psd)
        if drive.shape != psd.shape or drive.ndim != 1:
            raise ValueError("drive and added_psd must be 1-D and of equal length")
        if not np.all(np.isfinite(psd)):
            raise ValueError("added_psd entries must be finite")
        if self.rbw > self.span:
            raise ValueError("rbw cannot exceed span")
        if self.kind != JOULE and self.f_sig is None:
            raise ValueError("RF traces need f_sig")

    @property
    def drive_dbm(self):
        return watts_to_dbm(self.drive) if self.kind == JOULE else self.drive

    def __len__(self):
        return self.drive.size


@dataclass(frozen=True, eq=False)
class TransientTrace:
    time: np.ndarray
    value: np.ndarray
    pulse_window: tuple
    quantity: str = "temperature_k"

    def __post_init__(self):
        time = np.asarray(self.time, dtype=float)
        object.__setattr__(self, "time", time)
        object.__setattr__(self, "value", np.asarray(self.value, dtype=float))
        if np.any(np.diff(time) <= 0):
            raise ValueError("time must be strictly increasing")
        if time.shape != self.value.shape:
            raise ValueError("time and value must have equal length")


@dataclass(frozen=True, eq=False)
class IqRecord:
    samples: np.ndarray
    t_int: float
    f_sig: float
    p_sig: float  # W at the generator
    digitizer_scale: float = 1.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 2 or samples.shape[1] != 2 or samples.shape[0] < 2:
            raise ValueError("samples must be an (n >= 2, 2) array of I, Q pairs")
        if self.t_int <= 0:
            raise ValueError("t_int must be positive")

    @property
    def p_sig_dbm(self):
        return float(watts_to_dbm(self.p_sig))


def record_rng(seed, label):
    """Independent generator for one record, keyed by (seed, label) and not by call order."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


def line_occupation(sc, frequency):
    """Thermal occupation delivered by the drive line to the noise-source input."""
    n_room = bose_einstein(ROOM_TEMPERATURE, frequency)
    return propagate_occupation(sc.drive_chain, n_room, frequency)


def floor_occupation(sc, frequency):
    """Input-referred occupation of the output noise with the heater off."""
    a_att = sc.a_att
    t_idle = sc.noise_source.thermal.t_bath
    n_src = a_att * line_occupation(sc, frequency) + (1 - a_att) * bose_einstein(t_idle, frequency)
    return sc.readout_added_photons + 0.5 + sc.base_occupation_offset + n_src


def added_occupation(sc, dissipated, f_det):
    """Extra photons leaving the noise source when it dissipates ``dissipated`` watts."""
    tm = sc.noise_source.thermal
    t_e = steady_state_temperature(tm, dissipated)
    return (1.0 - sc.a_att) * (bose_einstein(t_e, f_det) - bose_einstein(tm.t_bath, f_det))


def photons_to_psd(sc, occupation, f_det):
    return sc.readout_gain * PLANCK * f_det * np.asarray(occupation, dtype=float)


def noise_floor_std(sc, f_det, acq=Acquisition()):
    """Std (W/Hz) of an added-PSD point with the heater off."""
    return photons_to_psd(sc, floor_occupation(sc, f_det), f_det) * acq.relative_std


def dissipated_power(sc, kind, drive, f_sig=None):
    if kind == JOULE:
        return np.asarray(drive, dtype=float)
    return dissipated_rf_power(sc.a_line_at(f_sig), sc.a_att, dbm_to_watts(drive))


def clean_added_psd(sc, kind, drive, f_det, f_sig=None):
    drive = np.asarray(drive, dtype=float)
    if kind == RF_REFERENCE:
        if sc.bulkhead is None:
            return np.zeros_like(drive)
        return photons_to_psd(sc, sc.bulkhead.added_occupation(dbm_to_watts(drive), f_det), f_det)
    dn = added_occupation(sc, dissipated_power(sc, kind, drive, f_sig), f_det)
    if kind == RF and sc.bulkhead is not None:
        dn = dn + sc.a_att * sc.bulkhead.added_occupation(dbm_to_watts(drive), f_det)
    return photons_to_psd(sc, dn, f_det)


def synth_psd_trace(sc, kind, drive, f_det, f_sig=None, acq=Acquisition(), noise=True):
    """Added-PSD sweep of one kind.

    Joule drive is in W, RF drive in dBm at the generator. With ``noise`` each
    point receives Gaussian radiometer scatter scaled by the heater-on total PSD.
    """
    if kind not in PSD_KINDS:
        raise ValueError(f"unknown PSD kind {kind!r}")
    if kind != JOULE and f_sig is None:
        raise ValueError(f"{kind} trace needs the tone frequency f_sig")
    drive = np.asarray(drive, dtype=float)
    if np.any(np.diff(drive) < 0):
        raise ValueError("drive axis must be sorted ascending")
    psd = clean_added_psd(sc, kind, drive, f_det, f_sig)
    if noise:
        rng = record_rng(sc.rng_seed, f"psd/{kind}/{f_sig}/{f_det}")
        total = photons_to_psd(sc, floor_occupation(sc, f_det), f_det) + psd
        scale = total * np.hypot(acq.relative_std, acq.drift)
        psd = psd + scale * rng.standard_normal(drive.size)
    return PsdTrace(kind, drive, psd, f_det, f_sig, acq.rbw, acq.span, acq.n_averages)


def synth_transient(sc, pulse_power, t_grid, pulse_window, noise_std=0.0):
    """Film temperature during a heating pulse of ``pulse_power`` watts dissipated."""
    t_on, t_off = pulse_window
    t_grid = np.asarray(t_grid, dtype=float)
    if not t_grid[0] <= t_on < t_off <= t_grid[-1]:
        raise ValueError("pulse window must lie inside the time grid")
    # snap the edges onto the grid so the on/off flags of every sample are unambiguous
    t_on = float(t_grid[np.argmin(np.abs(t_grid - t_on))])
    t_off = float(t_grid[np.argmin(np.abs(t_grid - t_off))])
    if t_off <= t_on:
        raise ValueError("pulse shorter than one grid step")
    schedule = [(t_grid[0], 0.0), (t_on, pulse_power), (t_off, 0.0)]
    temp = transient_temperature(sc.noise_source.thermal, schedule, t_grid)
    if noise_std > 0:
        temp = temp + noise_std * record_rng(sc.rng_seed, "transient").standard_normal(temp.size)
    return TransientTrace(t_grid, temp, (t_on, t_off))


def synth_thermometry(sc, joule_powers, rel_noise=0.0):
    """(power, film temperature) pairs as read by an ideal thermometer, optional multiplicative noise."""
    p = np.asarray(joule_powers, dtype=float)
    t = steady_state_temperature(sc.noise_source.thermal, p)
    if rel_noise > 0:
        t = t * (1.0 + rel_noise * record_rng(sc.rng_seed, "thermometry").standard_normal(t.size))
    return p, t


def input_power(sc, p_sig, f_sig):
    """Tone power (W) at the amplification-chain input plane."""
    return sc.a_line_at(f_sig) * sc.a_att * p_sig


def synth_iq(sc, f_sig, p_sig, n_samples, t_int, digitizer_scale=1.0, noise=True):
    """Integrated quadratures of a weak tone of ``p_sig`` watts at the generator.

    In units of sqrt(photons) at the chain input the cloud is centred at
    sqrt(N_sig) and each quadrature has variance n_add + 1/2; the digitizer sees
    that scaled by sqrt(G) * digitizer_scale.
    """
    p_in = input_power(sc, p_sig, f_sig)
    if p_in <= 0:
        raise ValueError("tone power at the chain input is zero")
    if n_samples < 100:
        warnings.warn(f"only {n_samples} IQ samples; moment estimates will be poor", stacklevel=2)
    n_sig = p_in * t_int / (PLANCK * f_sig)
    amp = digitizer_scale * np.sqrt(sc.readout_gain)
    rng = record_rng(sc.rng_seed, f"iq/{f_sig}")
    phase = rng.uniform(0, 2 * np.pi)
    centre = amp * np.sqrt(n_sig) * np.array([np.cos(phase), np.sin(phase)])
    sigma = amp * np.sqrt(sc.readout_added_photons + 0.5)
    if noise:
        samples = centre + sigma * rng.standard_normal((n_samples, 2))
    else:
        samples = np.tile(centre, (n_samples, 1))
    return IqRecord(samples, t_int, f_sig, float(p_sig), digitizer_scale)
