"""Physical constants and unit conversions.

Quantities are carried as plain floats (or numpy arrays) in SI units:
hertz, kelvin, watts. Power ratios are linear unless a name ends in ``_db``.
"""

import numpy as np

# CODATA 2018 exact values
PLANCK = 6.62607015e-34  # J s
BOLTZMANN = 1.380649e-23  # J/K
HBAR = PLANCK / (2 * np.pi)  # 1.054571817e-34 J s


def dbm_to_watts(dbm):
    return 1e-3 * 10.0 ** (np.asarray(dbm, dtype=float) / 10.0)


def watts_to_dbm(watts):
    watts = np.asarray(watts, dtype=float)
    if np.any(watts <= 0):
        raise ValueError("power must be positive to express in dBm")
    return 10.0 * np.log10(watts / 1e-3)


def db_to_ratio(db):
    return 10.0 ** (np.asarray(db, dtype=float) / 10.0)


def ratio_to_db(ratio):
    ratio = np.asarray(ratio, dtype=float)
    if np.any(ratio <= 0):
        raise ValueError("power ratio must be positive to express in dB")
    return 10.0 * np.log10(ratio)


def angular(frequency_hz):
    return 2 * np.pi * np.asarray(frequency_hz, dtype=float)


def _positive(name, value):
    if np.any(np.asarray(value) <= 0):
        raise ValueError(f"{name} must be positive, got {value!r}")
