"""Resistive T-pad attenuator network."""

from dataclasses import dataclass

import numpy as np

from .units import _positive


@dataclass(frozen=True)
class TPadNetwork:
    """Symmetric T network: two series arms ``r_series`` around one shunt ``r_shunt`` (ohms).

    ``r_shunt`` is the effective shunt to ground. A layout that splits the shunt
    into two parallel legs of R each is described by ``r_shunt = R / 2``.
    """

    r_series: float
    r_shunt: float
    z0: float = 50.0

    def __post_init__(self):
        _positive("r_series", self.r_series)
        _positive("r_shunt", self.r_shunt)
        _positive("z0", self.z0)

    def abcd(self):
        a = 1.0 + self.r_series / self.r_shunt
        b = 2.0 * self.r_series + self.r_series**2 / self.r_shunt
        c = 1.0 / self.r_shunt
        return np.array([[a, b], [c, a]])


def tpad_transmission(net):
    """Power transmission |S21|^2 of the pad between ``z0`` terminations."""
    (a, b), (c, d) = net.abcd()
    s21 = 2.0 / (a + b / net.z0 + c * net.z0 + d)
    return s21**2


def tpad_from_attenuation(target_db, z0=50.0):
    """Matched T-pad realising ``target_db`` (negative, dB) in a ``z0`` system."""
    if target_db >= 0:
        raise ValueError("target attenuation must be negative (a loss) in dB")
    k = 10.0 ** (-target_db / 20.0)
    return TPadNetwork(
        r_series=z0 * (k - 1.0) / (k + 1.0),
        r_shunt=2.0 * z0 * k / (k**2 - 1.0),
        z0=z0,
    )
