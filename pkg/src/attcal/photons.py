"""Thermal photon occupations and their propagation along a microwave line."""

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .units import BOLTZMANN, PLANCK, _positive


def bose_einstein(temperature, frequency):
    """Mean thermal photon number of a mode at ``frequency`` (Hz) and ``temperature`` (K)."""
    _positive("temperature", temperature)
    _positive("frequency", frequency)
    x = PLANCK * np.asarray(frequency, dtype=float) / (BOLTZMANN * np.asarray(temperature, dtype=float))
    return 1.0 / np.expm1(x)


def occupation_to_temperature(occupation, frequency):
    """Temperature (K) at which a mode at ``frequency`` holds ``occupation`` photons."""
    _positive("occupation", occupation)
    _positive("frequency", frequency)
    n = np.asarray(occupation, dtype=float)
    return PLANCK * np.asarray(frequency, dtype=float) / (BOLTZMANN * np.log1p(1.0 / n))


@dataclass(frozen=True)
class Attenuator:
    """Matched attenuator with power transmission ``attenuation`` held at ``temperature``."""

    attenuation: float
    temperature: float

    def __post_init__(self):
        if not 0.0 < self.attenuation <= 1.0:
            raise ValueError(f"attenuation must lie in (0, 1], got {self.attenuation}")
        _positive("temperature", self.temperature)


@dataclass(frozen=True)
class Amplifier:
    """Phase-insensitive gain stage; ``added_photons`` is referred to its input."""

    gain: float
    added_photons: float = 0.0

    def __post_init__(self):
        if self.gain < 1.0:
            raise ValueError(f"amplifier gain must be >= 1, got {self.gain}")
        if self.added_photons < 0:
            raise ValueError("added_photons must be non-negative")


ChainStage = Union[Attenuator, Amplifier]


@dataclass(frozen=True)
class ChainSpec:
    """Ordered stages of a line, input to output."""

    stages: Sequence[ChainStage]

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(self.stages))
        if not self.stages:
            raise ValueError("a chain needs at least one stage")

    @property
    def transmission(self):
        """Net power ratio of the chain (product of all stage ratios)."""
        total = 1.0
        for stage in self.stages:
            total *= stage.attenuation if isinstance(stage, Attenuator) else stage.gain
        return total


def propagate_occupation(chain, n_in, frequency):
    """Push an input occupation through ``chain`` with the beam-splitter model.

    An attenuator of transmission A at temperature T maps n -> A n + (1 - A) n_BE(T);
    an amplifier of gain G with input-referred noise n_a maps n -> G (n + n_a).
    """
    n = np.asarray(n_in, dtype=float)
    if np.any(n < 0):
        raise ValueError("occupation must be non-negative")
    for stage in chain.stages:
        if isinstance(stage, Attenuator):
            a = stage.attenuation
            n = a * n + (1.0 - a) * bose_einstein(stage.temperature, frequency)
        else:
            n = stage.gain * (n + stage.added_photons)
    return n
