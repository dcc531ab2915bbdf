"""Run configuration: strict loading of nested YAML/JSON documents into dataclasses."""

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import yaml

from . import presets


class ConfigError(ValueError):
    pass


@dataclass
class ThermalConfig:
    sigma: float = presets.SIGMA_CR
    alpha: float = presets.ALPHA_CR
    volume: float = presets.VOLUME
    t_bath: float = presets.T_IDLE
    gamma: float = presets.GAMMA_CR


@dataclass
class AttenuatorConfig:
    a_att_db: float = presets.A_ATT_DB
    z0: float = 50.0
    r_att: float = presets.R_ATT


@dataclass
class StageConfig:
    attenuation_db: float
    temperature_k: float


def _device_stages():
    from .units import ratio_to_db

    return [StageConfig(float(ratio_to_db(s.attenuation)), s.temperature) for s in presets.device_drive_chain().stages]


@dataclass
class ReadoutConfig:
    gain_db: float = presets.GAIN_DB
    added_photons: float = presets.N_ADD


@dataclass
class BulkheadConfig:
    sigma_v: float = presets.BULKHEAD_SIGMA_V
    alpha: float = presets.BULKHEAD_ALPHA
    t_bath: float = presets.T_REFERENCE
    attenuation_db: float = presets.BULKHEAD_ATTENUATION_DB


@dataclass
class ScenarioConfig:
    thermal: ThermalConfig = field(default_factory=ThermalConfig)
    attenuator: AttenuatorConfig = field(default_factory=AttenuatorConfig)
    drive_chain: List[StageConfig] = field(default_factory=_device_stages)
    line_excess_db: List[List[float]] = field(default_factory=list)
    readout: ReadoutConfig = field(default_factory=ReadoutConfig)
    base_occupation_offset: float = 0.0
    bulkhead: Optional[BulkheadConfig] = field(default_factory=BulkheadConfig)


@dataclass
class AcquisitionConfig:
    rbw_hz: float = 3052.0
    span_hz: float = 5e6
    n_averages: int = 100
    drift: float = 0.0


@dataclass
class SweepConfig:
    start: float
    stop: float
    step: float


@dataclass
class ToneConfig:
    f_sig_hz: float
    f_det_hz: float


def _default_tones():
    # detection bands at 7, 5.5 and 4 GHz; 4 and 7 GHz tones are seen in two bands
    return [
        ToneConfig(4.0e9, 7.0e9), ToneConfig(5.0e9, 7.0e9), ToneConfig(5.5e9, 7.0e9),
        ToneConfig(4.0e9, 5.5e9), ToneConfig(7.0e9, 5.5e9), ToneConfig(8.0e9, 5.5e9),
        ToneConfig(7.0e9, 4.0e9),
    ]


@dataclass
class PsdConfig:
    rf_dbm: SweepConfig = field(default_factory=lambda: SweepConfig(-40.0, -5.0, 0.5))
    joule_dbm: SweepConfig = field(default_factory=lambda: SweepConfig(-125.0, -70.0, 0.25))
    tones: List[ToneConfig] = field(default_factory=_default_tones)
    reference: bool = True
    noise: bool = True


@dataclass
class TransientConfig:
    pulse_temperature_k: float = 0.110
    t_on_s: float = 2e-3
    t_off_s: float = 7e-3
    t_stop_s: float = 15e-3
    n_points: int = 3001
    noise_std_k: float = 0.0


@dataclass
class IqConfig:
    tones_hz: List[float] = field(default_factory=lambda: [4.0e9, 5.5e9, 7.0e9])
    p_sig_dbm: float = -28.0
    t_int_s: float = 1e-6
    n_samples: int = 100000
    digitizer_scale: float = 1.0


@dataclass
class ThermometryConfig:
    joule_dbm: SweepConfig = field(default_factory=lambda: SweepConfig(-100.0, -60.0, 1.0))
    rel_noise: float = 0.01


@dataclass
class WindowConfig:
    min_dbm: Optional[float] = None
    max_dbm: Optional[float] = -5.0


@dataclass
class BootstrapConfig:
    n: int = 500
    seed: int = 0


@dataclass
class ThermometerConfig:
    f_ge_hz: float = 5.496e9
    linewidth_rad_s: float = 2 * 3.141592653589793 * 35.8e6
    p_in_min_dbm: float = -8.4
    convention: str = "si-angular"


@dataclass
class FloorConfig:
    f_det_hz: float
    std_w_per_hz: float


@dataclass
class RecordsConfig:
    psd: str = "psd.csv"
    transient: Optional[str] = "transient.csv"
    iq: Optional[str] = "iq.csv"
    iq_meta: Optional[str] = "iq.json"
    thermometry: Optional[str] = "thermometry.csv"


@dataclass
class FitConfig:
    records: RecordsConfig = field(default_factory=RecordsConfig)
    a_att_db: float = presets.A_ATT_DB
    t_bath_k: float = presets.T_IDLE
    floor_std: List[FloorConfig] = field(default_factory=list)
    k_floor: float = 5.0
    window: WindowConfig = field(default_factory=WindowConfig)
    use_reference: bool = True
    attenuation_uncertainty_db: float = 0.5
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    thermometer: Optional[ThermometerConfig] = None
    seed: Optional[int] = None


@dataclass
class FitOptions:
    """Fit settings a simulate run forwards into its manifest."""

    k_floor: float = 5.0
    window: WindowConfig = field(default_factory=WindowConfig)
    use_reference: bool = True
    attenuation_uncertainty_db: float = 0.5
    bootstrap: BootstrapConfig = field(default_factory=BootstrapConfig)
    thermometer: Optional[ThermometerConfig] = None


@dataclass
class SimulateConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    acquisition: AcquisitionConfig = field(default_factory=AcquisitionConfig)
    psd: PsdConfig = field(default_factory=PsdConfig)
    transient: Optional[TransientConfig] = field(default_factory=TransientConfig)
    iq: Optional[IqConfig] = field(default_factory=IqConfig)
    thermometry: Optional[ThermometryConfig] = field(default_factory=ThermometryConfig)
    fit: FitOptions = field(default_factory=FitOptions)


def _convert(tp, value, where):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin is typing.Union:
        inner = [a for a in args if a is not type(None)]
        if value is None:
            return None
        return _convert(inner[0], value, where)
    if dataclasses.is_dataclass(tp):
        return from_dict(tp, value, where)
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{where}: expected a list, got {type(value).__name__}")
        return [_convert(args[0], v, f"{where}[{i}]") for i, v in enumerate(value)]
    if value is None:
        raise ConfigError(f"{where}: value required")
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, (int, float, str)):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        try:
            as_float = float(value)
        except ValueError:
            raise ConfigError(f"{where}: expected an integer, got {value!r}") from None
        if as_float != int(as_float):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return int(as_float)
    if tp is float:
        # YAML 1.1 reads 2.53e10 (no sign in the exponent) as a string
        if isinstance(value, bool):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        try:
            return float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: expected a number, got {value!r}") from None
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{where}: unsupported field type {tp}")


def from_dict(cls, data, where="config"):
    """Build ``cls`` from a mapping; unknown keys and missing required keys are errors."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}; allowed: {sorted(names)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            kwargs[f.name] = _convert(hints[f.name], data[f.name], f"{where}.{f.name}")
        elif f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING:
            raise ConfigError(f"{where}: missing required key {f.name!r}")
    return cls(**kwargs)


def load_document(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML/JSON: {exc}") from None
    return {} if data is None else data


def to_dict(cfg):
    return dataclasses.asdict(cfg)


def config_hash(cfg):
    """SHA-256 of the canonical form: key order, number spelling and defaults do not matter."""
    canon = json.dumps(to_dict(cfg), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()
