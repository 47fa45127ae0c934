"""
Network, path loss and timing domain types.

All quantities are linear SI units internally: watts, meters, seconds, BS per square meter.
Decibel forms exist only at the edges (config documents, presets) and are converted on ingestion.
"""

import dataclasses as dc
import enum
import logging
import math
from typing import Any, List, Mapping, Type, TypeVar, Union, overload

import numpy as np
import pydantic as pd

from . import errors

logger = logging.getLogger(__name__)

NOISE_DENSITY_DBM_HZ = -174.0

ModelT = TypeVar('ModelT', bound=pd.BaseModel)


class Scenario(str, enum.Enum):
    """
    Which impairments limit detection.
    """

    GENERAL = 'general'
    NOISE_LIMITED = 'noise-limited'  # interference treated as exactly zero
    INTERFERENCE_LIMITED = 'interference-limited'  # noise treated as exactly zero


def parse_config(model: Type[ModelT], values: Mapping[str, Any]) -> ModelT:
    """
    Validates configuration values into a model converting validation failures into
    :py:class:`cellsearch.errors.ConfigFieldError` naming the first offending field.

    :param model: model type
    :param values: raw field values
    :return: validated model
    """

    try:
        return model.parse_obj(values)
    except pd.ValidationError as e:
        first = e.errors()[0]
        field_name = '.'.join(str(loc) for loc in first['loc'])
        raise errors.ConfigFieldError(model.__name__, field_name, first['msg']) from e


def db_to_linear(x_db: float) -> float:
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    if not x > 0:
        raise errors.DomainError(f"decibels are undefined for non-positive ratio {x!r}")

    return 10.0 * math.log10(x)


def dbm_to_watts(x_dbm: float) -> float:
    return db_to_linear(x_dbm - 30.0)


def watts_to_dbm(x: float) -> float:
    return linear_to_db(x) + 30.0


def noise_power_from_bandwidth(bandwidth_hz: float, density_dbm_hz: float = NOISE_DENSITY_DBM_HZ) -> float:
    """
    Thermal noise power over a bandwidth.

    :param bandwidth_hz: receiver bandwidth
    :param density_dbm_hz: noise spectral density
    :return: noise power in watts
    """

    if not bandwidth_hz > 0:
        raise errors.DomainError(f"bandwidth must be positive, got {bandwidth_hz!r}")

    return dbm_to_watts(density_dbm_hz + 10.0 * math.log10(bandwidth_hz))


class NetworkConfig(pd.BaseModel):
    """
    Radio, antenna, timing and density parameters of the network.

    :param lambda_bs: BS intensity, BS per square meter
    :param m_beams: number of beams swept per cycle (also the directivity gain)
    :param power_tx: BS transmit power, watts
    :param noise_power: thermal noise power, watts
    :param sinr_threshold: detection threshold, linear ratio
    :param cycle_period: initial access cycle period, seconds
    :param symbol_period: synchronization symbol duration, seconds
    :param scenario: impairment mode
    """

    lambda_bs: float = pd.Field(..., gt=0)
    m_beams: int = pd.Field(..., ge=1)
    power_tx: float = pd.Field(..., gt=0)
    noise_power: float = pd.Field(..., ge=0)
    sinr_threshold: float = pd.Field(..., gt=0)
    cycle_period: float = pd.Field(..., gt=0)
    symbol_period: float = pd.Field(..., gt=0)
    scenario: Scenario = Scenario.GENERAL

    class Config:
        frozen = True

    @pd.root_validator(skip_on_failure=True)
    def check_sweep_fits_cycle(cls, values: dict) -> dict:
        sweep = values['m_beams'] * values['symbol_period']
        if not values['cycle_period'] > sweep:
            raise ValueError(
                f"cycle period {values['cycle_period']} must exceed the sweep duration {sweep} "
                f"({values['m_beams']} beams)",
            )

        return values

    @property
    def has_noise(self) -> bool:
        return self.scenario is not Scenario.INTERFERENCE_LIMITED and self.noise_power > 0

    @property
    def has_interference(self) -> bool:
        return self.scenario is not Scenario.NOISE_LIMITED

    @property
    def effective_noise_power(self) -> float:
        return self.noise_power if self.has_noise else 0.0

    def with_beams(self, m_beams: int) -> 'NetworkConfig':
        return parse_config(NetworkConfig, {**self.dict(), 'm_beams': m_beams})

    def with_scenario(self, scenario: Scenario) -> 'NetworkConfig':
        return parse_config(NetworkConfig, {**self.dict(), 'scenario': scenario})

    def with_density(self, lambda_bs: float) -> 'NetworkConfig':
        return parse_config(NetworkConfig, {**self.dict(), 'lambda_bs': lambda_bs})


@dc.dataclass(frozen=True)
class PathLossSegment:
    """
    Power-law piece `c * r ** alpha` of a path loss function on `[r_lo, r_hi)`.
    """

    r_lo: float
    r_hi: float
    c: float
    alpha: float


class PathLossModel(pd.BaseModel):
    """
    Dual-slope non-decreasing path loss `C_L r^a_L` below the critical radius, `C_N r^a_N` beyond.

    :param c_los: line-of-sight coefficient at 1 m, linear
    :param c_nlos: non-line-of-sight coefficient at 1 m, linear
    :param alpha_los: line-of-sight exponent
    :param alpha_nlos: non-line-of-sight exponent
    :param r_critical: critical radius, meters
    """

    c_los: float = pd.Field(..., gt=0)
    c_nlos: float = pd.Field(..., gt=0)
    alpha_los: float = pd.Field(..., gt=0)
    alpha_nlos: float = pd.Field(..., gt=0)
    r_critical: float = pd.Field(0.0, ge=0)

    class Config:
        frozen = True

    @pd.root_validator(skip_on_failure=True)
    def check_non_decreasing(cls, values: dict) -> dict:
        alpha_los, alpha_nlos = values['alpha_los'], values['alpha_nlos']
        if alpha_nlos < max(alpha_los, 2.0):
            raise ValueError(f"alpha_nlos {alpha_nlos} must be at least max(alpha_los, 2)")

        r_c = values['r_critical']
        if r_c > 0:
            los_at_rc = values['c_los'] * r_c ** alpha_los
            nlos_at_rc = values['c_nlos'] * r_c ** alpha_nlos
            if los_at_rc > nlos_at_rc * (1.0 + 1e-12):
                raise ValueError(f"path loss decreases at the critical radius: {los_at_rc} > {nlos_at_rc}")

        return values

    @classmethod
    def single_slope(cls, c: float, alpha: float) -> 'PathLossModel':
        return parse_config(cls, dict(c_los=c, c_nlos=c, alpha_los=alpha, alpha_nlos=alpha, r_critical=0.0))

    @property
    def is_single_slope(self) -> bool:
        if self.r_critical == 0:
            return True

        return self.c_los == self.c_nlos and self.alpha_los == self.alpha_nlos

    def segments(self, start: float = 0.0) -> List[PathLossSegment]:
        """
        Splits `[start, inf)` into power-law pieces.
        """

        if start < self.r_critical:
            return [
                PathLossSegment(start, self.r_critical, self.c_los, self.alpha_los),
                PathLossSegment(self.r_critical, math.inf, self.c_nlos, self.alpha_nlos),
            ]
        else:
            return [PathLossSegment(start, math.inf, self.c_nlos, self.alpha_nlos)]


@overload
def path_loss(model: PathLossModel, r: float) -> float: ...


@overload
def path_loss(model: PathLossModel, r: np.ndarray) -> np.ndarray: ...


def path_loss(model: PathLossModel, r: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """
    Linear attenuation at distance `r`; `l(0) = 0` is a perfect link.
    """

    dist = np.asarray(r, dtype=float)
    if np.any(dist < 0):
        raise errors.DomainError("distance must be non-negative")

    los = model.c_los * dist ** model.alpha_los
    nlos = model.c_nlos * dist ** model.alpha_nlos
    result = np.where(dist < model.r_critical, los, nlos)

    return float(result) if result.ndim == 0 else result


@overload
def noise_exponent(cfg: NetworkConfig, plm: PathLossModel, r: float) -> float: ...


@overload
def noise_exponent(cfg: NetworkConfig, plm: PathLossModel, r: np.ndarray) -> np.ndarray: ...


def noise_exponent(
        cfg: NetworkConfig, plm: PathLossModel, r: Union[float, np.ndarray],
) -> Union[float, np.ndarray]:
    """
    `W * Gamma * l(r) / (P * M)`: minus log of the Rayleigh detection probability against noise alone.
    """

    scale = cfg.effective_noise_power * cfg.sinr_threshold / (cfg.power_tx * cfg.m_beams)

    return scale * path_loss(plm, r)


class TimingResult(pd.BaseModel):
    """
    Cycle count and the corresponding cell search delay.

    :param cycles: number of cycles until success, `inf` for an infinite mean
    :param delay_seconds: cell search delay
    """

    cycles: float = pd.Field(..., ge=1)
    delay_seconds: float = pd.Field(..., gt=0)

    class Config:
        frozen = True

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.cycles)


def delay_from_cycles(cfg: NetworkConfig, cycles: float) -> TimingResult:
    """
    Converts a cycle count into the delay `(cycles - 1) T + M tau`.
    """

    if not cycles >= 1:
        raise errors.DomainError(f"cycle count must be at least 1, got {cycles!r}")

    sweep = cfg.m_beams * cfg.symbol_period
    delay = math.inf if math.isinf(cycles) else (cycles - 1) * cfg.cycle_period + sweep

    return TimingResult(cycles=cycles, delay_seconds=delay)


def delays_from_cycles(cfg: NetworkConfig, cycles: np.ndarray) -> np.ndarray:
    cycles = np.asarray(cycles, dtype=float)
    if np.any(~(cycles >= 1)):
        raise errors.DomainError("cycle counts must be at least 1")

    return (cycles - 1.0) * cfg.cycle_period + cfg.m_beams * cfg.symbol_period
