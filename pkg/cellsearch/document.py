"""
Xml configuration document schema.

A document looks like::

    <cell-search preset="sub6-2ghz">
        <network lambda_bs="0.0001" m_beams="4" power_tx_dbm="30.0" bandwidth_hz="200000000.0"
                 sinr_threshold_db="-4.0" cycle_period="0.1" symbol_period="7.14e-05"
                 scenario="interference-limited"/>
        <path-loss c_los_db="38.46" c_nlos_db="38.46" alpha_los="2.5" alpha_nlos="2.5"/>
        <truncation j_cap="100"/>
        <simulation trials="10000" master_seed="7"/>
        <sweep><m>1</m><m>4</m><r0>10.0</r0></sweep>
    </cell-search>
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

import pydantic as pd

from . import model, numerics
from .codec import BaseXmlModel, attr, element
from .model import NetworkConfig, PathLossModel, Scenario, parse_config

logger = logging.getLogger(__name__)


def _exactly_one(values: Dict[str, Any], *names: str, required: bool = True) -> None:
    given = [name for name in names if values.get(name) is not None]
    if len(given) > 1:
        raise ValueError(f"only one of {', '.join(names)} can be given, got {', '.join(given)}")
    if required and not given:
        raise ValueError(f"one of {', '.join(names)} is required")


class NetworkSection(BaseXmlModel, tag='network'):
    lambda_bs: float = attr(...)
    m_beams: int = attr(1)
    power_tx: Optional[float] = attr()
    power_tx_dbm: Optional[float] = attr()
    noise_power: Optional[float] = attr()
    noise_power_dbm: Optional[float] = attr()
    bandwidth_hz: Optional[float] = attr()
    sinr_threshold: Optional[float] = attr()
    sinr_threshold_db: Optional[float] = attr()
    cycle_period: float = attr(...)
    symbol_period: float = attr(...)
    scenario: Scenario = attr(Scenario.GENERAL)

    @pd.root_validator(skip_on_failure=True)
    def check_unit_forms(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        _exactly_one(values, 'power_tx', 'power_tx_dbm')
        _exactly_one(values, 'sinr_threshold', 'sinr_threshold_db')
        _exactly_one(values, 'noise_power', 'noise_power_dbm', 'bandwidth_hz', required=False)
        return values

    def to_config(self) -> NetworkConfig:
        if self.bandwidth_hz is not None:
            noise_power = model.noise_power_from_bandwidth(self.bandwidth_hz)
        elif self.noise_power_dbm is not None:
            noise_power = model.dbm_to_watts(self.noise_power_dbm)
        else:
            noise_power = self.noise_power or 0.0

        return parse_config(NetworkConfig, dict(
            lambda_bs=self.lambda_bs,
            m_beams=self.m_beams,
            power_tx=self.power_tx if self.power_tx is not None else model.dbm_to_watts(self.power_tx_dbm),
            noise_power=noise_power,
            sinr_threshold=(
                self.sinr_threshold if self.sinr_threshold is not None
                else model.db_to_linear(self.sinr_threshold_db)
            ),
            cycle_period=self.cycle_period,
            symbol_period=self.symbol_period,
            scenario=self.scenario,
        ))


class PathLossSection(BaseXmlModel, tag='path-loss'):
    c_los: Optional[float] = attr()
    c_los_db: Optional[float] = attr()
    c_nlos: Optional[float] = attr()
    c_nlos_db: Optional[float] = attr()
    alpha_los: float = attr(...)
    alpha_nlos: float = attr(...)
    r_critical: float = attr(0.0)

    @pd.root_validator(skip_on_failure=True)
    def check_unit_forms(cls, values: Dict[str, Any]) -> Dict[str, Any]:
        _exactly_one(values, 'c_los', 'c_los_db')
        _exactly_one(values, 'c_nlos', 'c_nlos_db')
        return values

    def to_model(self) -> PathLossModel:
        return parse_config(PathLossModel, dict(
            c_los=self.c_los if self.c_los is not None else model.db_to_linear(self.c_los_db),
            c_nlos=self.c_nlos if self.c_nlos is not None else model.db_to_linear(self.c_nlos_db),
            alpha_los=self.alpha_los,
            alpha_nlos=self.alpha_nlos,
            r_critical=self.r_critical,
        ))


class TruncationSection(BaseXmlModel, tag='truncation'):
    j_cap: Optional[int] = attr()
    abs_tolerance: Optional[float] = attr()
    fit_margin: Optional[float] = attr()
    j_precision_cap: Optional[int] = attr()

    def to_truncation(self) -> numerics.Truncation:
        return parse_config(numerics.Truncation, self.dict(exclude_none=True))


class QuadratureSection(BaseXmlModel, tag='quadrature'):
    rel_tolerance: Optional[float] = attr()
    abs_tolerance: Optional[float] = attr()
    max_subdivisions: Optional[int] = attr()

    def to_spec(self) -> numerics.QuadratureSpec:
        return parse_config(numerics.QuadratureSpec, self.dict(exclude_none=True))


class SimulationSection(BaseXmlModel, tag='simulation'):
    trials: int = attr(10_000)
    max_cycles: Optional[int] = attr()
    window_radius: Optional[float] = attr()
    master_seed: int = attr(0)
    samples: int = attr(1_000_000)


class SweepSection(BaseXmlModel, tag='sweep'):
    beams: List[int] = element([], tag='m')
    r0: List[float] = element([], tag='r0')
    percentiles: List[float] = element([], tag='percentile')


class ScenarioDocument(BaseXmlModel, tag='cell-search'):
    """
    Complete run configuration.
    """

    preset: Optional[str] = attr()
    network: NetworkSection
    path_loss: PathLossSection
    truncation: TruncationSection = TruncationSection()
    quadrature: QuadratureSection = QuadratureSection()
    simulation: SimulationSection = SimulationSection()
    sweep: SweepSection = SweepSection()

    def resolve(self) -> Tuple[NetworkConfig, PathLossModel]:
        """
        Builds validated domain models from the document.
        """

        return self.network.to_config(), self.path_loss.to_model()

    def updated(self, section: str, **values: Any) -> 'ScenarioDocument':
        """
        Returns a copy with the provided section fields overridden and re-validated.
        """

        current = getattr(self, section)
        replaced = parse_config(type(current), {**current.dict(), **values})

        return self.copy(update={section: replaced})
