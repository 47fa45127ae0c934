"""
Named scenario presets.
"""

import logging
from typing import Callable, Dict, List

from . import errors
from .document import NetworkSection, PathLossSection, ScenarioDocument, SimulationSection, SweepSection
from .document import TruncationSection
from .model import Scenario

logger = logging.getLogger(__name__)

LAMBDA_BS = 1e-4  # 100 BS per square kilometer
R0_GRID = [10.0 * i for i in range(1, 11)]
PERCENTILES = [95.0, 50.0, 10.0]


def _mmwave(bandwidth_hz: float) -> ScenarioDocument:
    return ScenarioDocument(
        network=NetworkSection(
            lambda_bs=LAMBDA_BS,
            m_beams=4,
            power_tx_dbm=30.0,
            bandwidth_hz=bandwidth_hz,
            sinr_threshold_db=-4.0,
            cycle_period=20e-3,
            symbol_period=14.3e-6,
            scenario=Scenario.NOISE_LIMITED,
        ),
        path_loss=PathLossSection(
            c_los_db=69.71,
            c_nlos_db=69.71,
            alpha_los=2.1,
            alpha_nlos=3.3,
            r_critical=50.0,
        ),
        truncation=TruncationSection(j_cap=1500),
        simulation=SimulationSection(max_cycles=1500),
        sweep=SweepSection(beams=[4, 8, 18, 36], r0=R0_GRID, percentiles=PERCENTILES),
    )


def mmwave_73ghz() -> ScenarioDocument:
    """
    Noise limited 73 GHz network with a dual-slope path loss and 2 GHz bandwidth.
    """

    return _mmwave(2e9)


def mmwave_73ghz_1ghz() -> ScenarioDocument:
    """
    :py:func:`mmwave_73ghz` with 1 GHz bandwidth.
    """

    return _mmwave(1e9)


def sub6_2ghz() -> ScenarioDocument:
    """
    Interference limited 2 GHz network with a single slope path loss.
    """

    return ScenarioDocument(
        network=NetworkSection(
            lambda_bs=LAMBDA_BS,
            m_beams=4,
            power_tx_dbm=30.0,
            bandwidth_hz=0.2e9,
            sinr_threshold_db=-4.0,
            cycle_period=100e-3,
            symbol_period=71.4e-6,
            scenario=Scenario.INTERFERENCE_LIMITED,
        ),
        path_loss=PathLossSection(
            c_los_db=38.46,
            c_nlos_db=38.46,
            alpha_los=2.5,
            alpha_nlos=2.5,
        ),
        truncation=TruncationSection(j_cap=100),
        simulation=SimulationSection(max_cycles=100),
        sweep=SweepSection(beams=[1, 4, 8, 12], r0=R0_GRID, percentiles=PERCENTILES),
    )


PRESETS: Dict[str, Callable[[], ScenarioDocument]] = {
    'mmwave-73ghz': mmwave_73ghz,
    'mmwave-73ghz-1ghz': mmwave_73ghz_1ghz,
    'sub6-2ghz': sub6_2ghz,
}


def preset_names() -> List[str]:
    return sorted(PRESETS)


def load_preset(name: str) -> ScenarioDocument:
    """
    Builds the document of a named preset.

    :raises errors.ConfigError: unknown preset name
    """

    try:
        factory = PRESETS[name]
    except KeyError:
        raise errors.ConfigError(f"unknown preset {name!r}, available: {', '.join(preset_names())}") from None

    return factory().copy(update={'preset': name})
