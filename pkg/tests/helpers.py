import difflib
import math
from typing import Union

import xmldiff.actions
import xmldiff.formatting
import xmldiff.main
from lxml import etree

from cellsearch.model import NetworkConfig, PathLossModel, Scenario, db_to_linear, dbm_to_watts


def assert_xml_equal(
        left: Union[str, bytes],
        right: Union[str, bytes],
        *,
        ignore_comments: bool = True,
        pretty: bool = True,
        **kwargs,
):
    diffs = xmldiff.main.diff_texts(left, right, **kwargs)

    if ignore_comments:
        diffs = list(filter(lambda diff: not isinstance(diff, xmldiff.actions.InsertComment), diffs))

    if diffs:
        if pretty:
            parser = etree.XMLParser(remove_blank_text=True, remove_comments=ignore_comments)
            left = etree.tostring(etree.fromstring(left, parser=parser), pretty_print=True).decode()
            right = etree.tostring(etree.fromstring(right, parser=parser), pretty_print=True).decode()
            assert not diffs, '\n' + '\n'.join(difflib.Differ().compare(left.splitlines(), right.splitlines()))
        else:
            assert not diffs, '\n' + '\n'.join((str(diff) for diff in diffs))


def assert_within_sigma(actual: float, expected: float, stderr: float, sigmas: float = 4.0):
    assert math.isfinite(actual) and stderr >= 0
    assert abs(actual - expected) <= sigmas * stderr + 1e-12 * abs(expected), \
        f"{actual!r} is {abs(actual - expected) / stderr if stderr else math.inf:.2f} sigma away from {expected!r}"


def interference_network(m_beams: int = 4, lambda_bs: float = 1e-4) -> NetworkConfig:
    return NetworkConfig(
        lambda_bs=lambda_bs,
        m_beams=m_beams,
        power_tx=1.0,
        noise_power=0.0,
        sinr_threshold=db_to_linear(-4.0),
        cycle_period=0.1,
        symbol_period=71.4e-6,
        scenario=Scenario.INTERFERENCE_LIMITED,
    )


def sub6_path_loss() -> PathLossModel:
    return PathLossModel.single_slope(db_to_linear(38.46), 2.5)


def noise_network(m_beams: int = 4, lambda_bs: float = 1e-3, noise_power: float = 2 * math.pi * 1e-3) -> NetworkConfig:
    """
    Unit power and threshold, so that `s(r) = noise_power * l(r) / M`.
    """

    return NetworkConfig(
        lambda_bs=lambda_bs,
        m_beams=m_beams,
        power_tx=1.0,
        noise_power=noise_power,
        sinr_threshold=1.0,
        cycle_period=20e-3,
        symbol_period=14.3e-6,
        scenario=Scenario.NOISE_LIMITED,
    )


def mmwave_network(m_beams: int = 8) -> NetworkConfig:
    return NetworkConfig(
        lambda_bs=1e-4,
        m_beams=m_beams,
        power_tx=dbm_to_watts(30.0),
        noise_power=dbm_to_watts(-174.0 + 10 * math.log10(2e9)),
        sinr_threshold=db_to_linear(-4.0),
        cycle_period=20e-3,
        symbol_period=14.3e-6,
        scenario=Scenario.NOISE_LIMITED,
    )


def mmwave_path_loss() -> PathLossModel:
    return PathLossModel(
        c_los=db_to_linear(69.71),
        c_nlos=db_to_linear(69.71),
        alpha_los=2.1,
        alpha_nlos=3.3,
        r_critical=50.0,
    )


def is_non_increasing(values, slack: float = 0.0) -> bool:
    return all(b <= a + slack for a, b in zip(values, values[1:]))
