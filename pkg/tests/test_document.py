import xml.etree.ElementTree
from typing import List

import pytest
from helpers import assert_xml_equal

from cellsearch import codec, errors, presets
from cellsearch.codec import BaseXmlModel, XmlEncoder, attr
from cellsearch.document import NetworkSection, PathLossSection, ScenarioDocument, SweepSection
from cellsearch.model import Scenario, db_to_linear
from cellsearch.numerics import Transform


def make_document() -> ScenarioDocument:
    return ScenarioDocument(
        network=NetworkSection(
            lambda_bs=1e-4,
            m_beams=4,
            power_tx_dbm=30.0,
            sinr_threshold_db=-4.0,
            cycle_period=0.1,
            symbol_period=7.14e-05,
            scenario=Scenario.INTERFERENCE_LIMITED,
        ),
        path_loss=PathLossSection(c_los_db=38.46, c_nlos_db=38.46, alpha_los=2.5, alpha_nlos=2.5),
        sweep=SweepSection(beams=[1, 4], r0=[10.0]),
    )


def test_document_serialization():
    xml = '''
    <cell-search>
        <network lambda_bs="0.0001" m_beams="4" power_tx_dbm="30.0" sinr_threshold_db="-4.0"
                 cycle_period="0.1" symbol_period="7.14e-05" scenario="interference-limited"/>
        <path-loss c_los_db="38.46" c_nlos_db="38.46" alpha_los="2.5" alpha_nlos="2.5" r_critical="0.0"/>
        <truncation/>
        <quadrature/>
        <simulation trials="10000" master_seed="0" samples="1000000"/>
        <sweep>
            <m>1</m>
            <m>4</m>
            <r0>10.0</r0>
        </sweep>
    </cell-search>
    '''

    expected_obj = make_document()

    actual_obj = ScenarioDocument.from_xml(xml)
    assert actual_obj == expected_obj

    actual_xml = actual_obj.to_xml()
    assert_xml_equal(actual_xml, xml.encode())


def test_document_resolve():
    cfg, plm = make_document().resolve()

    assert cfg.power_tx == pytest.approx(1.0)
    assert cfg.sinr_threshold == pytest.approx(db_to_linear(-4.0))
    assert cfg.noise_power == 0.0
    assert plm.c_nlos == pytest.approx(db_to_linear(38.46))
    assert plm.is_single_slope


def test_bandwidth_sets_noise_power():
    xml = '''
    <cell-search>
        <network lambda_bs="0.0001" power_tx="1.0" sinr_threshold="1.0" bandwidth_hz="1000000000.0"
                 cycle_period="0.02" symbol_period="1.43e-05" scenario="noise-limited"/>
        <path-loss c_los="1.0" c_nlos="1.0" alpha_los="2.0" alpha_nlos="2.0"/>
    </cell-search>
    '''

    cfg, _ = ScenarioDocument.from_xml(xml).resolve()
    assert cfg.noise_power == pytest.approx(10 ** (-11.4))
    assert cfg.m_beams == 1


@pytest.mark.parametrize('network', [
    '<network power_tx="1.0" sinr_threshold="1.0" cycle_period="0.1" symbol_period="0.0001"/>',
    '<network lambda_bs="0.0001" power_tx="1.0" power_tx_dbm="30.0" sinr_threshold="1.0" '
    'cycle_period="0.1" symbol_period="0.0001"/>',
    '<network lambda_bs="0.0001" power_tx="1.0" cycle_period="0.1" symbol_period="0.0001"/>',
    '<network lambda_bs="abc" power_tx="1.0" sinr_threshold="1.0" cycle_period="0.1" symbol_period="0.0001"/>',
])
def test_invalid_network_section(network):
    xml = f'''
    <cell-search>
        {network}
        <path-loss c_los="1.0" c_nlos="1.0" alpha_los="2.0" alpha_nlos="2.0"/>
    </cell-search>
    '''

    with pytest.raises(errors.ConfigFieldError):
        ScenarioDocument.from_xml(xml)


def test_malformed_document():
    with pytest.raises(errors.CodecError):
        ScenarioDocument.from_xml('<cell-search><network></cell-search>')


def test_unexpected_root():
    with pytest.raises(errors.CodecError):
        ScenarioDocument.from_xml('<network/>')


def test_invalid_domain_values():
    document = make_document()
    document = document.copy(update={'network': document.network.copy(update={'m_beams': 5000})})

    with pytest.raises(errors.ConfigFieldError) as e:
        document.resolve()

    assert e.value.model_name == 'NetworkConfig'


def test_updated_section():
    document = make_document().updated('truncation', j_cap=250)
    assert document.truncation.to_truncation().j_cap == 250

    with pytest.raises(errors.ConfigFieldError):
        document.updated('truncation', j_cap=0).truncation.to_truncation()

    with pytest.raises(errors.ConfigFieldError):
        document.updated('simulation', trials='many')


@pytest.mark.parametrize('name', presets.preset_names())
def test_presets_round_trip(name):
    document = presets.load_preset(name)
    assert document.preset == name

    restored = ScenarioDocument.from_xml(document.to_xml())
    assert restored == document

    cfg, plm = restored.resolve()
    assert cfg.lambda_bs == presets.LAMBDA_BS
    assert document.sweep.beams


def test_preset_scenarios():
    sub6_cfg, sub6_plm = presets.load_preset('sub6-2ghz').resolve()
    assert sub6_cfg.scenario is Scenario.INTERFERENCE_LIMITED
    assert sub6_plm.alpha_nlos == 2.5

    mmwave_cfg, mmwave_plm = presets.load_preset('mmwave-73ghz').resolve()
    narrow_cfg, _ = presets.load_preset('mmwave-73ghz-1ghz').resolve()
    assert mmwave_cfg.scenario is Scenario.NOISE_LIMITED
    assert mmwave_plm.r_critical == 50.0
    assert mmwave_cfg.noise_power == pytest.approx(2 * narrow_cfg.noise_power)


def test_unknown_preset():
    with pytest.raises(errors.ConfigError):
        presets.load_preset('lte')


def test_unsupported_field_declarations():
    with pytest.raises(errors.CodecError):
        class AttributeList(BaseXmlModel, tag='broken'):
            values: List[int] = attr()

    with pytest.raises(errors.CodecError):
        class BareText(BaseXmlModel, tag='broken'):
            value: int = 0


def test_enum_values_are_encoded_by_value():
    encoder = XmlEncoder()

    assert encoder.encode(Scenario.NOISE_LIMITED) == 'noise-limited'
    assert encoder.encode(Transform.INVERSE_RADIUS) == 'inverse-radius'
    assert encoder.encode(True) == 'true'


@pytest.mark.parametrize('name', presets.preset_names())
def test_presets_round_trip_with_std_xml(name, monkeypatch):
    monkeypatch.setattr(codec, 'etree', xml.etree.ElementTree)

    document = presets.load_preset(name)
    serialized = document.to_xml(pretty=True)
    assert b'"Scenario.' not in serialized

    restored = ScenarioDocument.from_xml(serialized)
    assert restored == document
    assert restored.network.scenario is document.network.scenario
