import json

import pytest

from cellsearch import analytic, cli
from cellsearch.document import NetworkSection, PathLossSection, ScenarioDocument, SweepSection
from cellsearch.model import Scenario
from cellsearch.numerics import SeriesResult, SeriesStatus


def read_table(path):
    lines = path.read_text().splitlines()
    assert lines[0] == '# manifest: manifest.json'
    return lines[1], [line.split('\t') for line in lines[2:]]


def write_noise_config(path):
    document = ScenarioDocument(
        network=NetworkSection(
            lambda_bs=1e-3,
            power_tx=1.0,
            noise_power=0.002 * 3.141592653589793,
            sinr_threshold=1.0,
            cycle_period=20e-3,
            symbol_period=14.3e-6,
            scenario=Scenario.NOISE_LIMITED,
        ),
        path_loss=PathLossSection(c_los=1.0, c_nlos=1.0, alpha_los=2.0, alpha_nlos=2.0),
        sweep=SweepSection(beams=[1, 4]),
    )
    path.write_bytes(document.to_xml())


def test_export_config(tmp_path):
    argv = ['export-config', '--preset', 'sub6-2ghz', '--m', '2,6', '--lambda', '2e-4']
    code = cli.main(argv + ['--out', str(tmp_path)])
    assert code == cli.EXIT_OK

    document = ScenarioDocument.from_xml((tmp_path / 'config.xml').read_bytes())
    assert document.preset == 'sub6-2ghz'
    assert document.sweep.beams == [2, 6]
    assert document.network.lambda_bs == 2e-4

    manifest = json.loads((tmp_path / 'manifest.json').read_text())
    assert manifest['command'] == 'export-config'
    assert manifest['outputs'] == ['config.xml']

    # the exported document loads back as a config with the same effect
    again = tmp_path / 'again'
    assert cli.main(['export-config', '--config', str(tmp_path / 'config.xml'), '--out', str(again)]) == cli.EXIT_OK
    assert (again / 'config.xml').read_bytes() == (tmp_path / 'config.xml').read_bytes()


def test_config_overrides_preset_sections(tmp_path):
    config = tmp_path / 'noise.xml'
    config.write_text('''
    <cell-search>
        <network lambda_bs="0.001" power_tx="1.0" noise_power="0.006283185307179587" sinr_threshold="1.0"
                 cycle_period="0.02" symbol_period="1.43e-05" scenario="noise-limited"/>
        <path-loss c_los="1.0" c_nlos="1.0" alpha_los="2.0" alpha_nlos="2.0"/>
    </cell-search>
    ''')

    code = cli.main(['export-config', '--preset', 'sub6-2ghz', '--config', str(config), '--out', str(tmp_path)])
    assert code == cli.EXIT_OK

    document = ScenarioDocument.from_xml((tmp_path / 'config.xml').read_bytes())
    assert document.preset == 'sub6-2ghz'
    assert document.network.scenario is Scenario.NOISE_LIMITED
    assert document.path_loss.alpha_nlos == 2.0
    # sections missing from the config come from the preset
    assert document.truncation.j_cap == 100
    assert document.sweep.beams == [1, 4, 8, 12]


@pytest.mark.parametrize('argv', [
    ['eval-mean'],
    ['eval-mean', '--preset', 'sub6-2ghz', '--m', ''],
    ['eval-mean', '--preset', 'no-such-preset'],
    ['phase-diagram', '--preset', 'sub6-2ghz'],
    ['unknown-command'],
])
def test_usage_errors(argv, tmp_path):
    try:
        code = cli.main(argv + ['--out', str(tmp_path)])
    except SystemExit as e:
        code = e.code

    assert code == cli.EXIT_USAGE


def test_config_errors(tmp_path):
    broken = tmp_path / 'broken.xml'
    broken.write_text('<cell-search><network lambda_bs="-1"')
    assert cli.main(['eval-mean', '--config', str(broken), '--out', str(tmp_path)]) == cli.EXIT_CONFIG

    invalid = tmp_path / 'invalid.xml'
    write_noise_config(invalid)
    code = cli.main(['eval-mean', '--config', str(invalid), '--lambda', '-1', '--out', str(tmp_path)])
    assert code == cli.EXIT_CONFIG

    missing = tmp_path / 'missing.xml'
    assert cli.main(['eval-mean', '--config', str(missing), '--out', str(tmp_path)]) == cli.EXIT_CONFIG


def test_eval_mean(tmp_path):
    code = cli.main(['eval-mean', '--preset', 'sub6-2ghz', '--m', '4,8', '--out', str(tmp_path)])
    assert code == cli.EXIT_OK

    header, rows = read_table(tmp_path / 'eval_mean.tsv')
    assert header.split('\t') == [
        'm', 'mean_cycles_or_status', 'terms', 'tail_exponent', 'lower_bound', 'upper_bound', 'verdict',
        'delay_seconds',
    ]
    assert [row[0] for row in rows] == ['4', '8']
    assert [row[6] for row in rows] == ['finite-mean', 'finite-mean']
    assert float(rows[0][5]) == pytest.approx(1.6614, rel=1e-3)
    assert float(rows[1][5]) == pytest.approx(1.2485, rel=1e-3)


def test_phase_diagram_with_boundary(tmp_path):
    config = tmp_path / 'noise.xml'
    write_noise_config(config)

    code = cli.main([
        'phase-diagram', '--config', str(config), '--lambda-range', '1e-4,1e-3,1e-2', '--m-range', '1,4',
        '--out', str(tmp_path),
    ])
    assert code == cli.EXIT_OK

    _, rows = read_table(tmp_path / 'phase_diagram.tsv')
    assert [row[2] for row in rows] == [
        'infinite-mean', 'infinite-mean', 'infinite-mean', 'finite-mean', 'finite-mean', 'finite-mean',
    ]

    _, boundary = read_table(tmp_path / 'phase_boundary.tsv')
    assert [row[0] for row in boundary] == ['1', '4']
    assert float(boundary[0][1]) == pytest.approx(2e-3)
    assert float(boundary[1][1]) == pytest.approx(5e-4)


def test_rerun_reproduces_tables(tmp_path):
    first = tmp_path / 'first'
    assert cli.main(['eval-mean', '--preset', 'sub6-2ghz', '--m', '4', '--out', str(first)]) == cli.EXIT_OK

    second = tmp_path / 'second'
    assert cli.main(['rerun', str(first / 'manifest.json'), '--out', str(second)]) == cli.EXIT_OK

    assert (second / 'eval_mean.tsv').read_bytes() == (first / 'eval_mean.tsv').read_bytes()

    (tmp_path / 'bad.json').write_text('{}')
    assert cli.main(['rerun', str(tmp_path / 'bad.json')]) == cli.EXIT_CONFIG


def test_simulate(tmp_path):
    argv = ['simulate', '--preset', 'sub6-2ghz', '--m', '4', '--r0', '40', '--trials', '50', '--seed', '3']
    assert cli.main(argv + ['--out', str(tmp_path)]) == cli.EXIT_OK

    header, rows = read_table(tmp_path / 'simulate.tsv')
    assert header == 'r0_m\tm\tmean_cycles\tstderr\tcensored_fraction\ttrials'
    assert len(rows) == 1
    assert rows[0][:2] == ['40.0', '4']
    assert float(rows[0][2]) >= 1.0
    assert rows[0][5] == '50'

    manifest = cli.RunManifest.parse_file(tmp_path / 'manifest.json')
    assert manifest.seed == 3
    assert manifest.outputs == ['simulate.tsv']


def test_compare_guard(tmp_path, monkeypatch):
    def far_off(r0, cfg, plm, truncation=None, spec=None):
        return SeriesResult(value=1000.0, terms_used=1, last_term=0.0, status=SeriesStatus.CONVERGED)

    monkeypatch.setattr(analytic, 'cond_mean_cycles_given_r0', far_off)

    argv = ['compare', '--preset', 'sub6-2ghz', '--m', '8', '--r0', '40', '--trials', '100']
    assert cli.main(argv + ['--out', str(tmp_path)]) == cli.EXIT_REGRESSION

    _, rows = read_table(tmp_path / 'compare.tsv')
    assert float(rows[0][7]) < -cli.Z_GUARD


def test_quantiles(tmp_path):
    argv = ['quantiles', '--preset', 'sub6-2ghz', '--m', '1', '--samples', '10000', '--percentiles', '95,50,10']
    assert cli.main(argv + ['--out', str(tmp_path)]) == cli.EXIT_OK

    header, rows = read_table(tmp_path / 'quantiles.tsv')
    assert header == 'm\tpercentile\tdelay_seconds_or_censored'
    assert [row[1] for row in rows] == ['95.0', '50.0', '10.0']

    delays = [float(row[2]) for row in rows]
    assert delays == sorted(delays)
