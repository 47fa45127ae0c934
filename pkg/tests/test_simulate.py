import math

import numpy as np
import pytest
from helpers import assert_within_sigma, interference_network, mmwave_network, mmwave_path_loss, noise_network
from helpers import sub6_path_loss

from cellsearch import analytic, errors, geometry, simulate
from cellsearch.geometry import Topology
from cellsearch.model import PathLossModel, Scenario
from cellsearch.simulate import TrialConfig, TrialOutcome
from cellsearch.utils import trial_rng

GAMMA = 10 ** -0.4


def test_trial_outcome_consistency():
    with pytest.raises(ValueError):
        TrialOutcome(cycles=3, censored=True, serving_sector=1)

    with pytest.raises(ValueError):
        TrialOutcome(cycles=3, censored=False)

    with pytest.raises(ValueError):
        TrialOutcome(cycles=0, censored=True)


def test_trial_config_defaults():
    trial = TrialConfig()
    assert trial.cap_for(Scenario.NOISE_LIMITED) == 1500
    assert trial.cap_for(Scenario.INTERFERENCE_LIMITED) == 100
    assert TrialConfig(max_cycles=7).cap_for(Scenario.NOISE_LIMITED) == 7

    cfg = interference_network()
    assert TrialConfig(window_radius=321.0).radius_for(cfg) == 321.0
    assert TrialConfig(nearest_at=800.0).radius_for(cfg) > 800.0


def test_lone_bs_is_found_in_first_cycle():
    cfg, plm = interference_network(m_beams=4), sub6_path_loss()
    topology = Topology(points=[(30.0, 30.0)], window_radius=100.0)

    outcome = simulate.run_cell_search(topology, cfg, plm, TrialConfig(), trial_rng(0, 0))

    assert outcome.cycles == 1
    assert not outcome.censored
    assert outcome.serving_sector == 1
    assert outcome.serving_distance == pytest.approx(math.hypot(30.0, 30.0))


def test_empty_topology_is_censored():
    cfg, plm = interference_network(m_beams=4), sub6_path_loss()
    topology = Topology(points=np.empty((0, 2)), window_radius=100.0)

    outcome = simulate.run_cell_search(topology, cfg, plm, TrialConfig(max_cycles=20), trial_rng(0, 0))

    assert outcome.censored
    assert outcome.cycles == 20
    assert outcome.serving_sector is None


def test_serving_sector_has_smallest_loss():
    cfg, plm = interference_network(m_beams=4), sub6_path_loss()
    topology = Topology(points=[(40.0, 1.0), (-1.0, 20.0), (-30.0, -1.0)], window_radius=100.0)

    outcome = simulate.run_cell_search(topology, cfg, plm, TrialConfig(), trial_rng(3, 1))

    assert outcome.cycles == 1
    assert outcome.serving_sector == 2
    assert outcome.serving_distance == pytest.approx(math.hypot(1.0, 20.0))


def test_cycle_successes_match_detection_probability():
    cfg, plm = interference_network(m_beams=2), sub6_path_loss()
    topology = Topology(points=[(10.0, 1.0), (12.0, 1.5)], window_radius=100.0)
    n = 20000

    successes = simulate.cycle_successes(topology, cfg, plm, n, np.random.default_rng(7))

    p = analytic.cycle_success_probability(topology, cfg, plm)
    assert_within_sigma(float(np.mean(successes)), p, math.sqrt(p * (1 - p) / n))


def test_fixed_topology_mean_matches_analytic():
    cfg, plm = noise_network(m_beams=2), PathLossModel.single_slope(1.0, 2.0)
    topology = Topology(points=[(15.0, 0.0), (-18.0, 0.0)], window_radius=100.0)
    trial = TrialConfig(trials=2000, max_cycles=1000, master_seed=11)

    estimate = simulate.estimate_mean_cycles(topology, cfg, plm, trial)

    assert estimate.censored_fraction == 0.0
    assert not estimate.is_lower_bound
    assert_within_sigma(estimate.mean, analytic.mean_cycles_given_topology(topology, cfg, plm), estimate.stderr)


def test_outcomes_do_not_depend_on_chunking():
    cfg, plm = interference_network(m_beams=4), sub6_path_loss()
    trial = TrialConfig(trials=40, max_cycles=50, master_seed=5, nearest_at=25.0)

    whole = simulate.run_trials(None, cfg, plm, trial, workers=1, chunk_size=40)
    chunked = simulate.run_trials(None, cfg, plm, trial, workers=1, chunk_size=7)
    parallel = simulate.run_trials(None, cfg, plm, trial, workers=2, chunk_size=10)

    assert whole == chunked == parallel
    assert [o.trial_id for o in whole] == list(range(40))


def test_different_seeds_differ():
    cfg, plm = interference_network(m_beams=1), sub6_path_loss()

    first = simulate.run_trials(None, cfg, plm, TrialConfig(trials=50, master_seed=1, nearest_at=60.0))
    second = simulate.run_trials(None, cfg, plm, TrialConfig(trials=50, master_seed=2, nearest_at=60.0))

    assert [o.cycles for o in first] != [o.cycles for o in second]


def test_conditioned_trials_keep_nearest_distance():
    cfg, plm = interference_network(m_beams=4), sub6_path_loss()
    trial = TrialConfig(trials=30, nearest_at=40.0, master_seed=3)

    outcomes = simulate.run_trials(None, cfg, plm, trial)

    served = [o.serving_distance for o in outcomes if not o.censored]
    assert served and min(served) == pytest.approx(40.0)
    assert all(d >= 40.0 * (1 - 1e-12) for d in served)

    with pytest.raises(errors.DomainError):
        simulate.run_conditioned_on_r0(0.0, cfg, plm, trial, trial_rng(0, 0))


def test_conditioned_mean_matches_analytic():
    cfg, plm = interference_network(m_beams=8), sub6_path_loss()
    r0 = 40.0
    trial = TrialConfig(trials=1000, master_seed=21, nearest_at=r0)

    estimate = simulate.estimate_mean_cycles(None, cfg, plm, trial)
    reference = analytic.cond_mean_cycles_given_r0(r0, cfg, plm)

    assert_within_sigma(estimate.mean, reference.value, estimate.stderr, sigmas=5.0)


def test_topology_sequence_round_robin():
    cfg, plm = interference_network(m_beams=4), sub6_path_loss()
    lone = Topology(points=[(10.0, 10.0)], window_radius=100.0)
    empty = Topology(points=np.empty((0, 2)), window_radius=100.0)

    outcomes = simulate.run_trials([lone, empty], cfg, plm, TrialConfig(trials=6, max_cycles=9))

    assert [o.censored for o in outcomes] == [False, True] * 3
    assert [o.cycles for o in outcomes] == [1, 9] * 3

    with pytest.raises(errors.DomainError):
        simulate.run_trials([], cfg, plm, TrialConfig(trials=2))


def test_neglected_cycles_are_counted():
    cfg, plm = interference_network(m_beams=1), sub6_path_loss()
    topology = Topology(points=[(10.0, 0.0), (10.5, 0.0)], window_radius=100.0)
    trial = TrialConfig(trials=200, max_cycles=100, count_neglected=True, master_seed=4)

    outcomes = simulate.run_trials(topology, cfg, plm, trial)

    assert all(o.neglected_cycles is not None for o in outcomes)
    assert sum(o.neglected_cycles for o in outcomes) > 0

    plain = simulate.run_trials(topology, cfg, plm, trial.copy(update={'count_neglected': False}))
    assert all(o.neglected_cycles is None for o in plain)
    assert [o.cycles for o in plain] == [o.cycles for o in outcomes]


def test_summaries():
    estimate = simulate.summarize_cycles([1, 2, 3, 10], [False, False, False, True])

    assert estimate.mean == pytest.approx(4.0)
    assert estimate.censored_fraction == 0.25
    assert estimate.is_lower_bound
    assert estimate.z_score(4.0) == 0.0

    with pytest.raises(errors.DomainError):
        simulate.summarize_cycles([])

    outcomes = [
        TrialOutcome(trial_id=0, cycles=1, serving_sector=1, serving_distance=5.0),
        TrialOutcome(trial_id=1, cycles=1, serving_sector=2, serving_distance=6.0),
        TrialOutcome(trial_id=2, cycles=4, serving_sector=1, serving_distance=5.0),
        TrialOutcome(trial_id=3, cycles=10, censored=True),
    ]
    histogram = simulate.cycle_histogram(outcomes)

    assert histogram.cycles.tolist() == [1, 4]
    assert histogram.counts.tolist() == [2, 1]
    assert histogram.censored == 1


def test_write_outcomes(tmp_path):
    path = tmp_path / 'outcomes.tsv'
    outcomes = [
        TrialOutcome(trial_id=0, cycles=2, serving_sector=3, serving_distance=12.5),
        TrialOutcome(trial_id=1, cycles=100, censored=True),
    ]

    simulate.write_outcomes(path, outcomes, manifest='manifest.json')

    assert path.read_text().splitlines() == [
        '# manifest: manifest.json',
        'trial_id\tcycles\tcensored\tserving_sector\tserving_distance',
        '0\t2\t0\t3\t12.5',
        '1\t100\t1\t\t',
    ]


def test_mmwave_conditioned_mean_matches_analytic():
    cfg, plm = mmwave_network(m_beams=8), mmwave_path_loss()
    r0 = 60.0
    trial = TrialConfig(trials=2000, master_seed=22, nearest_at=r0)

    estimate = simulate.estimate_mean_cycles(None, cfg, plm, trial)
    reference = analytic.cond_mean_cycles_given_r0(r0, cfg, plm)

    assert estimate.censored_fraction == 0.0
    assert estimate.mean > 1.0
    assert_within_sigma(estimate.mean, reference.value, estimate.stderr, sigmas=5.0)


def test_doubling_beams_helps_on_shared_topologies():
    rng = np.random.default_rng(15)
    topologies = [geometry.sample_ppp_disk(1e-3, 100.0, rng) for _ in range(50)]
    trial = TrialConfig(trials=2000, master_seed=16)

    for cfg, plm in [
        (interference_network(m_beams=4, lambda_bs=1e-3), sub6_path_loss()),
        (noise_network(m_beams=4), PathLossModel.single_slope(1.0, 2.0)),
    ]:
        coarse = simulate.summarize(simulate.run_trials(topologies, cfg, plm, trial))
        fine = simulate.summarize(simulate.run_trials(topologies, cfg.with_beams(8), plm, trial))

        assert fine.mean <= coarse.mean + 4 * math.hypot(coarse.stderr, fine.stderr)
