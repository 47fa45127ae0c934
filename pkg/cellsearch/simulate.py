"""
Monte Carlo simulation of the beam-swept cell search.

BS positions stay fixed for a whole trial while Rayleigh fades are redrawn for every link and cycle.
In every cycle the nearest BS of each sector is detected if its SINR against the other BSs of the sector
(and noise) exceeds the threshold; the trial ends at the first cycle with a detection.
"""

import dataclasses as dc
import logging
import math
import multiprocessing
import pathlib
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pydantic as pd

from . import errors, geometry, utils
from .config import settings
from .geometry import SectorIndex, Topology
from .model import NetworkConfig, PathLossModel, Scenario, noise_exponent, path_loss

logger = logging.getLogger(__name__)

DEFAULT_MAX_CYCLES = {
    Scenario.NOISE_LIMITED: 1500,
    Scenario.INTERFERENCE_LIMITED: 100,
    Scenario.GENERAL: 100,
}
FIRST_BLOCK = 4  # cycles drawn at once, doubled until success


class TrialConfig(pd.BaseModel):
    """
    Monte Carlo trial settings.

    :param trials: number of independent trials
    :param max_cycles: censoring cap, scenario default if missing
    :param window_radius: simulation disk radius, chosen from the intensity and beam count if missing
    :param master_seed: root of the per-trial random streams
    :param nearest_at: condition every trial on a nearest BS at this distance
    :param count_neglected: count cycles where a non-nearest BS of an undetected sector was detectable
    """

    trials: int = pd.Field(10_000, ge=1)
    max_cycles: Optional[int] = pd.Field(None, ge=1)
    window_radius: Optional[float] = pd.Field(None, gt=0)
    master_seed: int = pd.Field(0, ge=0)
    nearest_at: Optional[float] = pd.Field(None, gt=0)
    count_neglected: bool = False

    class Config:
        frozen = True

    def cap_for(self, scenario: Scenario) -> int:
        return self.max_cycles if self.max_cycles is not None else DEFAULT_MAX_CYCLES[scenario]

    def radius_for(self, cfg: NetworkConfig) -> float:
        if self.window_radius is not None:
            return self.window_radius

        return geometry.default_window_radius(cfg.lambda_bs, cfg.m_beams, self.nearest_at or 0.0)


class TrialOutcome(pd.BaseModel):
    """
    Result of one trial.

    :param trial_id: trial index
    :param cycles: first successful cycle, the cap for censored trials
    :param censored: no cycle succeeded within the cap
    :param serving_sector: detected sector with the smallest path loss
    :param serving_distance: distance to the serving BS
    :param neglected_cycles: cycles with a detectable non-nearest BS in an undetected sector
    """

    trial_id: int = 0
    cycles: int = pd.Field(..., ge=1)
    censored: bool = False
    serving_sector: Optional[int] = None
    serving_distance: Optional[float] = None
    neglected_cycles: Optional[int] = None

    class Config:
        frozen = True

    @pd.root_validator(skip_on_failure=True)
    def check_serving(cls, values: dict) -> dict:
        if values['censored'] != (values['serving_sector'] is None):
            raise ValueError("a trial has a serving sector if and only if it is not censored")

        return values


class MeanEstimate(pd.BaseModel):
    """
    Sample mean of the cycle count, censored trials counted at the cap.
    """

    mean: float
    stderr: float
    censored_fraction: float = pd.Field(..., ge=0, le=1)
    trials: int

    class Config:
        frozen = True

    @property
    def is_lower_bound(self) -> bool:
        return self.censored_fraction > 0

    def z_score(self, reference: float) -> float:
        if self.stderr == 0:
            return 0.0 if self.mean == reference else math.copysign(math.inf, self.mean - reference)
        return (self.mean - reference) / self.stderr


@dc.dataclass(frozen=True)
class SectorCandidate:
    """
    Nearest BS of a non-empty sector with everything its detection test needs.
    """

    sector: SectorIndex
    point: int
    distance: float
    loss: float
    others: np.ndarray
    other_losses: np.ndarray
    offset: float  # noise exponent plus far-field log-attenuation
    interfered: bool = True

    @property
    def weights(self) -> np.ndarray:
        return self.loss / self.other_losses


def sector_candidates(topology: Topology, cfg: NetworkConfig, plm: PathLossModel) -> List[SectorCandidate]:
    m_beams = cfg.m_beams
    if len(topology) == 0:
        return []

    nearest = geometry.nearest_per_sector(topology, m_beams)
    far_field = geometry.sector_attenuations(topology, cfg, plm, nearest)
    sectors = geometry.sector_indices(topology.points, m_beams)
    losses = path_loss(plm, topology.distances)

    candidates = []
    for i, entry in enumerate(nearest):
        if entry is None:
            continue

        mask = sectors == i + 1
        mask[entry.index] = False
        others = np.flatnonzero(mask)

        candidates.append(SectorCandidate(
            sector=i + 1,
            point=entry.index,
            distance=entry.distance,
            loss=float(losses[entry.index]),
            others=others,
            other_losses=losses[others],
            offset=noise_exponent(cfg, plm, entry.distance) + far_field[i],
            interfered=cfg.has_interference,
        ))

    return candidates


def _detect(candidates: Sequence[SectorCandidate], fades: np.ndarray, gamma: float) -> np.ndarray:
    # F0 > Gamma l0 sum_j F_j / l_j + offset, per cycle and candidate
    columns = []
    for candidate in candidates:
        threshold = np.full(len(fades), candidate.offset)
        if candidate.interfered and len(candidate.others):
            threshold += gamma * (fades[:, candidate.others] @ candidate.weights)
        columns.append(fades[:, candidate.point] > threshold)

    return np.column_stack(columns)


def _neglected(
        candidates: Sequence[SectorCandidate],
        fades: np.ndarray,
        detected: np.ndarray,
        cfg: NetworkConfig,
) -> np.ndarray:
    # cycles in which a non-nearest BS of an undetected sector clears the threshold
    noise_scale = cfg.effective_noise_power * cfg.sinr_threshold / (cfg.power_tx * cfg.m_beams)
    events = np.zeros(len(fades), dtype=bool)

    for column, candidate in enumerate(candidates):
        if not len(candidate.others):
            continue

        members = np.concatenate(([candidate.point], candidate.others))
        member_losses = np.concatenate(([candidate.loss], candidate.other_losses))
        received = fades[:, members] / member_losses
        if candidate.interfered:
            interference = received.sum(axis=1, keepdims=True) - received
        else:
            interference = np.zeros_like(received)

        clears = received > cfg.sinr_threshold * interference + noise_scale
        events |= ~detected[:, column] & clears[:, 1:].any(axis=1)

    return events


def run_cell_search(
        topology: Topology,
        cfg: NetworkConfig,
        plm: PathLossModel,
        trial: TrialConfig,
        rng: np.random.Generator,
        trial_id: int = 0,
) -> TrialOutcome:
    """
    Runs cycles on a fixed topology until some sector is detected or the cap is reached.

    :param topology: BS positions, fixed for the whole trial
    :param cfg: network configuration
    :param plm: path loss model
    :param trial: trial settings
    :param rng: random stream of the trial
    :param trial_id: trial index recorded in the outcome
    :return: trial outcome
    """

    cap = trial.cap_for(cfg.scenario)
    candidates = sector_candidates(topology, cfg, plm)
    if not candidates:
        return TrialOutcome(
            trial_id=trial_id, cycles=cap, censored=True, neglected_cycles=0 if trial.count_neglected else None,
        )

    done, block, neglected = 0, FIRST_BLOCK, 0
    while done < cap:
        size = min(block, cap - done)
        fades = rng.standard_exponential((size, len(topology)))
        detected = _detect(candidates, fades, cfg.sinr_threshold)
        success = detected.any(axis=1)
        rows = int(np.argmax(success)) + 1 if success.any() else size

        if trial.count_neglected:
            neglected += int(np.count_nonzero(_neglected(candidates, fades[:rows], detected[:rows], cfg)))

        if success.any():
            hits = [candidate for candidate, hit in zip(candidates, detected[rows - 1]) if hit]
            serving = min(hits, key=lambda candidate: (candidate.loss, candidate.sector))
            return TrialOutcome(
                trial_id=trial_id,
                cycles=done + rows,
                serving_sector=serving.sector,
                serving_distance=serving.distance,
                neglected_cycles=neglected if trial.count_neglected else None,
            )

        done += size
        block *= 2

    return TrialOutcome(
        trial_id=trial_id, cycles=cap, censored=True, neglected_cycles=neglected if trial.count_neglected else None,
    )


def cycle_successes(
        topology: Topology,
        cfg: NetworkConfig,
        plm: PathLossModel,
        n_cycles: int,
        rng: np.random.Generator,
) -> np.ndarray:
    """
    Per-cycle success indicators of `n_cycles` consecutive cycles on a fixed topology.
    """

    candidates = sector_candidates(topology, cfg, plm)
    if not candidates:
        return np.zeros(n_cycles, dtype=bool)

    blocks = []
    for lo, hi in utils.chunked(0, n_cycles, 4096):
        fades = rng.standard_exponential((hi - lo, len(topology)))
        blocks.append(_detect(candidates, fades, cfg.sinr_threshold).any(axis=1))

    return np.concatenate(blocks)


def run_conditioned_on_r0(
        r0: float,
        cfg: NetworkConfig,
        plm: PathLossModel,
        trial: TrialConfig,
        rng: np.random.Generator,
        trial_id: int = 0,
) -> TrialOutcome:
    """
    Runs a trial on a fresh topology whose nearest BS is at distance `r0`.

    :raises errors.ConfigError: if `r0` is not inside the window
    """

    if not r0 > 0:
        raise errors.DomainError(f"nearest distance must be positive, got {r0!r}")

    radius = trial.copy(update={'nearest_at': r0}).radius_for(cfg)
    topology = geometry.sample_conditioned_topology(r0, cfg.lambda_bs, radius, rng)

    return run_cell_search(topology, cfg, plm, trial, rng, trial_id)


TopologySource = Union[None, Topology, Sequence[Topology]]


def _run_trial(
        source: TopologySource,
        cfg: NetworkConfig,
        plm: PathLossModel,
        trial: TrialConfig,
        trial_id: int,
) -> TrialOutcome:
    rng = utils.trial_rng(trial.master_seed, trial_id)

    if source is None:
        if trial.nearest_at is not None:
            return run_conditioned_on_r0(trial.nearest_at, cfg, plm, trial, rng, trial_id)
        topology = geometry.sample_ppp_disk(cfg.lambda_bs, trial.radius_for(cfg), rng)
    elif isinstance(source, Topology):
        topology = source
    else:
        topology = source[trial_id % len(source)]

    return run_cell_search(topology, cfg, plm, trial, rng, trial_id)


def _run_chunk(task: Tuple[TopologySource, NetworkConfig, PathLossModel, TrialConfig, int, int]) -> List[TrialOutcome]:
    source, cfg, plm, trial, lo, hi = task
    return [_run_trial(source, cfg, plm, trial, trial_id) for trial_id in range(lo, hi)]


def run_trials(
        source: TopologySource,
        cfg: NetworkConfig,
        plm: PathLossModel,
        trial: TrialConfig,
        workers: Optional[int] = None,
        chunk_size: Optional[int] = None,
) -> List[TrialOutcome]:
    """
    Runs all trials, in worker processes if more than one worker is configured.
    Outcomes are ordered by trial index and don't depend on the worker count.

    :param source: a fixed topology, topologies used round-robin, or `None` to draw one per trial
    """

    workers = workers or settings.workers
    chunk_size = chunk_size or settings.chunk_size
    if isinstance(source, Sequence) and not isinstance(source, Topology) and not source:
        raise errors.DomainError("at least one topology is required")

    tasks = [(source, cfg, plm, trial, lo, hi) for lo, hi in utils.chunked(0, trial.trials, chunk_size)]
    logger.debug("running %d trials in %d chunks on %d workers", trial.trials, len(tasks), workers)

    if workers == 1 or len(tasks) == 1:
        chunks = [_run_chunk(task) for task in tasks]
    else:
        with multiprocessing.Pool(processes=workers) as pool:
            chunks = pool.map(_run_chunk, tasks)

    return [outcome for chunk in chunks for outcome in chunk]


def summarize_cycles(cycles: Sequence[int], censored: Optional[Sequence[bool]] = None) -> MeanEstimate:
    """
    Mean, standard error and censored fraction of cycle counts, censored entries holding the cap.
    """

    n = len(cycles)
    if n == 0:
        raise errors.DomainError("no trials to summarize")

    mean, stderr = utils.mean_and_stderr(float(c) for c in cycles)
    censored_count = sum(bool(c) for c in censored) if censored is not None else 0

    return MeanEstimate(mean=mean, stderr=stderr, censored_fraction=censored_count / n, trials=n)


def summarize(outcomes: Sequence[TrialOutcome]) -> MeanEstimate:
    estimate = summarize_cycles([o.cycles for o in outcomes], [o.censored for o in outcomes])
    if estimate.is_lower_bound:
        logger.warning(
            "%.2f%% of %d trials censored, the mean is a lower bound",
            100 * estimate.censored_fraction, estimate.trials,
        )

    return estimate


def estimate_mean_cycles(
        source: TopologySource,
        cfg: NetworkConfig,
        plm: PathLossModel,
        trial: TrialConfig,
        workers: Optional[int] = None,
) -> MeanEstimate:
    """
    Monte Carlo mean cycle count over fixed topologies, conditioned or unconditioned PPP draws.
    """

    if trial.trials < 100:
        logger.warning("standard error of %d trials is unreliable", trial.trials)

    return summarize(run_trials(source, cfg, plm, trial, workers))


class CycleHistogram(NamedTuple):
    cycles: np.ndarray
    counts: np.ndarray
    censored: int


def cycle_histogram(outcomes: Iterable[TrialOutcome]) -> CycleHistogram:
    """
    Counts of successful trials per cycle count plus the number of censored trials.
    """

    outcomes = list(outcomes)
    finished = np.array([o.cycles for o in outcomes if not o.censored], dtype=np.int64)
    values, counts = np.unique(finished, return_counts=True)

    return CycleHistogram(values, counts, sum(o.censored for o in outcomes))


def write_outcomes(
        path: Union[str, pathlib.Path],
        outcomes: Iterable[TrialOutcome],
        manifest: Optional[str] = None,
) -> None:
    """
    Writes trial outcomes as a tab-separated table, empty fields for censored trials.
    """

    def fmt(value: Optional[float]) -> str:
        return '' if value is None else repr(value)

    with open(path, 'w') as stream:
        if manifest is not None:
            stream.write(f"# manifest: {manifest}\n")
        stream.write("trial_id\tcycles\tcensored\tserving_sector\tserving_distance\n")
        for o in outcomes:
            stream.write(
                f"{o.trial_id}\t{o.cycles}\t{int(o.censored)}\t{fmt(o.serving_sector)}\t{fmt(o.serving_distance)}\n",
            )
