"""
directional cell search delay evaluation and simulation in poisson cellular networks
"""

__version__ = '0.1.0'

from . import analytic, config, distribution, errors, geometry, model, simulate
from .analytic import PhaseVerdict, cond_mean_cycles_given_r0, mean_cycles, phase_classifier
from .distribution import DelayDistribution, build_delay_distribution, quantile_delay
from .document import ScenarioDocument
from .errors import BaseError
from .model import NetworkConfig, PathLossModel, Scenario, delay_from_cycles
from .numerics import SeriesResult, SeriesStatus, Truncation
from .presets import load_preset
from .simulate import TrialConfig, estimate_mean_cycles
