"""Architecture search: a genetic algorithm over layer genes whose filter and
neuron counts come from a two-generator adversarial network."""

from gabigan.bigan import BiGanConfig
from gabigan.config import RunConfig, load_config
from gabigan.ga import GaConfig, evolve
from gabigan.genome import Candidate, ContinuousParams, Genome, SearchLimits

__all__ = [
    "BiGanConfig",
    "Candidate",
    "ContinuousParams",
    "GaConfig",
    "Genome",
    "RunConfig",
    "SearchLimits",
    "evolve",
    "load_config",
]
