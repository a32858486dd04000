"""Memorization in score-based generative models: empirical scores, reverse
dynamics, Voronoi analysis and small trained score networks."""

from .dynamics import (TimeGrid, Trajectory, generate_samples, integrate_reverse_ode,
                       integrate_reverse_sde, integrate_transformed_ode, time_transform)
from .errors import (ConfigError, DivergenceError, DomainError, InvalidDatasetError,
                     NotCollapsedError, ScoreMemError, SingularTimeError,
                     TrainingDivergedError, UndefinedObservationError)
from .geometry import (VoronoiIndex, convergence_rate_fit, memorization_fraction,
                       pairwise_extremes)
from .neural import NeuralScore, ScoreNet, TrainConfig, train
from .schedules import Schedule
from .scores import (ConditionalScore, Dataset, EmpiricalBayesScore, ExactScore,
                     TikhonovScore, empirical_bayes_score, empirical_score,
                     mixture_log_density, tikhonov_score)

__version__ = "0.1.0"
