"""Steady Navier-Stokes flow past a small obstacle near a moving wall: spectral alpha-solver,
finite-volume truncated-domain oracle and the verification harness tying them together."""

from .fields import PhysicalVectorField, SpectralField, StreamFunction, WallNormalGrid, WaveNumberGrid
from .alpha import AlphaSolution, AlphaSolver, DivergenceError, NonConvergenceError, picard_iterate
from .obstacle import ObstacleConfig, OracleSolution, TruncatedDomain, compute_force, solve_truncated
from .truncation import AnnulusCutoff, CompactSource, standard_source, tns_source, truncate_velocity
from .pipelines import ConfigError, PipelineConfig, StageError

__version__ = "0.1.0"
