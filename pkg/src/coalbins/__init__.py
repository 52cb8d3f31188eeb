"""Stochastic collision-coalescence on a binned droplet-mass spectrum.

A droplet population lives in mass bins, each holding an aggregate mass
and a (possibly non-integer) droplet count.  Collisions are simulated
one event at a time with exponential waiting times; the mass removed
from a source bin is drawn from a selection interval built so the bin's
mean mass can never leave its boundaries.  A legacy selection mode keeps
the older unconstrained interval to demonstrate the unphysical states it
admits.
"""

__version__ = "0.1.0"

from .engine import (CollisionEvent, EngineConfig, InvariantBreachError,
                     RunStats, ViolationRecord, execute_collision, pair_rates,
                     run, sample_event)
from .ensemble import (EnsembleResult, aggregate_realizations,
                       analytic_number, run_ensemble)
from .grid import (InitialDistributionSpec, MassGrid, OVERFLOW, UNDERFLOW,
                   bin_index_of, build_geometric_grid, discretize)
from .kernels import KernelSpec, evaluate
from .rng import RNG_ALGORITHM, make_generator, realization_seed
from .selection import (SelectionInterval, base_interval, constraint_bounds,
                        draw_source_mass, legacy_interval, refined_interval)
from .state import OVERFLOW_BIN, BinState, SpectrumState, bin_mean_violation

__all__ = [
    "__version__",
    "BinState",
    "CollisionEvent",
    "EngineConfig",
    "EnsembleResult",
    "InitialDistributionSpec",
    "InvariantBreachError",
    "KernelSpec",
    "MassGrid",
    "OVERFLOW",
    "OVERFLOW_BIN",
    "RNG_ALGORITHM",
    "RunStats",
    "SelectionInterval",
    "SpectrumState",
    "UNDERFLOW",
    "ViolationRecord",
    "aggregate_realizations",
    "analytic_number",
    "base_interval",
    "bin_index_of",
    "bin_mean_violation",
    "build_geometric_grid",
    "constraint_bounds",
    "discretize",
    "draw_source_mass",
    "evaluate",
    "execute_collision",
    "legacy_interval",
    "make_generator",
    "pair_rates",
    "realization_seed",
    "refined_interval",
    "run",
    "run_ensemble",
    "sample_event",
]
