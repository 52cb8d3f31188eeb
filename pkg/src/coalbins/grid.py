"""Droplet-mass grid and ingestion of initial size distributions.

The spectrum is discretized into contiguous mass bins.  Bin ``i`` spans
``[boundaries[i], boundaries[i+1])`` in grams; masses at or above the last
boundary overflow the grid, masses below the first underflow it.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

__all__ = [
    "OVERFLOW",
    "UNDERFLOW",
    "MassGrid",
    "InitialDistributionSpec",
    "build_geometric_grid",
    "bin_index_of",
    "discretize",
]

# Sentinels returned by bin_index_of for masses outside the grid span.
OVERFLOW = "overflow"
UNDERFLOW = "underflow"

# Integrated bin numbers below this are zeroed so that mean-mass ratios
# never divide by denormal-scale counts.
NUMBER_FLOOR = 1e-12

# Default smallest boundary: mass of a 1 um radius water droplet.
DEFAULT_X_MIN_G = 4.19e-12
DEFAULT_RATIO = math.sqrt(2.0)
DEFAULT_N_BINS = 70

_DISTRIBUTION_KINDS = ("gamma", "exponential", "monodisperse")


@dataclass(frozen=True, eq=False)
class MassGrid:
    """Ordered bin boundaries on the droplet-mass axis, in grams."""

    boundaries: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.boundaries, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "boundaries", b)
        if b.ndim != 1 or b.size < 2:
            raise ValueError("grid needs at least two boundaries")
        if not np.all(np.isfinite(b)):
            raise ValueError("grid boundaries must be finite")
        if b[0] <= 0.0:
            raise ValueError("grid boundaries must be positive")
        if not np.all(np.diff(b) > 0.0):
            raise ValueError("grid boundaries must be strictly increasing")

    @property
    def n_bins(self) -> int:
        return self.boundaries.size - 1

    def lower(self, i: int) -> float:
        """Lower mass boundary of bin i."""
        return float(self.boundaries[i])

    def upper(self, i: int) -> float:
        """Upper (exclusive) mass boundary of bin i."""
        return float(self.boundaries[i + 1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.boundaries)


def build_geometric_grid(x_min: float, ratio: float, n: int) -> MassGrid:
    """Grid with boundaries x_min * ratio**k for k = 0..n.

    Requires x_min > 0, ratio > 1 and at least two bins.
    """
    if not (isinstance(n, (int, np.integer)) and n >= 2):
        raise ValueError(f"need at least 2 bins, got n={n!r}")
    if not (math.isfinite(x_min) and x_min > 0.0):
        raise ValueError(f"x_min must be positive and finite, got {x_min!r}")
    if not (math.isfinite(ratio) and ratio > 1.0):
        raise ValueError(f"ratio must exceed 1, got {ratio!r}")
    boundaries = x_min * np.power(float(ratio), np.arange(n + 1))
    return MassGrid(boundaries)


def bin_index_of(grid: MassGrid, mass: float):
    """Index i with boundaries[i] <= mass < boundaries[i+1].

    Returns the OVERFLOW sentinel for mass at or above the last boundary
    and UNDERFLOW below the first.  Non-positive masses are rejected.
    """
    if not (mass > 0.0):
        raise ValueError(f"mass must be positive, got {mass!r}")
    b = grid.boundaries
    k = int(b.searchsorted(mass, side="right")) - 1
    if k < 0:
        return UNDERFLOW
    if k >= b.size - 1:
        return OVERFLOW
    return k


@dataclass(frozen=True)
class InitialDistributionSpec:
    """Parameters of the initial droplet number density over mass.

    kind 'gamma' uses n(x) proportional to x**(shape-1) * exp(-x/theta)
    with theta = mean_mass / shape; 'exponential' is the shape = 1 special
    case (the shape field is ignored); 'monodisperse' puts every droplet
    at mean_mass.  total_number counts droplets in the simulated volume
    and scale_factor multiplies the whole density.
    """

    kind: str
    mean_mass: float
    total_number: float
    shape: float = 1.0
    scale_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in _DISTRIBUTION_KINDS:
            raise ValueError(
                f"kind must be one of {_DISTRIBUTION_KINDS}, got {self.kind!r}")
        for name in ("mean_mass", "total_number", "shape", "scale_factor"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")


def _gamma_log_density(x: float, shape: float, theta: float) -> float:
    return ((shape - 1.0) * math.log(x) - x / theta
            - math.lgamma(shape) - shape * math.log(theta))


def discretize(spec: InitialDistributionSpec, grid: MassGrid):
    """Integrate the initial density into per-bin aggregates.

    For each bin, the droplet number is the integral of the number
    density over the bin and the mass is the integral of the
    mass-weighted density, evaluated by adaptive Gauss-Kronrod quadrature
    to 1e-10 relative tolerance.  Non-integer numbers are kept as-is.
    Bins integrating below NUMBER_FLOOR droplets are zeroed.
    """
    from .state import SpectrumState

    n = grid.n_bins
    number = np.zeros(n)
    mass = np.zeros(n)
    amplitude = spec.total_number * spec.scale_factor

    if spec.kind == "monodisperse":
        where = bin_index_of(grid, spec.mean_mass)
        if not isinstance(where, int):
            raise ValueError(
                f"monodisperse mass {spec.mean_mass!r} g falls outside the grid")
        number[where] = amplitude
        mass[where] = amplitude * spec.mean_mass
        return SpectrumState(mass=mass, number=number)

    shape = 1.0 if spec.kind == "exponential" else spec.shape
    theta = spec.mean_mass / shape

    def density(x):
        logp = _gamma_log_density(x, shape, theta)
        return amplitude * math.exp(logp) if logp > -745.0 else 0.0

    b = grid.boundaries
    for i in range(n):
        lo, hi = b[i], b[i + 1]
        # Density is unimodal: if it underflows across the bin, skip it.
        probes = np.geomspace(lo, hi, 7)
        if all(density(x) == 0.0 for x in probes):
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            ni, _ = integrate.quad(density, lo, hi, epsabs=0.0, epsrel=1e-10,
                                   limit=200)
            li, _ = integrate.quad(lambda x: x * density(x), lo, hi,
                                   epsabs=0.0, epsrel=1e-10, limit=200)
        if ni < NUMBER_FLOOR:
            continue
        number[i] = ni
        mass[i] = li

    if not np.any(number > 0.0):
        raise ValueError("initial distribution deposits no droplets on the grid")
    return SpectrumState(mass=mass, number=number)
