"""Evolving per-bin aggregates of droplet mass and droplet number.

A bin holds a total mass L_i and a (possibly non-integer) droplet count
N_i; its intra-bin mean mass L_i / N_i is physical only while it lies
between the bin boundaries.  Droplets coalesced past the top of the grid
accumulate in an overflow reservoir so the mass ledger stays closed.
"""

from typing import NamedTuple

import numpy as np

from .grid import MassGrid, bin_index_of, OVERFLOW

__all__ = [
    "BinState",
    "SpectrumState",
    "OVERFLOW_BIN",
    "bin_mean_violation",
    "FULL_REMOVAL_RTOL",
]

# Deposit location code for the overflow reservoir (bins are >= 0).
OVERFLOW_BIN = -1

# Removing the last whole droplet must take the bin to exactly (0, 0);
# the drawn mass may differ from the stored mass by round-off only.
FULL_REMOVAL_RTOL = 1e-12

# Relative slack applied at bin boundaries when classifying a mean-mass
# violation, covering float round-off at endpoint draws.
BOUNDARY_RTOL = 1e-12


class BinState(NamedTuple):
    mass: float
    number: float


class SpectrumState:
    """Per-bin (mass, number) aggregates plus the overflow reservoir.

    Owned by a single realization at a time; all mutators work in place.
    """

    __slots__ = ("mass", "number", "overflow_mass", "overflow_number", "time")

    def __init__(self, mass, number, overflow_mass=0.0, overflow_number=0.0,
                 time=0.0):
        self.mass = np.asarray(mass, dtype=float)
        self.number = np.asarray(number, dtype=float)
        if self.mass.shape != self.number.shape or self.mass.ndim != 1:
            raise ValueError("mass and number must be 1-d arrays of equal length")
        self.overflow_mass = float(overflow_mass)
        self.overflow_number = float(overflow_number)
        self.time = float(time)

    @classmethod
    def zeros(cls, n_bins: int) -> "SpectrumState":
        return cls(np.zeros(n_bins), np.zeros(n_bins))

    @property
    def n_bins(self) -> int:
        return self.mass.size

    def copy(self) -> "SpectrumState":
        return SpectrumState(self.mass.copy(), self.number.copy(),
                             self.overflow_mass, self.overflow_number,
                             self.time)

    def bin(self, i: int) -> BinState:
        return BinState(float(self.mass[i]), float(self.number[i]))

    def mean_mass(self, i: int) -> float:
        """Intra-bin mean mass L_i / N_i; the bin must be populated."""
        n = self.number[i]
        if not n > 0.0:
            raise ValueError(f"bin {i} is empty, mean mass undefined")
        return float(self.mass[i]) / float(n)

    def total_mass(self) -> float:
        return float(self.mass.sum()) + self.overflow_mass

    def total_number(self) -> float:
        return float(self.number.sum()) + self.overflow_number

    def remove_droplet(self, i: int, x: float) -> None:
        """Take one droplet of mass x out of bin i.

        Whether x keeps the remaining mean inside the bin is the caller's
        responsibility (the selection interval guarantees it); this method
        only does the bookkeeping.  With exactly one droplet left, x must
        equal the stored bin mass to round-off and the bin is zeroed.
        """
        n = float(self.number[i])
        if n < 1.0:
            raise ValueError(
                f"bin {i} holds {n} droplets, cannot remove a whole one")
        L = float(self.mass[i])
        if n <= 1.0:
            if abs(x - L) > FULL_REMOVAL_RTOL * L:
                raise ValueError(
                    f"single-droplet bin {i}: removal {x!r} g != content {L!r} g")
            self.mass[i] = 0.0
            self.number[i] = 0.0
            return
        self.mass[i] = L - x
        self.number[i] = n - 1.0

    def deposit_droplet(self, grid: MassGrid, x: float):
        """Add one droplet of mass x; returns the bin index or OVERFLOW_BIN."""
        where = bin_index_of(grid, x)
        if where is OVERFLOW:
            self.overflow_mass += x
            self.overflow_number += 1.0
            return OVERFLOW_BIN
        if not isinstance(where, int):
            raise ValueError(f"deposit mass {x!r} g falls below the grid")
        self.mass[where] += x
        self.number[where] += 1.0
        return where

    def moments(self, k: int) -> float:
        """Spectrum moment of order k in {0, 1, 2, 3}.

        Orders 0 and 1 are exact sums (overflow reservoir included).
        Orders >= 2 use the bin-mean approximation sum N_i * (L_i/N_i)**k
        over populated bins; the reservoir is excluded since it has no
        bin boundaries to give its mean meaning.
        """
        if k not in (0, 1, 2, 3):
            raise ValueError(f"moment order must be 0..3, got {k!r}")
        if k == 0:
            return self.total_number()
        if k == 1:
            return self.total_mass()
        pop = self.number > 0.0
        if not np.any(pop):
            return 0.0
        means = self.mass[pop] / self.number[pop]
        return float(np.sum(self.number[pop] * means ** k))

    def snapshot_records(self, grid: MassGrid) -> list:
        """One record per bin plus an overflow record, for serialization."""
        rows = []
        for i in range(self.n_bins):
            n = float(self.number[i])
            rows.append({
                "bin": i,
                "x_lo_g": grid.lower(i),
                "x_hi_g": grid.upper(i),
                "mass_g": float(self.mass[i]),
                "number": n,
                "mean_mass_g": float(self.mass[i]) / n if n > 0.0 else None,
            })
        rows.append({
            "bin": OVERFLOW_BIN,
            "x_lo_g": grid.upper(self.n_bins - 1),
            "x_hi_g": None,  # reservoir is unbounded above
            "mass_g": self.overflow_mass,
            "number": self.overflow_number,
            "mean_mass_g": (self.overflow_mass / self.overflow_number
                            if self.overflow_number > 0.0 else None),
        })
        return rows


def bin_mean_violation(mass: float, number: float, x_lo: float, x_hi: float,
                       rtol: float = BOUNDARY_RTOL):
    """Classify an unphysical intra-bin mean, if any.

    Returns 'below_lower' or 'above_upper' when mass/number falls outside
    [x_lo, x_hi] beyond relative slack rtol, and None for a physical bin.
    Empty bins are physical by definition.
    """
    if number <= 0.0:
        return None
    mean = mass / number
    if mean < x_lo * (1.0 - rtol):
        return "below_lower"
    if mean > x_hi * (1.0 + rtol):
        return "above_upper"
    return None
