"""Collision kernels K(x, y) weighting bin-pair coalescence rates.

All kernels are symmetric in their mass arguments and return a collision
rate volume in cm^3 s^-1.  Rates are evaluated at the bin mean masses,
not at the eventually drawn droplet masses: the rate has to be known
before the draw happens, which makes this the bin-level approximation
intrinsic to the method.
"""

import math
from dataclasses import dataclass

import numpy as np

__all__ = ["KernelSpec", "evaluate", "radius_from_mass", "terminal_velocity"]

KERNEL_KINDS = ("constant", "golovin_sum", "product", "hydrodynamic")

WATER_DENSITY_G_CM3 = 1.0

# Power-law fall speed v(r) = _V_COEF * r**_V_EXP (r in cm, v in cm/s),
# the small-droplet drag regime.  Tabulated efficiencies are out of scope.
_V_COEF = 1.19e6
_V_EXP = 2.0


@dataclass(frozen=True)
class KernelSpec:
    """Kernel kind plus its coefficient.

    coefficient units: cm^3 s^-1 for 'constant', cm^3 s^-1 g^-1 for
    'golovin_sum', cm^3 s^-1 g^-2 for 'product'; unused by
    'hydrodynamic', which is scaled by the collection efficiency instead.
    """

    kind: str
    coefficient: float = 1.0
    efficiency: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"kernel kind must be one of {KERNEL_KINDS}, "
                             f"got {self.kind!r}")
        if not (math.isfinite(self.coefficient) and self.coefficient > 0.0):
            raise ValueError(f"coefficient must be positive, got "
                             f"{self.coefficient!r}")
        if not (0.0 < self.efficiency <= 1.0):
            raise ValueError(f"efficiency must be in (0, 1], got "
                             f"{self.efficiency!r}")


def radius_from_mass(m):
    """Radius in cm of a water sphere of mass m grams."""
    return (3.0 * m / (4.0 * math.pi * WATER_DENSITY_G_CM3)) ** (1.0 / 3.0)


def terminal_velocity(r):
    """Power-law fall speed in cm/s for radius r in cm."""
    return _V_COEF * r ** _V_EXP


def _unchecked(spec: KernelSpec, x, y):
    if spec.kind == "constant":
        return spec.coefficient * np.ones(np.broadcast_shapes(
            np.shape(x), np.shape(y)))
    if spec.kind == "golovin_sum":
        return spec.coefficient * (x + y)
    if spec.kind == "product":
        # grouping keeps K(x, y) == K(y, x) exact
        return spec.coefficient * (x * y)
    rx = radius_from_mass(x)
    ry = radius_from_mass(y)
    return (spec.efficiency * math.pi * (rx + ry) ** 2
            * np.abs(terminal_velocity(rx) - terminal_velocity(ry)))


def evaluate(spec: KernelSpec, x, y):
    """K(x, y) for droplet masses in grams; accepts scalars or arrays."""
    if np.any(np.asarray(x) <= 0.0) or np.any(np.asarray(y) <= 0.0):
        raise ValueError("kernel arguments must be positive masses")
    out = _unchecked(spec, x, y)
    if np.ndim(out) == 0:
        return float(out)
    return out
