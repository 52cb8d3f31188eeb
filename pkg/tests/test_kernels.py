"""Collision kernel forms and their symmetry/scaling properties."""

import numpy as np
import pytest

from coalbins import KernelSpec, evaluate
from coalbins.kernels import radius_from_mass, terminal_velocity


def test_constant_kernel_ignores_masses():
    spec = KernelSpec(kind="constant", coefficient=1.0)
    assert evaluate(spec, 1e-9, 5e-3) == 1.0
    assert evaluate(spec, 2.0, 2.0) == 1.0


def test_sum_kernel_value():
    spec = KernelSpec(kind="golovin_sum", coefficient=1500.0)
    assert evaluate(spec, 1e-9, 2e-9) == pytest.approx(4.5e-6, rel=1e-12)


def test_product_kernel_value():
    spec = KernelSpec(kind="product", coefficient=2.0)
    assert evaluate(spec, 3.0, 4.0) == 24.0


def test_symmetry_all_kinds():
    rng = np.random.default_rng(42)
    x = 10.0 ** rng.uniform(-12, -3, 10_000)
    y = 10.0 ** rng.uniform(-12, -3, 10_000)
    for spec in (KernelSpec(kind="constant", coefficient=3.0),
                 KernelSpec(kind="golovin_sum", coefficient=1500.0),
                 KernelSpec(kind="product", coefficient=1e6),
                 KernelSpec(kind="hydrodynamic", efficiency=0.8)):
        np.testing.assert_array_equal(evaluate(spec, x, y),
                                      evaluate(spec, y, x))


def test_sum_kernel_degree_one_homogeneity():
    spec = KernelSpec(kind="golovin_sum", coefficient=1500.0)
    rng = np.random.default_rng(7)
    x = 10.0 ** rng.uniform(-12, -6, 1000)
    y = 10.0 ** rng.uniform(-12, -6, 1000)
    for alpha in (2.0, 0.25, 1024.0):  # powers of two scale exactly
        np.testing.assert_array_equal(evaluate(spec, alpha * x, alpha * y),
                                      alpha * evaluate(spec, x, y))


def test_non_negative_everywhere():
    rng = np.random.default_rng(3)
    x = 10.0 ** rng.uniform(-12, -3, 1000)
    y = 10.0 ** rng.uniform(-12, -3, 1000)
    for kind in ("constant", "golovin_sum", "product", "hydrodynamic"):
        spec = KernelSpec(kind=kind)
        assert np.all(evaluate(spec, x, y) >= 0.0)


def test_nonpositive_mass_rejected():
    spec = KernelSpec(kind="golovin_sum")
    with pytest.raises(ValueError):
        evaluate(spec, 0.0, 1.0)
    with pytest.raises(ValueError):
        evaluate(spec, 1.0, -1.0)


def test_hydrodynamic_geometry():
    # a 4.19e-9 g droplet is 10 um in radius; equal sizes cannot collide
    assert radius_from_mass(4.19e-9) == pytest.approx(1e-3, rel=2e-4)
    spec = KernelSpec(kind="hydrodynamic", efficiency=1.0)
    assert evaluate(spec, 1e-9, 1e-9) == 0.0
    # a larger droplet falls faster, so mixed sizes do collide
    assert evaluate(spec, 1e-9, 8e-9) > 0.0
    assert terminal_velocity(2e-3) == pytest.approx(1.19e6 * 4e-6)


def test_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(kind="magic")
    with pytest.raises(ValueError):
        KernelSpec(kind="constant", coefficient=0.0)
    with pytest.raises(ValueError):
        KernelSpec(kind="hydrodynamic", efficiency=1.5)
    with pytest.raises(ValueError):
        KernelSpec(kind="hydrodynamic", efficiency=0.0)
