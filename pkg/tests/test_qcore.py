import numpy as np
import pytest

from qflow import models, qcore
from qflow.qcore import SampledFunction, ZeroNormError


def test_apply_lowering_on_excited():
    out = qcore.apply(models.SIGMA_MINUS, models.EXCITED)
    assert np.allclose(out, models.GROUND)


def test_apply_lowering_annihilates_ground():
    out = qcore.apply(models.SIGMA_MINUS, models.GROUND)
    assert np.allclose(out, 0.0)


def test_apply_lowering_on_superposition():
    psi = 0.8 * models.EXCITED + 0.6 * models.GROUND
    out = qcore.apply(models.SIGMA_MINUS, psi)
    assert np.allclose(out, 0.8 * models.GROUND)
    assert np.isclose(np.linalg.norm(out), 0.8)


def test_apply_dimension_mismatch():
    with pytest.raises(ValueError):
        qcore.apply(np.eye(3), models.EXCITED)
    with pytest.raises(ValueError):
        qcore.apply(np.ones((2, 3)), models.EXCITED)


def test_apply_is_linear():
    rng = np.random.default_rng(3)
    op = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    s1 = rng.normal(size=4) + 1j * rng.normal(size=4)
    s2 = rng.normal(size=4) + 1j * rng.normal(size=4)
    a, b = 0.3 - 0.7j, 1.1 + 0.2j
    lhs = qcore.apply(op, a * s1 + b * s2)
    rhs = a * qcore.apply(op, s1) + b * qcore.apply(op, s2)
    assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_normalize_scalar_multiple():
    unit, norm = qcore.normalize(0.8 * models.GROUND)
    assert np.allclose(unit, models.GROUND)
    assert np.isclose(norm, 0.8)


def test_normalize_already_unit():
    unit, norm = qcore.normalize(models.EXCITED)
    assert np.allclose(unit, models.EXCITED)
    assert np.isclose(norm, 1.0)


def test_normalize_zero_vector_raises():
    with pytest.raises(ZeroNormError):
        qcore.normalize(np.zeros(2, dtype=complex))


def test_normalize_idempotent():
    rng = np.random.default_rng(5)
    v = rng.normal(size=6) + 1j * rng.normal(size=6)
    unit, _ = qcore.normalize(v)
    unit2, norm2 = qcore.normalize(unit)
    assert abs(norm2 - 1.0) < 1e-14
    assert np.max(np.abs(unit2 - unit)) < 1e-14


def test_sampled_function_interpolates():
    f = SampledFunction(np.array([0.0, 1.0, 2.0]), np.array([0.0, 2.0, 0.0]))
    assert np.isclose(f(0.5), 1.0)
    assert np.isclose(f(1.0), 2.0)
    # outside the grid the boundary value is held
    assert np.isclose(f(5.0), 0.0)
    assert f.step == 1.0


def test_sampled_function_rejects_bad_grids():
    with pytest.raises(ValueError):
        SampledFunction(np.array([0.0, 2.0, 1.0]), np.zeros(3))
    with pytest.raises(ValueError):
        SampledFunction(np.array([0.0, 1.0, 3.0]), np.zeros(3))
    with pytest.raises(ValueError):
        SampledFunction(np.array([0.0]), np.zeros(1))


def test_trapezoid_constant():
    grid = np.linspace(0.0, 1.0, 11)
    f = SampledFunction(grid, np.ones(11))
    integral = qcore.trapezoid_cumulative(f)
    assert integral.values[0] == 0.0
    assert np.isclose(integral(1.0), 1.0)


def test_trapezoid_linear_exact():
    grid = np.linspace(0.0, 1.0, 11)
    f = SampledFunction(grid, grid)
    integral = qcore.trapezoid_cumulative(f)
    assert np.isclose(integral(1.0), 0.5, atol=1e-15)


def test_trapezoid_kernel_saturates_at_half():
    p = models.TwoBandParams(delta_eps=0.31)
    grid = np.linspace(0.0, 10000.0, 400001)
    f = SampledFunction(grid, models.two_band_kernel(grid, p))
    integral = qcore.trapezoid_cumulative(f)
    assert abs(integral.values[-1] - 0.5) < 1e-3


def test_trapezoid_nonneg_is_monotone():
    grid = np.linspace(0.0, 3.0, 301)
    f = SampledFunction(grid, np.abs(np.sin(grid)))
    integral = qcore.trapezoid_cumulative(f)
    assert np.all(np.diff(integral.values) >= 0.0)


def test_hermitian_checks():
    assert qcore.is_hermitian(np.array([[1.0, 1j], [-1j, 2.0]]))
    assert not qcore.is_hermitian(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError):
        qcore.check_hermitian(models.SIGMA_MINUS)


def test_check_density():
    qcore.check_density(np.diag([0.64, 0.36]).astype(complex))
    qcore.check_density(np.diag([0.3, 0.2]).astype(complex), weight=0.5)
    with pytest.raises(ValueError):
        qcore.check_density(np.diag([0.8, 0.4]).astype(complex))
