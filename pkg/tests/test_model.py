"""Model assembly: parameter validation, resistance system, vector fields."""

import math

import numpy as np
import pytest

from microswim.errors import NonPositiveParameter, ZeroMagnetization
from microswim.model import (REFERENCE_OFFSETS, ControlInput, PhysParams,
                             SwimmerState, dynamics, f_table, field_eval,
                             resistance_system, validate_params)
from tests.conftest import random_params


def test_reference_set_accepted(pstar):
    assert validate_params(pstar) is pstar


def test_zero_magnetization_rejected():
    with pytest.raises(ZeroMagnetization) as exc:
        validate_params(PhysParams(1, 1, 2, 1, 0, 2))
    assert "m1" in str(exc.value)


def test_nonpositive_length_rejected():
    with pytest.raises(NonPositiveParameter) as exc:
        validate_params(PhysParams(-1, 1, 2, 1, 1, 2))
    assert "ell" in str(exc.value)


def test_resistance_matrix_spd_over_alpha_range(pstar):
    rng = np.random.default_rng(5)
    for params in [pstar, random_params(rng), random_params(rng)]:
        for alpha in np.linspace(-math.pi / 2, math.pi / 2, 100):
            a_mat, _, _ = resistance_system(float(alpha), params)
            assert np.array_equal(a_mat, a_mat.T)
            assert np.min(np.linalg.eigvalsh(a_mat)) > 0.0


def test_elastic_term_vanishes_at_zero_shape(pstar):
    _, _, k = resistance_system(0.0, pstar)
    np.testing.assert_array_equal(k, np.zeros(4))


def test_f_table_drift_and_perp_rows_vanish_at_zero_shape():
    rng = np.random.default_rng(11)
    for _ in range(5):
        table = f_table(0.0, random_params(rng, nondegenerate=False))
        np.testing.assert_allclose(table[0], 0.0, atol=1e-12)
        np.testing.assert_allclose(table[2], 0.0, atol=1e-12)


def test_f_table_reference_values_at_zero_shape(pstar):
    table = f_table(0.0, pstar)
    np.testing.assert_allclose(table[1, 1], 1.125, rtol=1e-12)
    np.testing.assert_allclose(table[1, 2], 5.25, rtol=1e-12)
    np.testing.assert_allclose(table[1, 3], -6.0, rtol=1e-12)


def test_equilibria_have_zero_derivative(pstar):
    rest = ControlInput(0.0, 0.0)
    for state in [SwimmerState(0, 0, 0, 0), SwimmerState(5, -3, 0, 0)]:
        np.testing.assert_allclose(dynamics(state, rest, pstar), 0.0,
                                   atol=1e-14)


def test_rotation_structure_of_dynamics(pstar):
    rest = ControlInput(0.0, 0.0)
    base = dynamics(SwimmerState(0, 0, 0, 0.01), rest, pstar)
    rotated = dynamics(SwimmerState(0, 0, math.pi / 2, 0.01), rest, pstar)
    c, s = math.cos(math.pi / 2), math.sin(math.pi / 2)
    np.testing.assert_allclose(rotated[0], c * base[0] - s * base[1],
                               atol=1e-12)
    np.testing.assert_allclose(rotated[1], s * base[0] + c * base[1],
                               atol=1e-12)
    np.testing.assert_allclose(rotated[2:], base[2:], atol=1e-14)


def test_dynamics_affine_in_controls():
    rng = np.random.default_rng(2)
    for _ in range(20):
        params = random_params(rng, nondegenerate=False)
        state = SwimmerState(*rng.uniform(-1, 1, 4))
        u1 = ControlInput(*rng.uniform(-2, 2, 2))
        u2 = ControlInput(*rng.uniform(-2, 2, 2))
        both = ControlInput(u1.h_perp + u2.h_perp, u1.h_par + u2.h_par)
        lhs = dynamics(state, both, params)
        rhs = (dynamics(state, u1, params) + dynamics(state, u2, params)
               - dynamics(state, ControlInput(0.0, 0.0), params))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_f_table_ignores_position_and_heading(pstar):
    rng = np.random.default_rng(3)
    ref = field_eval(SwimmerState(0, 0, 0, 0.2), pstar).ftable
    for _ in range(10):
        x, y, theta = rng.uniform(-10, 10, 3)
        moved = field_eval(SwimmerState(x, y, theta, 0.2), pstar).ftable
        np.testing.assert_allclose(moved, ref, atol=1e-15)


def test_field_eval_matches_dynamics(pstar):
    rng = np.random.default_rng(4)
    for _ in range(10):
        state = SwimmerState(*rng.uniform(-1, 1, 4))
        u = ControlInput(*rng.uniform(-2, 2, 2))
        fe = field_eval(state, pstar)
        assembled = fe.f0 + u.h_par * fe.f1 + u.h_perp * fe.f2
        np.testing.assert_allclose(assembled, dynamics(state, u, pstar),
                                   atol=1e-12)


def test_pointwise_equivariance_of_dynamics():
    rng = np.random.default_rng(6)
    for _ in range(10):
        params = random_params(rng, nondegenerate=False)
        x, y, theta, alpha = rng.uniform(-1, 1, 4)
        u = ControlInput(*rng.uniform(-2, 2, 2))
        phi = rng.uniform(-math.pi, math.pi)
        c, s = math.cos(phi), math.sin(phi)
        base = dynamics(SwimmerState(x, y, theta, alpha), u, params)
        moved = dynamics(SwimmerState(c * x - s * y + 0.5,
                                      s * x + c * y - 1.5,
                                      theta + phi, alpha), u, params)
        np.testing.assert_allclose(moved[0], c * base[0] - s * base[1],
                                   atol=1e-12)
        np.testing.assert_allclose(moved[1], s * base[0] + c * base[1],
                                   atol=1e-12)
        np.testing.assert_allclose(moved[2:], base[2:], atol=1e-12)


def test_reference_point_choices_all_assemble(pstar):
    for reference in REFERENCE_OFFSETS:
        a_mat, _, _ = resistance_system(0.3, pstar, reference=reference)
        assert np.min(np.linalg.eigvalsh(a_mat)) > 0.0


def test_unknown_reference_point_rejected(pstar):
    with pytest.raises(ValueError):
        f_table(0.0, pstar, reference="nose")
