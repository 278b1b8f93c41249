"""Normal coordinates, derived constants, and the displacement functional."""

import math

import numpy as np
import pytest
from scipy.integrate import simpson

from microswim.errors import DegenerateParams
from microswim.model import PhysParams, SwimmerState
from microswim.simulator import ControlSignal, integrate
from microswim.transform import (ObstructionRatio, c0_closed_form,
                                 derived_constants, from_normal,
                                 identify_c123, normal_path,
                                 obstruction_ratio, stlc_threshold,
                                 to_normal, zeta)
from tests.conftest import random_params


def test_origin_maps_to_origin(pstar):
    ns = to_normal(SwimmerState(0, 0, 0, 0), pstar)
    assert (ns.x, ns.y, ns.z3, ns.z4) == (0.0, 0.0, 0.0, 0.0)


def test_reference_chart_values(pstar):
    ns = to_normal(SwimmerState(0.0, 0.0, 0.0, 0.06), pstar)
    assert ns.z4 == pytest.approx(-0.01, abs=1e-15)
    assert ns.z3 == pytest.approx(0.07, abs=1e-12)


def test_round_trip_is_identity(pstar):
    rng = np.random.default_rng(9)
    for _ in range(100):
        state = SwimmerState(*rng.uniform(-1, 1, 4))
        back = from_normal(to_normal(state, pstar), pstar)
        np.testing.assert_allclose(back.as_array(), state.as_array(),
                                   atol=1e-12)


def test_chart_is_invertible_linear_map():
    rng = np.random.default_rng(10)
    for _ in range(10):
        params = random_params(rng)
        cols = []
        for theta, alpha in ((1.0, 0.0), (0.0, 1.0)):
            ns = to_normal(SwimmerState(0, 0, theta, alpha), params)
            cols.append([ns.z3, ns.z4])
        det = cols[0][0] * cols[1][1] - cols[1][0] * cols[0][1]
        assert abs(det) > 1e-12


def test_degenerate_chart_rejected():
    with pytest.raises(DegenerateParams):
        to_normal(SwimmerState(0, 0, 0, 0.1), PhysParams(1, 1, 2, 1, 2, 2))
    with pytest.raises(DegenerateParams):
        to_normal(SwimmerState(0, 0, 0, 0.1),
                  PhysParams(1, 1, 2, 1, -2, 2))


def test_reference_derived_constants(pstar):
    dc = derived_constants(pstar)
    assert dc.available
    assert dc.c0 == pytest.approx(40.5, rel=1e-12)
    assert dc.q == pytest.approx(3.0, rel=1e-12)
    assert dc.c1 == pytest.approx(-30.375, abs=1e-6)
    assert dc.c2 == pytest.approx(-3.65625, abs=1e-6)
    assert dc.c3 == pytest.approx(54.0, abs=1e-6)
    assert dc.c0_composite == pytest.approx(40.5, abs=4e-3)


def test_threshold_zero_iff_moments_cancel():
    assert stlc_threshold(PhysParams(1, 1, 2, 1, -1.5, 1.5)) == 0.0
    assert stlc_threshold(PhysParams(1, 1, 2, 1, 1, 2)) > 0.0


def test_equal_drag_kills_the_obstruction_constant():
    params = PhysParams(1.3, 0.9, 0.9, 1.1, 1.0, 2.0)
    assert c0_closed_form(params) == 0.0
    dc = derived_constants(params)
    assert abs(dc.c0_composite) <= 1e-6


def test_sign_of_c0_follows_moments_and_drag():
    rng = np.random.default_rng(3)
    for _ in range(30):
        params = random_params(rng)
        swapped = PhysParams(params.ell, params.eta, params.xi,
                             params.kappa, params.m1, params.m2)
        expected = math.copysign(
            1.0, (params.m2 ** 2 - params.m1 ** 2)
            * (params.eta - params.xi))
        assert math.copysign(1.0, c0_closed_form(params)) == expected
        assert math.copysign(1.0, c0_closed_form(swapped)) == -expected


def test_composite_matches_closed_form_on_random_sample():
    rng = np.random.default_rng(0)
    for _ in range(20):
        params = random_params(rng)
        fit = identify_c123(params)
        dc = derived_constants(params)
        composite = fit.c3 + dc.a2 * fit.c2 - fit.c1
        closed = c0_closed_form(params)
        assert composite == pytest.approx(closed,
                                          rel=1e-4, abs=1e-4), params


def test_degenerate_constants_flagged_not_raised():
    params = PhysParams(1, 1, 2, 1, 2, 2)
    with pytest.raises(DegenerateParams):
        derived_constants(params)
    dc = derived_constants(params, strict=False)
    assert not dc.available
    assert math.isnan(dc.c1)
    assert dc.c0 == 0.0
    anti = derived_constants(PhysParams(1, 1, 2, 1, -2, 2), strict=False)
    assert not anti.available
    assert anti.q == 0.0


def test_zeta_fixed_points(pstar):
    assert zeta(SwimmerState(0, 0, 0, 0), pstar) == 0.0
    assert zeta(SwimmerState(1, 0, 0, 0), pstar) == 1.0


def test_zeta_composes_chart_and_constants(pstar):
    dc = derived_constants(pstar)
    state = SwimmerState(0.0, 0.0, 0.0, 0.06)
    ns = to_normal(state, pstar)
    z3n = ns.z3 / dc.b4 ** 2
    manual = -dc.c1 * z3n * ns.z4 - 0.5 * dc.c2 * ns.z4 ** 2
    assert zeta(state, pstar) == pytest.approx(manual, rel=1e-12)


def test_constant_trajectory_has_undefined_ratio(pstar):
    traj = integrate(pstar, np.zeros(4), ControlSignal.zero(), 1.0)
    ratio = obstruction_ratio(traj, pstar)
    assert isinstance(ratio, ObstructionRatio)
    assert not ratio.defined
    assert ratio.delta_zeta == pytest.approx(0.0, abs=1e-14)
    assert ratio.z4_energy == pytest.approx(0.0, abs=1e-20)


def test_ratio_approaches_obstruction_constant(pstar):
    devs = []
    for eps in (1e-1, 1e-3):
        rng = np.random.default_rng(int(1.0 / eps))
        amp = rng.uniform(0.3 * eps, eps, 2)
        phase = rng.uniform(0.0, 2.0 * math.pi, 2)
        sig = ControlSignal.sinusoidal(amp[0], amp[1], 1.3 / eps,
                                       phase=(phase[0], phase[1]),
                                       bound=eps)
        traj = integrate(pstar, np.zeros(4), sig, eps, tol=1e-10,
                         atol=1e-10 * eps * eps)
        ratio = obstruction_ratio(traj, pstar, energy_floor=0.0)
        assert ratio.defined
        devs.append(abs(ratio.ratio - 40.5))
    assert devs[-1] < devs[0]
    assert devs[-1] < 1.0


def test_remainder_scale_shrinks_with_the_bound(pstar):
    c0 = c0_closed_form(pstar)
    medians = []
    for eps in (1e-1, 1e-3):
        fitted = []
        for i in range(5):
            rng = np.random.default_rng((11, i))
            amp = rng.uniform(0.3 * eps, eps, 2)
            freq = rng.uniform(0.5, 2.5) / eps
            phase = rng.uniform(0.0, 2.0 * math.pi, 2)
            sig = ControlSignal.sinusoidal(amp[0], amp[1], freq,
                                           phase=(phase[0], phase[1]),
                                           bound=eps)
            traj = integrate(pstar, np.zeros(4), sig, eps, tol=1e-10,
                             atol=1e-10 * eps * eps)
            ts, z3n, z4 = normal_path(traj, pstar)
            e4 = simpson(z4 ** 2, x=ts)
            e34 = simpson(np.abs(z3n * z4), x=ts)
            e3 = simpson(z3n ** 2, x=ts)
            dz = zeta(SwimmerState.from_array(traj.y[-1]), pstar) - \
                zeta(SwimmerState.from_array(traj.y[0]), pstar)
            fitted.append(abs(dz - c0 * e4) / (e4 + e34 + e3))
        medians.append(float(np.median(fitted)))
    assert medians[-1] < 0.1 * medians[0]
    assert medians[-1] < 0.2
