"""Regime classification, loop search, and the integral inequalities."""

import math

import numpy as np
import pytest

from microswim.controllability import (DEFECT_TOL, NONTRIVIAL_SIZE,
                                       ControllabilityClass, _merit_and_grad,
                                       classify, epsilon_sweep,
                                       lemma_bounds_check, loop_search)
from microswim.errors import DegenerateParams
from microswim.model import (REFERENCE_OFFSETS, PhysParams, SwimmerState)
from microswim.simulator import ControlSignal, integrate
from microswim.transform import zeta
from tests.conftest import PSTAR


@pytest.fixture(scope="module")
def big_loop():
    return loop_search(PSTAR, 30.0, T=1.0, seed=0, n_starts=2)


def test_reference_classification(pstar):
    cls = classify(pstar)
    assert cls.regime is ControllabilityClass.STLC_Q_NOT_STLC
    assert cls.q == pytest.approx(3.0, rel=1e-12)
    assert cls.c0 == pytest.approx(40.5, rel=1e-12)


def test_classification_degenerate_regimes():
    equal_drag = classify(PhysParams(1, 1, 1, 1, 1, 2))
    assert equal_drag.regime is ControllabilityClass.NOT_STLC_Q_ANY
    equal_moments = classify(PhysParams(1, 1, 2, 1, 1.5, 1.5))
    assert equal_moments.regime is ControllabilityClass.NOT_STLC_Q_ANY
    opposite = classify(PhysParams(1, 1, 2, 1, -1, 1))
    assert opposite.regime is ControllabilityClass.STLC
    assert opposite.q == 0.0


def test_classification_swap_invariance(pstar):
    swapped = classify(PhysParams(1, 1, 2, 1, 2, 1))
    base = classify(pstar)
    assert swapped.regime is base.regime
    assert swapped.q == pytest.approx(base.q, rel=1e-12)
    assert swapped.c0 == pytest.approx(-base.c0, rel=1e-12)


def test_merit_gradient_matches_finite_differences(pstar):
    rng = np.random.default_rng(7)
    n = 10
    u = rng.uniform(-0.9, 0.9, 2 * n)
    lam = rng.normal(0.0, 1.0, 4)
    pt = pstar.astuple()
    offset = REFERENCE_OFFSETS["midpoint"]
    fd_step = 1e-7
    _, grad = _merit_and_grad(u, np.zeros(4), 1.0, 10, lam, 10.0, pt,
                              offset, fd_step)
    h = 1e-5
    for i in range(0, 2 * n, 5):
        up, um = u.copy(), u.copy()
        up[i] += h
        um[i] -= h
        fp, _ = _merit_and_grad(up, np.zeros(4), 1.0, 10, lam, 10.0, pt,
                                offset, fd_step)
        fm, _ = _merit_and_grad(um, np.zeros(4), 1.0, 10, lam, 10.0, pt,
                                offset, fd_step)
        central = (fp - fm) / (2.0 * h)
        assert grad[i] == pytest.approx(central,
                                        rel=1e-5, abs=1e-5)


def test_zero_bound_returns_trivial_loop(pstar):
    result = loop_search(pstar, 0.0)
    assert result.objective == 0.0
    assert result.feasible
    assert not result.nontrivial
    assert result.T == 1.0
    assert np.max(np.abs(result.controls)) == 0.0


def test_invalid_search_arguments_rejected(pstar):
    with pytest.raises(ValueError):
        loop_search(pstar, -1.0)
    with pytest.raises(ValueError):
        loop_search(pstar, 1.0, n=1)


def test_large_bound_finds_nontrivial_loop(big_loop):
    assert big_loop.feasible
    assert big_loop.nontrivial
    assert not big_loop.no_feasible_loop
    assert big_loop.objective > 1e-3
    assert np.max(np.abs(big_loop.controls)) <= 30.0 + 1e-12
    assert big_loop.defect <= DEFECT_TOL * big_loop.objective
    start = big_loop.trajectory.y[0]
    end = big_loop.trajectory.y[-1]
    assert np.max(np.abs(end - start)) == pytest.approx(big_loop.defect)


def test_inequalities_hold_on_found_loop(big_loop):
    report = lemma_bounds_check(big_loop.trajectory, PSTAR)
    assert not report.trivial
    assert report.k_fitted > 0.0
    assert report.eps == 30.0
    assert report.bound1_ok
    assert report.bound2_ok
    assert report.int_abs_z3z4 <= (report.k_fitted * report.eps
                                   * report.int_z4sq)


def test_inequality_report_stable_under_refinement(big_loop):
    coarse = lemma_bounds_check(big_loop.trajectory, PSTAR, density=10)
    fine = lemma_bounds_check(big_loop.trajectory, PSTAR, density=20)
    assert fine.k_fitted == pytest.approx(coarse.k_fitted, rel=0.05)
    for name in ("int_abs_z3z4", "int_z3sq", "int_z4sq"):
        assert getattr(fine, name) == pytest.approx(
            getattr(coarse, name), rel=5e-3)


def test_loop_nearly_preserves_zeta(big_loop):
    report = lemma_bounds_check(big_loop.trajectory, PSTAR)
    dz = zeta(SwimmerState.from_array(big_loop.trajectory.y[-1]), PSTAR) \
        - zeta(SwimmerState.from_array(big_loop.trajectory.y[0]), PSTAR)
    k, eps = report.k_fitted, 30.0
    assert abs(dz) <= (2.0 * k * eps + k * k * eps * eps) * report.int_z4sq
    assert abs(dz) < 1e-8


def test_small_bound_collapses_to_trivial(pstar):
    result = loop_search(pstar, 0.003, seed=0, n_starts=2)
    assert result.objective == 0.0
    assert result.feasible
    assert not result.nontrivial
    assert result.no_feasible_loop


def test_warm_start_keeps_objective_monotone(pstar, big_loop):
    smaller = loop_search(pstar, 20.0, T=1.0, seed=0, n_starts=2)
    warm = [np.clip(smaller.controls.ravel(), -30.0, 30.0)]
    chained = loop_search(pstar, 30.0, T=1.0, seed=0, n_starts=2,
                          warm_starts=warm)
    assert smaller.objective > NONTRIVIAL_SIZE
    assert chained.objective >= smaller.objective - 1e-9
    assert chained.objective >= big_loop.objective - 1e-9


def test_lemma_check_requires_signal_and_chart(pstar):
    traj = integrate(pstar, np.zeros(4), ControlSignal.zero(), 0.5)
    report = lemma_bounds_check(traj, pstar)
    assert report.trivial
    assert report.bound1_ok and report.bound2_ok
    with pytest.raises(DegenerateParams):
        lemma_bounds_check(traj, PhysParams(1, 1, 2, 1, 1.5, 1.5))
    traj.signal = None
    with pytest.raises(ValueError):
        lemma_bounds_check(traj, pstar)


def test_sweep_not_applicable_off_regime():
    sweep = epsilon_sweep(PhysParams(1, 1, 2, 1, -1, 1), [0.05],
                          n_starts=1)
    assert sweep.classification.regime is ControllabilityClass.STLC
    assert sweep.verdict == "NOT APPLICABLE"
    assert len(sweep.rows) == 1
    assert len(sweep.results) == 1
    assert math.isnan(sweep.rows[0].ratio) or sweep.rows[0].ratio == 0.0
