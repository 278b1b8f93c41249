"""Taylor extraction and the closed-form constant oracle."""

import math

import numpy as np
import pytest

from microswim.expansion import (Jet, closed_form_constants,
                                 expansion_report, taylor_coeff)
from microswim.model import PhysParams
from tests.conftest import random_params


def test_monomial_coefficient():
    value, err = taylor_coeff(lambda a: a * a, 2)
    assert value == pytest.approx(1.0, abs=1e-12)
    assert err < 1e-10


def test_sine_coefficient():
    def f(a):
        if isinstance(a, Jet):
            return a.sin_cos()[0]
        return math.sin(a)

    value, err = taylor_coeff(f, 1)
    assert value == pytest.approx(1.0, abs=1e-12)
    assert err < 1e-10


def test_division_and_composition_jet():
    def f(a):
        return 1.0 / (1.0 + a) - 1.0

    value, err = taylor_coeff(f, 3)
    assert value == pytest.approx(-1.0, rel=1e-8)
    assert err < 1e-6


def test_reference_constants_all_match(pstar):
    report = expansion_report(pstar)
    assert report.ok
    assert not report.degenerate
    expected = {"a1": 1.5, "a2": 12.0, "b1": -0.375, "b2": 1.125,
                "b3": 5.25, "b4": -6.0}
    seen = {c.name: c.computed for c in report.constants}
    for name, value in expected.items():
        assert seen[name] == pytest.approx(value, rel=1e-9), name


def test_equal_magnetizations_flagged_degenerate():
    report = expansion_report(PhysParams(1, 1, 2, 1, 1.5, 1.5))
    assert report.degenerate
    seen = {c.name: c.computed for c in report.constants}
    assert seen["b4"] == pytest.approx(0.0, abs=1e-10)


def test_random_sets_pass_all_structural_checks():
    rng = np.random.default_rng(8)
    for _ in range(5):
        report = expansion_report(random_params(rng, nondegenerate=False))
        assert report.ok, report.failures()


def test_every_entry_has_controlled_error_estimate(pstar):
    report = expansion_report(pstar, tol=1e-6)
    for check in report.coefficients:
        assert check.inconclusive or check.error_estimate < 1e-6


def test_remainder_slopes_meet_claimed_order(pstar):
    report = expansion_report(pstar)
    assert report.slopes
    for slope in report.slopes:
        assert slope.ok
        assert slope.slope >= slope.claimed - 0.1


def test_magnetization_scaling_law():
    rng = np.random.default_rng(0)
    params = random_params(rng)
    scaled = PhysParams(params.ell, params.xi, params.eta, params.kappa,
                        3.0 * params.m1, 3.0 * params.m2)
    base = {c.name: c.computed for c in expansion_report(params).constants}
    tripled = {c.name: c.computed
               for c in expansion_report(scaled).constants}
    for name in ("a1", "a2"):
        assert tripled[name] == pytest.approx(base[name], rel=1e-12)
    for name in ("b1", "b2", "b3", "b4"):
        assert tripled[name] == pytest.approx(3.0 * base[name], rel=1e-9)


def test_moment_identity_links_b3_b4():
    rng = np.random.default_rng(1)
    for _ in range(10):
        params = random_params(rng)
        consts = closed_form_constants(params)
        lhs = 8.0 * (params.m1 - params.m2) / (params.m1 + params.m2)
        rhs = 1.0 / (0.5 + consts["b3"] / consts["b4"])
        assert rhs == pytest.approx(lhs, rel=1e-12)
