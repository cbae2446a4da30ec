import copy
import dataclasses
import math

import numpy as np
import pytest

from conftest import REG_M0, REG_NU, cached_regression, regression_model, regression_solve
from mfgc.coupler import SolverConfig, solve
from mfgc.diagnostics import (check_lambda_bound, check_mass_and_positivity, check_max_principle,
                              energy_identity, energy_identity_residual, grad_value_ratio,
                              max_principle_bound, mu_stability_probe, run_diagnostics,
                              small_param_check)
from mfgc.errors import MissingConstants
from mfgc.grid import TimeGrid, TorusGrid
from mfgc.models import CrowdMotion, LinearDemand, NegCorrResources, StructuralConstants
from mfgc.pde import SchemeConfig
from mfgc.profiles import Kernel, Profile


@pytest.fixture(scope="module")
def zero_solution():
    g = TorusGrid(32)
    model = CrowdMotion(g, 0.5, 0.5, kernel=Kernel("cosine", 0.5))
    return solve(model, TimeGrid(1.0, 64), REG_M0.density(g.nodes))


@pytest.fixture(scope="module")
def small_run():
    return regression_solve(32)


def test_zero_solution_report(zero_solution):
    r = zero_solution.diagnostics
    assert r.mass_max_dev <= 1e-12 and r.m_min > 0
    assert r.energy_identity_residual <= 1e-12
    assert r.energy_lhs == 0.0 and r.energy_rhs == 0.0
    assert r.grad_value_ratio == 0.0
    assert r.max_principle_margin >= zero_solution.model.constants().C0
    assert r.verified


def test_regression_report(small_run):
    r = small_run.diagnostics
    assert r.converged and r.verified
    assert r.mass_max_dev <= 1e-12 and r.m_min > 0
    assert r.lambda_bound_margin >= 0 and r.max_principle_margin >= 0
    assert r.small_param_ok and r.small_param_lhs == 1.5 and r.small_param_rhs == 2.25
    d = r.to_dict()
    assert d["verified"] is True and set(d) >= {"mass_max_dev", "energy_identity_residual"}


def test_reports_are_pure(small_run):
    assert run_diagnostics(small_run).to_dict() == run_diagnostics(small_run).to_dict()


def test_corrupted_density_is_detected(small_run):
    bad = copy.copy(small_run)
    bad.m = small_run.m.copy()
    bad.m[10, 3] += 0.5
    shift = small_run.m[20, 7] + 1e-3
    bad.m[20, 7] = -1e-3
    dev, m_min = check_mass_and_positivity(bad)
    assert dev == pytest.approx(max(0.5, shift) * small_run.grid.h, rel=1e-9)
    assert m_min < 0
    assert not run_diagnostics(bad).verified


def test_understated_constant_fails_max_principle(small_run):
    c = small_run.model.constants()
    assert check_max_principle(small_run) >= 0
    tiny = dataclasses.replace(c, C0=1e-6, C_growth=1e-6, lambda2=1e-6)
    model = LinearDemand(small_run.grid, 1.0, terminal=Profile(0, 1e-6, 1))
    assert check_max_principle(small_run, model, tiny) < 0


def test_max_principle_bound_arithmetic():
    c = StructuralConstants(q=2, q0=1, lambda0=0.5, C0=1.0, lambda1=0.0, lambda2=1.0, C_growth=3.0)
    # 0.2 + 3*2 + (1*1/0.25) * (0.5^-1 * 2 + 0.5^-1 * 0.7)
    assert max_principle_bound(c, 0.2, 2.0, 0.7) == pytest.approx(0.2 + 6.0 + 4.0 * (4.0 + 1.4))
    with pytest.raises(MissingConstants):
        max_principle_bound(dataclasses.replace(c, lambda2=None), 0.0, 1.0, 0.0)


def test_small_param_declared_example():
    c = StructuralConstants(q=2, q0=1, lambda0=0.25, C0=0.5, lambda1=1.0, lambda2=0.0)
    ok, lhs, rhs = small_param_check(c)
    assert ok and lhs == 1.0 and rhs == 2.25
    # closed form for general eps: ((2 + eps)/(1 + eps))^2
    for eps in (0.5, 1.0, 3.0):
        a = eps / (1 + eps)
        c = StructuralConstants(q=2, q0=1, lambda0=a / 2, C0=0.5, lambda1=1.0, lambda2=0.0)
        assert small_param_check(c)[2] == pytest.approx(((2 + eps) / (1 + eps)) ** 2, rel=1e-14)


def test_small_param_failure_fixtures():
    big = StructuralConstants(q=2, q0=1, lambda0=0.25, C0=0.5, lambda1=1.0, lambda2=10.0)
    assert small_param_check(big)[0] is False
    near = StructuralConstants(q=2, q0=1, lambda0=1 - 1e-9, C0=0.5, lambda1=1e-3, lambda2=0.0)
    ok, _, rhs = small_param_check(near)
    assert not ok and rhs < 1e-16
    with pytest.raises(MissingConstants):
        small_param_check(StructuralConstants(q=2, q0=1, lambda0=0.1, C0=1.0))


def test_small_param_is_reported_not_enforced():
    model = NegCorrResources(TorusGrid(16), -0.8, running=Profile(0, 0.3, 1))
    assert small_param_check(model)[0] is False


def test_lambda_bound_on_trajectories(small_run):
    for qt in (1.0, 2.0, math.inf):
        assert check_lambda_bound(small_run, q_tilde=qt) >= 0


def test_energy_identity_order_and_size():
    r1 = cached_regression(128).diagnostics.energy_identity_residual
    r2 = cached_regression(256).diagnostics.energy_identity_residual
    assert r1 <= 0.05
    assert math.log2(r1 / r2) >= 0.8
    assert 0.7 <= 2 * r2 / r1 <= 1.3  # halving (h, dt) halves it within 30%


def test_unconverged_iterate_has_larger_energy_residual():
    conv = cached_regression(128)
    early = regression_solve(128, max_outer=2)
    assert not early.converged
    assert energy_identity_residual(early) >= 5 * energy_identity_residual(conv)


def test_energy_identity_sides(small_run):
    lhs, rhs = energy_identity(small_run)
    r = small_run.diagnostics
    assert (lhs, rhs) == (r.energy_lhs, r.energy_rhs)


def test_grad_value_ratio_refinement_stable():
    a = grad_value_ratio(regression_solve(32))
    b = grad_value_ratio(regression_solve(64))
    assert 0.5 <= a / b <= 2.0


def test_mu_stability_closed_form():
    g = TorusGrid(32)
    x = g.nodes
    m = REG_M0.density(x)
    p = np.cos(2 * np.pi * x)
    for eps in (0.5, 1.0, 2.0):
        model = LinearDemand(g, eps)
        assert mu_stability_probe(model, p, m, p, m)[0] == 0.0
        prev = math.inf
        for delta in (0.4, 0.1, 0.01, 1e-3):
            lhs, rhs = mu_stability_probe(model, p, m, p + delta, m)
            expected = delta / (2 * (1 + eps / (2 * (1 + eps))))
            assert lhs == pytest.approx(expected, abs=1e-12)
            assert rhs == pytest.approx(delta, rel=1e-12)
            assert lhs < prev
            prev = lhs


def test_mu_stability_ratio_bounded_for_density_perturbations():
    g = TorusGrid(32)
    x = g.nodes
    model = CrowdMotion(g, 0.5, 0.8, kernel=Kernel("cosine", 0.5))
    p = np.sin(2 * np.pi * x)
    m1 = REG_M0.density(x)
    ratios = []
    for delta in (0.2, 0.05, 0.01):
        m2 = Profile(1, 0.5 + delta, 1).density(x)
        lhs, rhs = mu_stability_probe(model, p, m1, p, m2)
        ratios.append(lhs / rhs)
    assert max(ratios) <= 2 * min(ratios)
