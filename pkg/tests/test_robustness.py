import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vblast_power import analytic
from vblast_power.allocator import Criterion, alloc_coefficients, closed_form_allocation, numerical_allocation, objective
from vblast_power.core import InvalidAllocation, ModelError, SystemConfig, db_to_linear
from vblast_power.robustness import (
    PERTURBATIONS,
    TOTAL,
    finite_robustness,
    global_bound_check,
    local_robustness,
    perturbed_rate,
    preset_allocation_eval,
    rate_vs_alpha1,
    robustness_report,
)


@pytest.mark.parametrize("m, n", [(2, 2), (3, 3), (2, 3), (2, 4)])
def test_total_power_sensitivity_is_diversity_order(m, n):
    d = local_robustness(SystemConfig(m, n, 1e4), Criterion.BLER, TOTAL)
    assert d == pytest.approx(n - m + 1, rel=0.10)


def test_later_streams_are_more_robust():
    m, n, g = 2, 2, 1e4
    cfg = SystemConfig(m, n, g)
    sol = numerical_allocation(cfg)
    b2 = alloc_coefficients(m, n, Criterion.BLER).b[1]
    formula = (n - m + 1) / m * b2 / (4 * g) ** (1 / (n - m + 3))
    d2 = local_robustness(cfg, Criterion.BLER, 2, sol)
    assert d2 == pytest.approx(formula, rel=0.05)
    assert d2 < 0.1 * local_robustness(cfg, Criterion.BLER, 1, sol)


@pytest.mark.parametrize("crit", [Criterion.BLER, Criterion.TBER])
def test_small_perturbation_matches_local_measure(crit):
    cfg = SystemConfig(2, 2, 1e2)
    sol = numerical_allocation(cfg, crit)
    d = finite_robustness(cfg, crit, TOTAL, 1e-4 * 2, sol)
    assert d == pytest.approx(local_robustness(cfg, crit, TOTAL, sol), rel=0.05)


def test_single_stream_is_ber_elasticity():
    cfg = SystemConfig(1, 2, 20.0)
    h = 1e-5
    p = analytic.mrc_ber_bpsk(2, 20.0)
    slope = (analytic.mrc_ber_bpsk(2, 20.0 * (1 + h)) - analytic.mrc_ber_bpsk(2, 20.0 * (1 - h))) / (2 * h)
    assert finite_robustness(cfg, Criterion.BLER, TOTAL, 1e-6) == pytest.approx(-slope / p, rel=1e-4)
    assert local_robustness(cfg, Criterion.BLER, TOTAL) == pytest.approx(-slope / p, rel=1e-6)


def test_single_coefficient_perturbation_keeps_others():
    cfg = SystemConfig(3, 3, 100.0)
    sol = numerical_allocation(cfg)
    a = sol.alpha.copy()
    a[1] += 0.05
    assert perturbed_rate(cfg, Criterion.BLER, 2, 0.05, sol) == pytest.approx(float(objective(cfg, a, Criterion.BLER)))
    with pytest.raises(InvalidAllocation):
        perturbed_rate(cfg, Criterion.BLER, 3, -10.0, sol)
    with pytest.raises(InvalidAllocation):
        perturbed_rate(cfg, Criterion.BLER, TOTAL, -3.0, sol)


def test_parameter_validation():
    cfg = SystemConfig(2, 2, 10.0)
    for bad in (0, 3, "alpha", 1.5):
        with pytest.raises(ModelError):
            local_robustness(cfg, Criterion.BLER, bad)
    with pytest.raises(ModelError):
        finite_robustness(cfg, Criterion.BLER, TOTAL, 0.0)


def test_global_bound_examples():
    cfg = SystemConfig(2, 2, 10.0)
    sol = numerical_allocation(cfg)
    zero, up, down = global_bound_check(cfg, Criterion.BLER, (0.0, 0.5, -0.3))
    assert zero.delta_p == 0.0 and zero.bound == 0.0 and zero.holds
    # Gaining power lowers the rate by no more than lam * du.
    assert up.delta_u == pytest.approx(1.0) and -up.delta_p <= sol.lam * up.delta_u
    # Losing power raises it by at least lam * |du|.
    assert down.delta_p >= sol.lam * abs(down.delta_u)
    assert up.slack >= 0 and down.slack >= 0


@given(st.sampled_from([(2, 2), (3, 3), (2, 4), (3, 4)]), st.floats(0.0, 30.0))
def test_global_bound_always_holds(mn, snr_db):
    m, n = mn
    checks = global_bound_check(SystemConfig.from_db(m, n, snr_db), Criterion.BLER)
    assert all(c.holds for c in checks)


def test_report_contents():
    rep = robustness_report(SystemConfig(2, 2, 100.0))
    assert rep.perturbations == PERTURBATIONS
    assert len(rep.delta) == len(PERTURBATIONS)
    assert all(d >= 0 for d in rep.delta) and rep.delta_prime >= 0
    assert rep.u == 2.0
    assert rep.bounds and all(b.holds for b in rep.bounds)
    assert robustness_report(SystemConfig(2, 2, 100.0), Criterion.BLER, 2).bounds == ()


def test_alpha1_curve_is_flat_near_optimum():
    cfg = SystemConfig(2, 2, 1e2)
    a1 = numerical_allocation(cfg, Criterion.TBER).alpha[0]
    curve = rate_vs_alpha1(cfg, a1 * np.array([0.9, 1.0, 1.1]), Criterion.TBER)
    assert curve[1] == curve.min()
    assert curve.max() / curve[1] < 1.15
    h = 1e-4
    for crit in (Criterion.BLER, Criterion.TBER):
        a = numerical_allocation(cfg, crit).alpha[0]
        f = rate_vs_alpha1(cfg, [a - h, a, a + h], crit)
        assert abs(f[2] - f[0]) / (2 * h) < 1e-3 * f[1]


def test_alpha1_curve_validation():
    cfg = SystemConfig(3, 3, 10.0)
    out = rate_vs_alpha1(cfg, [1.0], Criterion.BLER)
    assert out[0] == pytest.approx(float(objective(cfg, np.ones(3), Criterion.BLER)))
    with pytest.raises(InvalidAllocation):
        rate_vs_alpha1(cfg, [3.5])


def test_preset_examples():
    grid = db_to_linear(np.arange(0.0, 35.0 + 1e-9, 5.0))
    pts = preset_allocation_eval(3, 3, grid, [2.0, 0.6, 0.4])
    assert all(1.0 - 1e-9 <= p.tber_ratio <= 1.6 for p in pts)
    assert all(p.bler_ratio >= 1.0 - 1e-9 for p in pts)
    uni = preset_allocation_eval(3, 3, grid, [1.0, 1.0, 1.0])
    for p in uni:
        cfg = SystemConfig(3, 3, p.gamma0)
        expect = float(objective(cfg, np.ones(3), Criterion.TBER)) / numerical_allocation(cfg, Criterion.TBER).objective
        assert p.tber_ratio == pytest.approx(expect, rel=1e-12)
    with pytest.raises(ModelError):
        preset_allocation_eval(3, 3, grid, [1.0, 1.0])


def test_midpoint_preset_beats_fixed_preset_at_midpoint():
    g = float(db_to_linear(17.5))
    mid = closed_form_allocation(SystemConfig(3, 3, g), Criterion.TBER).alpha
    own = preset_allocation_eval(3, 3, [g], mid)[0]
    ref = preset_allocation_eval(3, 3, [g], [2.0, 0.6, 0.4])[0]
    assert own.tber_ratio <= ref.tber_ratio
