import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import bfsk_mrc_ber, mrc_ber_quadrature, propagation_factor, tber_signed_chain
from vblast_power import analytic
from vblast_power.core import ModelError, Modulation, SystemConfig

# Reference constants from independent recursions (see oracles.propagation_factor).
PROPAGATION_2X2 = 1.1869504831500295
PROPAGATION_3X3 = 1.3345541885749763


def test_mrc_ber_closed_forms():
    g = 10.0
    mu = math.sqrt(g / (1 + g))
    assert analytic.mrc_ber_bpsk(1, g) == pytest.approx(0.5 * (1 - mu), rel=1e-14)
    assert analytic.mrc_ber_bpsk(2, g) == pytest.approx(((1 - mu) / 2) ** 2 * (2 + mu), rel=1e-14)
    assert analytic.mrc_ber_bpsk(1, 1.0) == pytest.approx(0.14644660940672624, rel=1e-14)
    assert analytic.mrc_ber_bpsk(3, 0.0) == 0.5


@pytest.mark.parametrize("L", [1, 2, 3, 5])
@pytest.mark.parametrize("snr", [1e-3, 0.3, 3.0, 1e3])
def test_mrc_ber_quadrature(L, snr):
    assert analytic.mrc_ber_bpsk(L, snr) == pytest.approx(mrc_ber_quadrature(L, snr), rel=1e-8)


def test_mrc_ber_vectorized_and_invalid():
    out = analytic.mrc_ber_bpsk(2, np.array([0.0, 1.0, 10.0]))
    assert out.shape == (3,)
    with pytest.raises(ModelError):
        analytic.mrc_ber_bpsk(0, 1.0)
    with pytest.raises(ModelError):
        analytic.mrc_ber_bpsk(2, -1.0)
    with pytest.raises(ModelError):
        analytic.mrc_ber_high_snr(2, 0.0)


@given(st.integers(1, 6), st.floats(1e-3, 1e4), st.floats(1.01, 5.0))
def test_mrc_ber_decreasing(L, snr, factor):
    p = analytic.mrc_ber_bpsk(L, snr)
    assert 0 < p < 0.5
    assert analytic.mrc_ber_bpsk(L, snr * factor) < p
    assert analytic.mrc_ber_bpsk(L + 1, snr) < p


@pytest.mark.parametrize("L", [1, 2, 3, 4, 6])
def test_mrc_ber_high_snr_coefficient(L):
    g = 1e8
    assert analytic.mrc_ber_bpsk(L, g) * (4 * g) ** L == pytest.approx(math.comb(2 * L - 1, L), rel=1e-3)
    assert analytic.high_snr_coefficient(L) == math.comb(2 * L - 1, L)


@pytest.mark.parametrize("L", [1, 2, 4])
def test_mrc_ber_high_snr_overestimates_mildly(L):
    for g in (1e2, 1e3, 1e4):
        ratio = analytic.mrc_ber_high_snr(L, g) / analytic.mrc_ber_bpsk(L, g)
        assert 1.0 <= ratio <= 1.3


@pytest.mark.parametrize("L", [1, 2, 3])
@pytest.mark.parametrize("snr", [0.05, 1.0, 30.0])
def test_mrc_slope_finite_difference(L, snr):
    h = 1e-6 * snr
    fd = (analytic.mrc_ber_bpsk(L, snr + h) - analytic.mrc_ber_bpsk(L, snr - h)) / (2 * h)
    assert analytic.mrc_ber_bpsk_slope(L, snr) == pytest.approx(fd, rel=1e-6)


def test_avg_step_ber_examples():
    cfg = SystemConfig(2, 2, 10.0)
    assert analytic.avg_step_ber(cfg, [1, 1], 1) == pytest.approx(analytic.mrc_ber_bpsk(1, 10.0))
    assert analytic.avg_step_ber(cfg, [1, 1], 2) == pytest.approx(analytic.mrc_ber_bpsk(2, 10.0))
    cfg3 = SystemConfig(3, 3, 1e4)
    assert analytic.avg_step_ber(cfg3, [1, 1, 1], 3) == pytest.approx(10 / (4e4) ** 3, rel=0.05)
    with pytest.raises(ModelError):
        analytic.avg_step_ber(cfg, [1, 1], 3)
    with pytest.raises(ModelError):
        analytic.avg_step_ber(SystemConfig(2, 2, 1.0, Modulation.BFSK), [1, 1], 1)


def test_avg_bler_examples():
    cfg = SystemConfig(2, 2, 10.0)
    p1, p2 = analytic.mrc_ber_bpsk(1, 10.0), analytic.mrc_ber_bpsk(2, 10.0)
    assert analytic.avg_bler(cfg, [1, 1]) == pytest.approx(1 - (1 - p1) * (1 - p2), rel=1e-14)
    assert analytic.avg_bler(SystemConfig(3, 3, 1e-9), [1, 1, 1]) == pytest.approx(1 - 2.0**-3, rel=1e-3)
    g = 1e5
    assert analytic.avg_bler(SystemConfig(2, 2, g), [1, 1]) == pytest.approx(1 / (4 * g), rel=1e-2)


@given(st.integers(1, 4), st.floats(0.1, 1e4), st.floats(1.01, 10.0))
def test_avg_bler_decreasing_in_snr(m, g, factor):
    a = analytic.avg_bler(SystemConfig(m, m, g), np.ones(m))
    assert analytic.avg_bler(SystemConfig(m, m, g * factor), np.ones(m)) < a


def test_avg_bler_high_snr():
    cfg = SystemConfig(3, 3, 1e4)
    assert analytic.avg_bler_high_snr(cfg, [1, 1, 1]) == pytest.approx(analytic.avg_bler(cfg, [1, 1, 1]), rel=0.01)
    g = 1e3
    a2 = (6 / g) ** (1 / 3)
    approx = analytic.avg_bler_high_snr(SystemConfig(2, 2, g), [2 - a2, a2])
    assert approx * 8 * g == pytest.approx(1.0, rel=0.15)
    with pytest.raises(ModelError):
        analytic.avg_bler_high_snr(cfg, [3, 0, 0])


def test_error_pattern_enumeration():
    assert len(analytic.enumerate_error_patterns(1)) == 1
    assert len(analytic.enumerate_error_patterns(3)) == 9
    unsigned = analytic.enumerate_error_patterns(4, signed=False)
    assert len(unsigned) == 8
    assert sum(e.multiplicity for e in unsigned) == 27
    assert analytic.enumerate_error_patterns(3)[0].support == frozenset()
    with pytest.raises(ModelError):
        analytic.enumerate_error_patterns(22)
    with pytest.raises(ModelError):
        analytic.ErrorVector((0, 1))


def test_tber_single_stream_is_bler():
    cfg = SystemConfig(1, 3, 5.0)
    rep = analytic.avg_tber(cfg, [1.0])
    assert rep.tber == pytest.approx(analytic.avg_bler(cfg, [1.0]), rel=1e-14)


def test_tber_uniform_high_snr():
    g = 1e4
    rep = analytic.avg_tber(SystemConfig(2, 2, g), [1, 1])
    assert rep.tber * 20 * g / 3 == pytest.approx(1.0, rel=0.10)
    assert rep.method is analytic.Method.EXACT
    assert len(rep.steps) == 2


def test_tber_matches_signed_enumeration():
    rng = np.random.default_rng(3)
    for m, n in ((2, 2), (3, 3), (3, 5), (4, 4)):
        cfg = SystemConfig(m, n, float(10 ** rng.uniform(-1, 3)))
        alpha = m * rng.dirichlet(np.ones(m))
        ref = tber_signed_chain(list(cfg.orders), alpha, cfg.sigma0_sq, analytic.mrc_ber_bpsk)
        assert analytic.avg_tber(cfg, alpha).tber == pytest.approx(ref, rel=1e-12)


@given(st.integers(1, 4), st.integers(0, 2), st.floats(0.1, 1e4), st.integers(0, 2**32 - 1))
def test_tber_grouping_identity(m, extra, g, seed):
    alpha = m * np.random.default_rng(seed).dirichlet(np.ones(m))
    cfg = SystemConfig(m, m + extra, g)
    a = analytic.avg_tber(cfg, alpha).tber
    b = analytic.avg_tber_grouped(cfg, alpha).tber
    assert a == pytest.approx(b, rel=1e-10)


@given(st.integers(1, 4), st.floats(0.1, 1e4), st.integers(0, 2**32 - 1))
def test_tber_bounded_by_bler(m, g, seed):
    alpha = m * np.random.default_rng(seed).dirichlet(np.ones(m))
    cfg = SystemConfig(m, m, g)
    t = analytic.avg_tber(cfg, alpha).tber
    assert 0 < t <= analytic.avg_bler(cfg, alpha) * (1 + 1e-12)


def test_tber_size_guard():
    with pytest.raises(ModelError):
        analytic.avg_tber(SystemConfig(13, 13, 1.0), np.ones(13))


def test_propagation_factor():
    assert analytic.error_propagation_factor(SystemConfig(1, 1, 1.0)) == 1.0
    two = analytic.error_propagation_factor(SystemConfig(2, 2, 1.0))
    assert two == pytest.approx(1 + analytic.mrc_ber_bpsk(2, 0.25), rel=1e-14)
    assert two == pytest.approx(PROPAGATION_2X2, rel=1e-12)
    assert two == pytest.approx(6 / 5, rel=0.015)
    three = analytic.error_propagation_factor(SystemConfig(3, 3, 1.0))
    assert three == pytest.approx(PROPAGATION_3X3, rel=1e-12)
    for m, n in ((3, 3), (2, 4), (4, 4)):
        cfg = SystemConfig(m, n, 1.0)
        ref = propagation_factor(list(cfg.orders), np.ones(m), analytic.mrc_ber_bpsk)
        assert analytic.error_propagation_factor(cfg) == pytest.approx(ref, rel=1e-12)


def test_tber_high_snr_forms():
    g = 1e9
    a2 = 16 ** (1 / 3) / (4 * g) ** (1 / 3)
    cfg = SystemConfig(2, 2, g)
    approx = analytic.avg_tber_high_snr(cfg, [2 - a2, a2])
    assert approx * 32 * g / 3 == pytest.approx(1.0, rel=0.01)
    assert analytic.avg_tber_high_snr(SystemConfig(1, 1, 50.0), [1.0]) == pytest.approx(1 / 200)
    with pytest.raises(ModelError):
        analytic.avg_tber_high_snr(cfg, [2, 0])


def test_tber_high_snr_3x3_near_exact():
    from vblast_power.allocator import Criterion, closed_form_allocation

    cfg = SystemConfig(3, 3, 1e3)
    alpha = closed_form_allocation(cfg, Criterion.TBER).alpha
    exact = analytic.avg_tber(cfg, alpha).tber
    assert analytic.avg_tber_high_snr(cfg, alpha) == pytest.approx(exact, rel=0.25)


def test_maclaurin_values():
    bpsk = analytic.maclaurin_coeffs(SystemConfig(2, 2, 1.0))
    assert bpsk == pytest.approx([-0.5, -0.75], abs=1e-15)
    bfsk = analytic.maclaurin_coeffs(SystemConfig(2, 2, 1.0, Modulation.BFSK))
    assert bfsk == pytest.approx([-0.25, -0.375], abs=1e-15)


@pytest.mark.parametrize("m, n", [(2, 2), (3, 3), (2, 4)])
def test_maclaurin_finite_difference(m, n):
    h = 1e-6
    cfg = SystemConfig(m, n, 1.0)
    # Coherent: odd extension about 1/2 makes the centered difference in sqrt(snr) one-sided.
    fd = [(analytic.mrc_ber_bpsk(int(L), h * h) - 0.5) / h for L in cfg.orders]
    assert analytic.maclaurin_coeffs(cfg) == pytest.approx(fd, abs=1e-4)
    cfg_nc = SystemConfig(m, n, 1.0, Modulation.BFSK)
    fd_nc = [(bfsk_mrc_ber(int(L), h) - bfsk_mrc_ber(int(L), -h)) / (2 * h) for L in cfg.orders]
    assert analytic.maclaurin_coeffs(cfg_nc) == pytest.approx(fd_nc, abs=1e-4)
