import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad

from lobflow.core import BookProfile, PhysicalParams, PriceGrid
from lobflow.exact import parabolic_cap
from lobflow.microstructure import (DegenerateLevelError, edge_flux, flux_coefficient, level_flux, pressure,
                                    pressure_gradient, time_rescale_factor, velocity)
from lobflow.pde import FluxModel, SolverConfig, run, zero_flux_pair

GRID = PriceGrid(0, 4, 4)


def test_pressure_examples():
    g = PriceGrid(0, 1, 4)
    p = BookProfile(g, [1, 3, 0, 0])
    np.testing.assert_array_equal(pressure(p, PhysicalParams(theta=2)), [2, 6, 0, 0])
    np.testing.assert_array_equal(pressure(p, PhysicalParams()), p.h)


@settings(max_examples=50)
@given(arrays(np.float64, 8, elements=st.floats(0, 100, allow_nan=False)), st.floats(0.1, 10))
def test_pressure_peak_matches_depth_peak(h, theta):
    p = BookProfile(PriceGrid(0, 1, 8), h)
    assert np.argmax(pressure(p, PhysicalParams(theta=theta))) == np.argmax(h)


def test_pressure_gradient_stencils():
    p = BookProfile(GRID, [1.0, 2.0, 4.0, 8.0])
    np.testing.assert_allclose(pressure_gradient(p, PhysicalParams()), [1.0, 1.5, 3.0, 4.0])


def test_velocity_examples():
    prof = BookProfile(GRID, [1.0, 2.0, 4.0, 8.0])
    params = PhysicalParams(beta=2.0, rho=2.0)
    assert velocity(prof, params, 1, 0.0) == 0.0
    # q = h: (q/h)^beta = 1
    p_s = pressure_gradient(prof, params)[2]
    u0 = 0.3
    pu = PhysicalParams(beta=2.0, rho=2.0, u0=u0)
    assert velocity(prof, pu, 2, 4.0) == pytest.approx(p_s / 2.0 * (1 + u0))
    flat = BookProfile(GRID, np.full(4, 3.0))
    assert all(velocity(flat, params, 1, q) == 0.0 for q in (0.0, 1.0, 3.0))


def test_velocity_errors():
    prof = BookProfile(GRID, [0.0, 2.0, 4.0, 8.0])
    with pytest.raises(DegenerateLevelError):
        velocity(prof, PhysicalParams(), 0, 0.0)
    with pytest.raises(ValueError):
        velocity(prof, PhysicalParams(), 1, 2.5)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0, 3.0])
@pytest.mark.parametrize("u0", [0.0, 0.1])
def test_level_flux_matches_queue_quadrature(beta, u0):
    prof = BookProfile(GRID, [1.0, 2.0, 5.0, 6.0])
    params = PhysicalParams(theta=1.3, rho=0.7, beta=beta, u0=u0)
    for i in range(4):
        h = prof.h[i]
        num, _ = quad(lambda q: velocity(prof, params, i, q), 0, h, epsabs=0, epsrel=1e-13)
        assert level_flux(prof, params, i) == pytest.approx(num, rel=1e-10)


def test_level_flux_limits():
    flat = BookProfile(GRID, np.full(4, 2.0))
    assert level_flux(flat, PhysicalParams(), 2) == 0.0
    prof = BookProfile(GRID, [1.0, 2.0, 4.0, 8.0])
    assert level_flux(BookProfile(GRID, [0.0, 2.0, 4.0, 8.0]), PhysicalParams(), 0) == 0.0
    # the mobile layer vanishes as beta grows, leaving the slip term
    u0 = 0.2
    big = level_flux(prof, PhysicalParams(beta=1e9, u0=u0), 1)
    p_s = pressure_gradient(prof, PhysicalParams())[1]
    assert big == pytest.approx(p_s * prof.h[1] * u0, rel=1e-8)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, 6, elements=st.floats(0.01, 10)), st.floats(0.2, 4), st.floats(0, 0.5),
       st.integers(0, 5))
def test_level_flux_quadrature_property(h, beta, u0, i):
    prof = BookProfile(PriceGrid(0, 3, 6), h)
    params = PhysicalParams(beta=beta, u0=u0)
    num, _ = quad(lambda q: velocity(prof, params, i, q), 0, h[i], epsabs=0, epsrel=1e-13)
    assert level_flux(prof, params, i) == pytest.approx(num, rel=1e-10, abs=1e-300)


@settings(max_examples=50)
@given(st.floats(0.01, 100), st.floats(0.1, 5))
def test_level_flux_homogeneous_in_gradient(scale, beta):
    base = np.array([1.0, 2.0, 4.0, 8.0])
    params = PhysicalParams(beta=beta)
    # scaling the depth increments scales p_S while keeping h at cell 1 fixed
    scaled = base[1] + scale * (base - base[1])
    if np.any(scaled < 0):
        return
    f0 = level_flux(BookProfile(GRID, base), params, 1)
    f1 = level_flux(BookProfile(GRID, scaled), params, 1)
    assert f1 == pytest.approx(scale * f0, rel=1e-12)


@settings(max_examples=50)
@given(st.floats(0.1, 5), st.floats(0, 1), st.floats(-1.5, 1.5))
def test_velocity_monotone_in_queue_position(beta, u0, slope):
    prof = BookProfile(GRID, 5.0 + slope * np.arange(4.0))
    params = PhysicalParams(beta=beta, u0=u0)
    qs = np.linspace(0, prof.h[1], 20)
    v = np.array([velocity(prof, params, 1, q) for q in qs])
    d = np.diff(v)
    if slope > 0:
        assert np.all(d >= -1e-15)
    elif slope < 0:
        assert np.all(d <= 1e-15)


def test_time_rescale_factor():
    assert time_rescale_factor(PhysicalParams(theta=1, rho=1, beta=1e-12)) == pytest.approx(0.5)
    assert time_rescale_factor(PhysicalParams(theta=2)) == 2 * time_rescale_factor(PhysicalParams())
    assert flux_coefficient(PhysicalParams(u0=0.0)) == time_rescale_factor(PhysicalParams())
    for beta in (0.1, 1, 10):
        assert time_rescale_factor(PhysicalParams(beta=beta, rho=3, theta=0.2)) > 0


def test_edge_flux_is_scaled_canonical_flux():
    h = np.array([0.0, 1.0, 3.0, 2.0, 0.5])
    params = PhysicalParams(theta=2.0, rho=0.5, beta=1.5)
    canon = (h[1:] ** 2 - h[:-1] ** 2) / 0.1
    np.testing.assert_allclose(edge_flux(h, 0.1, params), flux_coefficient(params) * canon, rtol=1e-14)


@pytest.mark.parametrize("theta", [1.0, 2.0])
@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_two_run_equivalence(theta, beta):
    grid = PriceGrid(0, 10, 100)
    initial = parabolic_cap(1.0, 1.0, 5.0, grid)
    params = PhysicalParams(theta=theta, beta=beta)
    factor = time_rescale_factor(params)
    canon = run(initial, params, zero_flux_pair(), SolverConfig(t_end=1.5, output_times=(1.5,)))
    t_micro = 1.0 + 0.5 / factor
    micro = run(initial, params, zero_flux_pair(),
                SolverConfig(t_end=t_micro, output_times=(t_micro,), flux_model=FluxModel.MICROSTRUCTURE))
    assert np.max(np.abs(canon.snapshots[-1].h - micro.snapshots[-1].h)) < 1e-8
