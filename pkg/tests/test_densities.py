import numpy as np
import pytest

from conftest import unit_spec
from latticeh2.densities import (Output, density_dapi, density_static, is_stable, per_site_variance,
                                 phi)
from latticeh2.errors import InvalidVariant, SingularPhi, UnstableBlock, ZeroAveraging
from latticeh2.lattice import (FeedbackArray, Kind, LatticeShape, absolute_kernel, nearest_neighbor_kernel,
                               window_kernel)
from latticeh2.spectral import dft_grid

# hand substitution at theta = pi: f = -4, g = -1, a = -4, c0 = 1
PHI_PI = -5.0 / 24.0
P_W_PI = 3.0 / 29.0
P_ETA_PI = 0.01 * 5.0 / (32.0 * 29.0)


def test_phi_at_pi():
    spec = unit_spec(L=8, controller="dapi_noiseless")
    assert phi(np.pi, spec) == pytest.approx(PHI_PI, rel=1e-14)


def test_phi_zero_averaging():
    zero_a = FeedbackArray(offsets=((0,),), gains=(0.0,), kind=Kind.RELATIVE, q=0)
    spec = unit_spec(L=8, controller="dapi_noiseless", a=zero_a)
    th = np.array([0.3, 1.1, np.pi])
    f = -2 * (1 - np.cos(th))
    assert np.allclose(phi(th, spec), -1.0 / (-f), rtol=1e-13)


def test_phi_singular():
    # a^2 + g a - f = 0 when a = 0 and f = 0; build f with a zero at pi
    f = window_kernel(1, 2, 1.0)
    spec = unit_spec(L=8, controller="dapi_noiseless").replace(
        f=f, a=FeedbackArray(offsets=((0,),), gains=(0.0,), kind=Kind.RELATIVE, q=0))
    with pytest.raises(SingularPhi):
        phi(0.0, spec)


def test_phi_grows_near_zero():
    spec = unit_spec(L=8, controller="dapi_noiseless")
    th = np.array([1e-2, 1e-3])
    ratio = phi(th, spec) * th**2
    assert ratio[1] == pytest.approx(ratio[0], rel=1e-3)


def test_density_static_values():
    f, g = nearest_neighbor_kernel(1), absolute_kernel(1, 1.0)
    assert density_static(np.pi / 2, f, g) == pytest.approx(0.25)
    assert density_static(np.pi / 2, f, g, Output.LOCAL) == pytest.approx(0.5)
    th = dft_grid(LatticeShape(1, 64)).points[:, 0]
    assert np.allclose(density_static(th, f, g, "local"), 0.5, rtol=1e-12)


def test_density_dapi_values():
    spec = unit_spec(L=8, controller="dapi_noisy", epsilon=0.1)
    p_w, p_eta = density_dapi(np.pi, spec)
    assert p_w == pytest.approx(P_W_PI, rel=1e-13)
    assert p_eta == pytest.approx(P_ETA_PI, rel=1e-12)


def test_density_dapi_noiseless_zero_eta():
    spec = unit_spec(L=16, controller="dapi_noiseless")
    _, p_eta = density_dapi(dft_grid(spec.shape).points[:, 0], spec)
    assert np.all(p_eta == 0.0)


def test_zero_averaging_with_noise():
    zero_a = FeedbackArray(offsets=((0,),), gains=(0.0,), kind=Kind.RELATIVE, q=0)
    spec = unit_spec(L=8, controller="dapi_noisy", epsilon=0.1, a=zero_a)
    with pytest.raises(ZeroAveraging):
        density_dapi(np.pi, spec)


def test_static_limit_large_averaging():
    base = unit_spec(L=32, controller="dapi_noisy", epsilon=0.1)
    spec = base.replace(a=base.a.scaled(1e6))
    th = dft_grid(spec.shape).points[:, 0]
    p_w, p_eta = density_dapi(th, spec)
    ref = density_static(th, spec.f, spec.g)
    assert np.allclose(p_w + p_eta, ref, rtol=1e-3)


def test_noiseless_local_below_static():
    spec = unit_spec(L=64, controller="dapi_noiseless")
    th = dft_grid(spec.shape).points[:, 0]
    p_w, _ = density_dapi(th, spec, "local")
    assert np.all(p_w < density_static(th, spec.f, spec.g, "local"))


def test_variance_n4():
    assert per_site_variance(unit_spec(L=4)).V_N == pytest.approx(0.15625, rel=1e-15)


@pytest.mark.parametrize("N", [4, 8, 16, 128, 1024])
def test_variance_ladder(N):
    spec = unit_spec(L=N)
    assert per_site_variance(spec).V_N == pytest.approx((N**2 - 1) / (24 * N), rel=1e-10)
    assert per_site_variance(spec, "local").V_N == pytest.approx((N - 1) / (2 * N), rel=1e-10)


def test_report_decomposition():
    r = per_site_variance(unit_spec(L=16, controller="dapi_noisy", epsilon=0.2), per_theta=True)
    assert r.V_N == r.V_w + r.V_eta and r.V_eta > 0
    header, rows = r.csv_rows()
    assert header == ["theta_1", "p_w", "p_eta"] and len(rows) == 15
    assert r.to_dict()["N"] == 16
    with pytest.raises(ValueError):
        per_site_variance(unit_spec(L=4)).csv_rows()


def test_static_has_no_noise_term():
    assert per_site_variance(unit_spec(L=8)).V_eta == 0.0


def test_centralized_matches_static():
    s = per_site_variance(unit_spec(d=2, L=6))
    c = per_site_variance(unit_spec(d=2, L=6, controller="centralized", epsilon=0.3))
    assert c.V_N == s.V_N


def test_grid_reversal_invariance():
    spec = unit_spec(L=17, controller="dapi_noisy", epsilon=0.3)
    th = dft_grid(spec.shape).points[:, 0]
    a = density_dapi(th, spec)
    b = density_dapi(-th, spec)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_spec_validation():
    with pytest.raises(InvalidVariant):
        unit_spec(controller="dapi_noiseless", epsilon=0.1)
    with pytest.raises(InvalidVariant):
        unit_spec().replace(g=nearest_neighbor_kernel(1))
    with pytest.raises(InvalidVariant):
        unit_spec().replace(controller="dapi_noisy")
    with pytest.raises(InvalidVariant):
        unit_spec(d=2).replace(f=nearest_neighbor_kernel(1))


def test_is_stable_cases():
    ok, worst, _ = is_stable(unit_spec(L=16))
    assert ok and worst < 0
    assert is_stable(unit_spec(d=2, L=8, controller="dapi_noisy", epsilon=0.1))[0]
    ok, worst, theta = is_stable(unit_spec(L=16, controller="dapi_noisy", c0=-1.0, epsilon=0.1))
    assert not ok and worst > 0 and len(theta) == 1
    assert not is_stable(unit_spec(L=8, controller="centralized", c0=-1.0))[0]


def test_is_stable_large_lattice():
    # slowest modes have real parts near 1e-12; the coefficient test still decides them
    ok, worst, _ = is_stable(unit_spec(L=4096, controller="dapi_noisy", epsilon=0.05))
    assert ok and -1e-9 < worst < 0


def test_unstable_raises():
    with pytest.raises(UnstableBlock) as err:
        per_site_variance(unit_spec(L=8, controller="dapi_noisy", c0=-1.0, epsilon=0.1))
    assert err.value.theta is not None
