import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from semrb.geometry import (GAP, LOWER, UPPER, GeometryConfig, GeometryError, band_of_point,
                            build_subdomains, deformed_y, scale_factors, subdomain_maps,
                            term_descriptors, theta_coefficients, transform_tensors)

CFG = GeometryConfig()
mus = st.floats(0.1, 2.9)


@pytest.mark.parametrize("mu, s_gap, s_wall", [
    (0.1, 10.0, 1 / 1.45),
    (1.0, 1.0, 1.0),
    (2.9, 1 / 2.9, 20.0),
])
def test_scale_factor_values(mu, s_gap, s_wall):
    assert scale_factors(CFG, mu) == pytest.approx((s_gap, s_wall), rel=1e-14)


def test_band_layout():
    bands = build_subdomains(CFG)
    assert [b.subdomain_id for b in bands] == [LOWER, GAP, UPPER]
    # fluid area: 8 x 3 minus two 2 x 1 blocks
    assert sum(b.area for b in bands) == pytest.approx(24.0 - 4.0)
    assert not any(b.contains(4.0, 0.5) for b in bands)
    assert bands[GAP].contains(4.0, 1.5)


@given(mus)
def test_maps_send_deformed_interfaces_to_reference(mu):
    maps = subdomain_maps(CFG, mu)
    H = CFG.channel_height
    lo, hi = (H - mu) / 2, (H + mu) / 2
    ref = CFG.band_edges()
    for m, (ya, yb), (ra, rb) in zip(maps, [(0, lo), (lo, hi), (hi, H)],
                                       [(ref[0], ref[1]), (ref[1], ref[2]), (ref[2], ref[3])]):
        out = m.to_reference([[2.0, ya], [2.0, yb]])
        np.testing.assert_allclose(out[:, 1], [ra, rb], atol=1e-12)
        np.testing.assert_allclose(out[:, 0], 2.0)
        np.testing.assert_allclose(m.to_deformed(out), [[2.0, ya], [2.0, yb]], atol=1e-12)


@given(mus, st.floats(0.0, 3.0))
def test_deformed_y_inverts_band_maps(mu, y):
    yd = float(deformed_y(CFG, y, mu))
    band = band_of_point(CFG, y)
    back = subdomain_maps(CFG, mu)[band].to_reference([[0.0, yd]])[0, 1]
    assert back == pytest.approx(y, abs=1e-12)


@given(mus)
def test_deformed_y_is_monotone_with_fixed_walls(mu):
    y = np.linspace(0, 3, 301)
    yd = deformed_y(CFG, y, mu)
    assert yd[0] == 0.0 and yd[-1] == pytest.approx(3.0)
    assert np.all(np.diff(yd) > 0)
    assert float(deformed_y(CFG, 2.0, mu)) - float(deformed_y(CFG, 1.0, mu)) == pytest.approx(mu)


def test_transform_tensors_diagonal_oracle():
    s = 2.5
    nu_t, chi, pi = transform_tensors(np.diag([1.0, s]))
    np.testing.assert_allclose(nu_t, np.diag([1 / s, s]))
    np.testing.assert_allclose(chi, np.diag([1 / s, 1.0]))
    np.testing.assert_array_equal(chi, pi)


def test_transform_tensors_rotation_is_invariant():
    c, s = np.cos(0.3), np.sin(0.3)
    nu_t, chi, _ = transform_tensors(np.array([[c, -s], [s, c]]), nu=0.7)
    np.testing.assert_allclose(nu_t, 0.7 * np.eye(2), atol=1e-15)


@given(st.lists(st.floats(-2, 2), min_size=4, max_size=4))
def test_transform_tensors_spd(entries):
    T = np.array(entries).reshape(2, 2)
    det = T[0, 0] * T[1, 1] - T[0, 1] * T[1, 0]
    if det <= 0:
        with pytest.raises(GeometryError):
            transform_tensors(T)
        return
    assume(det > 1e-3)
    nu_t, chi, _ = transform_tensors(T)
    np.testing.assert_allclose(nu_t, nu_t.T, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(nu_t) > 0)
    np.testing.assert_allclose(chi * det, T, atol=1e-12)


def test_thetas_at_reference_gap_are_one():
    th = theta_coefficients(CFG, CFG.reference_gap)
    assert len(th) == 18 == len(term_descriptors(CFG))
    np.testing.assert_allclose(th.thetas, 1.0)


def test_theta_values():
    th = dict(zip(map(str, term_descriptors(CFG)), theta_coefficients(CFG, 0.5).thetas))
    s_gap, s_wall = 2.0, 1 / 1.25
    assert th["gap:diffusion-xx"] == pytest.approx(1 / s_gap)
    assert th["gap:diffusion-yy"] == pytest.approx(s_gap)
    assert th["lower:divergence-x"] == pytest.approx(1 / s_wall)
    assert th["upper:divergence-y"] == 1.0
    assert th["upper:advection-x"] == pytest.approx(1 / s_wall)


@pytest.mark.parametrize("kwargs", [
    dict(channel_length=-1.0),
    dict(narrowing_x_span=(5.0, 3.0)),
    dict(narrowing_x_span=(3.0, 9.0)),
    dict(mu_range=(0.0, 2.9)),
    dict(mu_range=(0.1, 3.0)),
    dict(gap_center_y=1.0),
    dict(reference_gap=3.0),
])
def test_invalid_config(kwargs):
    with pytest.raises(GeometryError):
        GeometryConfig(**kwargs)


def test_narrowing_overlapping_inflow_strip():
    cfg = GeometryConfig(narrowing_x_span=(0.25, 2.0))
    with pytest.raises(GeometryError, match="inflow strip"):
        build_subdomains(cfg)


@pytest.mark.parametrize("mu", [0.05, 3.0, float("nan")])
def test_mu_out_of_range(mu):
    with pytest.raises(GeometryError):
        scale_factors(CFG, mu)
