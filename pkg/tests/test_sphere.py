"""Sphere geometry: tangent projection, retraction, basins, hemisphere chart."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

import msbd
from msbd.errors import DegenerateStep, DomainError, ParameterError
from msbd.sphere import SphereVector, region_membership, reparam, w_of_h


def unit(n, i, sign=1.0):
    e = np.zeros(n)
    e[i] = sign
    return e


def random_unit(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=n)
    return v / np.linalg.norm(v)


def test_riemannian_gradient_kills_radial_component():
    h = random_unit(7, 0)
    out = msbd.riemannian_gradient(h, 3.5 * h)
    assert_allclose(out, np.zeros(7), atol=1e-13)


def test_riemannian_gradient_keeps_tangent_component():
    n = 7
    h = random_unit(n, 1)
    rng = np.random.default_rng(2)
    g = rng.normal(size=n)
    t = g - (h @ g) * h
    assert_allclose(msbd.riemannian_gradient(h, t), t, rtol=1e-12, atol=1e-13)


def test_riemannian_gradient_matches_dense_projector():
    n = 10
    h = random_unit(n, 3)
    rng = np.random.default_rng(4)
    g = rng.normal(size=n)
    P = np.eye(n) - np.outer(h, h)
    assert_allclose(msbd.riemannian_gradient(h, g), P @ g, rtol=1e-12, atol=1e-14)


def test_riemannian_gradient_is_idempotent():
    n = 9
    h = random_unit(n, 5)
    rng = np.random.default_rng(6)
    g = rng.normal(size=n)
    once = msbd.riemannian_gradient(h, g)
    twice = msbd.riemannian_gradient(h, once)
    assert_allclose(twice, once, rtol=1e-13, atol=1e-13)


def test_retract_zero_tangent_is_identity():
    h = random_unit(6, 7)
    out = msbd.retract_step(h, np.zeros(6), 0.5)
    assert_allclose(out.h, h, rtol=1e-14)


def test_retract_returns_unit_norm():
    n = 8
    h = random_unit(n, 8)
    rng = np.random.default_rng(9)
    for _ in range(5):
        t = msbd.riemannian_gradient(h, rng.normal(size=n))
        out = msbd.retract_step(h, t, 0.3)
        assert abs(np.linalg.norm(out.h) - 1.0) <= 1e-12


def test_retract_closed_form_two_coordinates():
    # from e1, tangent e2, step 1: (e1 - e2)/sqrt(2)
    h = unit(4, 0)
    t = unit(4, 1)
    out = msbd.retract_step(h, t, 1.0)
    expected = (unit(4, 0) - unit(4, 1)) / np.sqrt(2.0)
    assert_allclose(out.h, expected, rtol=1e-15)


def test_retract_collapse_raises():
    h = unit(4, 0)
    with pytest.raises(DegenerateStep):
        msbd.retract_step(h, h, 1.0)  # h - 1*h = 0
    with pytest.raises(ParameterError):
        msbd.retract_step(h, unit(4, 1), 0.0)


def test_random_sphere_point_unit_and_deterministic():
    a = msbd.random_sphere_point(16, seed=0)
    b = msbd.random_sphere_point(16, seed=0)
    c = msbd.random_sphere_point(16, seed=1)
    assert abs(np.linalg.norm(a.h) - 1.0) <= 1e-12
    assert_allclose(a.h, b.h, rtol=0, atol=0)
    assert not np.allclose(a.h, c.h)


def test_random_sphere_point_moments_match_uniform_law():
    # E[h_i^2] = 1/n, Var(h_i^2) = (2n-2)/(n^2 (n+2)), E[h_a h_b] = 0 with
    # Var(h_a h_b) = 1/(n (n+2)); check 5-sigma bands over many draws
    n, m = 8, 100000
    pts = np.stack([msbd.random_sphere_point(n, seed=s).h for s in range(m)])
    mean_sq = pts[:, 0] ** 2
    var_sq = (2.0 * n - 2.0) / (n**2 * (n + 2.0))
    tol_sq = 5.0 * np.sqrt(var_sq / m)
    assert abs(mean_sq.mean() - 1.0 / n) <= tol_sq
    cross = pts[:, 1] * pts[:, 2]
    var_cross = 1.0 / (n * (n + 2.0))
    tol_cross = 5.0 * np.sqrt(var_cross / m)
    assert abs(cross.mean()) <= tol_cross


def test_region_membership_axis_points():
    for i in (0, 3):
        lab = region_membership(unit(5, i), 0.7)
        assert lab is not None and lab.index == i and lab.sign == 1
    lab = region_membership(unit(5, 2, sign=-1.0), 2.0)
    assert lab is not None and lab.index == 2 and lab.sign == -1


def test_region_membership_flat_point_fails():
    n = 9
    assert region_membership(np.full(n, 1.0 / np.sqrt(n)), 0.1) is None


def test_region_membership_tie_handling():
    h = np.zeros(6)
    h[1] = h[4] = 1.0 / np.sqrt(2.0)
    lab = region_membership(h, 0.0)
    assert lab is not None and lab.index == 1 and lab.sign == 1
    assert region_membership(h, 0.25) is None
    with pytest.raises(ParameterError):
        region_membership(h, -0.1)


def test_region_membership_bounds_tail_energy():
    # membership at margin xi forces h_i^2 >= (1+xi)/(n+xi), so the
    # off-index energy obeys ||w||^2 <= (n-1)/(n+xi)
    n, xi = 12, 0.5
    for seed in range(50):
        pt = msbd.random_sphere_point(n, seed=seed)
        lab = region_membership(pt, xi)
        if lab is None:
            continue
        w_sq = 1.0 - pt.h[lab.index] ** 2
        assert w_sq <= (n - 1.0) / (n + xi) + 1e-12


def test_random_basin_point_is_member_and_deterministic():
    pt1, lab1 = msbd.random_basin_point(16, 0.1, seed=42)
    pt2, lab2 = msbd.random_basin_point(16, 0.1, seed=42)
    assert_allclose(pt1.h, pt2.h, rtol=0, atol=0)
    assert (lab1.index, lab1.sign) == (lab2.index, lab2.sign)
    check = region_membership(pt1, 0.1)
    assert check is not None and check.index == lab1.index and check.sign == lab1.sign


def test_basin_coverage_majority_at_standard_margin():
    # at xi = 1/(4 ln n) roughly 0.8 of uniform mass lies in some basin;
    # assert comfortably above the 0.485 floor
    n = 8
    xi = 1.0 / (4.0 * np.log(n))
    hits = sum(
        region_membership(msbd.random_sphere_point(n, seed=s), xi) is not None
        for s in range(2000)
    )
    assert hits / 2000.0 >= 0.485


def test_reparam_at_origin_is_north_pole():
    h, J = reparam(np.zeros(5))
    assert_allclose(h.h, unit(6, 5), rtol=0, atol=0)
    assert_allclose(J, np.concatenate([np.eye(5), np.zeros((5, 1))], axis=1))


def test_reparam_round_trip():
    rng = np.random.default_rng(10)
    for _ in range(5):
        w = rng.normal(size=7)
        w *= 0.8 * rng.random() / np.linalg.norm(w)
        h, _ = reparam(w)
        assert abs(np.linalg.norm(h.h) - 1.0) <= 1e-14
        assert_allclose(w_of_h(h), w, rtol=1e-14, atol=1e-15)


def test_reparam_jacobian_matches_finite_differences():
    # J must satisfy d/dw [phi(h(w))] = J @ grad_h phi for smooth phi
    n = 6
    rng = np.random.default_rng(11)
    w = rng.normal(size=n - 1)
    w *= 0.5 / np.linalg.norm(w)
    a = rng.normal(size=n)

    def phi_of_w(wv):
        sq = float(wv @ wv)
        hv = np.concatenate([wv, [np.sqrt(1.0 - sq)]])
        return float(np.sin(a @ hv))

    h, J = reparam(w)
    grad_h = np.cos(a @ h.h) * a
    eps = 1e-6
    fd = np.zeros(n - 1)
    for k in range(n - 1):
        d = np.zeros(n - 1)
        d[k] = eps
        fd[k] = (phi_of_w(w + d) - phi_of_w(w - d)) / (2.0 * eps)
    assert_allclose(J @ grad_h, fd, rtol=1e-6, atol=1e-9)


def test_reparam_domain_errors():
    with pytest.raises(DomainError):
        reparam(np.array([0.8, 0.8]))  # ||w|| > 1
    with pytest.raises(DomainError):
        reparam(np.array([1.0, 0.0]))  # boundary
    with pytest.raises(DomainError):
        w_of_h(unit(4, 1))  # h_n = 0
    with pytest.raises(DomainError):
        w_of_h(np.array([0.0, 0.0, 0.0, -1.0]))  # h_n < 0


def test_sphere_vector_validation():
    with pytest.raises(DomainError):
        SphereVector(np.array([1.0, 1.0]))
    with pytest.raises(ParameterError):
        SphereVector(np.array([1.0]))
    v = SphereVector(np.array([0.6, 0.8]))
    assert v.n == 2
