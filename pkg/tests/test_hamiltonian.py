import numpy as np
import pytest
from hypothesis import given, strategies as st

from hjlab import hamiltonian as hm

MODELS = [
    hm.quartic_double_well(1), hm.quartic_double_well(2), hm.shifted_abs(), hm.separable_kv(1),
    hm.separable_kv(2, m=4, beta=0.3), hm.product_ck(1), hm.product_ck(2), hm.quadratic_convex(1),
    hm.quadratic_convex(2), hm.quartic_minus_quadratic(2),
]

coord = st.floats(0.0, 1.0, allow_nan=False)
mom = st.floats(-4.0, 4.0, allow_nan=False)


@given(st.sampled_from(MODELS), st.lists(coord, min_size=2, max_size=2), st.lists(mom, min_size=2, max_size=2))
def test_derivatives_match_differences(model, xs, ps):
    n = model.dim
    x, p = np.array(xs[:n]), np.array(ps[:n])
    h = 1e-6
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        dp = (model.eval_H(x, p + e) - model.eval_H(x, p - e)) / (2 * h)
        dx = (model.eval_H(x + e, p) - model.eval_H(x - e, p)) / (2 * h)
        scale = 1.0 + abs(float(model.eval_H(x, p))) + float(np.sum(np.abs(p))) ** 4
        assert abs(dp - model.eval_DpH(x, p)[i]) <= 1e-6 * scale
        assert abs(dx - model.eval_DxH(x, p)[i]) <= 1e-6 * scale


@given(st.sampled_from([m for m in MODELS if m.theta]), st.lists(coord, min_size=2, max_size=2),
       st.lists(mom, min_size=2, max_size=2), st.floats(0.25, 3.0))
def test_A2_and_ray_form_agree(model, xs, ps, theta):
    n = model.dim
    rep = hm.check_A2(model, np.array([xs[:n]]), np.array([ps[:n]]), theta)
    assert rep.agree


@given(st.lists(coord, min_size=1, max_size=1), st.floats(-9.0, 9.0), st.floats(0.5, 3.0))
def test_A2_and_ray_form_agree_on_failing_model(xs, p, theta):
    model = hm.shifted_abs()
    rep = hm.check_A2(model, np.array([xs]), np.array([[p]]), theta)
    assert rep.agree


@given(st.sampled_from([hm.separable_kv(1, m=2), hm.separable_kv(2, m=4), hm.separable_kv(2, m=4, beta=0.5)]),
       st.lists(mom, min_size=2, max_size=2), st.floats(0.1, 5.0))
def test_momentum_part_is_homogeneous(model, ps, s):
    n = model.dim
    p = np.array(ps[:n])
    x = np.zeros(n)         # V(0) = 0
    m = model.params["m"]
    assert model.eval_H(x, s * p) == pytest.approx(s ** m * model.eval_H(x, p), rel=1e-10, abs=1e-12)


def test_catalog_models_satisfy_A2_with_their_theta(rng):
    for model in MODELS:
        if model.theta is None:
            continue
        x = rng.random((2000, model.dim))
        p = 3.0 * rng.standard_normal((2000, model.dim))
        rep = hm.check_A2(model, x, p, model.theta)
        assert rep.passed, model.name
        assert hm.ray_monotone(model, x[0], p[0], model.theta)


def test_shifted_abs_fails_A2():
    rep = hm.check_A2(hm.shifted_abs(), np.array([[0.3]]), np.array([[1.0]]), 1.0)
    assert not rep.passed and rep.max_defect == pytest.approx(1.0)


def test_quartic_values():
    m = hm.quartic_double_well()
    assert m.H([0.2], [1.0]) == pytest.approx(0.0)
    # minimum of p^4 - p^2 is -1/4 at p^2 = 1/2
    assert m.H([0.2], [np.sqrt(0.5)]) == pytest.approx(-0.25)
    assert m.hbar0 == 0.0 and m.theta == 1.0 and not m.convex_in_p


def test_legendre_of_quadratic_is_quadratic():
    m = hm.quadratic_convex(1)
    v = np.linspace(-2, 2, 9)
    L = hm.legendre_transform(m, np.zeros((9, 1)), v[:, None])
    assert np.allclose(L, 0.5 * v ** 2, atol=2e-5)


def test_legendre_of_shifted_abs_is_indicator_like():
    # L(v) = 10 v + 10 for |v| <= 1 (sup over p > -10 of p v - p), growing outside
    m = hm.shifted_abs()
    L = hm.legendre_transform(m, [[0.5]], [[1.0]])
    assert float(L.ravel()[0]) == pytest.approx(0.0, abs=1e-9)


def test_legendre_rejects_nonconvex_and_empty_box():
    with pytest.raises(ValueError):
        hm.legendre_transform(hm.quartic_double_well(), [[0.1]], [[0.0]])
    with pytest.raises(ValueError):
        hm.legendre_transform(hm.quadratic_convex(), [[0.1]], [[0.0]], p_box=np.array([]))


def test_build_model_and_validation():
    assert hm.build_model("separable_kv", m=4).theta == 3.0
    with pytest.raises(ValueError):
        hm.build_model("nope")
    with pytest.raises(ValueError):
        hm.separable_kv(m=3)
    with pytest.raises(ValueError):
        hm.product_ck(c_amp=1.2)


def test_poisson_bracket_identities(rng):
    x = rng.random((50, 2))
    p = rng.standard_normal((50, 2))
    m = hm.quartic_double_well(2)
    # x-independent H: {H, |p|^2/2} = 0
    assert np.allclose(hm.poisson_bracket(m, hm.half_square_norm(), x, p), 0.0)
    m2 = hm.product_ck(2)
    H_obs = hm.Observable("H", m2.eval_H, m2.eval_DxH, m2.eval_DpH, None)
    assert np.allclose(hm.poisson_bracket(m2, H_obs, x, p), 0.0, atol=1e-12)


def test_A1_proxy():
    rep = hm.check_A1_proxy(hm.product_ck(1), [4.0, 8.0, 16.0, 32.0])
    assert rep.monotone and rep.warning is None
    # the x-dependent term dominates at moderate radius
    low = hm.check_A1_proxy(hm.product_ck(1), [1.0, 2.0, 4.0])
    assert not low.monotone and low.warning
    with pytest.raises(ValueError):
        hm.check_A1_proxy(hm.product_ck(1), [2.0, 1.0])
