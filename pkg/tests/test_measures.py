import json

import numpy as np
import pytest

from hjlab import hamiltonian as hm
from hjlab import measures as ms
from hjlab.adjoint import solve_adjoint
from hjlab.grid import PeriodicGrid
from hjlab.solver import solve_viscous


@pytest.fixture(scope="module")
def pair():
    G = PeriodicGrid(1, 64)
    g = G.sample(lambda x: 0.2 * np.sin(2 * np.pi * x[..., 0]))
    m = hm.quadratic_convex()
    r = solve_viscous(m, g, 0.05, 0.3)
    return m, r, solve_adjoint(r, [0.4], retain="all")


def test_slices_are_probability_measures(pair):
    m, r, a = pair
    for k in (0, r.K // 2, r.K):
        assert ms.build_slice_nu(r, a, k).total_mass == pytest.approx(1.0, abs=1e-12)
    mu = ms.build_mu(r, a)
    assert len(mu) == r.K * r.grid.N
    mt = ms.time_average(mu, a.T)
    assert mt.total_mass == pytest.approx(1.0, abs=1e-12)


def test_merged_time_average_keeps_moments(pair):
    m, r, a = pair
    mu = ms.build_mu(r, a)
    full = ms.time_average(mu, a.T)
    merged = ms.time_average(mu, a.T, merge_tol=1e-3)
    assert len(merged) < len(full)
    assert merged.total_mass == pytest.approx(1.0, abs=1e-12)
    f = lambda x, p: p[:, 0] * np.sin(2 * np.pi * x[:, 0])
    assert merged.integrate(f) == pytest.approx(full.integrate(f), abs=1e-5)


def test_streaming_integral_matches_atoms(pair):
    m, r, a = pair
    fn = lambda x, p: (m.eval_H(x, p) + 1.0) * np.cos(2 * np.pi * x[..., 0])
    mt = ms.time_average(ms.build_mu(r, a), a.T)
    assert ms.time_averaged_integral(r, a, fn) == pytest.approx(mt.integrate(fn), rel=1e-12)


def test_stride_rescales_time_weights(pair):
    m, r, a = pair
    mt = ms.time_average(ms.build_mu(r, a, k_stride=4), a.T)
    assert mt.total_mass == pytest.approx(1.0, abs=1e-12)


def test_trivial_stationary_measure_has_zero_residuals():
    G = PeriodicGrid(1, 32)
    m = hm.quadratic_convex()
    r = solve_viscous(m, G.constant(0.0), 0.05, 0.5)
    a = solve_adjoint(r, [0.25])
    mt = ms.time_average(ms.build_mu(r, a), a.T)
    res = ms.mather_residuals(mt, m, 0.0)
    assert max(res.values()) <= 1e-14
    assert ms.energy_level_residual(mt, m, 0.0) == 0.0
    assert ms.support_radius(mt, 0.1) == 0.0
    d = ms.dissipative_estimate(r, a, m)
    assert d.is_sym_psd() and np.all(d.m_hat == 0)


def test_holonomy_for_convex_model(pair):
    m, r, a = pair
    gam = ms.pushforward_gamma(ms.build_mu(r, a), m)
    assert np.allclose(gam.p, ms.build_mu(r, a).p)       # D_pH(p) = p for |p|^2 / 2
    res = ms.holonomy_residual(gam, a.field(0), [0.4], a.T)
    assert res["1"] <= 1e-12
    assert res["t"] <= 1e-12
    with pytest.raises(ValueError):
        ms.pushforward_gamma(ms.build_mu(r, a), hm.quartic_double_well())


def test_holonomy_defect_is_the_viscous_term():
    G = PeriodicGrid(1, 256)
    g = G.sample(lambda x: 0.2 * np.sin(2 * np.pi * x[..., 0]))
    m = hm.quadratic_convex()
    r = solve_viscous(m, g, 0.05, 0.3)
    a = solve_adjoint(r, [0.4])
    gam = ms.pushforward_gamma(ms.build_mu(r, a), m)
    X0 = G.coords().reshape(-1, 1)
    s0 = a.sigma_0.reshape(-1) * G.dx
    for f in ms.default_test_functions(1)[2:]:
        lhs = np.sum(gam.dt * gam.w * (f.d_t(gam.x, gam.t) + np.sum(gam.p * f.grad(gam.x, gam.t), axis=-1)))
        rhs = f.value(np.array([[0.4]]), np.array([a.T]))[0] - np.sum(f.value(X0, np.zeros(G.N)) * s0)
        visc = r.epsilon * np.sum(gam.dt * gam.w * (-4 * np.pi ** 2) * f.value(gam.x, gam.t))
        assert ms.holonomy_residual(gam, a.field(0), [0.4], a.T, [f])[f.name] == pytest.approx(abs(lhs - rhs))
        assert abs(lhs - rhs - visc) <= 0.01


def test_dissipative_estimate_shape_and_brackets():
    G = PeriodicGrid(1, 64)
    g = G.sample(lambda x: 0.2 * np.sin(2 * np.pi * x[..., 0]))
    m = hm.quartic_double_well()
    r = solve_viscous(m, g, 0.05, 0.2)
    a = solve_adjoint(r, [0.3])
    d = ms.dissipative_estimate(r, a, m)
    assert d.m_hat.shape == (1, 1) and d.is_sym_psd()
    # x-independent H: every bracket with an x-independent observable vanishes pointwise
    assert d.bracket_integrals["half_square_norm"] == 0.0
    assert d.bracket_integrals["p0"] == 0.0


def test_representation_terms_add_up(pair):
    m, r, a = pair
    lhs, g0, run = ms.representation_terms(r, a, r.g)
    assert lhs == pytest.approx(r.final[r.grid.nearest_index([0.4])])
    assert abs(lhs - g0 - run) <= 1e-12


def test_export(tmp_path, pair):
    m, r, a = pair
    nu = ms.build_slice_nu(r, a, 3)
    nu.to_csv(tmp_path / "nu.csv")
    assert len((tmp_path / "nu.csv").read_text().splitlines()) == r.grid.N + 1
    nu.to_histogram_json(tmp_path / "h.json", bins=8)
    h = json.loads((tmp_path / "h.json").read_text())
    assert np.sum(h["weights"]) == pytest.approx(1.0)


def test_curve_objective_straight_line():
    G = PeriodicGrid(1, 200)
    g = G.sample(lambda x: np.cos(2 * np.pi * x[..., 0]))
    T, v = 0.5, 0.4
    path = 0.1 + v * np.linspace(0, T, 51)
    val = ms.curve_objective(g, lambda w: 0.5 * np.sum(w * w, axis=-1), path, T)
    assert val == pytest.approx(np.cos(2 * np.pi * 0.1) + T * v * v / 2, abs=1e-12)
