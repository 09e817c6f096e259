import numpy as np
import pytest
from hypothesis import given, strategies as st

from hjlab import hamiltonian as hm
from hjlab.adjoint import duality_check, nam_diagnostic, solve_adjoint, ut_representation
from hjlab.errors import MissingStates
from hjlab.grid import PeriodicGrid
from hjlab.measures import representation_residual
from hjlab.solver import solve_inviscid_lf, solve_viscous


@pytest.fixture(scope="module")
def run1d():
    G = PeriodicGrid(1, 64)
    g = G.sample(lambda x: 0.1 * np.sin(2 * np.pi * x[..., 0]))
    return solve_viscous(hm.quartic_double_well(), g, 0.02, 0.2)


def test_mass_nonnegativity_and_identity(run1d):
    a = solve_adjoint(run1d, [0.3])
    assert a.mass_defect <= 1e-12
    assert a.min_under_peclet() >= -1e-12
    assert a.peclet_suffix_start == 0
    assert representation_residual(run1d, a, run1d.g) <= 1e-10
    assert duality_check(run1d, a, np.cos(2 * np.pi * run1d.grid.axis())) <= 1e-12


def test_retained_and_streaming_agree(run1d):
    a = solve_adjoint(run1d, [0.3], retain="all")
    b = solve_adjoint(run1d, [0.3], retain="none")
    assert a.retained and not b.retained
    assert np.array_equal(a.sigma_0, b.sigma_0)
    assert nam_diagnostic(run1d, a) == pytest.approx(nam_diagnostic(run1d, b), rel=1e-13)
    with pytest.raises(MissingStates):
        b.state(3)
    k = 5
    assert np.array_equal(a.state(k), [s for kk, _, _, s in a.pairs() if kk == k - 1][0])


def test_terminal_level_k_end(run1d):
    K = run1d.K // 2
    a = solve_adjoint(run1d, [0.6], k_end=K)
    assert a.K == K and a.T == run1d.times[K]
    assert representation_residual(run1d, a, run1d.g) <= 1e-10
    with pytest.raises(IndexError):
        solve_adjoint(run1d, [0.6], k_end=run1d.K + 1)


@given(st.lists(st.floats(0.0, 1.0), min_size=16, max_size=16), st.floats(0.05, 0.5))
def test_mass_conserved_for_any_terminal_density(w, eps):
    G = PeriodicGrid(1, 16)
    g = G.sample(lambda x: 0.1 * np.sin(2 * np.pi * x[..., 0]))
    r = solve_viscous(hm.product_ck(), g, eps, 0.005)
    nu = np.asarray(w) + 1e-3
    nu /= np.sum(nu) * G.dx
    a = solve_adjoint(r, nu=nu)
    assert a.mass_defect <= 1e-12
    assert a.min_under_peclet() >= -1e-12


def test_identity_in_two_dimensions():
    G = PeriodicGrid(2, 16)
    g = G.sample(lambda x: 0.1 * np.sin(2 * np.pi * x[..., 0]) * np.cos(2 * np.pi * x[..., 1]))
    r = solve_viscous(hm.quartic_minus_quadratic(), g, 0.1, 0.05)
    a = solve_adjoint(r, [0.3, 0.6])
    assert representation_residual(r, a, g) <= 1e-10
    assert a.mass_defect <= 1e-12
    u = solve_adjoint(r, nu="uniform")
    # the transpose conserves mass, not constants
    assert u.mass_defect <= 1e-12 and not np.allclose(u.sigma_0, 1.0)


def test_negativity_is_reported_when_peclet_fails():
    G = PeriodicGrid(1, 32)
    g = G.sample(lambda x: np.sin(2 * np.pi * x[..., 0]))
    r = solve_viscous(hm.quartic_double_well(), g, 0.002, 1e-5, peclet="record")
    assert not r.peclet_held
    a = solve_adjoint(r, [0.5], warn=False)
    assert a.peclet_suffix_start > 0
    assert a.mass_defect <= 1e-12


def test_adjoint_requires_viscous_run():
    G = PeriodicGrid(1, 32)
    r = solve_inviscid_lf(hm.quadratic_convex(), G.constant(0.0), 0.01)
    with pytest.raises(ValueError):
        solve_adjoint(r, [0.1])


@pytest.mark.parametrize("model, n, N", [(hm.quartic_double_well(), 1, 64), (hm.separable_kv(), 1, 64),
                                         (hm.product_ck(), 1, 64), (hm.quartic_minus_quadratic(), 2, 16)])
def test_time_derivative_representation_is_exact(model, n, N):
    G = PeriodicGrid(n, N)
    g = G.sample(lambda x: 0.1 * np.prod(np.sin(2 * np.pi * x), axis=-1))
    r = solve_viscous(model, g, 0.05, 0.2, stops=[0.1])
    zs = [[0.3] * n, [0.85] * n]
    out = ut_representation(r, zs, [r.step_index(0.1), r.K])
    assert len(out) == 4
    for o in out:
        assert abs(o["direct"] - o["represented"]) <= 1e-12
        assert o["mass_defect"] <= 1e-12 and o["min_sigma"] >= -1e-12
    # the tangent linearization is only first-order accurate in dt
    tan = solve_adjoint(r, zs[0], k_end=r.K - 1)
    v0 = (r.state(1) - r.state(0)) / r.dts[0]
    tangent = float(np.sum(v0 * tan.sigma_0) * G.cell_volume)
    assert abs(tangent - out[2]["direct"]) > 1e-12
