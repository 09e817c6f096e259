import dataclasses

import numpy as np
import pytest

from hjlab import hamiltonian as hm
from hjlab.grid import PeriodicGrid
from hjlab.kernels import BACKENDS, Stepper, available_backends, grad_nd, hess_nd, lap_nd

CASES = [(hm.quartic_double_well(1), 1), (hm.shifted_abs(), 1), (hm.separable_kv(1), 1), (hm.product_ck(1), 1),
         (hm.quartic_double_well(2), 2), (hm.quartic_minus_quadratic(2), 2), (hm.separable_kv(2, m=4, beta=0.3), 2)]


def _fields(dim, rng):
    G = PeriodicGrid(dim, 24 if dim == 1 else 12)
    u = 0.3 * rng.standard_normal(G.shape)
    w = rng.standard_normal(G.shape)
    s = rng.random(G.shape)
    return G, u, w, s


def _generic(model):
    return dataclasses.replace(model, kernel=None)


@pytest.mark.parametrize("model,dim", CASES, ids=lambda c: getattr(c, "name", str(c)))
def test_backends_agree(model, dim, rng):
    G, u, w, s = _fields(dim, rng)
    steppers = [Stepper(model, G, b) for b in available_backends()] + [Stepper(_generic(model), G)]
    ref = steppers[-1]
    assert ref.backend == "numpy-generic"
    for st in steppers[:-1]:
        assert np.allclose(st.speeds(u), ref.speeds(u), rtol=1e-13)
        assert np.allclose(st.viscous(u, 1e-4, 0.05), ref.viscous(u, 1e-4, 0.05), rtol=0, atol=1e-14)
        assert np.allclose(st.adjoint(u, s, 1e-4, 0.05), ref.adjoint(u, s, 1e-4, 0.05), rtol=0, atol=1e-13)
        assert np.allclose(st.tangent(u, w, 1e-4, 0.05), ref.tangent(u, w, 1e-4, 0.05), rtol=0, atol=1e-13)
        assert np.allclose(st.lf(u, 1e-4, 3.0), ref.lf(u, 1e-4, 3.0), rtol=0, atol=1e-14)
        S = np.stack([s, w])
        assert np.allclose(st.secant_adjoint(u, u + 0.1 * w, S, 1e-4, 0.05),
                           ref.secant_adjoint(u, u + 0.1 * w, S, 1e-4, 0.05), rtol=0, atol=1e-13)


@pytest.mark.parametrize("model,dim", CASES, ids=lambda c: getattr(c, "name", str(c)))
def test_adjoint_is_exact_transpose(model, dim, backend, rng):
    G, u, w, s = _fields(dim, rng)
    st = Stepper(model, G, backend)
    lhs = np.sum(st.tangent(u, w, 2e-4, 0.03) * s)
    rhs = np.sum(w * st.adjoint(u, s, 2e-4, 0.03))
    assert abs(lhs - rhs) <= 1e-13 * (1 + abs(lhs))


@pytest.mark.parametrize("model,dim", CASES, ids=lambda c: getattr(c, "name", str(c)))
def test_linearized_step_preserves_constants_and_mass(model, dim, backend, rng):
    G, u, w, s = _fields(dim, rng)
    st = Stepper(model, G, backend)
    one = np.ones(G.shape)
    assert np.allclose(st.tangent(u, one, 1e-4, 0.05), 1.0, atol=1e-14)
    assert np.sum(st.adjoint(u, s, 1e-4, 0.05)) == pytest.approx(np.sum(s), rel=1e-14)


@pytest.mark.parametrize("model,dim", [c for c in CASES if c[0].name != "shifted_abs"],
                         ids=lambda c: getattr(c, "name", str(c)))
def test_secant_adjoint_transposes_step_differences(model, dim, backend, rng):
    G, u, w, s = _fields(dim, rng)
    st = Stepper(model, G, backend)
    u1 = u + 0.2 * w
    lhs = np.sum((st.viscous(u1, 2e-4, 0.03) - st.viscous(u, 2e-4, 0.03)) * s)
    rhs = np.sum((u1 - u) * st.secant_adjoint(u, u1, s[None], 2e-4, 0.03)[0])
    assert abs(lhs - rhs) <= 1e-12 * (1 + abs(lhs))
    assert np.allclose(st.secant_adjoint(u, u, s[None], 2e-4, 0.03)[0], st.adjoint(u, s, 2e-4, 0.03), atol=1e-13)


def test_viscous_step_is_linearization_consistent(rng):
    G, u, w, s = _fields(1, rng)
    st = Stepper(hm.quartic_double_well(), G)
    h = 1e-7
    fd = (st.viscous(u + h * w, 1e-4, 0.05) - st.viscous(u - h * w, 1e-4, 0.05)) / (2 * h)
    assert np.allclose(fd, st.tangent(u, w, 1e-4, 0.05), atol=1e-6)


def test_batch_helpers_match_grid_operators(rng):
    U = rng.standard_normal((3, 8, 8))
    dx = 1 / 8
    Gd = grad_nd(U, dx, 2)
    assert Gd.shape == (3, 8, 8, 2)
    assert np.allclose(np.trace(hess_nd(U, dx, 2), axis1=-2, axis2=-1), lap_nd(U, dx, 2))


def test_lf_speed_covers_box():
    G = PeriodicGrid(1, 32)
    st = Stepper(hm.quartic_double_well(), G)
    u = np.sin(2 * np.pi * G.axis())
    dp = (np.roll(u, -1) - u) / G.dx
    P = np.linspace(dp.min(), dp.max(), 1001)
    assert st.lf_speed(u) >= np.max(np.abs(4 * P ** 3 - 2 * P)) * (1 - 1e-3)


def test_unknown_backend_and_dimension_mismatch():
    with pytest.raises(ValueError):
        Stepper(hm.quartic_double_well(), PeriodicGrid(1, 16), "fortran")
    with pytest.raises(ValueError):
        Stepper(hm.quartic_double_well(2), PeriodicGrid(1, 16))
    assert "numpy" in BACKENDS
