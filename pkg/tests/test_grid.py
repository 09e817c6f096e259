import numpy as np
import pytest

from hjlab.grid import (Field, PeriodicGrid, central_gradient, delta_field, hessian, laplacian, quadrature,
                        smeared_delta, write_field_csv)


def test_rejects_tiny_grids():
    with pytest.raises(ValueError):
        PeriodicGrid(1, 4)
    with pytest.raises(ValueError):
        PeriodicGrid(3, 16)


@pytest.mark.parametrize("N,k", [(16, 1), (64, 3), (128, 7)])
def test_gradient_symbol(N, k):
    # D_h e^{2 pi i k x} = i sin(2 pi k dx)/dx e^{2 pi i k x}
    G = PeriodicGrid(1, N)
    f = G.sample(lambda x: np.sin(2 * np.pi * k * x[..., 0]))
    (d,) = central_gradient(f)
    sym = np.sin(2 * np.pi * k * G.dx) / G.dx
    assert np.allclose(d.values, sym * np.cos(2 * np.pi * k * G.axis()), atol=1e-11)


@pytest.mark.parametrize("N,k", [(16, 1), (64, 5)])
def test_laplacian_eigenvalue(N, k):
    G = PeriodicGrid(1, N)
    f = G.sample(lambda x: np.cos(2 * np.pi * k * x[..., 0]))
    lam = -(2.0 * np.sin(np.pi * k * G.dx) / G.dx) ** 2
    assert np.allclose(laplacian(f).values, lam * f.values, atol=1e-9)


def test_laplacian_2d_separable():
    G = PeriodicGrid(2, 32)
    f = G.sample(lambda x: np.sin(2 * np.pi * x[..., 0]) * np.cos(4 * np.pi * x[..., 1]))
    l1 = -(2 * np.sin(np.pi * G.dx) / G.dx) ** 2
    l2 = -(2 * np.sin(2 * np.pi * G.dx) / G.dx) ** 2
    assert np.allclose(laplacian(f).values, (l1 + l2) * f.values, atol=1e-8)


def test_hessian_symmetric_and_trace_is_laplacian():
    G = PeriodicGrid(2, 24)
    f = G.sample(lambda x: np.sin(2 * np.pi * (x[..., 0] + 2 * x[..., 1])))
    H = hessian(f)
    assert np.array_equal(H[..., 0, 1], H[..., 1, 0])
    assert np.allclose(H[..., 0, 0] + H[..., 1, 1], laplacian(f).values, atol=1e-9)


def test_quadrature_and_delta():
    G = PeriodicGrid(2, 16)
    assert quadrature(G.constant(3.0)) == pytest.approx(3.0)
    d = delta_field(G, [0.26, 0.74])
    assert quadrature(d) == pytest.approx(1.0, abs=1e-14)
    assert d.values[G.nearest_index([0.26, 0.74])] == pytest.approx(G.N ** 2)
    s = smeared_delta(G, [0.5, 0.5], 0.1)
    assert quadrature(s) == pytest.approx(1.0, abs=1e-12)
    assert s.values.min() >= 0


def test_nearest_index_wraps():
    G = PeriodicGrid(1, 10)
    assert G.nearest_index([0.99]) == (0,)
    assert G.nearest_index([0.04]) == (0,)
    assert G.nearest_index([0.06]) == (1,)
    assert G.nearest_index([1.31]) == (3,)


def test_field_arithmetic_and_csv(tmp_path):
    G = PeriodicGrid(1, 8)
    a = G.sample(lambda x: x[..., 0])
    b = a + 1.0
    assert isinstance(b, Field)
    assert (b - a).max_norm() == pytest.approx(1.0)
    assert a.at([0.25]) == pytest.approx(0.25)
    p = write_field_csv(tmp_path / "f.csv", a)
    lines = p.read_text().strip().splitlines()
    assert len(lines) == 9
