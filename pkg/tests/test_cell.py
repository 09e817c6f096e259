import numpy as np
import pytest

from hjlab import hamiltonian as hm
from hjlab.cell import (check_spread, ergodic_constant, fit_loglog, rate_study, stationarity_defect,
                        stationary_run)
from hjlab.errors import InsufficientSpread, NotConverged
from hjlab.grid import PeriodicGrid

# top eigenvalue of eps^2 d^2/dx^2 - (1 - cos 2 pi x)/2 (Fourier-Galerkin, 401 modes)
KV_HBAR = {0.05: -0.15062899400132937, 0.01: -0.031167201215557237}


@pytest.fixture(scope="module")
def kv_cell():
    return ergodic_constant(hm.separable_kv(), 0.05, PeriodicGrid(1, 128), T1=8.0, T2=12.0)


def test_separable_kv_matches_linearized_eigenvalue(kv_cell):
    assert kv_cell.Hbar_eps == pytest.approx(KV_HBAR[0.05], abs=2e-3)
    assert kv_cell.convergence_gap <= 1e-3
    assert kv_cell.residual <= 1e-3
    assert kv_cell.corrector.values[0] == 0.0
    s = kv_cell.summary()
    assert s["N"] == 128 and s["epsilon"] == 0.05


def test_stationary_run_stays_on_corrector(kv_cell):
    run, adj = stationary_run(hm.separable_kv(), kv_cell, 1.0, zs=[[0.3]])
    assert stationarity_defect(run, kv_cell) <= 1e-3
    assert adj[0].mass_defect <= 1e-12


def test_zero_effective_value_for_x_independent_model():
    c = ergodic_constant(hm.quartic_double_well(), 0.02, PeriodicGrid(1, 64), T1=1.0, T2=2.0)
    assert c.Hbar_eps == 0.0 and c.residual == 0.0


def test_not_converged_carries_solution():
    with pytest.raises(NotConverged) as ei:
        ergodic_constant(hm.separable_kv(), 0.05, PeriodicGrid(1, 32), T1=0.05, T2=0.1, gap_threshold=1e-12)
    sol = ei.value.args[1]
    assert sol.convergence_gap > 1e-12 and np.isfinite(sol.Hbar_eps)
    with pytest.raises(ValueError):
        ergodic_constant(hm.separable_kv(), 0.05, PeriodicGrid(1, 32), T1=1.0, T2=1.0)


def test_check_spread():
    assert list(check_spread([0.01, 0.08, 0.02, 0.04])) == [0.08, 0.04, 0.02, 0.01]
    with pytest.raises(InsufficientSpread):
        check_spread([0.1, 0.01])
    with pytest.raises(InsufficientSpread):
        check_spread([0.04, 0.02, 0.01])
    with pytest.raises(InsufficientSpread):
        check_spread([0.1, 0.0, 0.01])


def test_fit_loglog_recovers_power():
    x = np.array([0.1, 0.05, 0.02, 0.01])
    assert fit_loglog(x, 3.0 * x ** 0.5) == pytest.approx(0.5, abs=1e-12)


def test_rate_study_degenerate_when_exact():
    rs = rate_study(hm.quartic_double_well(), [0.08, 0.04, 0.02, 0.01], grids=[32] * 4, T1=0.5, T2=1.0)
    assert rs.degenerate and rs.slope is None
    assert len(rs.table()) == 4
