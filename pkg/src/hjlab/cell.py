"""Effective Hamiltonian at P = 0 and its corrector, from long-time viscous evolution."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adjoint import AdjointRun, solve_adjoint
from .errors import InsufficientSpread, NotConverged
from .grid import Field, PeriodicGrid, laplacian
from .hamiltonian import HamiltonianModel
from .solver import ForwardRun, peclet_min_nodes, solve_viscous


@dataclass(eq=False)
class CellSolution:
    epsilon: float
    Hbar_eps: float
    corrector: Field
    residual: float
    convergence_gap: float
    T1: float
    T2: float
    lipschitz: float
    run: ForwardRun | None = field(default=None, repr=False)

    def summary(self) -> dict:
        return {"epsilon": self.epsilon, "Hbar_eps": self.Hbar_eps, "residual": self.residual,
                "convergence_gap": self.convergence_gap, "T1": self.T1, "T2": self.T2,
                "lipschitz": self.lipschitz, "N": self.corrector.grid.N, "dim": self.corrector.grid.dim}


def window_estimate(run: ForwardRun, T1: float, T2: float) -> tuple[float, float]:
    """``(Hbar, gap)`` from the levels at ``T1 < T2`` of a run started at zero-mean-free data."""
    u1, u2 = run.at(T1), run.at(T2)
    hbar = -(float(np.mean(u2)) - float(np.mean(u1))) / (T2 - T1)
    gap = float(np.max(np.abs((u2 + hbar * T2) - (u1 + hbar * T1))))
    return hbar, gap


def ergodic_constant(model: HamiltonianModel, epsilon: float, grid: PeriodicGrid, T1: float = 15.0,
                     T2: float = 20.0, g: Field | None = None, gap_threshold: float = 1e-3,
                     raise_on_gap: bool = True, safety: float = 0.9, peclet: str = "record",
                     extra_stops: Sequence[float] = (), backend: str | None = None) -> CellSolution:
    """Estimate ``Hbar^eps(0)`` as minus the long-time slope of the mean of ``u``.

    The corrector is ``u(., T2) + Hbar T2`` shifted to vanish at the node
    nearest the origin.  :class:`NotConverged` carries the solution in
    ``args[1]`` when the gap exceeds ``gap_threshold``.
    """
    if not 0 < T1 < T2:
        raise ValueError("need 0 < T1 < T2")
    g = g if g is not None else grid.constant(0.0)
    run = solve_viscous(model, g, epsilon, T2, grid, safety=safety, peclet=peclet,
                        stops=[T1, *extra_stops], backend=backend)
    hbar, gap = window_estimate(run, T1, T2)
    v = run.at(T2) + hbar * T2
    v = v - v[grid.nearest_index(np.zeros(grid.dim))]
    p, H, _ = run.stepper.fields(v)
    residual = float(np.max(np.abs(H - hbar - epsilon * laplacian(v, grid.dx))))
    sol = CellSolution(epsilon=float(epsilon), Hbar_eps=hbar, corrector=Field(grid, v), residual=residual,
                       convergence_gap=gap, T1=T1, T2=T2, lipschitz=float(np.max(np.abs(p))), run=run)
    if raise_on_gap and gap > gap_threshold:
        raise NotConverged(f"convergence gap {gap:.3g} > {gap_threshold:g}; increase T2", sol)
    return sol


@dataclass
class RateStudy:
    epsilons: np.ndarray
    hbar: np.ndarray
    errors: np.ndarray
    hbar_ref: float
    slope: float | None
    constant: float | None          # single C with |error| <= C sqrt(eps)
    degenerate: bool
    cells: list = field(default_factory=list, repr=False)

    def table(self) -> list[dict]:
        return [{"epsilon": float(e), "Hbar_eps": float(h), "error": float(r)}
                for e, h, r in zip(self.epsilons, self.hbar, self.errors)]


def fit_loglog(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def check_spread(epsilons: Sequence[float], min_points: int = 3, min_ratio: float = 8.0) -> np.ndarray:
    """Sorted (decreasing) ladder; rejects fewer than ``min_points`` values or ``max/min < min_ratio``.

    The default ratio 8 admits the dyadic ladder 0.08, 0.04, 0.02, 0.01.
    """
    e = np.asarray(sorted(epsilons, reverse=True), dtype=float)
    if e.size < min_points:
        raise InsufficientSpread(f"need at least {min_points} epsilon values, got {e.size}")
    if e.min() <= 0 or e.max() / e.min() < min_ratio * (1 - 1e-12):
        raise InsufficientSpread(f"epsilon range {e.min():g}..{e.max():g} spans a ratio below {min_ratio:g}")
    return e


def rate_study(model: HamiltonianModel, epsilons: Sequence[float], grids: Sequence[int | PeriodicGrid] | None = None,
               hbar_ref: float | None = None, T1: float = 15.0, T2: float = 20.0, speed_hint: float = 4.0,
               N_min: int = 64, gap_threshold: float = 1e-3, degenerate_tol: float = 1e-13,
               **kw) -> RateStudy:
    """``|Hbar^eps - Hbar_ref|`` along a decreasing epsilon ladder and its log-log slope.

    Without explicit ``grids`` each epsilon gets the smallest power-of-two
    ``N >= N_min`` meeting the Peclet condition for speed ``speed_hint``.
    """
    eps = check_spread(epsilons)
    if grids is None:
        grids = [max(N_min, peclet_min_nodes(speed_hint, e)) for e in eps]
    if len(grids) != eps.size:
        raise ValueError("one grid per epsilon required")
    cells = []
    for e, gr in zip(eps, grids):
        grid = gr if isinstance(gr, PeriodicGrid) else PeriodicGrid(model.dim, int(gr))
        cells.append(ergodic_constant(model, float(e), grid, T1, T2, gap_threshold=gap_threshold, **kw))
    hb = np.array([c.Hbar_eps for c in cells])
    ref = hbar_ref if hbar_ref is not None else model.hbar0
    fit_e, fit_h = eps, hb
    if ref is None:
        ref = float(hb[-1])
        fit_e, fit_h = eps[:-1], hb[:-1]
    err = np.abs(hb - ref)
    fit_err = np.abs(fit_h - ref)
    if np.all(fit_err <= degenerate_tol):
        return RateStudy(eps, hb, err, ref, None, None, True, cells)
    slope = fit_loglog(fit_e, np.maximum(fit_err, 1e-300))
    C = float(np.max(err / np.sqrt(eps)))
    return RateStudy(eps, hb, err, ref, slope, C, False, cells)


def stationary_run(model: HamiltonianModel, cell: CellSolution, T: float, zs: Sequence = (),
                   residual_threshold: float = 1e-2, safety: float = 0.9, peclet: str = "record",
                   stops: Sequence[float] | None = None, retain: str = "auto",
                   backend: str | None = None) -> tuple[ForwardRun, list[AdjointRun]]:
    """Forward run from the corrector plus one adjoint per terminal point ``z``."""
    if cell.residual > residual_threshold:
        raise NotConverged(f"cell residual {cell.residual:.3g} above {residual_threshold:g}")
    run = solve_viscous(model, cell.corrector, cell.epsilon, T, safety=safety, peclet=peclet,
                        stops=stops, backend=backend)
    return run, [solve_adjoint(run, z, retain=retain) for z in zs]


def stationarity_defect(run: ForwardRun, cell: CellSolution) -> float:
    """``max_k |u^k - (v - Hbar t_k)|_inf`` along a stationary run."""
    v = cell.corrector.values
    return max(float(np.max(np.abs(u - (v - cell.Hbar_eps * run.times[k])))) for k, u in run.states())
