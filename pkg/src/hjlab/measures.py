"""Phase-space measures generated by the adjoint density, and the residuals built on them."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .adjoint import AdjointRun
from .grid import Field
from .hamiltonian import TWO_PI, HamiltonianModel, Observable, default_observables, poisson_bracket
from .kernels import hess_nd
from .solver import ForwardRun


@dataclass(eq=False)
class PhaseMeasure:
    """Weighted atoms ``(x_i, p_i, w_i)``; ``p`` holds momenta or velocities.

    Time-resolved measures also carry the slice time ``t`` and slice length
    ``dt`` of each atom; slice weights sum to one within each slice.
    """

    x: np.ndarray
    p: np.ndarray
    w: np.ndarray
    t: np.ndarray | None = None
    dt: np.ndarray | None = None
    kind: str = "nu"

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.w))

    @property
    def dim(self) -> int:
        return self.x.shape[-1]

    def __len__(self):
        return self.w.size

    def integrate(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
        return float(np.sum(self.w * fn(self.x, self.p)))

    def histogram(self, bins: int | tuple = 64, p_range: tuple | None = None, axis: int = 0) -> dict:
        """``(x_axis, p_axis)`` histogram of the weights, for plotting."""
        bx, bp = (bins, bins) if np.isscalar(bins) else bins
        if p_range is None:
            r = float(np.max(np.abs(self.p[:, axis]), initial=0.0)) or 1.0
            p_range = (-r, r)
        h, ex, ep = np.histogram2d(self.x[:, axis], self.p[:, axis], bins=(bx, bp),
                                   range=((0.0, 1.0), p_range), weights=self.w)
        return {"x_edges": ex.tolist(), "p_edges": ep.tolist(), "weights": h.tolist(), "kind": self.kind}

    def to_csv(self, path) -> Path:
        path = Path(path)
        n = self.dim
        with path.open("w", newline="") as fh:
            wr = csv.writer(fh)
            head = [f"x{i}" for i in range(n)] + [f"p{i}" for i in range(n)] + ["w"]
            if self.t is not None:
                head.append("t")
            wr.writerow(head)
            for j in range(self.w.size):
                row = [repr(float(a)) for a in self.x[j]] + [repr(float(a)) for a in self.p[j]] + [repr(float(self.w[j]))]
                if self.t is not None:
                    row.append(repr(float(self.t[j])))
                wr.writerow(row)
        return path

    def to_histogram_json(self, path, **kw) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.histogram(**kw)))
        return path


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def _nodes(forward: ForwardRun) -> np.ndarray:
    return forward.grid.coords().reshape(-1, forward.grid.dim)


def build_slice_nu(forward: ForwardRun, adjoint: AdjointRun, k: int) -> PhaseMeasure:
    """Atoms ``(x_i, D_h u^k(x_i), sigma^k(x_i) dx^n)``."""
    if not 0 <= k <= forward.K:
        raise IndexError(k)
    n = forward.grid.dim
    p = forward.stepper.gradient(forward.state(k)).reshape(-1, n)
    w = adjoint.state(k).reshape(-1) * forward.grid.cell_volume
    return PhaseMeasure(_nodes(forward), p, w, kind="nu")


def build_mu(forward: ForwardRun, adjoint: AdjointRun, k_stride: int = 1) -> PhaseMeasure:
    """Time-resolved measure pairing ``D_h u^k`` with ``sigma^(k+1)`` on every step.

    With ``k_stride > 1`` only every ``k_stride``-th slice is kept and its
    time weight is scaled by the skipped slices' total length.
    """
    n = forward.grid.dim
    X = _nodes(forward)
    vol = forward.grid.cell_volume
    xs, ps, ws, ts, dts = [], [], [], [], []
    carry = 0.0
    for k, dt, u, s in adjoint.pairs():
        carry += dt
        if k % k_stride:
            continue
        xs.append(X)
        ps.append(forward.stepper.gradient(u).reshape(-1, n))
        ws.append(s.reshape(-1) * vol)
        ts.append(np.full(X.shape[0], forward.times[k]))
        dts.append(np.full(X.shape[0], carry))
        carry = 0.0
    if not xs:
        return PhaseMeasure(np.empty((0, n)), np.empty((0, n)), np.empty(0), np.empty(0), np.empty(0), kind="mu")
    order = slice(None, None, -1)
    return PhaseMeasure(np.concatenate(xs[order]), np.concatenate(ps[order]), np.concatenate(ws[order]),
                        np.concatenate(ts[order]), np.concatenate(dts[order]), kind="mu")


def time_average(mu: PhaseMeasure, T: float, merge_tol: float | None = None) -> PhaseMeasure:
    """Collapse the time axis with weights ``w dt / T``.

    ``merge_tol`` merges atoms at the same ``x`` whose momenta agree after
    rounding to that resolution (mass-weighted mean momentum).
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if mu.t is None:
        return PhaseMeasure(mu.x.copy(), mu.p.copy(), mu.w.copy(), kind="mu_tilde")
    w = mu.w * mu.dt / T
    x, p = mu.x, mu.p
    if merge_tol:
        key = np.concatenate([np.round(x * 1e9), np.round(p / merge_tol)], axis=1)
        _, inv = np.unique(key, axis=0, return_inverse=True)
        inv = inv.reshape(-1)
        m = inv.max() + 1
        W = np.bincount(inv, weights=w, minlength=m)
        Wsafe = np.where(W != 0, W, 1.0)
        cnt = np.bincount(inv, minlength=m)
        P = np.stack([np.bincount(inv, weights=w * p[:, i], minlength=m) for i in range(p.shape[1])], axis=1)
        Pu = np.stack([np.bincount(inv, weights=p[:, i], minlength=m) for i in range(p.shape[1])], axis=1)
        P = np.where((W != 0)[:, None], P / Wsafe[:, None], Pu / cnt[:, None])
        X = np.zeros((m, x.shape[1]))
        X[inv] = x
        return PhaseMeasure(X, P, W, kind="mu_tilde")
    return PhaseMeasure(x.copy(), p.copy(), w, kind="mu_tilde")


def time_averaged_integral(forward: ForwardRun, adjoint: AdjointRun,
                           fn: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> float:
    """``(1/T) sum_k dt_k sum_nodes fn(x, D_h u^k) sigma^(k+1) dx^n`` without storing atoms."""
    X = forward.grid.coords()
    acc = adjoint.weighted_sum(lambda ks, U: fn(X, forward.stepper.gradient(U)))
    return float(acc) / adjoint.T


def pushforward_gamma(mu: PhaseMeasure, model: HamiltonianModel) -> PhaseMeasure:
    """Map each atom ``(x, p, w)`` to ``(x, D_pH(x, p), w)``."""
    if not model.convex_in_p:
        raise ValueError(f"{model.name} is not convex in p; velocities do not parametrize the measure")
    v = model.eval_DpH(mu.x, mu.p)
    return PhaseMeasure(mu.x, v, mu.w, mu.t, mu.dt, kind="gamma")


# ---------------------------------------------------------------------------
# identities and residuals
# ---------------------------------------------------------------------------

def representation_terms(forward: ForwardRun, adjoint: AdjointRun, g: Field) -> tuple[float, float, float]:
    """``(<u^K, sigma^K>, <g, sigma^0>, sum_k dt_k <D_pH.p - H, sigma^(k+1)>)``."""
    vol = forward.grid.cell_volume
    st = forward.stepper

    def term(ks, U):
        p, H, b = st.fields(U)
        return np.sum(b * p, axis=-1) - H

    lhs = float(np.sum(forward.state(adjoint.K) * adjoint.sigma_K) * vol)
    g0 = float(np.sum(np.asarray(g.values) * adjoint.sigma_0) * vol)
    return lhs, g0, float(adjoint.weighted_sum(term))


def representation_residual(forward: ForwardRun, adjoint: AdjointRun, g: Field) -> float:
    """``|u^K(z) - <g, sigma^0> - sum_k dt_k <D_pH.D_hu^k - H, sigma^(k+1)>|``."""
    lhs, g0, run = representation_terms(forward, adjoint, g)
    return abs(lhs - g0 - run)


@dataclass(frozen=True)
class TestFunction:
    """Smooth ``phi(x, t)`` with its time derivative and spatial gradient."""

    name: str
    value: Callable
    d_t: Callable
    grad: Callable


def _zeros(x, t):
    return np.zeros(x.shape[:-1])


def default_test_functions(dim: int) -> list[TestFunction]:
    fams = [
        TestFunction("1", lambda x, t: np.ones(x.shape[:-1]), _zeros, lambda x, t: np.zeros(x.shape)),
        TestFunction("t", lambda x, t: np.broadcast_to(t, x.shape[:-1]).astype(float),
                     lambda x, t: np.ones(x.shape[:-1]), lambda x, t: np.zeros(x.shape)),
    ]
    for i in range(dim):
        def e(i=i):
            def unit(x):
                o = np.zeros(x.shape)
                o[..., i] = 1.0
                return o
            return unit
        unit = e()
        fams += [
            TestFunction(f"sin(2pi x{i})", lambda x, t, i=i: np.sin(TWO_PI * x[..., i]), _zeros,
                         lambda x, t, i=i, u=unit: u(x) * (TWO_PI * np.cos(TWO_PI * x[..., i]))[..., None]),
            TestFunction(f"cos(2pi x{i})", lambda x, t, i=i: np.cos(TWO_PI * x[..., i]), _zeros,
                         lambda x, t, i=i, u=unit: -u(x) * (TWO_PI * np.sin(TWO_PI * x[..., i]))[..., None]),
            TestFunction(f"t sin(2pi x{i})", lambda x, t, i=i: t * np.sin(TWO_PI * x[..., i]),
                         lambda x, t, i=i: np.sin(TWO_PI * x[..., i]),
                         lambda x, t, i=i, u=unit: u(x) * (t * TWO_PI * np.cos(TWO_PI * x[..., i]))[..., None]),
        ]
    return fams


def holonomy_residual(gamma: PhaseMeasure, sigma0: Field, z, T: float,
                      phis: Sequence[TestFunction] | None = None) -> dict[str, float]:
    """Per test function ``|sum dt w (phi_t + v.Dphi) - (phi(z,T) - <phi(.,0), sigma^0>)|``."""
    if gamma.t is None:
        raise ValueError("holonomy needs a time-resolved measure")
    n = gamma.dim
    phis = phis or default_test_functions(n)
    zpt = np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, n)
    X0 = sigma0.grid.coords().reshape(-1, n)
    s0 = sigma0.values.reshape(-1) * sigma0.grid.cell_volume
    out = {}
    for phi in phis:
        t = gamma.t
        lhs = float(np.sum(gamma.dt * gamma.w * (phi.d_t(gamma.x, t) + np.sum(gamma.p * phi.grad(gamma.x, t), axis=-1))))
        rhs = float(phi.value(zpt, np.array([T]))[0]) - float(np.sum(phi.value(X0, np.zeros(X0.shape[0])) * s0))
        out[phi.name] = abs(lhs - rhs)
    return out


def mather_residuals(mu_tilde: PhaseMeasure, model: HamiltonianModel, Hbar: float,
                     phis: Sequence[TestFunction] | None = None) -> dict[str, float]:
    """Residuals of the energy-level (a), zero radial moment (b) and closedness (c) conditions."""
    x, p, w = mu_tilde.x, mu_tilde.p, mu_tilde.w
    H = model.eval_H(x, p)
    b = model.eval_DpH(x, p)
    res_a = abs(float(np.sum(w * H)) - Hbar) + float(np.sum(w * (H - Hbar) ** 2))
    res_b = abs(float(np.sum(w * np.sum(b * p, axis=-1))))
    phis = [f for f in (phis or default_test_functions(mu_tilde.dim)) if f.name != "t" and "t " not in f.name]
    zeros = np.zeros(x.shape[0])
    res_c = max((abs(float(np.sum(w * np.sum(b * f.grad(x, zeros), axis=-1)))) for f in phis), default=0.0)
    return {"res_a": res_a, "res_b": res_b, "res_c": res_c}


def energy_level_residual(mu: PhaseMeasure, model: HamiltonianModel, Hbar: float) -> float:
    return float(np.sum(mu.w * (model.eval_H(mu.x, mu.p) - Hbar) ** 2))


def support_radius(mu: PhaseMeasure, p_threshold: float) -> float:
    """Mass of atoms with ``|p| > p_threshold``."""
    return float(np.sum(mu.w[np.linalg.norm(mu.p, axis=-1) > p_threshold]))


@dataclass
class DissipativeEstimate:
    m_hat: np.ndarray
    bracket_integrals: dict[str, float]
    hessian_terms: dict[str, float]
    bracket_residuals: dict[str, float]

    def asymmetry(self) -> float:
        return float(np.max(np.abs(self.m_hat - self.m_hat.T)))

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(0.5 * (self.m_hat + self.m_hat.T)).min())

    def is_sym_psd(self, tol: float = 1e-8) -> bool:
        return self.asymmetry() <= tol and self.min_eigenvalue() >= -tol


def dissipative_estimate(forward: ForwardRun, adjoint: AdjointRun, model: HamiltonianModel,
                         psis: Sequence[Observable] | None = None) -> DissipativeEstimate:
    """Aggregate dissipative mass and per-observable bracket balance over one run.

    ``m_hat = (eps/T) sum_k dt_k sum_nodes (D^2u D^2u^T) sigma^(k+1) dx^n``;
    for each ``psi`` the bracket integral against the time average is compared
    with ``(eps/T) sum psi_pp : (D^2u D^2u^T) sigma dt dx^n``.
    """
    n = forward.grid.dim
    psis = list(psis) if psis is not None else default_observables(n)
    X = forward.grid.coords()
    dx, eps, T = forward.dx, forward.epsilon, adjoint.T
    st = forward.stepper

    def term(ks, U):
        p = st.gradient(U)
        D2 = hess_nd(U, dx, n)
        Q = np.einsum("...ik,...jk->...ij", D2, D2)
        cols = [Q.reshape(Q.shape[:-2] + (n * n,))]
        for psi in psis:
            cols.append(poisson_bracket(model, psi, X, p)[..., None])
            cols.append(np.sum(psi.hess_p(X, p) * Q, axis=(-2, -1))[..., None])
        return np.concatenate(cols, axis=-1)

    tot = adjoint.weighted_sum(term)
    M = tot[: n * n].reshape(n, n) * eps / T
    br = tot[n * n::2] / T
    hp = tot[n * n + 1::2] * eps / T
    names = [q.name for q in psis]
    return DissipativeEstimate(
        m_hat=M,
        bracket_integrals=dict(zip(names, br.tolist())),
        hessian_terms=dict(zip(names, hp.tolist())),
        bracket_residuals=dict(zip(names, (br - hp).tolist())),
    )


def curve_objective(g: Field, L_eval: Callable[[np.ndarray], np.ndarray], path: np.ndarray, T: float) -> float:
    """``g(zeta(0)) + sum_k L((zeta_{k+1} - zeta_k)/dt) dt`` for a sampled curve (nearest-node ``g``)."""
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    K = path.shape[0] - 1
    dt = T / K
    v = np.diff(path, axis=0) / dt
    return g.at(np.mod(path[0], 1.0)) + float(np.sum(L_eval(v))) * dt
