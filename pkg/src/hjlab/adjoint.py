"""Discrete adjoint of the viscous scheme: exact transpose of the linearized steps."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterator

import numpy as np

from .errors import MissingStates
from .grid import Field, delta_field
from .kernels import hess_nd
from .solver import VISCOUS, ForwardRun

NEG_TOL = 1e-12


@dataclass(eq=False)
class AdjointRun:
    forward: ForwardRun
    z: tuple | None
    sigma_K: np.ndarray
    sigma_0: np.ndarray
    mass: np.ndarray                 # quadrature of sigma^k, k = 0..K
    minimum: np.ndarray              # min over nodes of sigma^k
    sigma: dict | None = None        # k -> sigma^k when retained
    k_end: int | None = None         # terminal index (defaults to the last level)
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.forward.K if self.k_end is None else self.k_end

    @property
    def T(self) -> float:
        return float(self.forward.times[self.K])

    @property
    def retained(self) -> bool:
        return self.sigma is not None

    def state(self, k: int) -> np.ndarray:
        if k == self.K:
            return self.sigma_K
        if k == 0:
            return self.sigma_0
        if self.sigma is None:
            raise MissingStates("adjoint states were not retained; iterate pairs() instead")
        return self.sigma[k]

    def field(self, k: int) -> Field:
        return Field(self.forward.grid, self.state(k).copy())

    @property
    def mass_defect(self) -> float:
        return float(np.max(np.abs(self.mass - 1.0)))

    @property
    def peclet_suffix_start(self) -> int:
        """Smallest ``k`` such that every step ``j >= k`` satisfied the Peclet condition."""
        bad = np.flatnonzero(~self.forward.peclet_ok[:self.K])
        return int(bad[-1]) + 1 if bad.size else 0

    def min_under_peclet(self) -> float:
        """Most negative nodal value among the ``sigma^k`` produced by Peclet-compliant steps."""
        return float(self.minimum[self.peclet_suffix_start:self.K + 1].min())

    def pairs(self) -> Iterator[tuple[int, float, np.ndarray, np.ndarray]]:
        """Yield ``(k, dt_k, u^k, sigma^(k+1))`` for ``k = K-1, ..., 0``."""
        fw = self.forward
        if self.sigma is not None:
            for k0, seg in fw.segments_backward(self.K):
                for j in range(len(seg) - 1, -1, -1):
                    k = k0 + j
                    yield k, float(fw.dts[k]), seg[j], self.state(k + 1)
            return
        s = self.sigma_K
        for k0, seg in fw.segments_backward(self.K):
            for j in range(len(seg) - 1, -1, -1):
                k = k0 + j
                yield k, float(fw.dts[k]), seg[j], s
                s = fw.stepper.adjoint(seg[j], s, fw.dts[k], fw.epsilon)

    def accumulate(self, fn: Callable[[int, float, np.ndarray, np.ndarray], float]) -> float:
        return float(sum(fn(k, dt, u, s) for k, dt, u, s in self.pairs()))

    def blocks(self, size: int = 1024) -> Iterator[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]]:
        """Batched :meth:`pairs`: ``(ks, dts, U, S)`` with ``U[i] = u^ks[i]``, ``S[i] = sigma^(ks[i]+1)``."""
        shape = self.sigma_K.shape
        U = np.empty((size,) + shape)
        S = np.empty((size,) + shape)
        ks = np.empty(size, dtype=np.int64)
        dts = np.empty(size)
        b = 0
        for k, dt, u, s in self.pairs():
            U[b], S[b], ks[b], dts[b] = u, s, k, dt
            b += 1
            if b == size:
                yield ks.copy(), dts.copy(), U.copy(), S.copy()
                b = 0
        if b:
            yield ks[:b].copy(), dts[:b].copy(), U[:b].copy(), S[:b].copy()

    def weighted_sum(self, fn: Callable[[np.ndarray, np.ndarray], np.ndarray], size: int = 1024) -> np.ndarray:
        """``sum_k dt_k sum_nodes fn(ks, U)[k] sigma^(k+1) dx^n`` evaluated block-wise.

        ``fn`` maps a block of states ``(B, *shape)`` to nodal values
        ``(B, *shape, ...)``; trailing axes beyond the grid are kept.
        """
        n = self.sigma_K.ndim
        vol = self.forward.grid.cell_volume
        acc = 0.0
        for ks, dts, U, S in self.blocks(size):
            F = fn(ks, U)
            extra = F.ndim - (n + 1)
            Sx = S.reshape(S.shape + (1,) * extra)
            acc = acc + np.sum(F * Sx * dts.reshape((-1,) + (1,) * (n + extra)), axis=tuple(range(n + 1)))
        return np.asarray(acc) * vol


def _terminal(forward: ForwardRun, z, nu) -> np.ndarray:
    grid = forward.grid
    if nu is None or (isinstance(nu, str) and nu == "delta"):
        if z is None:
            raise ValueError("z is required for a delta terminal measure")
        return delta_field(grid, z).values.copy()
    if isinstance(nu, str) and nu == "uniform":
        return np.ones(grid.shape)
    vals = np.asarray(nu.values if isinstance(nu, Field) else nu, dtype=float)
    if vals.shape != grid.shape:
        raise ValueError("terminal density has the wrong shape")
    return vals.copy()


def solve_adjoint(forward: ForwardRun, z=None, nu=None, retain: str = "auto",
                  memory_budget: float = 768e6, warn: bool = True, k_end: int | None = None) -> AdjointRun:
    """Backward sweep ``sigma^k = A_k^T sigma^(k+1)`` from ``sigma^K = delta_z``.

    ``nu`` may replace the delta by ``"uniform"`` or an explicit density.
    ``k_end`` places the terminal condition at an earlier level of the run.
    ``retain`` is ``"all"``, ``"none"`` or ``"auto"`` (all when it fits the
    memory budget).
    """
    if forward.scheme != VISCOUS:
        raise ValueError("the discrete adjoint is defined for the viscous central scheme")
    if 0 not in forward.checkpoints and forward.K > 0:
        raise MissingStates("forward run has no stored states to linearize about")
    K = forward.K if k_end is None else int(k_end)
    if not 0 <= K <= forward.K:
        raise IndexError(k_end)
    sK = np.ascontiguousarray(_terminal(forward, z, nu))
    if retain == "auto":
        retain = "all" if (K + 1) * sK.nbytes <= memory_budget else "none"
    if retain not in ("all", "none"):
        raise ValueError("retain must be 'all', 'none' or 'auto'")
    vol = forward.grid.cell_volume
    mass = np.empty(K + 1)
    mins = np.empty(K + 1)
    mass[K] = float(np.sum(sK) * vol)
    mins[K] = float(sK.min())
    store = {} if retain == "all" else None
    step = forward.stepper.adjoint
    eps = forward.epsilon
    s = sK
    worst = (np.inf, -1, None)
    for k0, seg in forward.segments_backward(K):
        for j in range(len(seg) - 1, -1, -1):
            k = k0 + j
            s = step(seg[j], s, forward.dts[k], eps)
            mass[k] = float(np.sum(s) * vol)
            m = float(s.min())
            mins[k] = m
            if m < worst[0] and forward.peclet_ok[k]:
                worst = (m, k, np.unravel_index(int(np.argmin(s)), s.shape))
            if store is not None and 0 < k:
                store[k] = s
    run = AdjointRun(forward=forward, z=None if z is None else tuple(np.atleast_1d(z).tolist()),
                     sigma_K=sK, sigma_0=s, mass=mass, minimum=mins, sigma=store,
                     k_end=None if K == forward.K else K)
    low = run.min_under_peclet() if K else 0.0
    if low < -NEG_TOL:
        k_bad = run.peclet_suffix_start + int(np.argmin(mins[run.peclet_suffix_start:K + 1]))
        run.meta["negative"] = {"value": low, "k": k_bad}
        if warn:
            warnings.warn(f"adjoint density reached {low:.3e} at step {k_bad} under the Peclet condition",
                          RuntimeWarning, stacklevel=2)
    if worst[1] >= 0:
        run.meta["most_negative_peclet_step"] = {"value": worst[0], "k": worst[1],
                                                 "node": [int(i) for i in worst[2]]}
    return run


def duality_check(forward: ForwardRun, adjoint: AdjointRun, w0) -> float:
    """``|<A_{K-1} ... A_0 w0, sigma^K> - <w0, sigma^0>|`` in the quadrature pairing."""
    w = np.ascontiguousarray(np.asarray(w0.values if isinstance(w0, Field) else w0, dtype=float))
    if w.shape != forward.grid.shape:
        raise ValueError("probe has the wrong shape")
    vol = forward.grid.cell_volume
    lhs0 = float(np.sum(w * adjoint.sigma_0) * vol)
    tangent = forward.stepper.tangent
    for k, u in forward.states(0, adjoint.K - 1) if adjoint.K else ():
        w = tangent(u, w, forward.dts[k], forward.epsilon)
    return abs(float(np.sum(w * adjoint.sigma_K) * vol) - lhs0)


def nam_diagnostic(forward: ForwardRun, adjoint: AdjointRun) -> float:
    """``eps * sum_k dt_k sum_nodes |D^2_h u^k|^2 sigma^(k+1) dx^n``."""
    dx, n = forward.dx, forward.grid.dim

    def term(ks, U):
        Hs = hess_nd(U, dx, n)
        return np.sum(Hs * Hs, axis=(-2, -1))

    return forward.epsilon * float(adjoint.weighted_sum(term))



def ut_representation(forward: ForwardRun, zs, k_ends) -> list[dict]:
    """Direct ``u_t`` at level ``K`` against its adjoint representation, for every ``(K, z)``.

    The increments ``v^k = (u^(k+1) - u^k) / dt_k`` obey the linear recursion
    ``v^(k+1) = v^k - dt_k (bbar^k . D_h v^k - eps Lap_h v^k)`` with
    ``bbar^k`` the secant average of ``D_pH`` between ``D_h u^k`` and
    ``D_h u^(k+1)``, so ``v^(K-1)(z) = <v^0, sigma_bar^0>`` holds up to
    round-off.  All densities share one backward sweep.
    """
    if forward.scheme != VISCOUS:
        raise ValueError("the discrete adjoint is defined for the viscous central scheme")
    grid, eps, vol = forward.grid, forward.epsilon, forward.grid.cell_volume
    zs = [np.atleast_1d(np.asarray(z, dtype=float)) for z in zs]
    jobs = [(int(K), z) for K in k_ends for z in zs]
    if any(not 2 <= K <= forward.K for K, _ in jobs):
        raise ValueError("each terminal level needs 2 <= K <= forward.K")
    top = max(K for K, _ in jobs) - 1
    S = np.zeros((len(jobs),) + grid.shape)
    start = {}
    for r, (K, z) in enumerate(jobs):
        start.setdefault(K - 1, []).append((r, delta_field(grid, z).values))
    step = forward.stepper.secant_adjoint
    buf = np.empty_like(S)
    nxt = None
    for k0, seg in forward.segments_backward(top + 1):
        for j in range(len(seg) - 1, -1, -1):
            k = k0 + j
            u = seg[j]
            if nxt is not None:
                # rows not yet started are zero and stay zero
                step(u, nxt, S, float(forward.dts[k]), eps, out=buf)
                S, buf = buf, S
            for r, d in start.get(k, ()):
                S[r] = d
            nxt = u
    v0 = (forward.state(1) - forward.state(0)) / forward.dts[0]
    out = []
    for r, (K, z) in enumerate(jobs):
        direct = (forward.state(K) - forward.state(K - 1)) / forward.dts[K - 1]
        out.append({"K": K, "T": float(forward.times[K]), "z": z.tolist(),
                    "direct": float(direct[grid.nearest_index(z)]),
                    "represented": float(np.sum(v0 * S[r]) * vol),
                    "mass_defect": abs(float(np.sum(S[r]) * vol) - 1.0), "min_sigma": float(S[r].min())})
    return out
