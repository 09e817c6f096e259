"""Backend selection and the per-(model, grid) stepper used by the solvers.

The compiled extension is used when it imports; ``HJLAB_BACKEND=numpy``
forces the pure numpy path and ``HJLAB_BACKEND=cython`` makes a missing
extension an error.  Models without a :class:`KernelSpec` always take the
numpy path through their own evaluators.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py
from ._kernels_py import _grad, _lap
from .grid import PeriodicGrid
from .hamiltonian import HamiltonianModel, KIND_SHIFTED_ABS

_choice = os.environ.get("HJLAB_BACKEND", "auto").lower()
_compiled = None
if _choice in ("auto", "cython"):
    try:
        from . import _kernels as _compiled  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "cython":
            raise
        _compiled = None

BACKENDS = {"numpy": _kernels_py}
if _compiled is not None:
    BACKENDS["cython"] = _compiled
DEFAULT_BACKEND = "cython" if _compiled is not None else "numpy"


def grad_nd(U: np.ndarray, dx: float, n: int) -> np.ndarray:
    """Centered gradient over the trailing ``n`` axes; components on a new last axis."""
    off = U.ndim - n
    return np.stack([(np.roll(U, -1, axis=off + i) - np.roll(U, 1, axis=off + i)) / (2.0 * dx)
                     for i in range(n)], axis=-1)


def lap_nd(U: np.ndarray, dx: float, n: int) -> np.ndarray:
    off = U.ndim - n
    out = -2.0 * n * U
    for i in range(n):
        out = out + np.roll(U, -1, axis=off + i) + np.roll(U, 1, axis=off + i)
    return out / (dx * dx)


def hess_nd(U: np.ndarray, dx: float, n: int) -> np.ndarray:
    """Second-difference Hessian over the trailing ``n`` axes, shape ``U.shape + (n, n)``."""
    off = U.ndim - n
    H = np.empty(U.shape + (n, n))
    for i in range(n):
        H[..., i, i] = (np.roll(U, -1, axis=off + i) - 2.0 * U + np.roll(U, 1, axis=off + i)) / (dx * dx)
    if n == 2:
        a, b = off, off + 1
        pp = np.roll(np.roll(U, -1, a), -1, b)
        mm = np.roll(np.roll(U, 1, a), 1, b)
        pm = np.roll(np.roll(U, -1, a), 1, b)
        mp = np.roll(np.roll(U, 1, a), -1, b)
        H[..., 0, 1] = H[..., 1, 0] = (pp - pm - mp + mm) / (4.0 * dx * dx)
    return H


def available_backends() -> list[str]:
    return sorted(BACKENDS)


class Stepper:
    """Bound stencil operations for one model on one grid."""

    def __init__(self, model: HamiltonianModel, grid: PeriodicGrid, backend: str | None = None):
        if model.dim != grid.dim:
            raise ValueError(f"model dimension {model.dim} does not match grid dimension {grid.dim}")
        self.model = model
        self.grid = grid
        self.dx = grid.dx
        self.x = grid.coords()
        name = backend or DEFAULT_BACKEND
        if name not in BACKENDS:
            raise ValueError(f"backend {name!r} unavailable; have {available_backends()}")
        spec = model.kernel
        self.native = spec is not None
        self.backend = name if self.native else "numpy-generic"
        if self.native:
            mod = BACKENDS[name]
            sfx = "_1d" if grid.dim == 1 else "_2d"
            self._speeds = getattr(mod, "speeds" + sfx)
            self._viscous = getattr(mod, "viscous_step" + sfx)
            self._adjoint = getattr(mod, "adjoint_step" + sfx)
            self._tangent = getattr(mod, "tangent_step" + sfx)
            self._lf = getattr(mod, "lf_step" + sfx)
            self._secant = getattr(mod, "secant_adjoint" + sfx)
            self.kind = int(spec.kind)
            self.prm = np.ascontiguousarray(spec.params, dtype=float)
            self.c = np.ascontiguousarray(spec.c(self.x))
            self.V = np.ascontiguousarray(spec.V(self.x))

    # -- pointwise fields -------------------------------------------------
    def gradient(self, u) -> np.ndarray:
        """Centered gradient; leading batch axes are allowed."""
        return grad_nd(np.asarray(u), self.dx, self.grid.dim)

    def fields(self, u):
        """``(D_h u, H(x, D_h u), D_pH(x, D_h u))`` at every node (batch axes allowed)."""
        p = self.gradient(u)
        return p, self.model.eval_H(self.x, p), self.model.eval_DpH(self.x, p)

    # -- step kernels -----------------------------------------------------
    def speeds(self, u) -> tuple[float, float]:
        """Max over nodes of the l1 and l-infinity norms of ``D_pH(x, D_h u)``."""
        if self.native:
            return self._speeds(u, self.dx, self.kind, self.prm, self.c)
        b = np.abs(self.model.eval_DpH(self.x, self.gradient(u)))
        return float(np.max(np.sum(b, axis=-1))), float(np.max(b))

    def viscous(self, u, dt, eps, out=None):
        if out is None:
            out = np.empty_like(u)
        if self.native:
            self._viscous(u, out, dt, eps, self.dx, self.kind, self.prm, self.c, self.V)
        else:
            out[...] = u - dt * (self.model.eval_H(self.x, self.gradient(u)) - eps * _lap(u, self.dx))
        return out

    def adjoint(self, u, s, dt, eps, out=None):
        """Transpose of the step linearized at ``u``, applied to ``s``."""
        if out is None:
            out = np.empty_like(s)
        if self.native:
            self._adjoint(u, s, out, dt, eps, self.dx, self.kind, self.prm, self.c)
        else:
            bs = self.model.eval_DpH(self.x, self.gradient(u)) * s[..., None]
            div = sum((np.roll(bs[..., i], -1, axis=i) - np.roll(bs[..., i], 1, axis=i)) / (2.0 * self.dx)
                      for i in range(s.ndim))
            out[...] = s + dt * (div + eps * _lap(s, self.dx))
        return out

    def tangent(self, u, w, dt, eps, out=None):
        """The step linearized at ``u``, applied to ``w``."""
        if out is None:
            out = np.empty_like(w)
        if self.native:
            self._tangent(u, w, out, dt, eps, self.dx, self.kind, self.prm, self.c)
        else:
            b = self.model.eval_DpH(self.x, self.gradient(u))
            out[...] = w - dt * (np.sum(b * self.gradient(w), axis=-1) - eps * _lap(w, self.dx))
        return out

    def secant_adjoint(self, u0, u1, S, dt, eps, out=None):
        """Transpose of the step linearized along the segment ``u0 -> u1``, for a batch ``S[r]``.

        The coefficient is ``D_pH`` averaged over ``[D_h u0, D_h u1]`` (4-point
        Gauss-Legendre), which makes increments of the scheme satisfy the
        linear recursion exactly for polynomial ``H``.
        """
        S = np.ascontiguousarray(S)
        if out is None:
            out = np.empty_like(S)
        if self.native:
            self._secant(u0, u1, S, out, dt, eps, self.dx, self.kind, self.prm, self.c)
            return out
        p0 = self.gradient(u0)
        dp = self.gradient(u1) - p0
        b = sum(w * self.model.eval_DpH(self.x, p0 + s * dp) for s, w in zip(_kernels_py.GL_S, _kernels_py.GL_W))
        n = self.grid.dim
        for r in range(S.shape[0]):
            bs = b * S[r][..., None]
            div = sum((np.roll(bs[..., i], -1, axis=i) - np.roll(bs[..., i], 1, axis=i)) / (2.0 * self.dx)
                      for i in range(n))
            out[r] = S[r] + dt * (div + eps * _lap(S[r], self.dx))
        return out

    def lf(self, u, dt, alpha, out=None):
        if out is None:
            out = np.empty_like(u)
        if self.native:
            self._lf(u, out, dt, alpha, self.dx, self.kind, self.prm, self.c, self.V)
        else:
            n = u.ndim
            dp = np.stack([(np.roll(u, -1, axis=i) - u) / self.dx for i in range(n)], axis=-1)
            dm = np.stack([(u - np.roll(u, 1, axis=i)) / self.dx for i in range(n)], axis=-1)
            out[...] = u - dt * (self.model.eval_H(self.x, 0.5 * (dp + dm))
                                 - 0.5 * alpha * np.sum(dp - dm, axis=-1))
        return out

    def lf_speed(self, u, samples: int = 257) -> float:
        """Max of ``|D_pH|`` over the box spanned by the one-sided differences of ``u``.

        The box is sampled on a tensor grid that includes its corners; the
        shifted-abs kink contributes exactly 1.
        """
        n = u.ndim
        lo, hi = [], []
        for i in range(n):
            dp = (np.roll(u, -1, axis=i) - u) / self.dx
            lo.append(float(dp.min()))
            hi.append(float(dp.max()))
        k = samples if n == 1 else 33
        axes = [np.linspace(a, b, k) for a, b in zip(lo, hi)]
        P = np.stack([m.ravel() for m in np.meshgrid(*axes, indexing="ij")], axis=-1)
        if self.native:
            from .hamiltonian import momentum_DK
            if self.kind == KIND_SHIFTED_ABS:
                return float(np.max(np.abs(self.c)))
            return float(np.max(np.abs(self.c)) * np.max(np.abs(momentum_DK(self.kind, self.prm, P))))
        X = self.x.reshape(-1, n)[:: max(1, self.x[..., 0].size // 256)]
        b = self.model.eval_DpH(X[:, None, :], P[None, :, :])
        return float(np.max(np.abs(b)))
