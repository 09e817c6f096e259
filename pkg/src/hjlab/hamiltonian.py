"""Hamiltonian catalog, Legendre transform, Poisson bracket and assumption checks.

Every catalog entry has the separable form

    H(x, p) = c(x) K(p) - V(x)

with ``K`` drawn from two momentum families:

* ``power``: ``K(p) = s |p|^(m-2) (|p|^2 + beta p_1^2) - q |p|^2`` (``m`` even)
* ``shifted_abs``: ``K(p) = |p_1 + a| - a`` (one dimension only)

The compiled kernels evaluate exactly this form at grid nodes, so catalog
models carry a :class:`KernelSpec` next to their numpy evaluators.  Models
built directly from callables (no ``kernel``) run on the numpy backend.

Points are arrays whose last axis holds the ``n`` components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

KIND_POWER = 0
KIND_SHIFTED_ABS = 1


def as_points(a, dim: int) -> np.ndarray:
    """Coerce ``a`` to float array with a trailing component axis of size ``dim``."""
    a = np.asarray(a, dtype=float)
    if a.ndim == 0 or a.shape[-1] != dim:
        if dim == 1:
            a = a[..., None]
        else:
            raise ValueError(f"expected trailing axis of size {dim}, got shape {a.shape}")
    return a


# ---------------------------------------------------------------------------
# momentum families (shared with the numpy kernel backend)
# ---------------------------------------------------------------------------

def momentum_K(kind: int, params: Sequence[float], p: np.ndarray) -> np.ndarray:
    s, m, beta, q, shift = params
    if kind == KIND_SHIFTED_ABS:
        return np.abs(p[..., 0] + shift) - shift
    r2 = np.sum(p * p, axis=-1)
    q2 = r2 + beta * p[..., 0] ** 2
    mh = int(m - 2) // 2
    return s * r2**mh * q2 - q * r2


def momentum_DK(kind: int, params: Sequence[float], p: np.ndarray) -> np.ndarray:
    s, m, beta, q, shift = params
    if kind == KIND_SHIFTED_ABS:
        # right derivative at the kink
        return np.where(p[..., :1] + shift >= 0.0, 1.0, -1.0)
    r2 = np.sum(p * p, axis=-1)
    q2 = r2 + beta * p[..., 0] ** 2
    mh = int(m - 2) // 2
    base = r2**mh
    g = 2.0 * p * base[..., None]
    g[..., 0] += 2.0 * beta * p[..., 0] * base
    if mh > 0:
        g += (2.0 * mh * r2 ** (mh - 1) * q2)[..., None] * p
    return s * g - 2.0 * q * p


# ---------------------------------------------------------------------------
# spatial factors
# ---------------------------------------------------------------------------

def _c(amp: float, x: np.ndarray) -> np.ndarray:
    return 1.0 + amp * np.mean(np.sin(TWO_PI * x), axis=-1)


def _Dc(amp: float, x: np.ndarray) -> np.ndarray:
    return amp * TWO_PI / x.shape[-1] * np.cos(TWO_PI * x)


def _V(amp: float, x: np.ndarray) -> np.ndarray:
    return amp * np.mean(0.5 * (1.0 - np.cos(TWO_PI * x)), axis=-1)


def _DV(amp: float, x: np.ndarray) -> np.ndarray:
    return amp * np.pi / x.shape[-1] * np.sin(TWO_PI * x)


@dataclass(frozen=True)
class KernelSpec:
    """Native description of ``c(x) K(p) - V(x)`` consumed by the step kernels."""

    kind: int
    params: tuple[float, float, float, float, float]
    c_amp: float = 0.0
    v_amp: float = 0.0

    def c(self, x):
        return _c(self.c_amp, x)

    def V(self, x):
        return _V(self.v_amp, x)


@dataclass(frozen=True)
class HamiltonianModel:
    """Bundle of vectorized evaluators for ``H``, ``D_pH`` and ``D_xH``.

    ``eval_H(x, p)`` maps arrays of shape ``(..., n)`` to ``(...)``; the two
    gradient evaluators return ``(..., n)``.
    """

    name: str
    dim: int
    eval_H: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eval_DpH: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eval_DxH: Callable[[np.ndarray, np.ndarray], np.ndarray]
    theta: float | None = None
    convex_in_p: bool = False
    x_independent: bool = False
    hbar0: float | None = None
    kernel: KernelSpec | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if self.theta is not None and self.theta <= 0:
            raise ValueError("theta must be positive")

    def H(self, x, p) -> np.ndarray:
        return self.eval_H(as_points(x, self.dim), as_points(p, self.dim))

    def DpH(self, x, p) -> np.ndarray:
        return self.eval_DpH(as_points(x, self.dim), as_points(p, self.dim))

    def DxH(self, x, p) -> np.ndarray:
        return self.eval_DxH(as_points(x, self.dim), as_points(p, self.dim))

    def momentum_radius(self, v_norm: float = 0.0) -> float:
        """Radius of a momentum box that contains the maximizer of ``p.v - H``."""
        if self.kernel is None:
            return max(10.0, 4.0 * (1.0 + v_norm))
        s, m, beta, q, shift = self.kernel.params
        if self.kernel.kind == KIND_SHIFTED_ABS:
            return abs(shift) + 2.0 + v_norm
        cmin = 1.0 - abs(self.kernel.c_amp)
        lead = s * m * min(1.0, 1.0 + beta) * cmin
        return 1.5 * ((v_norm + 2.0 * abs(q) + 1.0) / lead) ** (1.0 / (m - 1)) + 1.0


def _separable(name, dim, kind, kparams, c_amp=0.0, v_amp=0.0, **meta) -> HamiltonianModel:
    spec = KernelSpec(kind=kind, params=tuple(float(a) for a in kparams), c_amp=c_amp, v_amp=v_amp)

    def eval_H(x, p):
        return _c(c_amp, x) * momentum_K(kind, spec.params, p) - _V(v_amp, x)

    def eval_DpH(x, p):
        return _c(c_amp, x)[..., None] * momentum_DK(kind, spec.params, p)

    def eval_DxH(x, p):
        K = momentum_K(kind, spec.params, p)
        return _Dc(c_amp, x) * K[..., None] - _DV(v_amp, x)

    x_indep = c_amp == 0.0 and v_amp == 0.0
    return HamiltonianModel(
        name=name, dim=dim, eval_H=eval_H, eval_DpH=eval_DpH, eval_DxH=eval_DxH,
        x_independent=x_indep, kernel=spec, **meta,
    )


def quartic_double_well(dim: int = 1) -> HamiltonianModel:
    """``H(p) = |p|^4 - |p|^2``; satisfies (A2) with theta = 1 and has zero effective value."""
    return _separable("quartic_double_well", dim, KIND_POWER, (1.0, 4, 0.0, 1.0, 0.0),
                      theta=1.0, convex_in_p=False, hbar0=0.0, params={"dim": dim})


def shifted_abs(shift: float = 10.0) -> HamiltonianModel:
    """``H(p) = |p + a| - a`` in one dimension (traveling-wave counterexample)."""
    return _separable("shifted_abs", 1, KIND_SHIFTED_ABS, (0.0, 2, 0.0, 0.0, shift),
                      theta=None, convex_in_p=True, hbar0=0.0, params={"shift": shift})


def separable_kv(dim: int = 1, m: int = 2, beta: float = 0.0, v_amp: float = 1.0,
                 k_scale: float = 1.0) -> HamiltonianModel:
    """``H = K(p) - V(x)`` with ``K`` homogeneous of degree ``m`` and ``min V = 0``."""
    if m < 2 or m % 2:
        raise ValueError("m must be an even integer >= 2")
    if beta <= -1.0 or k_scale <= 0.0 or v_amp <= 0.0:
        raise ValueError("need beta > -1, k_scale > 0, v_amp > 0")
    convex = dim == 1 or m == 2 or beta == 0.0
    return _separable("separable_kv", dim, KIND_POWER, (k_scale, m, beta, 0.0, 0.0), v_amp=v_amp,
                      theta=float(m - 1), convex_in_p=convex, hbar0=0.0,
                      params={"dim": dim, "m": m, "beta": beta, "v_amp": v_amp, "k_scale": k_scale})


def product_ck(dim: int = 1, c_amp: float = 0.5) -> HamiltonianModel:
    """``H = c(x) K(p)`` with ``c > 0`` and the double-well ``K(p) = |p|^4 - |p|^2``."""
    if not 0.0 <= c_amp < 1.0:
        raise ValueError("c_amp must lie in [0, 1) to keep c positive")
    return _separable("product_ck", dim, KIND_POWER, (1.0, 4, 0.0, 1.0, 0.0), c_amp=c_amp,
                      theta=1.0, convex_in_p=False, hbar0=0.0, params={"dim": dim, "c_amp": c_amp})


def quadratic_convex(dim: int = 1) -> HamiltonianModel:
    return _separable("quadratic_convex", dim, KIND_POWER, (0.5, 2, 0.0, 0.0, 0.0),
                      theta=1.0, convex_in_p=True, hbar0=0.0, params={"dim": dim})


def quartic_minus_quadratic(dim: int = 2, beta: float = 0.5, c_amp: float = 0.5) -> HamiltonianModel:
    """``c(x) (a(p) - b(p))`` with ``a = |p|^2 (|p|^2 + beta p_1^2)`` and ``b = |p|^2``."""
    if beta <= -1.0:
        raise ValueError("beta must exceed -1")
    if not 0.0 <= c_amp < 1.0:
        raise ValueError("c_amp must lie in [0, 1)")
    return _separable("quartic_minus_quadratic", dim, KIND_POWER, (1.0, 4, beta, 1.0, 0.0),
                      c_amp=c_amp, theta=1.0, convex_in_p=False, hbar0=0.0,
                      params={"dim": dim, "beta": beta, "c_amp": c_amp})


CATALOG: dict[str, Callable[..., HamiltonianModel]] = {
    "quartic_double_well": quartic_double_well,
    "shifted_abs": shifted_abs,
    "separable_kv": separable_kv,
    "product_ck": product_ck,
    "quadratic_convex": quadratic_convex,
    "quartic_minus_quadratic": quartic_minus_quadratic,
}


def build_model(name: str, **params) -> HamiltonianModel:
    """Instantiate a catalog entry by name, e.g. ``build_model("separable_kv", m=4)``."""
    try:
        ctor = CATALOG[name]
    except KeyError:
        raise ValueError(f"unknown Hamiltonian {name!r}; choose from {sorted(CATALOG)}") from None
    return ctor(**params)


# ---------------------------------------------------------------------------
# Legendre transform
# ---------------------------------------------------------------------------

def default_p_box(model: HamiltonianModel, v_norm: float = 0.0, nodes: int = 2001) -> np.ndarray:
    R = model.momentum_radius(v_norm)
    return np.linspace(-R, R, nodes)


def legendre_transform(model: HamiltonianModel, x, v, p_box: np.ndarray | None = None) -> np.ndarray:
    """Brute-force ``L(x, v) = max_p (p.v - H(x, p))`` over a tensor momentum grid.

    ``p_box`` holds the 1-D nodes used along every momentum axis.  Vectorized
    over leading axes of ``x`` and ``v`` (broadcast together).
    """
    if not model.convex_in_p:
        raise ValueError(f"{model.name} is not flagged convex in p; the Legendre dual is not the Lagrangian")
    n = model.dim
    v = as_points(v, n)
    x = np.broadcast_to(as_points(x, n), v.shape)
    if p_box is None:
        p_box = default_p_box(model, float(np.max(np.linalg.norm(v, axis=-1), initial=0.0)),
                              nodes=2001 if n == 1 else 301)
    p_box = np.asarray(p_box, dtype=float)
    if p_box.size == 0:
        raise ValueError("empty momentum box")
    axes = np.meshgrid(*([p_box] * n), indexing="ij")
    P = np.stack([a.ravel() for a in axes], axis=-1)          # (M, n)

    flat_v = v.reshape(-1, n)
    flat_x = x.reshape(-1, n)
    out = np.empty(flat_v.shape[0])
    chunk = max(1, 2_000_000 // P.shape[0])
    for lo in range(0, flat_v.shape[0], chunk):
        xv = flat_x[lo:lo + chunk]
        vv = flat_v[lo:lo + chunk]
        Hx = model.eval_H(np.broadcast_to(xv[:, None, :], (xv.shape[0], P.shape[0], n)),
                          np.broadcast_to(P[None], (xv.shape[0], P.shape[0], n)))
        out[lo:lo + chunk] = np.max(vv @ P.T - Hx, axis=1)
    return out.reshape(v.shape[:-1])


# ---------------------------------------------------------------------------
# Poisson bracket and test observables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Observable:
    """Smooth test function ``psi(x, p)`` with the derivatives the brackets need."""

    name: str
    value: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_x: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad_p: Callable[[np.ndarray, np.ndarray], np.ndarray]
    hess_p: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zeros_vec(x, p):
    return np.zeros(np.broadcast_shapes(x.shape, p.shape))


def _zeros_mat(x, p):
    s = np.broadcast_shapes(x.shape, p.shape)
    return np.zeros(s + (s[-1],))


def half_square_norm() -> Observable:
    return Observable(
        "half_square_norm",
        lambda x, p: 0.5 * np.sum(p * p, axis=-1),
        _zeros_vec,
        lambda x, p: np.broadcast_to(p, np.broadcast_shapes(x.shape, p.shape)).copy(),
        lambda x, p: np.broadcast_to(np.eye(p.shape[-1]), _zeros_mat(x, p).shape).copy(),
    )


def momentum_component(i: int) -> Observable:
    def gp(x, p):
        g = _zeros_vec(x, p)
        g[..., i] = 1.0
        return g
    return Observable(f"p{i}", lambda x, p: np.broadcast_to(p[..., i], np.broadcast_shapes(x.shape, p.shape)[:-1]),
                      _zeros_vec, gp, _zeros_mat)


def sin_x_times_p(i: int, j: int) -> Observable:
    def val(x, p):
        return np.sin(TWO_PI * x[..., i]) * p[..., j]

    def gx(x, p):
        g = _zeros_vec(x, p)
        g[..., i] = TWO_PI * np.cos(TWO_PI * x[..., i]) * p[..., j]
        return g

    def gp(x, p):
        g = _zeros_vec(x, p)
        g[..., j] = np.sin(TWO_PI * x[..., i])
        return g
    return Observable(f"sin(2pi x{i}) p{j}", val, gx, gp, _zeros_mat)


def momentum_product(i: int, j: int) -> Observable:
    def gp(x, p):
        g = _zeros_vec(x, p)
        g[..., i] += p[..., j]
        g[..., j] += p[..., i]
        return g

    def hp(x, p):
        h = _zeros_mat(x, p)
        h[..., i, j] += 1.0
        h[..., j, i] += 1.0
        return h
    return Observable(f"p{i} p{j}", lambda x, p: p[..., i] * p[..., j] + 0.0 * x[..., 0], _zeros_vec, gp, hp)


def constant_observable(c: float = 1.0) -> Observable:
    return Observable("const", lambda x, p: np.full(np.broadcast_shapes(x.shape, p.shape)[:-1], c),
                      _zeros_vec, _zeros_vec, _zeros_mat)


def default_observables(dim: int) -> list[Observable]:
    obs = [half_square_norm()]
    obs += [momentum_component(i) for i in range(dim)]
    obs += [sin_x_times_p(i, j) for i in range(dim) for j in range(dim)]
    obs += [momentum_product(i, j) for i in range(dim) for j in range(i, dim)]
    return obs


def poisson_bracket(model: HamiltonianModel, psi: Observable, x, p) -> np.ndarray:
    """``{H, psi} = D_pH . D_x psi - D_xH . D_p psi``."""
    x = as_points(x, model.dim)
    p = as_points(p, model.dim)
    return (np.sum(model.eval_DpH(x, p) * psi.grad_x(x, p), axis=-1)
            - np.sum(model.eval_DxH(x, p) * psi.grad_p(x, p), axis=-1))


# ---------------------------------------------------------------------------
# assumption checks
# ---------------------------------------------------------------------------

@dataclass
class A2Report:
    defects: np.ndarray            # D_pH.p - (theta+1) H per sample
    violations: list[int]          # sample indices failing the pointwise inequality
    max_defect: float              # largest violation amount (0 when all pass)
    a2prime_violations: list[int]  # sample indices where s -> s^-(theta+1) H(x, sp) decreases at s = 1
    disagreements: list[int]       # samples where the two verdicts differ

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def agree(self) -> bool:
        return not self.disagreements


def check_A2(model: HamiltonianModel, x, p, theta: float, tol: float = 1e-10,
             ladder_step: float = 1e-5, rel_tol: float = 1e-8) -> A2Report:
    """Pointwise (A2) inequality plus the equivalent ray-monotonicity form.

    The monotonicity check evaluates ``phi(s) = s^-(theta+1) H(x, s p)`` at
    ``s = exp(+-h)``; the symmetric log-difference approximates ``phi'(1)``,
    which equals the (A2) defect.  Both verdicts share the threshold
    ``tol + rel_tol (1 + |H| + |D_pH.p|)`` so they differ only when the defect
    sits within the O(h^2) differencing error of that threshold.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")
    x = np.atleast_2d(as_points(x, model.dim))
    p = np.atleast_2d(as_points(p, model.dim))
    if x.shape[0] == 0:
        raise ValueError("no samples")
    H = model.eval_H(x, p)
    radial = np.sum(model.eval_DpH(x, p) * p, axis=-1)
    defects = radial - (theta + 1.0) * H
    thr = tol + rel_tol * (1.0 + np.abs(H) + np.abs(radial))
    bad = defects < -thr

    s_hi, s_lo = np.exp(ladder_step), np.exp(-ladder_step)
    phi_hi = s_hi ** (-(theta + 1.0)) * model.eval_H(x, s_hi * p)
    phi_lo = s_lo ** (-(theta + 1.0)) * model.eval_H(x, s_lo * p)
    slope = (phi_hi - phi_lo) / (2.0 * ladder_step)
    bad_prime = slope < -thr

    return A2Report(
        defects=defects,
        violations=np.flatnonzero(bad).tolist(),
        max_defect=float(max(0.0, -defects.min())),
        a2prime_violations=np.flatnonzero(bad_prime).tolist(),
        disagreements=np.flatnonzero(bad != bad_prime).tolist(),
    )


def ray_monotone(model: HamiltonianModel, x, p, theta: float,
                 s_ladder: np.ndarray | None = None, tol: float = 1e-10) -> bool:
    """Whether ``s^-(theta+1) H(x, s p)`` is nondecreasing along a whole geometric ladder."""
    if s_ladder is None:
        s_ladder = np.geomspace(1e-2, 1e2, 81)
    x = as_points(x, model.dim)
    p = as_points(p, model.dim)
    s = np.asarray(s_ladder)[:, None]
    vals = s[:, 0] ** (-(theta + 1.0)) * model.eval_H(np.broadcast_to(x, (s.shape[0], model.dim)), s * p)
    return bool(np.all(np.diff(vals) >= -tol * (1.0 + np.abs(vals[1:]))))


@dataclass
class A1Report:
    radii: np.ndarray
    minima: np.ndarray
    monotone: bool

    @property
    def warning(self) -> str | None:
        if self.monotone:
            return None
        return "min of H^2/2 + D_xH.p is not increasing along the radius ladder"


def check_A1_proxy(model: HamiltonianModel, radius_ladder: Sequence[float],
                   n_x: int = 64, n_dir: int = 64) -> A1Report:
    """Finite-radius proxy for the coercivity assumption: min over x and |p| = r of H^2/2 + D_xH.p."""
    r = np.asarray(radius_ladder, dtype=float)
    if np.any(np.diff(r) <= 0):
        raise ValueError("radius ladder must be increasing")
    g = (np.arange(n_x) + 0.5) / n_x
    if model.dim == 1:
        X = g[:, None]
        dirs = np.array([[1.0], [-1.0]])
    else:
        gx, gy = np.meshgrid(g[::4], g[::4], indexing="ij")
        X = np.stack([gx.ravel(), gy.ravel()], axis=-1)
        ang = np.linspace(0.0, TWO_PI, n_dir, endpoint=False)
        dirs = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    minima = np.empty(r.size)
    for k, rk in enumerate(r):
        P = (rk * dirs)[None, :, :]
        XX = X[:, None, :]
        XX, P = np.broadcast_arrays(XX, P)
        H = model.eval_H(XX, P)
        q = 0.5 * H**2 + np.sum(model.eval_DxH(XX, P) * P, axis=-1)
        minima[k] = q.min()
    return A1Report(radii=r, minima=minima, monotone=bool(np.all(np.diff(minima) > 0)))
