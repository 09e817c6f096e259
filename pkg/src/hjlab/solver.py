"""Forward solvers (viscous central scheme, Lax-Friedrichs) and ODE/Hopf-Lax oracles."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CflViolation, MonotonicityViolation, PecletViolation, StepRejected
from .grid import Field, PeriodicGrid, central_gradient
from .hamiltonian import HamiltonianModel, as_points
from .kernels import Stepper

VISCOUS = "viscous_central"
INVISCID = "inviscid_lf"


@dataclass(eq=False)
class ForwardRun:
    """Time levels ``u^0 .. u^K`` of one explicit run.

    States are kept every ``stride`` steps (``stride == 1`` keeps them all);
    any other level is recomputed bit-for-bit from the nearest earlier
    checkpoint using the recorded step sizes.
    """

    model: HamiltonianModel
    grid: PeriodicGrid
    epsilon: float
    scheme: str
    g: Field
    times: np.ndarray
    dts: np.ndarray
    checkpoints: dict
    stride: int
    final: np.ndarray
    snapshots: dict                        # stop time -> state
    speeds: np.ndarray                     # max |D_pH| (l1) of u^k used for step k
    peclet_ok: np.ndarray                  # per step
    alphas: np.ndarray | None = None       # LF dissipation per step
    stepper: Stepper | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return len(self.dts)

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        """Largest step used (steps are adaptive)."""
        return float(self.dts.max()) if self.K else 0.0

    @property
    def dx(self) -> float:
        return self.grid.dx

    @property
    def retained_all(self) -> bool:
        return self.stride == 1

    @property
    def peclet_held(self) -> bool:
        return bool(np.all(self.peclet_ok))

    def step_index(self, t: float) -> int:
        k = int(np.searchsorted(self.times, t - 1e-12 * max(1.0, abs(t))))
        if k > self.K or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise KeyError(f"t = {t} is not a time level of this run")
        return k

    def _advance(self, u: np.ndarray, k: int) -> np.ndarray:
        if self.scheme == VISCOUS:
            return self.stepper.viscous(u, self.dts[k], self.epsilon)
        return self.stepper.lf(u, self.dts[k], self.alphas[k])

    def state(self, k: int) -> np.ndarray:
        if k < 0:
            k += self.K + 1
        if not 0 <= k <= self.K:
            raise IndexError(k)
        if k == self.K:
            return self.final
        if k in self.checkpoints:
            return self.checkpoints[k]
        k0 = (k // self.stride) * self.stride
        u = self.checkpoints[k0]
        for j in range(k0, k):
            u = self._advance(u, j)
        return u

    def states(self, k0: int = 0, k1: int | None = None) -> Iterator[tuple[int, np.ndarray]]:
        """Yield ``(k, u^k)`` for ``k0 <= k <= k1`` in increasing order."""
        k1 = self.K if k1 is None else k1
        u = self.state(k0)
        yield k0, u
        for k in range(k0, k1):
            u = self.final if k + 1 == self.K else (
                self.checkpoints[k + 1] if (k + 1) in self.checkpoints else self._advance(u, k))
            yield k + 1, u

    def segments_backward(self, k_end: int | None = None) -> Iterator[tuple[int, list]]:
        """Yield ``(k0, [u^k0, ..., u^(k1-1)])`` checkpoint segments below ``k_end``, last first."""
        k_end = self.K if k_end is None else k_end
        starts = sorted(k for k in self.checkpoints if k < k_end)
        bounds = starts + [k_end]
        for a, b in reversed(list(zip(bounds[:-1], bounds[1:]))):
            seg = [self.checkpoints[a]]
            for k in range(a, b - 1):
                seg.append(self._advance(seg[-1], k))
            yield a, seg

    def field(self, k: int) -> Field:
        return Field(self.grid, self.state(k).copy())

    def at(self, t: float) -> np.ndarray:
        for ts, u in self.snapshots.items():
            if abs(ts - t) <= 1e-12 * max(1.0, abs(t)):
                return u
        return self.state(self.step_index(t))

    def summary(self) -> dict:
        return {
            "scheme": self.scheme, "model": self.model.name, "dim": self.grid.dim, "N": self.grid.N,
            "epsilon": self.epsilon, "T": self.T, "steps": self.K,
            "dt_max": self.dt, "dt_min": float(self.dts.min()) if self.K else 0.0,
            "P_max": float(self.speeds.max()) if self.K else 0.0,
            "alpha_max": float(self.alphas.max()) if self.alphas is not None and self.K else None,
            "peclet_steps_violated": int(np.sum(~self.peclet_ok)),
            "backend": self.stepper.backend if self.stepper else None, **self.meta,
        }


class _Recorder:
    def __init__(self, state_bytes: int, memory_budget: float):
        self.cap = max(2, int(memory_budget // max(state_bytes, 1)))
        self.stride = 1
        self.store: dict[int, np.ndarray] = {}

    def offer(self, k: int, u: np.ndarray):
        if k % self.stride:
            return
        self.store[k] = u.copy()
        if len(self.store) > self.cap:
            self.stride *= 2
            self.store = {j: v for j, v in self.store.items() if j % self.stride == 0}


def _stops(T: float, stops: Sequence[float] | None) -> list[float]:
    if not T > 0:
        raise ValueError("T must be positive")
    s = sorted({float(t) for t in (() if stops is None else stops) if 0.0 < t < T} | {float(T)})
    return s


def peclet_a_priori(model: HamiltonianModel, g: Field, box_factor: float = 1.5, samples: int = 129) -> float:
    """Speed bound ``max |D_pH|`` over nodes and ``|p| <= box_factor (max|D_h g| + 1)``."""
    grid = g.grid
    gmax = max(float(np.max(np.abs(c.values))) for c in central_gradient(g))
    R = box_factor * (gmax + 1.0)
    ax = np.linspace(-R, R, samples if grid.dim == 1 else 33)
    P = np.stack([m.ravel() for m in np.meshgrid(*([ax] * grid.dim), indexing="ij")], axis=-1)
    P = P[np.linalg.norm(P, axis=-1) <= R + 1e-12]
    X = grid.coords().reshape(-1, grid.dim)
    X = X[:: max(1, X.shape[0] // 128)]
    b = model.eval_DpH(X[:, None, :], P[None, :, :])
    return float(np.max(np.abs(b)))


def peclet_min_nodes(P_max: float, epsilon: float) -> int:
    """Smallest power-of-two ``N`` with ``epsilon >= P_max / (2 N)``."""
    need = P_max / (2.0 * epsilon)
    return max(8, 1 << max(3, math.ceil(math.log2(max(need, 1.0)))))


def stable_dt(dx: float, dim: int, epsilon: float, P1: float, safety: float) -> float:
    """``safety * min(dx^2 / (2 n eps + dx P), 2 eps / P^2)``.

    The second bound is the advective limit of explicit centered differences;
    it is inactive whenever the Peclet condition holds.
    """
    dt = dx * dx / (2.0 * dim * epsilon + dx * P1)
    if P1 > 0.0:
        dt = min(dt, 2.0 * epsilon / P1 / P1)
    return safety * dt


def solve_viscous(model: HamiltonianModel, g: Field, epsilon: float, T: float, grid: PeriodicGrid | None = None,
                  safety: float = 0.9, peclet: str = "raise", stops: Sequence[float] | None = None,
                  dt: float | None = None, memory_budget: float = 512e6, backend: str | None = None,
                  max_steps: int = 50_000_000) -> ForwardRun:
    """Explicit central scheme ``u <- u - dt (H(x, D_h u) - eps Lap_h u)`` up to time ``T``.

    Step sizes adapt to the realized speed of ``u^k`` unless ``dt`` is fixed.
    ``peclet="raise"`` stops at the first step whose gradients break the
    Peclet condition; ``"record"`` only flags such steps.  Every time in
    ``stops`` is landed on exactly and its state kept.
    """
    grid = grid or g.grid
    if g.grid != grid:
        raise ValueError("initial field lives on a different grid")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    if peclet not in ("raise", "record"):
        raise ValueError("peclet must be 'raise' or 'record'")
    stepper = Stepper(model, grid, backend)
    targets = _stops(T, stops)
    dx, n = grid.dx, grid.dim
    u = np.ascontiguousarray(g.values, dtype=float).copy()
    rec = _Recorder(u.nbytes, memory_budget)
    rec.offer(0, u)
    times, dts, speeds, pok = [0.0], [], [], []
    snaps = {}
    t, k, si = 0.0, 0, 0
    buf = np.empty_like(u)
    t0 = time.perf_counter()
    while si < len(targets):
        P1, Pinf = stepper.speeds(u)
        if not math.isfinite(P1):
            raise CflViolation(f"non-finite state at step {k}, t={t:.4g}")
        ok = epsilon >= 0.5 * dx * Pinf * (1.0 - 1e-12)
        if not ok and peclet == "raise":
            raise PecletViolation(
                f"step {k}, t={t:.4g}: max|D_pH| = {Pinf:.4g} needs epsilon >= {0.5 * dx * Pinf:.4g} "
                f"(have {epsilon:.4g}); refine to N >= {peclet_min_nodes(Pinf, epsilon)} or raise epsilon")
        bound = stable_dt(dx, n, epsilon, P1, 1.0)
        if dt is None:
            h = stable_dt(dx, n, epsilon, P1, safety)
        else:
            h = float(dt)
            if h > bound * (1.0 + 1e-12):
                raise CflViolation(f"step {k}: dt = {h:.4g} exceeds the stability bound {bound:.4g}")
        target = targets[si]
        land = t + h >= target - 1e-13 * max(1.0, target)
        if land:
            h = target - t
        stepper.viscous(u, h, epsilon, out=buf)
        u, buf = buf, u
        k += 1
        t = target if land else t + h
        times.append(t)
        dts.append(h)
        speeds.append(P1)
        pok.append(ok)
        if land:
            snaps[target] = u.copy()
            si += 1
        rec.offer(k, u)
        if k >= max_steps:
            raise CflViolation(f"step budget {max_steps} exhausted at t={t:.4g}")
    if not np.all(np.isfinite(u)):
        raise CflViolation("non-finite final state")
    rec.store.pop(k, None)
    return ForwardRun(model=model, grid=grid, epsilon=float(epsilon), scheme=VISCOUS, g=g,
                      times=np.asarray(times), dts=np.asarray(dts), checkpoints=rec.store, stride=rec.stride,
                      final=u, snapshots=snaps, speeds=np.asarray(speeds), peclet_ok=np.asarray(pok, dtype=bool),
                      stepper=stepper, meta={"safety": safety, "wall_s": time.perf_counter() - t0})


def solve_inviscid_lf(model: HamiltonianModel, g: Field, T: float, grid: PeriodicGrid | None = None,
                      alpha: float | str = "auto", safety: float = 0.9, stops: Sequence[float] | None = None,
                      memory_budget: float = 256e6, backend: str | None = None,
                      max_steps: int = 50_000_000) -> ForwardRun:
    """Monotone Lax-Friedrichs scheme for ``u_t + H(x, Du) = 0``.

    ``alpha="auto"`` sets the dissipation to 1.05 times the speed measured
    over the one-sided gradient box at every step; a fixed ``alpha`` below
    that measured speed raises :class:`MonotonicityViolation`.
    """
    grid = grid or g.grid
    if not 0 < safety <= 1:
        raise ValueError("safety must lie in (0, 1]")
    stepper = Stepper(model, grid, backend)
    targets = _stops(T, stops)
    dx, n = grid.dx, grid.dim
    u = np.ascontiguousarray(g.values, dtype=float).copy()
    rec = _Recorder(u.nbytes, memory_budget)
    rec.offer(0, u)
    times, dts, speeds, alphas = [0.0], [], [], []
    snaps = {}
    t, k, si = 0.0, 0, 0
    buf = np.empty_like(u)
    t0 = time.perf_counter()
    while si < len(targets):
        sp = stepper.lf_speed(u)
        if not math.isfinite(sp):
            raise CflViolation(f"non-finite state at step {k}, t={t:.4g}")
        if alpha == "auto":
            a = max(1.05 * sp, 1e-8)
        else:
            a = float(alpha)
            if a < sp * (1.0 - 1e-9):
                raise MonotonicityViolation(f"step {k}: alpha = {a:.4g} below measured speed {sp:.4g}")
        h = safety * dx / (n * a)
        target = targets[si]
        land = t + h >= target - 1e-13 * max(1.0, target)
        if land:
            h = target - t
        stepper.lf(u, h, a, out=buf)
        u, buf = buf, u
        k += 1
        t = target if land else t + h
        times.append(t)
        dts.append(h)
        speeds.append(sp)
        alphas.append(a)
        if land:
            snaps[target] = u.copy()
            si += 1
        rec.offer(k, u)
        if k >= max_steps:
            raise CflViolation(f"step budget {max_steps} exhausted at t={t:.4g}")
    rec.store.pop(k, None)
    return ForwardRun(model=model, grid=grid, epsilon=0.0, scheme=INVISCID, g=g,
                      times=np.asarray(times), dts=np.asarray(dts), checkpoints=rec.store, stride=rec.stride,
                      final=u, snapshots=snaps, speeds=np.asarray(speeds), peclet_ok=np.ones(k, dtype=bool),
                      alphas=np.asarray(alphas), stepper=stepper,
                      meta={"safety": safety, "wall_s": time.perf_counter() - t0})


# ---------------------------------------------------------------------------
# Hopf-Lax oracle
# ---------------------------------------------------------------------------

def hopf_lax(g: Field, L_eval: Callable[[np.ndarray], np.ndarray], z, T: float, shifts: int,
             model: HamiltonianModel | None = None) -> float:
    """``min_{y, |k| <= shifts} g(y) + T L((z - y + k) / T)`` over grid nodes ``y``."""
    if model is not None and not (model.x_independent and model.convex_in_p):
        raise ValueError("the Hopf-Lax formula needs an x-independent convex Hamiltonian")
    if not T > 0:
        raise ValueError("T must be positive")
    grid = g.grid
    n = grid.dim
    z = np.atleast_1d(np.asarray(z, dtype=float))
    Y = grid.coords().reshape(-1, n)
    gv = g.values.reshape(-1)
    ks = np.arange(-shifts, shifts + 1)
    K = np.stack([m.ravel() for m in np.meshgrid(*([ks] * n), indexing="ij")], axis=-1)
    best = np.inf
    for kv in K:
        v = (z[None, :] - Y + kv[None, :]) / T
        best = min(best, float(np.min(gv + T * L_eval(v))))
    return best


# ---------------------------------------------------------------------------
# characteristics
# ---------------------------------------------------------------------------

class SmoothInterpolant:
    """Periodic smooth interpolant of a node field (cubic spline in 1-D, trigonometric in 2-D)."""

    def __init__(self, g: Field):
        self.grid = g.grid
        N = g.grid.N
        if g.grid.dim == 1:
            xs = np.arange(N + 1) / N
            ys = np.append(g.values, g.values[0])
            self._spl = CubicSpline(xs, ys, bc_type="periodic")
            self._dspl = self._spl.derivative()
        else:
            self._hat = np.fft.fft2(g.values) / N**2
            k = np.fft.fftfreq(N, 1.0 / N)
            self._k0, self._k1 = np.meshgrid(k, k, indexing="ij")

    def _modes(self, x):
        ph = np.exp(2j * np.pi * (x[..., 0, None, None] * self._k0 + x[..., 1, None, None] * self._k1))
        return self._hat * ph

    def value(self, x) -> np.ndarray:
        x = as_points(x, self.grid.dim)
        if self.grid.dim == 1:
            return self._spl(np.mod(x[..., 0], 1.0))
        return np.real(np.sum(self._modes(x), axis=(-2, -1)))

    def gradient(self, x) -> np.ndarray:
        x = as_points(x, self.grid.dim)
        if self.grid.dim == 1:
            return self._dspl(np.mod(x[..., 0], 1.0))[..., None]
        m = self._modes(x)
        g0 = np.real(np.sum(2j * np.pi * self._k0 * m, axis=(-2, -1)))
        g1 = np.real(np.sum(2j * np.pi * self._k1 * m, axis=(-2, -1)))
        return np.stack([g0, g1], axis=-1)


@dataclass
class CharTrajectory:
    t: np.ndarray
    x: np.ndarray
    p: np.ndarray
    zval: np.ndarray
    energy_drift: float
    ode_dt: float
    crossing_flag: bool = False
    crossing_time: float | None = None


def _hamiltonian_rhs(model: HamiltonianModel):
    def rhs(x, p):
        b = model.eval_DpH(x, p)
        return b, -model.eval_DxH(x, p), np.sum(p * b, axis=-1) - model.eval_H(x, p)
    return rhs


def _rk4(model: HamiltonianModel, x, p, zv, T: float, h: float, record: bool = True):
    """Classical RK4 for the characteristic system; vectorized over leading axes."""
    rhs = _hamiltonian_rhs(model)
    nsteps = max(1, int(math.ceil(T / h - 1e-12)))
    h = T / nsteps
    ts = [0.0]
    xs, ps, zs = [x.copy()], [p.copy()], [zv.copy()]
    for _ in range(nsteps):
        a1, b1, c1 = rhs(x, p)
        a2, b2, c2 = rhs(x + 0.5 * h * a1, p + 0.5 * h * b1)
        a3, b3, c3 = rhs(x + 0.5 * h * a2, p + 0.5 * h * b2)
        a4, b4, c4 = rhs(x + h * a3, p + h * b3)
        x = x + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
        p = p + h / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
        zv = zv + h / 6.0 * (c1 + 2 * c2 + 2 * c3 + c4)
        ts.append(ts[-1] + h)
        if record:
            xs.append(x)
            ps.append(p)
            zs.append(zv)
    if not record:
        xs, ps, zs = [xs[0], x], [ps[0], p], [zs[0], zv]
        ts = [0.0, T]
    return np.asarray(ts), np.stack(xs), np.stack(ps), np.stack(zs), h


def integrate_characteristics(model: HamiltonianModel, g: Field, x0, T: float, ode_dt: float | None = None,
                              drift_tol: float = 1e-8, min_dt: float = 1e-9) -> CharTrajectory:
    """RK4 integration of ``x' = D_pH, p' = -D_xH, z' = p.D_pH - H`` from ``(x0, Dg(x0), g(x0))``.

    The step is halved while the energy drift exceeds ``drift_tol`` (relative
    to ``1 + |H|``); :class:`StepRejected` is raised below ``min_dt``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    h = 1e-3 * T if ode_dt is None else float(ode_dt)
    if h > 1e-3 * T * (1 + 1e-12):
        raise ValueError("ode_dt must not exceed 1e-3 T")
    interp = SmoothInterpolant(g)
    x = as_points(np.asarray(x0, dtype=float), model.dim).reshape(model.dim)
    p = interp.gradient(x).reshape(model.dim)
    zv = np.asarray(float(interp.value(x)))
    H0 = float(model.eval_H(x, p))
    while True:
        ts, xs, ps, zs, hh = _rk4(model, x, p, zv, T, h)
        drift = float(np.max(np.abs(model.eval_H(xs, ps) - H0)))
        if drift <= drift_tol * (1.0 + abs(H0)):
            return CharTrajectory(t=ts, x=xs, p=ps, zval=zs, energy_drift=drift, ode_dt=hh)
        h *= 0.5
        if h < min_dt:
            raise StepRejected(f"energy drift {drift:.3g} above tolerance down to ode_dt = {min_dt:g}")


def _shoot_all(model, g: Field, x0: np.ndarray, T: float, ode_dt: float | None, record: bool):
    interp = SmoothInterpolant(g)
    X = as_points(x0, model.dim)
    P = interp.gradient(X)
    Z = interp.value(X)
    h = 1e-3 * T if ode_dt is None else ode_dt
    return _rk4(model, X, P, Z, T, h, record=record)


def crossing_scan(model: HamiltonianModel, g: Field, x0_grid, T: float, ode_dt: float | None = None) -> float | None:
    """Earliest time at which two neighbouring characteristics swap order (1-D only)."""
    if model.dim != 1:
        raise ValueError("crossing_scan is one-dimensional")
    x0 = np.sort(np.asarray(x0_grid, dtype=float))
    ts, xs, _, _, _ = _shoot_all(model, g, x0, T, ode_dt, record=True)
    pos = xs[..., 0]                                   # (steps, M)
    wrapped = np.concatenate([pos, pos[:, :1] + 1.0], axis=1)
    gaps = np.diff(wrapped, axis=1).min(axis=1)
    bad = np.flatnonzero(gaps <= 0.0)
    if bad.size == 0:
        return None
    j = int(bad[0])
    if j == 0:
        return 0.0
    g0, g1 = gaps[j - 1], gaps[j]
    return float(ts[j - 1] + (ts[j] - ts[j - 1]) * g0 / (g0 - g1))


@dataclass
class ShootResult:
    z: float
    T: float
    roots: np.ndarray          # launch points x0 with x(T; x0) = z mod 1
    values: np.ndarray         # characteristic value at each root

    @property
    def multiplicity(self) -> int:
        return int(self.roots.size)


def shoot(model: HamiltonianModel, g: Field, z: float, T: float, n0: int = 4001,
          ode_dt: float | None = None) -> ShootResult:
    """All characteristics reaching ``z`` at time ``T`` and their values (1-D)."""
    if model.dim != 1:
        raise ValueError("shoot is one-dimensional")
    x0 = np.arange(n0) / n0
    _, xs, _, zs, _ = _shoot_all(model, g, x0, T, ode_dt, record=False)
    xT, zT = xs[-1][:, 0], zs[-1]
    # periodic extension of x0 -> x(T) has degree one: follow the lifted map
    lifted = np.concatenate([xT, xT[:1] + 1.0])
    ext_x0 = np.concatenate([x0, [1.0]])
    ext_z = np.concatenate([zT, zT[:1]])
    roots, vals = [], []
    shift0 = math.floor(lifted.min() - z) - 1
    for s in range(shift0, shift0 + int(math.ceil(lifted.max() - lifted.min())) + 3):
        f = lifted - (z + s)
        sgn = np.sign(f)
        idx = np.flatnonzero(sgn[:-1] * sgn[1:] < 0)
        exact = np.flatnonzero(f[:-1] == 0.0)
        for i in sorted(set(idx.tolist()) | set(exact.tolist())):
            w = 0.0 if f[i] == 0.0 else f[i] / (f[i] - f[i + 1])
            roots.append(ext_x0[i] + w * (ext_x0[i + 1] - ext_x0[i]))
            vals.append(ext_z[i] + w * (ext_z[i + 1] - ext_z[i]))
    roots = np.mod(np.asarray(roots), 1.0)
    vals = np.asarray(vals)
    if roots.size:
        # refine each root's value by integrating from the interpolated launch point
        _, _, _, zr, _ = _shoot_all(model, g, roots, T, ode_dt, record=False)
        vals = zr[-1]
    return ShootResult(z=float(z), T=float(T), roots=roots, values=vals)
