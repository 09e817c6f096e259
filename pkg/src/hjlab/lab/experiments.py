"""The experiment catalogue.  Each ``run_*`` takes an :class:`ExperimentConfig`
and returns a :class:`Report` holding checks, tables and plot series."""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import measures as ms
from ..adjoint import duality_check, nam_diagnostic, solve_adjoint, ut_representation
from ..cell import check_spread, ergodic_constant, fit_loglog, stationary_run
from ..errors import ConfigError
from ..grid import PeriodicGrid
from ..hamiltonian import check_A2
from ..kernels import Stepper, lap_nd
from ..solver import (crossing_scan, integrate_characteristics, peclet_a_priori, peclet_min_nodes,
                      shoot, solve_inviscid_lf, solve_viscous, stable_dt)
from .config import ExperimentConfig, parse_config


@dataclass
class Check:
    name: str
    value: float
    threshold: float
    relation: str          # "<=" or ">="
    passed: bool
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "relation": self.relation, "passed": self.passed, "note": self.note}


@dataclass
class Report:
    experiment: str
    checks: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)      # name -> list of row dicts
    series: dict = field(default_factory=dict)      # name -> (x, y)
    summary: dict = field(default_factory=dict)
    runs: list = field(default_factory=list)        # scheme constants of each solver run
    timings: dict = field(default_factory=dict)     # wall clock; kept out of hashed outputs

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name, value, threshold, relation="<=", note="") -> Check:
        value = float(value)
        ok = value <= threshold if relation == "<=" else value >= threshold
        c = Check(name, value, float(threshold), relation, bool(ok and math.isfinite(value)), note)
        self.checks.append(c)
        return c

    def add_run(self, label, run):
        s = {k: v for k, v in run.summary().items() if k != "wall_s"}
        self.runs.append({"label": label, **s})
        self.timings[f"run:{label}"] = run.meta.get("wall_s")

    def to_dict(self) -> dict:
        return {"experiment": self.experiment, "passed": self.passed,
                "checks": [c.to_dict() for c in self.checks], "summary": self.summary, "runs": self.runs}


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _viscous_plan(cfg: ExperimentConfig):
    eps = cfg.epsilons if cfg.epsilons else ([cfg.epsilon] if cfg.epsilon else [])
    return eps


def preflight(cfg: ExperimentConfig) -> dict:
    """Experiment-specific validation plus a-priori Peclet/CFL feasibility.

    Raises :class:`ConfigError` (or ``InsufficientSpread``) before anything is
    run or written.  Returns the feasibility estimates for the manifest.
    """
    exp = cfg.experiment
    model = cfg.build_model()
    grid = cfg.make_grid()
    g = cfg.initial_field(grid)
    opts = cfg.options
    if exp == "rate_vv":
        _require(cfg.epsilons is not None, "rate_vv needs an epsilons list")
        check_spread(cfg.epsilons)
        _require(int(opts.get("ref_factor", 4)) >= 2, "ref_factor must be at least 2")
    if exp in ("ut_bound", "monotone_power", "representation", "dissipative"):
        _require(cfg.epsilon is not None or cfg.epsilons is not None, f"{exp} needs epsilon")
    if exp == "mather_pipeline":
        _require(cfg.epsilon is not None or cfg.epsilons is not None, "mather_pipeline needs epsilon or epsilons")
    if exp in ("ut_bound", "monotone_power", "large_time", "mather_pipeline"):
        if model.theta is None:
            raise ConfigError(f"{model.name} has no homogeneity exponent theta")
    if exp == "ut_bound":
        _require(cfg.Ts is not None, "ut_bound needs a Ts ladder")
    if exp == "monotone_power":
        _require(cfg.Ts is not None or "T_range" in opts, "monotone_power needs Ts or options.T_range")
        _require(float(np.min(g.values)) >= 0.0, "monotone_power needs g >= 0 at every node")
    if exp == "large_time":
        _require(cfg.T is not None, "large_time needs T (the horizon T_max)")
        _require(opts.get("scheme", "viscous") in ("viscous", "lf"), "options.scheme is 'viscous' or 'lf'")
        if opts.get("scheme", "viscous") == "viscous":
            _require(cfg.epsilon is not None, "viscous large_time needs epsilon")
        lad = cfg.Ts or []
        _require(all(t < cfg.T for t in lad), "large_time ladder must lie below T")
    if exp == "oscillation":
        _require(cfg.Ts is not None or cfg.T is not None, "oscillation needs T or Ts")
        tw = opts.get("traveling_wave")
        if tw:
            _require(model.name == "shifted_abs" and cfg.initial.get("kind", "sin") == "sin"
                     and float(cfg.initial.get("amplitude", 1.0)) == 1.0 and float(cfg.initial.get("offset", 0.0)) == 0.0,
                     "the traveling-wave oracle needs shifted_abs with g = sin(2 pi x)")
    if exp == "representation":
        _require(cfg.T is not None, "representation needs T")
        nam = opts.get("nam")
        if nam:
            _require(isinstance(nam, dict) and nam.get("epsilons") and nam.get("Ts"),
                     "options.nam needs epsilons and Ts lists")
    if exp == "characteristics_compare":
        _require(grid.dim == 1, "characteristics_compare is one-dimensional")
    info = {"experiment": exp}
    eps_list = list(_viscous_plan(cfg))
    if exp == "representation" and opts.get("nam"):
        eps_list += list(opts["nam"]["epsilons"])
    if exp == "characteristics_compare":
        eps_list = [cfg.epsilon or 0.02]
    if exp in ("oscillation",) or (exp == "large_time" and opts.get("scheme") == "lf"):
        eps_list = []
    if eps_list:
        g_check = grid.constant(0.0) if exp in ("mather_pipeline", "dissipative") else g
        P = peclet_a_priori(model, g_check)
        P1, _ = Stepper(model, grid).speeds(np.ascontiguousarray(g_check.values))
        min_dt = float(opts.get("min_dt", 1e-12))
        rows = []
        for e in eps_list:
            need = peclet_min_nodes(P, e)
            dt0 = stable_dt(grid.dx, grid.dim, e, P1, cfg.safety) if math.isfinite(P1) else float("nan")
            rows.append({"epsilon": e, "P_a_priori": P, "N_peclet": need, "P_initial": P1, "dt_initial": dt0})
            if cfg.peclet == "raise" and grid.N < need:
                raise ConfigError(f"Peclet condition infeasible at epsilon = {e:g}: a-priori speed {P:.3g} "
                                  f"needs N >= {need} (have {grid.N})")
            if not dt0 >= min_dt:
                raise ConfigError(f"CFL step {dt0:.3g} at epsilon = {e:g} is below min_dt {min_dt:g}")
        info["feasibility"] = rows
    return info


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _pmap(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as ex:
        return list(ex.map(fn, items))


def _node_values(u: np.ndarray, grid: PeriodicGrid, zs) -> np.ndarray:
    return np.array([u[grid.nearest_index(z)] for z in zs])


def _series_xy(x, y):
    return (np.asarray(x, dtype=float).tolist(), np.asarray(y, dtype=float).tolist())


def _default_z(cfg: ExperimentConfig, grid: PeriodicGrid, default) -> np.ndarray:
    if cfg.z is None:
        return np.atleast_2d(np.asarray(default, dtype=float)).reshape(-1, grid.dim)
    return cfg.z_points(grid)


# ---------------------------------------------------------------------------
# rate of vanishing viscosity
# ---------------------------------------------------------------------------

def _rate_errors(args):
    raw, model_spec, eps, ref_fine = args
    cfg = parse_config({**raw, "model": model_spec})
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    T = cfg.T or 1.0
    f = int(cfg.options.get("ref_factor", 4))
    run = solve_viscous(model, g, eps, T, grid, safety=cfg.safety, peclet=cfg.peclet, memory_budget=1e7)
    ref = np.asarray(ref_fine)[(slice(None, None, f),) * grid.dim]
    diff = np.abs(run.final - ref)
    if cfg.z is not None:
        zs = cfg.z_points(grid)
        err = float(np.max(_node_values(diff, grid, zs)))
    else:
        err = float(np.max(diff))
    s = {k: v for k, v in run.summary().items() if k != "wall_s"}
    return err, s, run.meta.get("wall_s")


def _lf_reference(cfg: ExperimentConfig, model_spec: dict):
    c = parse_config({**cfg.to_dict(), "model": model_spec})
    f = int(cfg.options.get("ref_factor", 4))
    fine = cfg.make_grid(cfg.grid["N"] * f)
    ref = solve_inviscid_lf(c.build_model(), c.initial_field(fine), cfg.T or 1.0, fine, safety=cfg.safety,
                            memory_budget=1e7)
    return ref


def run_rate_vv(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("rate_vv")
    eps = check_spread(cfg.epsilons)
    T = cfg.T or 1.0
    raw = cfg.to_dict()
    specs = [("", cfg.model)]
    if cfg.options.get("compare"):
        cmp = cfg.options["compare"]
        specs.append(("compare", cmp if isinstance(cmp, dict) else {"name": cmp, "params": {}}))
    errs = {}
    for label, spec in specs:
        spec = {"name": spec["name"], "params": spec.get("params", {})}
        ref = _lf_reference(cfg, spec)
        rep.add_run(f"{label or 'main'}:lf_reference", ref)
        out = _pmap(_rate_errors, [(raw, spec, float(e), ref.final) for e in eps], workers)
        errs[label] = np.array([o[0] for o in out])
        for e, o in zip(eps, out):
            rep.runs.append({"label": f"{label or 'main'}:eps={e:g}", **o[1]})
            rep.timings[f"run:{label or 'main'}:eps={e:g}"] = o[2]
        rows = [{"model": spec["name"], "epsilon": float(e), "error": float(r),
                 "ratio_to_bound": float(r / ((1 + T) * math.sqrt(e)))} for e, r in zip(eps, errs[label])]
        rep.tables[f"rate_{spec['name']}"] = rows
        rep.series[f"loglog_{spec['name']}"] = _series_xy(np.log10(eps), np.log10(np.maximum(errs[label], 1e-300)))
    main = errs[""]
    slope = fit_loglog(eps, np.maximum(main, 1e-300))
    C = float(np.max(main / ((1 + T) * np.sqrt(eps))))
    rep.summary = {"model": cfg.model["name"], "T": T, "epsilons": eps.tolist(), "errors": main.tolist(),
                   "slope": slope, "C_fit": C}
    rep.check("slope", slope, cfg.tol("min_slope"), ">=", "upper-bound rate 1/2; steeper passes")
    if "compare" in errs:
        ratio = float(np.max(errs["compare"] / main))
        rep.summary.update({"compare_model": specs[1][1]["name"], "compare_errors": errs["compare"].tolist(),
                            "compare_slope": fit_loglog(eps, np.maximum(errs["compare"], 1e-300))})
        rep.check("compare_uniformly_smaller", ratio, 1.0, "<=", "max over epsilon of error ratio compare/main")
    return rep


# ---------------------------------------------------------------------------
# large time
# ---------------------------------------------------------------------------

def run_large_time(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("large_time")
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    Tm = cfg.T
    lad = sorted(cfg.Ts or [Tm * f for f in (0.05, 0.1, 0.2, 0.3, 0.4, 0.5)])
    scheme = cfg.options.get("scheme", "viscous")
    if scheme == "lf":
        run = solve_inviscid_lf(model, g, Tm, grid, safety=cfg.safety, stops=lad, memory_budget=1e7)
    else:
        run = solve_viscous(model, g, cfg.epsilon, Tm, grid, safety=cfg.safety, peclet=cfg.peclet,
                            stops=lad, memory_budget=1e7)
    rep.add_run(scheme, run)
    recenter = bool(cfg.options.get("recenter", False))
    v = run.final - (np.mean(run.final) if recenter else 0.0)
    d = []
    for t in lad:
        u = run.at(t)
        d.append(float(np.max(np.abs(u - (np.mean(u) if recenter else 0.0) - v))))
    d = np.array(d)
    p, H, _ = run.stepper.fields(run.final)
    hbar = model.hbar0 if model.hbar0 is not None else 0.0
    sub = float(np.max(H - hbar))
    drift = float((np.mean(run.final) - np.mean(run.at(lad[-1]))) / (Tm - lad[-1]))
    X = grid.coords().reshape(-1, grid.dim)
    a2 = check_A2(model, X, p.reshape(-1, grid.dim), model.theta)
    rep.tables["distance"] = [{"t": float(t), "d": float(x)} for t, x in zip(lad, d)]
    rep.series["distance"] = _series_xy(lad, d)
    rep.series["limit_profile"] = _series_xy(grid.axis() if grid.dim == 1 else np.arange(v.size), v.reshape(-1))
    rep.summary = {"model": model.name, "scheme": scheme, "T_max": Tm, "recenter": recenter, "d": d.tolist(),
                   "subsolution_residual": sub, "mean_drift_rate": drift, "A2_passed": a2.passed,
                   "A2_max_defect": a2.max_defect}
    if not a2.passed:
        rep.summary["warning"] = "model fails (A2) on the sampled phase points"
    slack = cfg.tol("energy_slack")
    trend = float(np.max(d[1:] - (1 + slack) * d[:-1], initial=0.0))
    rep.check("d_last", d[-1], cfg.tol("large_time"), "<=", f"d at t = {lad[-1]:g}")
    rep.check("d_trend", trend, 1e-12, "<=", "successive d(t) nonincreasing up to relative slack")
    rep.check("subsolution", sub, float(cfg.options.get("subsolution_tol", 0.05)), "<=",
              "max of H(x, D_h v) - Hbar over nodes")
    return rep


# ---------------------------------------------------------------------------
# oscillation / traveling wave
# ---------------------------------------------------------------------------

def run_oscillation(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("oscillation")
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    Ts = sorted(cfg.Ts or [cfg.T])
    window = float(cfg.options.get("window", 1.0))
    m = int(cfg.options.get("samples", 41))
    expect = cfg.options.get("expect", "nonconvergent" if model.name == "shifted_abs" else "convergent")
    grids_t = [np.linspace(T, T + window, m) for T in Ts]
    stops = np.unique(np.round(np.concatenate(grids_t), 12))
    run = solve_inviscid_lf(model, g, float(stops[-1]), grid, safety=cfg.safety, stops=stops, memory_budget=1e7)
    rep.add_run("lf", run)
    osc = []
    for ts in grids_t:
        U = np.array([run.at(float(np.round(t, 12))) for t in ts]).reshape(len(ts), -1)
        osc.append(max(float(np.max(np.abs(U[i] - U[j]))) for i in range(len(ts)) for j in range(i)))
    rep.tables["oscillation"] = [{"T": float(T), "osc": o} for T, o in zip(Ts, osc)]
    rep.series["oscillation"] = _series_xy(Ts, osc)
    rep.summary = {"model": model.name, "N": grid.N, "expect": expect, "osc": osc}
    for T, o in zip(Ts, osc):
        if expect == "nonconvergent":
            rep.check(f"osc_T{T:g}", o, cfg.tol("osc_nonconvergent"), ">=")
        else:
            rep.check(f"osc_T{T:g}", o, cfg.tol("osc_convergent"), "<=")
    tw = cfg.options.get("traveling_wave")
    if tw:
        Ns = [int(n) for n in tw.get("Ns", [256, 512])]
        Tw = float(tw.get("T", 1.0))
        errs, per = [], []
        for N in Ns:
            gr = cfg.make_grid(N)
            r = solve_inviscid_lf(model, cfg.initial_field(gr), Tw + 1.0, gr, safety=cfg.safety,
                                  stops=[Tw], memory_budget=1e7)
            rep.add_run(f"lf:N={N}", r)
            exact = np.sin(2 * np.pi * (gr.axis() - Tw))
            errs.append(float(np.max(np.abs(r.at(Tw) - exact))))
            per.append(float(np.max(np.abs(r.final - r.at(Tw)))))
        rep.tables["traveling_wave"] = [{"N": N, "error": e, "period_defect": p} for N, e, p in zip(Ns, errs, per)]
        rep.series["traveling_wave_error"] = _series_xy(Ns, errs)
        ratios = [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]
        rep.summary["traveling_wave"] = {"Ns": Ns, "errors": errs, "ratios": ratios}
        slack = cfg.tol("halving_slack")
        for i, q in enumerate(ratios):
            rep.check(f"halving_{Ns[i]}_{Ns[i + 1]}", abs(q / 2.0 - 1.0), slack, "<=",
                      f"error ratio {q:.4g}, target 2")
    return rep


# ---------------------------------------------------------------------------
# one-sided time-derivative bound
# ---------------------------------------------------------------------------

def run_ut_bound(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("ut_bound")
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    eps = cfg.epsilon
    Ts = sorted(cfg.Ts)
    run = solve_viscous(model, g, eps, Ts[-1], grid, safety=cfg.safety, peclet=cfg.peclet, stops=Ts)
    rep.add_run("viscous", run)
    zs = _default_z(cfg, grid, [[0.1], [0.3], [0.55], [0.8]] if grid.dim == 1 else [[0.3, 0.6]])
    vol = grid.cell_volume
    v0 = (run.state(1) - run.state(0)) / run.dts[0]
    Ks = [run.step_index(T) for T in Ts]
    reps = {(r["K"], tuple(r["z"])): r for r in ut_representation(run, zs, Ks)}
    rows, worst, agree = [], [], []
    for T, K in zip(Ts, Ks):
        ut = (run.state(K) - run.state(K - 1)) / run.dts[K - 1]
        mn = float(np.min(T * ut))
        worst.append(mn)
        for z in zs:
            rec = reps[(K, tuple(float(a) for a in np.atleast_1d(z)))]
            # tangent linearization, for comparison: O(dt) away from the secant identity
            tan = solve_adjoint(run, z, k_end=K - 1, retain="none", warn=False)
            tangent = float(np.sum(v0 * tan.sigma_0) * vol)
            agree.append(abs(rec["direct"] - rec["represented"]))
            rows.append({"T": T, "z": [float(a) for a in np.atleast_1d(z)], "ut_direct": rec["direct"],
                         "ut_adjoint": rec["represented"], "difference": agree[-1],
                         "ut_tangent_adjoint": tangent, "mass_defect": rec["mass_defect"], "min_T_ut": mn})
    vmax = float(np.max(np.abs(run.final)))
    C_bound = 2.0 * (vmax + float(np.max(np.abs(g.values)))) / model.theta
    C_emp = max(0.0, -min(worst))
    rep.tables["ut"] = [{k: (v if k != "z" else v[0]) for k, v in r.items()} for r in rows] if grid.dim == 1 else \
        [{**{k: v for k, v in r.items() if k != "z"}, "z0": r["z"][0], "z1": r["z"][1]} for r in rows]
    rep.series["min_T_ut"] = _series_xy(Ts, worst)
    rep.summary = {"model": model.name, "epsilon": eps, "Ts": Ts, "min_T_ut": worst, "C_fit": C_emp,
                   "C_bound": C_bound, "max_agreement_defect": max(agree)}
    rep.check("lower_bound", C_emp, C_bound, "<=", "fitted constant -min T u_t against 2(|v|+|g|)/theta")
    rep.check("adjoint_agreement", max(agree), cfg.tol("ut_agreement"), "<=",
              "direct increment vs secant-adjoint representation")
    return rep


# ---------------------------------------------------------------------------
# monotone power
# ---------------------------------------------------------------------------

def run_monotone_power(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("monotone_power")
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    if cfg.Ts:
        Ts = np.array(sorted(cfg.Ts))
    else:
        a, b, h = cfg.options["T_range"]
        Ts = np.round(np.arange(a, b + 0.5 * h, h), 12)
    theta = model.theta
    run = solve_viscous(model, g, cfg.epsilon, float(Ts[-1]), grid, safety=cfg.safety, peclet=cfg.peclet,
                        stops=Ts, memory_budget=1e7)
    rep.add_run("viscous", run)
    U = np.array([run.at(float(t)).reshape(-1) for t in Ts])
    if cfg.z is not None:
        idx = [np.ravel_multi_index(grid.nearest_index(z), grid.shape) for z in cfg.z_points(grid)]
        U = U[:, idx]
    W = (Ts ** (1.0 / theta))[:, None] * U
    diffs = np.diff(W, axis=0)
    worst = float(diffs.min()) if diffs.size else 0.0
    umin = min(float(u.min()) for _, u in run.states())
    rep.tables["monotone"] = [{"T": float(t), "min_over_z": float(w.min()), "max_over_z": float(w.max())}
                              for t, w in zip(Ts, W)]
    rep.series["min_scaled_u"] = _series_xy(Ts, W.min(axis=1))
    rep.summary = {"model": model.name, "theta": theta, "epsilon": cfg.epsilon, "min_successive_difference": worst,
                   "min_u": umin}
    rep.check("monotone", worst, -cfg.tol("monotone"), ">=")
    rep.check("nonnegative", umin, -cfg.tol("min_u"), ">=")
    return rep


# ---------------------------------------------------------------------------
# Mather pipeline and dissipative measures
# ---------------------------------------------------------------------------

def _cell(cfg: ExperimentConfig, model, grid, eps):
    o = cfg.options
    g0 = cfg.initial_field(grid, o["cell_initial"]) if "cell_initial" in o else grid.constant(0.0)
    return ergodic_constant(model, eps, grid, T1=float(o.get("T1", 15.0)), T2=float(o.get("T2", 20.0)), g=g0,
                            gap_threshold=float(o.get("gap_threshold", 1e-3)), safety=cfg.safety)


def _energy_point(args):
    raw, eps = args
    cfg = parse_config(raw)
    model, grid = cfg.build_model(), cfg.make_grid()
    cell = _cell(cfg, model, grid, eps)
    z = _default_z(cfg, grid, [0.3] * grid.dim)[0]
    fw, (adj,) = stationary_run(model, cell, cfg.T or 10.0, [z], retain="none", safety=cfg.safety)
    e = ms.time_averaged_integral(fw, adj, lambda x, p: (model.eval_H(x, p) - cell.Hbar_eps) ** 2)
    return e, cell.summary(), adj.mass_defect


def run_mather_pipeline(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("mather_pipeline")
    model, grid = cfg.build_model(), cfg.make_grid()
    T = cfg.T or 20.0
    tol = cfg.tol("measure")
    rep.summary = {"model": model.name, "T": T}
    if cfg.epsilon is not None:
        cell = _cell(cfg, model, grid, cfg.epsilon)
        rep.add_run("cell", cell.run)
        zs = _default_z(cfg, grid, [0.3] * grid.dim)
        fw, adjs = stationary_run(model, cell, T, zs, retain="none", safety=cfg.safety)
        rep.add_run("stationary", fw)
        stride = int(cfg.options.get("k_stride", 1))
        rows = []
        for z, a in zip(zs, adjs):
            mt = ms.time_average(ms.build_mu(fw, a, k_stride=stride), a.T)
            r = ms.mather_residuals(mt, model, cell.Hbar_eps)
            sup = ms.support_radius(mt, cfg.tol("support_p"))
            dis = ms.dissipative_estimate(fw, a, model)
            row = {"z": [float(c) for c in z], **r, "energy": ms.energy_level_residual(mt, model, cell.Hbar_eps),
                   "mass_outside": sup, "mass": mt.total_mass, "mass_defect": a.mass_defect,
                   "m_hat_min_eig": dis.min_eigenvalue(), "m_hat_asym": dis.asymmetry()}
            if model.convex_in_p:
                gam = ms.pushforward_gamma(ms.build_mu(fw, a, k_stride=stride), model)
                hol = ms.holonomy_residual(gam, a.field(0), z, a.T)
                row["holonomy_max"] = max(hol.values())
            rows.append(row)
            if grid.dim == 1:
                rep.series[f"p_marginal_z{z[0]:g}"] = _p_marginal(mt)
        rep.tables["residuals"] = [{**{k: v for k, v in r.items() if k != "z"},
                                    **{f"z{i}": c for i, c in enumerate(r["z"])}} for r in rows]
        worst = {k: max(r[k] for r in rows) for k in ("res_a", "res_b", "res_c", "mass_outside")}
        rep.summary.update({"epsilon": cfg.epsilon, "Hbar_eps": cell.Hbar_eps, "cell": cell.summary(), **worst,
                            "m_hat_min_eig": min(r["m_hat_min_eig"] for r in rows)})
        for k in ("res_a", "res_b", "res_c"):
            rep.check(k, worst[k], tol, "<=")
        rep.check("support", worst["mass_outside"], tol, "<=", f"mass outside |p| <= {cfg.tol('support_p'):g}")
        rep.check("m_hat_psd", -min(r["m_hat_min_eig"] for r in rows), cfg.tol("psd"), "<=")
    if cfg.epsilons:
        eps = sorted(cfg.epsilons, reverse=True)
        raw = cfg.to_dict()
        raw["T"] = cfg.T or 10.0
        out = _pmap(_energy_point, [(raw, float(e)) for e in eps], workers)
        en = [o[0] for o in out]
        rep.tables["energy"] = [{"epsilon": e, "energy_residual": v, "Hbar_eps": o[1]["Hbar_eps"]}
                                for e, v, o in zip(eps, en, out)]
        rep.series["energy"] = _series_xy(eps, en)
        rep.summary["energy_sweep"] = {"epsilons": eps, "residuals": en}
        slack = cfg.tol("energy_slack")
        inc = max((en[i + 1] - (1 + slack) * en[i] for i in range(len(en) - 1)), default=0.0)
        rep.check("energy_decreasing", inc, 1e-14, "<=", "successive residuals nonincreasing up to relative slack")
    return rep


def _p_marginal(mt, bins: int = 64):
    r = float(np.max(np.abs(mt.p[:, 0]), initial=0.0)) or 1.0
    h, e = np.histogram(mt.p[:, 0], bins=bins, range=(-r, r), weights=mt.w)
    return _series_xy(0.5 * (e[1:] + e[:-1]), h)


def run_dissipative(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("dissipative")
    model, grid = cfg.build_model(), cfg.make_grid()
    T = cfg.T or 20.0
    eps_list = [cfg.epsilon] if cfg.epsilon else sorted(cfg.epsilons, reverse=True)
    zs = _default_z(cfg, grid, [0.3] * grid.dim)
    rows, worst_eig, worst_asym = [], np.inf, 0.0
    for e in eps_list:
        cell = _cell(cfg, model, grid, e)
        rep.add_run(f"cell:eps={e:g}", cell.run)
        fw, adjs = stationary_run(model, cell, T, zs, retain="none", safety=cfg.safety)
        rep.add_run(f"stationary:eps={e:g}", fw)
        for z, a in zip(zs, adjs):
            d = ms.dissipative_estimate(fw, a, model)
            worst_eig = min(worst_eig, d.min_eigenvalue())
            worst_asym = max(worst_asym, d.asymmetry())
            for name in d.bracket_integrals:
                rows.append({"epsilon": e, **{f"z{i}": float(c) for i, c in enumerate(z)}, "observable": name,
                             "bracket_integral": d.bracket_integrals[name], "hessian_term": d.hessian_terms[name],
                             "residual": d.bracket_residuals[name]})
    rep.tables["brackets"] = rows
    ref = [r for r in rows if r["observable"] == "half_square_norm" and r["epsilon"] == eps_list[0]]
    res = max(abs(r["bracket_integral"]) for r in ref)
    rep.summary = {"model": model.name, "T": T, "epsilons": eps_list, "half_square_bracket": res,
                   "m_hat_min_eig": worst_eig, "m_hat_asym": worst_asym}
    rep.check("bracket_half_square", res, cfg.tol("measure"), "<=", "|integral of {H, |p|^2/2}| at the reference point")
    rep.check("m_hat_symmetric", worst_asym, cfg.tol("psd"), "<=")
    rep.check("m_hat_psd", -worst_eig, cfg.tol("psd"), "<=")
    return rep


# ---------------------------------------------------------------------------
# representation identity, adjoint invariants and the NAM diagnostic
# ---------------------------------------------------------------------------

def _nam_point(args):
    raw, eps, Ts = args
    cfg = parse_config(raw)
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    run = solve_viscous(model, g, eps, max(Ts), grid, safety=cfg.safety, peclet=cfg.peclet, stops=Ts)
    zs = _default_z(cfg, grid, [[0.125], [0.3], [0.55], [0.8]] if grid.dim == 1 else [[0.3, 0.6]])
    out = []
    for T in Ts:
        K = run.step_index(T)
        vals = [nam_diagnostic(run, solve_adjoint(run, z, k_end=K, retain="none", warn=False)) / (1 + T)
                for z in zs]
        out.append((T, vals))
    return out


def run_representation(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("representation")
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    T = cfg.T
    t0 = time.perf_counter()
    run = solve_viscous(model, g, cfg.epsilon, T, grid, safety=cfg.safety, peclet=cfg.peclet)
    rep.add_run("viscous", run)
    zs = _default_z(cfg, grid, [0.3] * grid.dim)
    probe = np.random.default_rng(cfg.seed).standard_normal(grid.shape)
    rows = []
    for z in zs:
        a = solve_adjoint(run, z, warn=False)
        res = ms.representation_residual(run, a, g)
        lhs, g0, acc = ms.representation_terms(run, a, g)
        rows.append({**{f"z{i}": float(c) for i, c in enumerate(z)}, "u": lhs, "initial_term": g0,
                     "running_term": acc, "residual": res, "mass_defect": a.mass_defect,
                     "min_sigma_peclet": a.min_under_peclet(), "peclet_suffix_start": a.peclet_suffix_start,
                     "duality": duality_check(run, a, probe)})
    rep.timings["identity_s"] = time.perf_counter() - t0
    rep.tables["identity"] = rows
    worst = {k: max(abs(r[k]) for r in rows) for k in ("residual", "mass_defect", "duality")}
    mins = min(r["min_sigma_peclet"] for r in rows)
    rep.summary = {"model": model.name, "dim": grid.dim, "N": grid.N, "epsilon": cfg.epsilon, "T": T, **worst,
                   "min_sigma_peclet": mins, "peclet_steps_violated": int(np.sum(~run.peclet_ok))}
    rep.check("identity", worst["residual"], cfg.tol("identity"), "<=")
    rep.check("mass", worst["mass_defect"], cfg.tol("mass"), "<=")
    rep.check("nonnegative", mins, -cfg.tol("negativity"), ">=", "min sigma over Peclet-compliant steps")
    rep.check("duality", worst["duality"], cfg.tol("identity"), "<=")
    nam = cfg.options.get("nam")
    if nam:
        raw = cfg.to_dict()
        Ts = sorted(float(t) for t in nam["Ts"])
        eps = sorted((float(e) for e in nam["epsilons"]), reverse=True)
        out = _pmap(_nam_point, [(raw, e, Ts) for e in eps], workers)
        table, sups = [], []
        for e, per in zip(eps, out):
            for Tn, vals in per:
                table.append({"epsilon": e, "T": Tn, "sup_over_z": max(vals), "min_over_z": min(vals)})
                sups.append(max(vals))
        rep.tables["nam"] = table
        ratio = max(sups) / min(sups)
        rep.summary["nam"] = {"ratio": ratio, "values": sups}
        rep.check("nam_bounded", ratio, cfg.tol("nam_factor"), "<=",
                  "max/min over (epsilon, T) of sup_z eps*sum|D^2u|^2 sigma/(1+T)")
    return rep


# ---------------------------------------------------------------------------
# characteristics
# ---------------------------------------------------------------------------

def run_characteristics_compare(cfg: ExperimentConfig, workers: int = 1) -> Report:
    rep = Report("characteristics_compare")
    model, grid = cfg.build_model(), cfg.make_grid()
    g = cfg.initial_field(grid)
    o = cfg.options
    scan = crossing_scan(model, g, np.arange(int(o.get("scan_points", 2048))) / int(o.get("scan_points", 2048)),
                         float(o.get("scan_T", 1.0)))
    if scan is None:
        raise ConfigError("no characteristic crossing found within scan_T")
    T_pre = cfg.T if cfg.T is not None else float(o.get("pre_fraction", 0.5)) * scan
    if T_pre >= scan:
        raise ConfigError(f"T = {T_pre:g} is not below the crossing time {scan:.4g}")
    T_post = float(o.get("post_factor", 3.0)) * scan
    zs = _default_z(cfg, grid, (np.arange(8) / 8 + 1 / 16)[:, None])
    lf = solve_inviscid_lf(model, g, T_pre, grid, safety=cfg.safety, memory_budget=1e7)
    rep.add_run("lf_pre", lf)
    rows = []
    for z in zs:
        xs = float(grid.axis()[grid.nearest_index(z)[0]])
        sr = shoot(model, g, xs, T_pre)
        u = float(lf.final[grid.nearest_index(z)])
        c = float(np.min(sr.values))
        rows.append({"z": xs, "phase": "pre", "T": T_pre, "multiplicity": sr.multiplicity, "u_solver": u,
                     "u_characteristic": c, "difference": abs(u - c), "flag": "",
                     "representation_residual": float("nan")})
    pre_err = max(r["difference"] for r in rows)
    eps = cfg.epsilon or 0.02
    vis = solve_viscous(model, g, eps, T_post, grid, safety=cfg.safety, peclet=cfg.peclet)
    lf_post = solve_inviscid_lf(model, g, T_post, grid, safety=cfg.safety, memory_budget=1e7)
    rep.add_run("viscous_post", vis)
    rep.add_run("lf_post", lf_post)
    post_res, mults = [], []
    for z in zs:
        xs = float(grid.axis()[grid.nearest_index(z)[0]])
        sr = shoot(model, g, xs, T_post)
        a = solve_adjoint(vis, [xs], warn=False)
        res = ms.representation_residual(vis, a, g)
        post_res.append(res)
        mults.append(sr.multiplicity)
        u = float(lf_post.final[grid.nearest_index(z)])
        # for a convex H the viscosity solution selects the smallest characteristic value
        c = float(np.min(sr.values)) if sr.multiplicity else float("nan")
        rows.append({"z": xs, "phase": "post", "T": T_post, "multiplicity": sr.multiplicity, "u_solver": u,
                     "u_characteristic": c, "difference": abs(u - c),
                     "flag": "multivalued" if sr.multiplicity > 1 else "", "representation_residual": res})
    x0s = np.linspace(0.0, 1.0, int(o.get("drift_points", 5)), endpoint=False)
    drift = max(integrate_characteristics(model, g, x0, T_post).energy_drift for x0 in x0s)
    rep.tables["comparison"] = rows
    rep.summary = {"model": model.name, "crossing_time": scan, "T_pre": T_pre, "T_post": T_post,
                   "pre_max_difference": pre_err, "dx": grid.dx, "post_max_multiplicity": max(mults),
                   "post_representation_residual": max(post_res), "energy_drift": drift}
    rep.check("pre_crossing_agreement", pre_err, cfg.tol("char_dx_factor") * grid.dx, "<=")
    if "expected_crossing" in o:
        ex = float(o["expected_crossing"])
        rep.check("crossing_time", abs(scan - ex) / ex, cfg.tol("crossing_rel"), "<=", f"expected {ex:.6g}")
    rep.check("post_multivalued", max(mults), 2, ">=", "some terminal point reached by several characteristics")
    rep.check("post_representation", max(post_res), cfg.tol("identity"), "<=")
    rep.check("energy_drift", drift, cfg.tol("drift"), "<=")
    return rep


RUNNERS = {
    "rate_vv": run_rate_vv,
    "large_time": run_large_time,
    "oscillation": run_oscillation,
    "ut_bound": run_ut_bound,
    "monotone_power": run_monotone_power,
    "mather_pipeline": run_mather_pipeline,
    "dissipative": run_dissipative,
    "representation": run_representation,
    "characteristics_compare": run_characteristics_compare,
}


def run_experiment(cfg: ExperimentConfig, workers: int = 1) -> Report:
    preflight(cfg)
    return RUNNERS[cfg.experiment](cfg, workers=workers)
