"""Acceptance checks at the stated tolerances; each prints one PASS/FAIL line."""

import functools
import time
from pathlib import Path

import numpy as np
import pytest

from hjlab import hamiltonian as hm
from hjlab.adjoint import solve_adjoint
from hjlab.cell import ergodic_constant, rate_study
from hjlab.errors import CflViolation, PecletViolation
from hjlab.grid import PeriodicGrid
from hjlab.kernels import Stepper
from hjlab.lab.config import load_config
from hjlab.lab.experiments import run_experiment
from hjlab.measures import dissipative_estimate
from hjlab.solver import solve_viscous, stable_dt

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
CASES = 250


@functools.lru_cache(maxsize=None)
def run(name, experiment):
    cfg = load_config(CONFIGS / f"{name}.toml", experiment)
    t0 = time.perf_counter()
    rep = run_experiment(cfg)
    return rep, time.perf_counter() - t0


def checks(rep):
    return {c.name: c for c in rep.checks}


def verdict(capsys, crit, ok, detail):
    with capsys.disabled():
        print(f"\ncriterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def test_criterion_01_representation_identity(capsys):
    parts, ok = [], True
    for name in ("represent_1d", "represent_2d"):
        rep, wall = run(name, "representation")
        c = checks(rep)["identity"]
        ok &= c.value <= 1e-10 and wall <= 30.0
        parts.append(f"{name} residual={c.value:.2e} wall={wall:.1f}s")
    verdict(capsys, 1, ok, "; ".join(parts))


def test_criterion_02_adjoint_mass_and_sign(capsys):
    mass, low = 0.0, np.inf
    for name in ("represent_1d", "represent_2d", "nam"):
        c = checks(run(name, "representation")[0])
        mass = max(mass, c["mass"].value)
        low = min(low, c["nonnegative"].value)
    # direct sweep over a family of Peclet-compliant runs
    for amp in (0.05, 0.1, 0.2):
        G = PeriodicGrid(1, 256)
        g = G.sample(lambda x: amp * np.sin(2 * np.pi * x[..., 0]))
        r = solve_viscous(hm.product_ck(), g, 0.02, 0.5, peclet="raise")
        for z in (0.1, 0.5, 0.77):
            a = solve_adjoint(r, [z])
            mass = max(mass, a.mass_defect)
            low = min(low, a.min_under_peclet())
    verdict(capsys, 2, mass <= 1e-12 and low >= -1e-12, f"max mass defect={mass:.2e} min sigma={low:.2e}")


def test_criterion_03_traveling_wave_and_oscillation(capsys):
    c_abs = checks(run("oscillation_shifted_abs", "oscillation")[0])
    c_q = checks(run("oscillation_quartic", "oscillation")[0])
    halving = c_abs["halving_256_512"]
    ok = halving.passed and c_abs["osc_T5"].value >= 1.5 and c_q["osc_T5"].value <= 0.05
    verdict(capsys, 3, ok, f"|ratio/2-1|={halving.value:.3f} osc_abs(5)={c_abs['osc_T5'].value:.3f} "
                           f"osc_quartic(5)={c_q['osc_T5'].value:.2e}")


def test_criterion_04_vanishing_viscosity_rate(capsys):
    rep, wall = run("rate_vv", "rate_vv")
    c = checks(rep)
    ok = c["slope"].value >= 0.45 and c["compare_uniformly_smaller"].value <= 1.0 and wall <= 300.0
    verdict(capsys, 4, ok, f"slope={c['slope'].value:.3f} max err ratio quadratic/quartic="
                           f"{c['compare_uniformly_smaller'].value:.3f} wall={wall:.0f}s")


def test_criterion_05_effective_hamiltonian(capsys):
    G = PeriodicGrid(1, 256)
    hq = ergodic_constant(hm.quartic_double_well(), 0.01, G).Hbar_eps
    hk = ergodic_constant(hm.separable_kv(), 0.01, G).Hbar_eps
    rs = rate_study(hm.separable_kv(), [0.1, 0.05, 0.02, 0.01])
    ok = abs(hq) <= 0.05 and abs(hk) <= 0.05 and rs.slope is not None and rs.slope >= 0.45
    verdict(capsys, 5, ok, f"Hbar quartic={hq:.2e} separable_kv={hk:.4f} slope={rs.slope:.3f}")


def test_criterion_06_mather_pipeline(capsys):
    rep, wall = run("mather", "mather_pipeline")
    c = checks(rep)
    vals = {k: c[k].value for k in ("res_a", "res_b", "res_c", "support")}
    ok = max(vals.values()) <= 0.05 and wall <= 600.0
    verdict(capsys, 6, ok, " ".join(f"{k}={v:.2e}" for k, v in vals.items()) + f" wall={wall:.0f}s")


def test_criterion_07_energy_level_residual(capsys):
    rep, _ = run("energy", "mather_pipeline")
    c = checks(rep)["energy_decreasing"]
    rows = rep.tables["energy"]
    verdict(capsys, 7, c.passed, "residuals " + " ".join(f"{r['epsilon']:g}:{r['energy_residual']:.2e}" for r in rows))


def test_criterion_08_dissipative(capsys):
    c = checks(run("dissipative", "dissipative")[0])
    worst_asym, worst_eig = c["m_hat_symmetric"].value, -c["m_hat_psd"].value
    for model in (hm.product_ck(), hm.quartic_double_well(), hm.quartic_minus_quadratic(1)):
        G = PeriodicGrid(1, 128)
        g = G.sample(lambda x: 0.1 * np.sin(2 * np.pi * x[..., 0]))
        r = solve_viscous(model, g, 0.02, 0.5)
        d = dissipative_estimate(r, solve_adjoint(r, [0.4]), model)
        worst_asym = max(worst_asym, d.asymmetry())
        worst_eig = min(worst_eig, d.min_eigenvalue())
    ok = c["bracket_half_square"].value <= 0.05 and worst_asym <= 1e-8 and worst_eig >= -1e-8
    verdict(capsys, 8, ok, f"bracket={c['bracket_half_square'].value:.2e} asym={worst_asym:.1e} "
                           f"min eig={worst_eig:.2e}")


def test_criterion_09_ut_bound(capsys):
    c = checks(run("ut_bound", "ut_bound")[0])
    ok = c["lower_bound"].passed and c["adjoint_agreement"].value <= 1e-8
    verdict(capsys, 9, ok, f"C_fit={c['lower_bound'].value:.3e} (bound {c['lower_bound'].threshold:.3g}) "
                           f"agreement={c['adjoint_agreement'].value:.2e}")


def test_criterion_10_monotone_power(capsys):
    c = checks(run("monotone", "monotone_power")[0])
    ok = c["monotone"].value >= -1e-3 and c["nonnegative"].value >= -1e-6
    verdict(capsys, 10, ok, f"min difference={c['monotone'].value:.3e} min u={c['nonnegative'].value:.2e}")


def test_criterion_11_nam(capsys):
    c = checks(run("nam", "representation")[0])["nam_bounded"]
    verdict(capsys, 11, c.value <= 3.0, f"max/min of sup_z NAM/(1+T)={c.value:.3f}")


def test_criterion_12_characteristics(capsys):
    c = checks(run("chars", "characteristics_compare")[0])
    ok = c["pre_crossing_agreement"].passed and c["crossing_time"].value <= 0.05 and c["energy_drift"].value <= 1e-8
    verdict(capsys, 12, ok, f"pre={c['pre_crossing_agreement'].value:.2e} (3dx={c['pre_crossing_agreement'].threshold:.2e}) "
                            f"crossing rel={c['crossing_time'].value:.1e} drift={c['energy_drift'].value:.1e}")


# -- property suites -------------------------------------------------------------

MODELS_1D = [hm.quartic_double_well(1), hm.separable_kv(1), hm.product_ck(1), hm.quadratic_convex(1),
             hm.shifted_abs()]
CATALOG = MODELS_1D + [hm.quartic_double_well(2), hm.separable_kv(2, m=4, beta=0.3), hm.product_ck(2),
                       hm.quadratic_convex(2), hm.quartic_minus_quadratic(2)]


def _smooth(rng, G):
    x = G.axis()
    return sum(rng.uniform(-0.05, 0.05) * np.sin(2 * np.pi * (k + 1) * x + rng.uniform(0, 6.28)) for k in range(3))


def _comparison(rng):
    model = MODELS_1D[rng.integers(len(MODELS_1D))]
    G = PeriodicGrid(1, 16)
    u0 = _smooth(rng, G)
    v0 = u0 + rng.uniform(0, 0.2) + np.abs(_smooth(rng, G))
    st = Stepper(model, G)
    (P1u, Pu), (P1v, Pv) = st.speeds(u0), st.speeds(v0)
    eps = 0.02 + 0.75 * G.dx * max(Pu, Pv)
    h = stable_dt(G.dx, 1, eps, max(P1u, P1v), 0.5)
    try:
        ru = solve_viscous(model, G.field(u0), eps, 0.01, peclet="raise", dt=h)
        rv = solve_viscous(model, G.field(v0), eps, 0.01, peclet="raise", dt=h)
    except (PecletViolation, CflViolation):
        return None
    return bool(np.all(ru.final <= rv.final + 1e-13))


def _shift(rng):
    model = MODELS_1D[rng.integers(len(MODELS_1D))]
    G = PeriodicGrid(1, 16)
    u0 = _smooth(rng, G)
    c = rng.uniform(-5, 5)
    eps = 0.02 + 0.75 * G.dx * Stepper(model, G).speeds(u0)[1]
    ru = solve_viscous(model, G.field(u0), eps, 0.01, peclet="record")
    rv = solve_viscous(model, G.field(u0 + c), eps, 0.01, peclet="record")
    return bool(np.allclose(rv.final - c, ru.final, atol=1e-11))


def _a2(rng):
    pool = [m for m in CATALOG if m.theta] + [hm.shifted_abs()]
    model = pool[rng.integers(len(pool))]
    n = model.dim
    rep = hm.check_A2(model, rng.random((1, n)), rng.uniform(-4, 4, (1, n)), rng.uniform(0.25, 3.0))
    return bool(rep.agree)


def _derivatives(rng):
    model = CATALOG[rng.integers(len(CATALOG))]
    n = model.dim
    x, p = rng.random(n), rng.uniform(-4, 4, n)
    h = 1e-6
    scale = 1.0 + abs(float(model.eval_H(x, p))) + float(np.sum(np.abs(p))) ** 4
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        dp = (model.eval_H(x, p + e) - model.eval_H(x, p - e)) / (2 * h)
        dx = (model.eval_H(x + e, p) - model.eval_H(x - e, p)) / (2 * h)
        if abs(dp - model.eval_DpH(x, p)[i]) > 1e-6 * scale or abs(dx - model.eval_DxH(x, p)[i]) > 1e-6 * scale:
            return False
    return True


@pytest.mark.parametrize("name, prop", [("comparison", _comparison), ("constant_shift", _shift),
                                        ("A2_agreement", _a2), ("derivatives", _derivatives)])
def test_criterion_13_property_suites(capsys, name, prop):
    rng = np.random.default_rng(20240611)
    results = []
    while len(results) < CASES:
        r = prop(rng)
        if r is not None:
            results.append(r)
    bad = results.count(False)
    verdict(capsys, 13, bad == 0, f"{name}: {bad} violations in {CASES} cases")
