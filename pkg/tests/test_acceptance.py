"""Acceptance criteria 1-10, each reported as one PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v -s`` to see the lines as they are
produced; they are also repeated in the terminal summary.
"""

import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from quasinorm.gn_estimator import (
    EstimateOptions,
    QuotientSpec,
    estimate_constant,
    quotient,
    random_smooth_fields,
    verify_inequality,
)
from quasinorm.mountain_pass import MountainOptions, mountain_pass_solve
from quasinorm.radial import RadialGrid, dilate, resample
from quasinorm.solvers import (
    OUTSIDE_RANGE,
    blowup_witness,
    extract_multiplier,
    gaussian_seed,
    global_minimize,
    local_minimize,
    project_to_mass,
    subadditivity_check,
)
from quasinorm.variational import (
    energy,
    energy_gradient,
    energy_parts,
    fiber_energy,
    landscape,
    landscape_max,
    mass,
    mass_gradient,
    pohozaev,
    stretch,
    t_bar,
)
from quasinorm.verify import timed_suite

pytestmark = pytest.mark.acceptance


def rel(a, b):
    return abs(a / b - 1.0)


def certificate_checks(cp, a, tag=""):
    return {
        f"{tag}converged": cp.converged,
        f"{tag}mass error <= 1e-6": abs(mass(cp.field) / a - 1) <= 1e-6 and cp.mass_error <= 1e-6,
        f"{tag}projected gradient <= 1e-6": cp.grad_residual <= 1e-6,
        f"{tag}energy < 0": cp.energy < 0,
        f"{tag}lambda < 0": cp.lam < 0,
        f"{tag}|P| <= 1e-3 (1 + |grad|^2)": cp.pohozaev_residual <= 1e-3,
    }


# --- 1 -------------------------------------------------------------------------


def test_criterion_01_dual_transform(criterion):
    checks, elapsed = timed_suite(samples=100_000, bound=1e3)
    named = {c.name: c.passed for c in checks}
    named["runtime < 5 s"] = elapsed < 5.0
    worst_rt = next(c.worst for c in checks if c.name.startswith("round trip"))
    worst_ode = next(c.worst for c in checks if c.name.startswith("ODE"))
    criterion(1, "dual transform properties on 1e5 quasi-random samples", named,
              f"round trip {worst_rt:.1e}, ODE {worst_ode:.1e}, {elapsed:.2f} s")


# --- 2 -------------------------------------------------------------------------


def test_criterion_02_pohozaev_fiber_identity(criterion, ref_params):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    g = RadialGrid(3, 12.0, 2048)
    worst = 0.0
    h = 1e-4
    for u in random_smooth_fields(g, 50, rng):
        v = project_to_mass(u, ref_params.a)
        parts = energy_parts(ref_params, v)
        d = (fiber_energy(ref_params, v, 1 + h, parts) - fiber_energy(ref_params, v, 1 - h, parts)) / (2 * h)
        P = pohozaev(ref_params, v)
        worst = max(worst, abs(d - P) / (1 + abs(P)))
    elapsed = time.perf_counter() - start
    criterion(2, "d/dt Phi(v_t) at t=1 equals P(v) on 50 random fields on S_a",
              {"|dPhi - P| <= 1e-4 (1 + |P|)": worst <= 1e-4, "runtime < 30 s": elapsed < 30},
              f"worst {worst:.1e}, {elapsed:.1f} s")


# --- 3 -------------------------------------------------------------------------


def test_criterion_03_gradient_checks(criterion, ref_params):
    rng = np.random.default_rng(3)
    g = RadialGrid(3, 12.0, 1024)
    fields = random_smooth_fields(g, 40, rng)
    eps = 1e-5
    worst_e = worst_m = 0.0
    for u, phi in zip(fields[:20], fields[20:]):
        v = project_to_mass(u, ref_params.a)
        de = (energy(ref_params, v + phi * eps) - energy(ref_params, v + phi * -eps)) / (2 * eps)
        ge = energy_gradient(ref_params, v).inner(phi)
        worst_e = max(worst_e, abs(ge - de) / (1 + abs(ge)))
        dm = (mass(v + phi * eps) - mass(v + phi * -eps)) / (2 * eps)
        gm = mass_gradient(v).inner(phi)
        worst_m = max(worst_m, abs(gm - dm) / (1 + abs(gm)))
    criterion(3, "energy and mass gradients against central differences on 20 pairs",
              {"energy gradient <= 1e-5": worst_e <= 1e-5, "mass gradient <= 1e-5": worst_m <= 1e-5},
              f"worst {worst_e:.1e} / {worst_m:.1e}")


# --- 4 -------------------------------------------------------------------------


def test_criterion_04_stretch_mass_invariance(criterion):
    # t = 1/4 spreads a seed fourfold; the domain must hold it
    g = RadialGrid(3, 40.0, 8192)
    seeds = {
        "gaussian": g.sample(lambda r: 2.0 * np.exp(-r * r)),
        "wide gaussian": g.sample(lambda r: 0.5 * np.exp(-((r / 2.5) ** 2))),
        "sech": g.sample(lambda r: 3.0 / np.cosh(1.5 * r)),
    }
    worst = 0.0
    for v in seeds.values():
        m = mass(v)
        for t in np.geomspace(0.25, 8.0, 11):
            worst = max(worst, rel(mass(stretch(v, float(t))), m))
    criterion(4, "stretch preserves mass for t in [0.25, 8]", {"relative error <= 1e-5": worst <= 1e-5},
              f"worst {worst:.1e}")


# --- 5 -------------------------------------------------------------------------


def test_criterion_05_landscape(criterion, ref_params, ref_thresholds):
    astar = ref_thresholds.a_star
    worst = 0.0
    for a in astar * np.geomspace(0.05, 2.0, 20):
        tb = t_bar(ref_params, a)
        r = minimize_scalar(lambda lt: -landscape(ref_params, math.exp(lt), a),
                            bounds=(math.log(tb) - 3, math.log(tb) + 3), method="bounded",
                            options={"xatol": 1e-12})
        worst = max(worst, rel(math.exp(r.x), tb))
    at_star = landscape(ref_params, t_bar(ref_params, astar), astar)
    criterion(5, "numeric argmax of H_a against closed-form t_bar and sign trichotomy", {
        "argmax relative error <= 1e-6": worst <= 1e-6,
        "max H > 0 at a*/2": landscape_max(ref_params, 0.5 * astar) > 0,
        "|H_{a*}(t_bar)| <= 1e-8": abs(at_star) <= 1e-8,
        "max H < 0 at 2a*": landscape_max(ref_params, 2 * astar) < 0,
    }, f"argmax {worst:.1e}, H_a*(t_bar) {at_star:.1e}")


# --- 6 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def critical_params(ref_params, constants):
    return ref_params.with_(q=16 / 3, gn_q=constants["critical"])


def test_criterion_06_blowup_pair(criterion, ref_params, critical_params, ref_thresholds, grid):
    sup = blowup_witness(ref_params, gaussian_seed(grid, ref_params.a), 1e3)
    pc = critical_params.with_(a=0.5 * ref_thresholds.a_bar_star)
    crit = blowup_witness(pc, gaussian_seed(grid, pc.a), 1e3)
    criterion(6, "unbounded fiber for q > 4+4/N, bounded for q = 4+4/N below a_bar*", {
        "supercritical certified below -1e3": sup.certified and sup.energy < -1e3,
        "supercritical tail monotone": all(b < a for a, b in zip(sup.tail, sup.tail[1:])),
        "critical not certified": not crit.certified,
        "critical floor finite": math.isfinite(crit.floor) and crit.floor > -1e3,
    }, f"t* = {sup.t_star:.3g}, critical floor {crit.floor:.4g}")


# --- 7 -------------------------------------------------------------------------


@pytest.fixture(scope="module")
def local_run(ref_params):
    start = time.perf_counter()
    cp = local_minimize(ref_params)
    return cp, time.perf_counter() - start


def _doubling(cp, solve):
    g = cp.field.grid
    fine = solve(RadialGrid(3, g.radius, 2 * g.n))
    return fine, max(rel(fine.energy, cp.energy), rel(fine.lam, cp.lam))


def test_criterion_07_minimizers(criterion, ref_params, critical_params, ref_thresholds, local_run):
    cp_local, t_local = local_run
    start = time.perf_counter()
    pc = critical_params.with_(a=0.5 * ref_thresholds.a_bar_star)
    cp_global = global_minimize(pc, a_bar=ref_thresholds.a_bar_star)
    t_global = time.perf_counter() - start

    fine_local, drift_local = _doubling(cp_local, lambda g: local_minimize(ref_params, grid=g))
    fine_global, drift_global = _doubling(cp_global, lambda g: global_minimize(pc, grid=g))
    checks = {}
    checks.update(certificate_checks(cp_local, ref_params.a, "local: "))
    checks.update(certificate_checks(cp_global, pc.a, "global: "))
    checks.update(certificate_checks(fine_local, ref_params.a, "local 2n: "))
    checks.update(certificate_checks(fine_global, pc.a, "global 2n: "))
    checks["local: inside gradient ball"] = cp_local.grad_norm_sq < ref_thresholds.t0
    checks["local: in theorem range"] = OUTSIDE_RANGE not in cp_local.flags
    checks["local: multipliers agree 1e-3"] = rel(cp_local.lam_pairing, cp_local.lam_ls) <= 1e-3
    checks["global: multipliers agree 1e-3"] = rel(cp_global.lam_pairing, cp_global.lam_ls) <= 1e-3
    checks["grid doubling drift < 1e-3"] = max(drift_local, drift_global) < 1e-3
    checks["runtime < 5 min per solve"] = max(t_local, t_global) < 300
    criterion(7, "local (q=5.8) and global (q=16/3) minimizers at half the threshold", checks,
              f"Phi = {cp_local.energy:.6g} / {cp_global.energy:.6g}, "
              f"drift {max(drift_local, drift_global):.1e}, {t_local:.1f} s / {t_global:.1f} s")


# --- 8 -------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_08_mountain_pass(criterion, ref_params, local_run):
    v1, _ = local_run
    start = time.perf_counter()
    res = mountain_pass_solve(ref_params, v1, MountainOptions())
    elapsed = time.perf_counter() - start
    mp = res.point
    dist = (mp.field - resample(v1.field, mp.field.grid)).h1_norm()
    c_vals = [row[1] for row in res.c_table]
    # combined tolerance: relative solver tolerance on both neighbours
    steps = [c_vals[i + 1] - c_vals[i] for i in range(len(c_vals) - 1)]
    tol = [1e-6 * (abs(c_vals[i]) + abs(c_vals[i + 1])) for i in range(len(steps))]
    mult = extract_multiplier(ref_params, mp.field)
    checks = {
        "converged": mp.converged,
        "Phi(mp) > 0 > Phi(min)": mp.energy > 0 > v1.energy,
        "lambda < 0": mp.lam < 0 and mult["pairing"] < 0,
        "mass error <= 1e-6": abs(mass(mp.field) / ref_params.a - 1) <= 1e-6,
        "projected gradient <= 1e-6": mp.grad_residual <= 1e-6,
        "|P| <= 1e-3 (1 + |grad|^2)": mp.pohozaev_residual <= 1e-3,
        "distinct from minimizer (>= 1e-2)": dist >= 1e-2,
        "c_theta nonincreasing": all(s <= t for s, t in zip(steps, tol)),
        "solver self-checks": all(res.checks.values()),
        "runtime < 30 min": elapsed < 1800,
    }
    criterion(8, "mountain-pass solution at q=5.8, a = a*/2", checks,
              f"c_1 = {mp.energy:.6g}, distance {dist:.3g}, {elapsed:.0f} s")


# --- 9 -------------------------------------------------------------------------


PAIRS = [(0.6, 0.3), (0.8, 0.4), (0.5, 0.2)]


def test_criterion_09_subadditivity(criterion, ref_params, critical_params, ref_thresholds):
    checks, margins = {}, []
    cases = [("m", critical_params, ref_thresholds.a_bar_star), ("sigma", ref_params, ref_thresholds.a_star)]
    for name, params, thr in cases:
        for f1, f2 in PAIRS:
            rep = subadditivity_check(params, f1 * thr, f2 * thr)
            checks[f"{name}({f1},{f2}) conclusive"] = rep.status != "inconclusive"
            checks[f"{name}({f1},{f2}) margin >= -tol"] = rep.status == "pass" and rep.margin >= -rep.tolerance
            margins.append(rep.margin)
    criterion(9, "subadditivity margins on three pairs, mass-critical and supercritical", checks,
              "margins " + ", ".join(f"{m:.3g}" for m in margins))


# --- 10 ------------------------------------------------------------------------


def test_criterion_10_gn_estimator(criterion):
    grid = RadialGrid(3, 12.0, 2048)
    specs = [QuotientSpec("E", 3, s) for s in (2.5, 5.8, 16 / 3)] + [QuotientSpec("H1", 3, s) for s in (2.5, 5.8)]
    rng = np.random.default_rng(10)
    fields = random_smooth_fields(grid, 1000, rng)
    probe = grid.sample(lambda r: np.exp(-r * r) * (1 + 0.3 * r))
    checks = {}
    worst_scale = worst_dil = worst_drift = 0.0
    for spec in specs:
        label = f"{spec.kind} s={spec.exponent:.4g}"
        base = quotient(spec, probe)
        for lam in (1e-3, 0.1, 7.0, 1e3):
            worst_scale = max(worst_scale, rel(quotient(spec, probe * lam), base))
        for mu in (0.7, 1.5):
            worst_dil = max(worst_dil, rel(quotient(spec, dilate(probe, mu)), base))
        c = estimate_constant(spec, EstimateOptions(grid=grid)).constant
        checks[f"{label} holds on 1000 fields"] = verify_inequality(spec, c.value, fields) == []
        fine = estimate_constant(spec, EstimateOptions(grid=grid.refined(2))).constant
        worst_drift = max(worst_drift, rel(c.value, fine.value))
    checks["scale invariance <= 1e-10"] = worst_scale <= 1e-10
    checks["dilation invariance <= 1e-4"] = worst_dil <= 1e-4
    checks["grid doubling drift < 1e-3"] = worst_drift < 1e-3
    criterion(10, "Gagliardo-Nirenberg estimates: invariances, re-verification, grid drift", checks,
              f"scale {worst_scale:.1e}, dilation {worst_dil:.1e}, drift {worst_drift:.1e}")
