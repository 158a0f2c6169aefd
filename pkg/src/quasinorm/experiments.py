"""Experiment runners behind the command-line interface.

Each runner takes a validated :class:`ExperimentConfig` and a :class:`RunWriter`
and returns an exit status: 0 success, 3 solver failure (including results
outside the proven parameter range), 4 property violation. Configuration
errors surface as :class:`ConfigurationError` and map to 2 in the caller.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .errors import ConfigurationError, ConvergenceError
from .gn_estimator import (
    ConstantCache,
    EstimateOptions,
    QuotientSpec,
    estimate_constant,
    quotient,
    random_smooth_fields,
)
from .mountain_pass import MountainOptions, mountain_pass_solve
from .radial import RadialGrid, save_binary, save_text
from .records import RunWriter
from .solvers import (
    OUTSIDE_RANGE,
    SolverOptions,
    blowup_witness,
    fiber_curve,
    gaussian_seed,
    global_minimize,
    local_minimize,
    subadditivity_check,
)
from .variational import (
    LANDSCAPE_COLUMNS,
    GNConstant,
    critical_exponent,
    energy_parts,
    landscape,
    landscape_table,
    sobolev_exponent,
    t_bar,
    thresholds,
)
from .verify import run_dual_suite

log = logging.getLogger(__name__)

OK, SOLVER_FAILURE, PROPERTY_VIOLATION = 0, 3, 4


# --- shared setup --------------------------------------------------------


def gn_grid(cfg: ExperimentConfig) -> RadialGrid:
    return RadialGrid(cfg.dimension, cfg.gn_grid_radius, cfg.gn_grid_n)


def solver_grid(cfg: ExperimentConfig) -> RadialGrid:
    return RadialGrid(cfg.dimension, cfg.radius, cfg.n)


def cache_for(cfg: ExperimentConfig) -> ConstantCache:
    return ConstantCache(cfg.gn_cache or cfg.output_dir / "gn_cache.json")


def raw_constants(cfg: ExperimentConfig, cache: ConstantCache) -> dict:
    """E-kind constants at ``p``, ``q`` and ``4 + 4/N``; user values bypass estimation."""
    grid = gn_grid(cfg)
    N = cfg.dimension
    out = {}
    for name, s, given in (("p", cfg.p, cfg.gn_p), ("q", cfg.q, cfg.gn_q),
                           ("critical", critical_exponent(N), cfg.gn_critical)):
        if given is not None:
            out[name] = GNConstant(N, s, float(given), provenance="user-supplied")
            continue
        spec = QuotientSpec("E", N, s)
        hit = cache.get(spec, grid)
        if hit is None:
            hit = estimate_constant(spec, EstimateOptions(grid=grid)).constant
            cache.put(spec, grid, hit)
        out[name] = hit
    return out


def problem_constants(cfg: ExperimentConfig, cache: ConstantCache) -> dict:
    return {k: c.inflated(cfg.safety_factor) for k, c in raw_constants(cfg, cache).items()}


def make_manifest(cfg: ExperimentConfig, consts: dict | None, cache: ConstantCache | None) -> dict:
    return {
        "package": "quasinorm",
        "version": __version__,
        "config": cfg.to_dict() | {"out_dir": None},
        "gn_constants": {k: c.to_dict() for k, c in (consts or {}).items()},
        "gn_cache": cache.signature() if cache is not None else None,
    }


def base_problem(cfg: ExperimentConfig, consts: dict):
    """``(params, threshold, threshold_name)`` at the configured mass."""
    probe = cfg.problem(1.0, gn_p=consts["p"], gn_q=consts["q"])
    if probe.is_mass_critical:
        from .variational import a_bar_star

        thr, name = a_bar_star(cfg.dimension, consts["critical"]), "a_bar_star"
    elif probe.is_supercritical:
        thr, name = thresholds(probe).a_star, "a_star"
    else:
        thr, name = math.nan, "none"
    a = cfg.a if cfg.a is not None else cfg.a_fraction * thr
    if not math.isfinite(a):
        raise ConfigurationError("requires an explicit mass a when q < 4 + 4/N")
    return probe.with_(a=a), thr, name


def solver_options(cfg: ExperimentConfig) -> SolverOptions:
    return SolverOptions(tol=cfg.tol)


def minimize_at(cfg: ExperimentConfig, params, thr: float):
    grid = solver_grid(cfg)
    if params.is_mass_critical:
        return global_minimize(params, opts=solver_options(cfg), grid=grid, a_bar=thr)
    return local_minimize(params, opts=solver_options(cfg), grid=grid)


def _save_field(writer: RunWriter, name: str, v) -> None:
    save_text(v, writer.out / f"{name}.txt")
    save_binary(v, writer.out / f"{name}.bin")


# --- runners -------------------------------------------------------------


def run_verify_dual(cfg: ExperimentConfig, writer: RunWriter) -> int:
    checks = run_dual_suite(samples=cfg.samples, seed=cfg.seed)
    for c in checks:
        writer.record("dual_check", {"name": c.name, "passed": c.passed, "worst": c.worst,
                                     "tolerance": c.tolerance, "detail": c.detail})
        writer.note(c.line())
    writer.table("dual_checks.csv", ["name", "passed", "worst", "tolerance"],
                 [[c.name, c.passed, c.worst, c.tolerance] for c in checks])
    return OK if all(c.passed for c in checks) else PROPERTY_VIOLATION


def run_gn_estimate(cfg: ExperimentConfig, writer: RunWriter, cache: ConstantCache) -> int:
    grid = gn_grid(cfg)
    N = cfg.dimension
    specs = [QuotientSpec("E", N, s) for s in sorted({cfg.p, cfg.q, critical_exponent(N)})]
    specs += [QuotientSpec("H1", N, s) for s in sorted({cfg.p, cfg.q}) if s < sobolev_exponent(N)]
    rng = np.random.default_rng(cfg.seed)
    tests = random_smooth_fields(grid, cfg.verify_fields, rng)
    status = OK
    rows = []
    for spec in specs:
        const = cache.get(spec, grid)
        if const is None:
            const = estimate_constant(spec, EstimateOptions(grid=grid)).constant
        values = np.array([quotient(spec, u) for u in tests])
        bad = np.flatnonzero(values > const.value)
        if bad.size:
            # a counterexample beats the estimate: keep it and raise the constant
            status = PROPERTY_VIOLATION
            worst = int(bad[np.argmax(values[bad])])
            _save_field(writer, f"counterexample_{spec.kind}_{spec.exponent:g}", tests[worst])
            const = GNConstant(N, spec.exponent, float(values[worst]), kind=spec.kind,
                               converged=const.converged, grid_signature=grid.signature)
        cache.put(spec, grid, const)
        row = {"kind": spec.kind, "dimension": N, "exponent": spec.exponent, "value": const.value,
               "converged": const.converged, "max_random_quotient": float(values.max()),
               "counterexamples": int(bad.size)}
        rows.append(row)
        writer.record("gn_constant", row | {"grid": list(grid.signature)})
        writer.note(f"{spec.kind} s={spec.exponent:g}: C={const.value:.10g} "
                    f"(max over {len(tests)} random fields {values.max():.6g}, counterexamples {bad.size})")
    writer.table("gn_constants.csv", list(rows[0]), rows)
    return status


def run_landscape(cfg: ExperimentConfig, writer: RunWriter, consts: dict) -> int:
    from .plotting import landscape_figure

    params = cfg.problem(1.0, gn_p=consts["p"], gn_q=consts["q"])
    params.require_supercritical()
    th = thresholds(params, consts["critical"])
    masses = th.a_star * np.geomspace(0.05, 2.0, cfg.landscape_points)
    rows = landscape_table(params, masses, consts["critical"])
    writer.table("landscape.csv", list(LANDSCAPE_COLUMNS), rows)
    # numeric argmax on a log grid next to the closed form
    ts = np.geomspace(th.t0 * 1e-6, th.t0 * 1e6, 20001)
    worst = 0.0
    for row in rows:
        h = landscape(params, ts, row["a"])
        k = int(np.argmax(h))
        lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
        from scipy.optimize import minimize_scalar

        r = minimize_scalar(lambda lt: -float(landscape(params, math.exp(lt), row["a"])),
                            bounds=(math.log(lo), math.log(hi)), method="bounded", options={"xatol": 1e-12})
        worst = max(worst, abs(math.exp(r.x) / row["t_bar"] - 1.0))
    curves = {}
    curve_rows = []
    for frac in (0.5, 1.0, 2.0):
        a = frac * th.a_star
        h = landscape(params, ts, a)
        curves[a] = (ts, h)
        curve_rows += [[a, t, v] for t, v in zip(ts[::50], h[::50])]
    writer.table("landscape_curves.csv", ["a", "t", "H"], curve_rows)
    writer.record("thresholds", th.to_dict() | {"argmax_rel_error": worst})
    writer.note(f"a*={th.a_star:.10g} t0={th.t0:.10g} a_bar*={th.a_bar_star:.10g} "
                f"max relative argmax error {worst:.2e}")
    if cfg.plots:
        landscape_figure(curves, {a: t_bar(params, a) for a in curves}, writer.out / "landscape.png")
    return OK if worst <= 1e-6 else PROPERTY_VIOLATION


def _critical_point_record(cp, thr, thr_name) -> dict:
    return cp.summary() | {"threshold": thr, "threshold_name": thr_name,
                           "grid": list(cp.field.grid.signature)}


def run_minimize(cfg: ExperimentConfig, writer: RunWriter, consts: dict) -> int:
    from .plotting import fiber_figure, profile_figure

    params, thr, name = base_problem(cfg, consts)
    if not (params.is_mass_critical or params.is_supercritical):
        raise ConfigurationError(f"requires q >= 4 + 4/N = {critical_exponent(params.dimension):g}")
    try:
        cp = minimize_at(cfg, params, thr)
    except ConvergenceError as exc:
        best = getattr(exc, "best", None)
        payload = {"error": str(exc), "a": params.a, "threshold": thr, "threshold_name": name}
        if params.a >= thr:
            payload["flags"] = [OUTSIDE_RANGE]
        if hasattr(best, "summary"):
            payload |= best.summary()
        writer.record("minimize_failed", payload)
        writer.note(f"solver failure: {exc}")
        return SOLVER_FAILURE
    except ConfigurationError as exc:
        writer.record("minimize_rejected", {"error": str(exc), "a": params.a, "threshold": thr,
                                            "threshold_name": name})
        writer.note(f"invalid configuration: {exc}")
        raise
    writer.record("critical_point", _critical_point_record(cp, thr, name))
    _save_field(writer, cp.kind, cp.field)
    ts = np.geomspace(0.05, 20.0, 200)
    curve = fiber_curve(params, cp.field, ts)
    writer.table("fiber.csv", ["t", "energy"], curve)
    writer.note(f"{cp.kind}: a={params.a:.10g} energy={cp.energy:.10g} lambda={cp.lam:.10g} "
                f"residual={cp.grad_residual:.2e} pohozaev={cp.pohozaev_residual:.2e} flags={cp.flags}")
    if cfg.plots:
        fiber_figure(ts, [e for _, e in curve], writer.out / "fiber.png", cp.kind)
        profile_figure({cp.kind: cp.field}, writer.out / "profile.png")
    if OUTSIDE_RANGE in cp.flags:
        return SOLVER_FAILURE
    return OK


def run_blowup(cfg: ExperimentConfig, writer: RunWriter, consts: dict) -> int:
    from .plotting import fiber_figure

    params, thr, name = base_problem(cfg, consts)
    v = gaussian_seed(solver_grid(cfg), params.a)
    res = blowup_witness(params, v, cfg.depth)
    writer.record("blowup", {"certified": res.certified, "t_star": res.t_star, "energy": res.energy,
                             "depth": res.depth, "largest_t": res.largest_t, "floor": res.floor,
                             "tail": res.tail, "mass_critical": params.is_mass_critical, "a": params.a})
    ts = np.geomspace(1e-2, min(res.largest_t, 1e6), 200)
    curve = fiber_curve(params, v, ts)
    writer.table("fiber.csv", ["t", "energy"], curve)
    if cfg.plots:
        fiber_figure(ts, [e for _, e in curve], writer.out / "fiber.png", "blow-up fiber")
    # the expected outcome flips with the regime: unbounded for q > 4+4/N, bounded at 4+4/N below a_bar*
    if params.is_mass_critical:
        expected = not res.certified if params.a < thr else True
        writer.note(f"critical q: lower bound {res.floor:.6g} up to t={res.largest_t:.3g}; certified={res.certified}")
    else:
        tail_ok = all(b < a for a, b in zip(res.tail, res.tail[1:]))
        expected = res.certified and tail_ok
        writer.note(f"supercritical q: t*={res.t_star:.6g} energy={res.energy:.6g} monotone tail={tail_ok}")
    return OK if expected else PROPERTY_VIOLATION


def run_mountain_pass(cfg: ExperimentConfig, writer: RunWriter, consts: dict) -> int:
    from .plotting import c_theta_figure, path_figure, profile_figure

    params, thr, name = base_problem(cfg, consts)
    try:
        v1 = local_minimize(params.with_(theta=1.0), opts=solver_options(cfg), grid=solver_grid(cfg))
        opts = MountainOptions(nodes=cfg.mp_nodes, thetas=tuple(cfg.mp_thetas), max_sweeps=cfg.mp_sweeps,
                               newton_tol=cfg.tol, resolution=cfg.mp_resolution, seed=cfg.seed,
                               experimental=cfg.experimental)
        res = mountain_pass_solve(params, v1, opts)
    except ConvergenceError as exc:
        writer.record("mountain_pass_failed", {"error": str(exc), "a": params.a})
        writer.note(f"solver failure: {exc}")
        return SOLVER_FAILURE
    mp = res.point
    dist = (mp.field - _on_grid(v1.field, mp.field.grid)).h1_norm()
    writer.record("critical_point", _critical_point_record(v1, thr, name))
    writer.record("critical_point", _critical_point_record(mp, thr, name) | {"distance_to_local_min": dist})
    writer.record("mountain_pass", {"path_max": res.path_max, "barrier_lower": res.barrier_lower,
                                    "barrier_sampled": res.barrier_sampled, "crossing_index": res.crossing_index,
                                    "t_star": res.t_star, "checks": res.checks, "path_grid": list(res.path.grid.signature)})
    writer.table("c_theta.csv", ["theta", "c_theta", "grad_norm_sq", "lambda", "converged", "path_max"], res.c_table)
    final = params.with_(theta=1.0)
    e_path, g_path = res.path.energies(final), res.path.grad_norms()
    writer.table("path.csv", ["node", "energy", "grad_norm_sq"],
                 [[k, e, g] for k, (e, g) in enumerate(zip(e_path, g_path))])
    _save_field(writer, "local_min", v1.field)
    _save_field(writer, "mountain_pass", mp.field)
    writer.note(f"local min energy={v1.energy:.10g}; mountain pass energy={mp.energy:.10g} lambda={mp.lam:.10g} "
                f"distance={dist:.4g}; checks={res.checks}")
    if cfg.plots:
        c_theta_figure([r[0] for r in res.c_table], [r[1] for r in res.c_table], writer.out / "c_theta.png")
        path_figure(e_path, g_path, thresholds(final).t0, writer.out / "path.png")
        profile_figure({"local min": v1.field, "mountain pass": mp.field}, writer.out / "profile.png")
    ok = all(res.checks.values()) and dist >= 1e-2 and mp.converged
    if OUTSIDE_RANGE in mp.flags:
        return SOLVER_FAILURE
    return OK if ok else PROPERTY_VIOLATION


def _on_grid(v, grid):
    from .radial import resample

    return v if v.grid == grid else resample(v, grid)


def run_subadditivity(cfg: ExperimentConfig, writer: RunWriter, consts: dict) -> int:
    params, thr, name = base_problem(cfg, consts)
    status = OK
    rows = []
    for f1, f2 in cfg.pairs:
        rep = subadditivity_check(params, f1 * thr, f2 * thr, opts=solver_options(cfg), grid=solver_grid(cfg))
        row = {"a1": rep.a1, "a2": rep.a2, "m_a1": rep.values.get(rep.a1), "m_a2": rep.values.get(rep.a2),
               "m_diff": rep.values.get(rep.a1 - rep.a2), "margin": rep.margin, "tolerance": rep.tolerance,
               "status": rep.status}
        rows.append(row)
        writer.record("subadditivity", row | {"detail": rep.detail})
        writer.note(f"a1={rep.a1:.6g} a2={rep.a2:.6g}: margin={rep.margin:.6g} ({rep.status})")
        if rep.status == "violation":
            status = PROPERTY_VIOLATION
        elif rep.status == "inconclusive" and status == OK:
            status = SOLVER_FAILURE
    writer.table("subadditivity.csv", list(rows[0]), rows)
    return status


def run_sweep(cfg: ExperimentConfig, writer: RunWriter, consts: dict) -> int:
    params, thr, name = base_problem(cfg, consts)
    jobs = [(f, th) for f in cfg.sweep_fractions for th in cfg.sweep_thetas]
    seeds = np.random.SeedSequence(cfg.seed).spawn(len(jobs))

    def one(item):
        (frac, theta), seq = item
        p = params.with_(a=frac * thr, theta=theta)
        try:
            cp = minimize_at(cfg, p, thr)
            return {"a": p.a, "fraction": frac, "theta": theta, "energy": cp.energy, "lambda": cp.lam,
                    "grad_norm_sq": cp.grad_norm_sq, "grad_residual": cp.grad_residual,
                    "pohozaev_residual": cp.pohozaev_residual, "status": "ok" if not cp.flags else ";".join(cp.flags),
                    "job_seed": int(seq.generate_state(1)[0])}
        except (ConvergenceError, ConfigurationError) as exc:
            return {"a": p.a, "fraction": frac, "theta": theta, "status": f"failed: {exc}",
                    "job_seed": int(seq.generate_state(1)[0])}

    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        rows = list(pool.map(one, zip(jobs, seeds)))
    for row in rows:
        writer.record("sweep_point", row)
    columns = ["a", "fraction", "theta", "energy", "lambda", "grad_norm_sq", "grad_residual",
               "pohozaev_residual", "status", "job_seed"]
    writer.table("sweep.csv", columns, rows)
    failed = [r for r in rows if str(r["status"]).startswith("failed")]
    writer.note(f"{len(rows)} sweep points, {len(failed)} failed")
    return SOLVER_FAILURE if failed else OK


def run(cfg: ExperimentConfig) -> int:
    """Execute one experiment; raises ConfigurationError for invalid inputs."""
    kind = cfg.kind
    cache = None
    consts = None
    if kind in ("landscape", "minimize", "blowup", "mountain-pass", "subadditivity", "sweep"):
        cache = cache_for(cfg)
        consts = problem_constants(cfg, cache)
    elif kind == "gn-estimate":
        cache = cache_for(cfg)
    writer = RunWriter(cfg.output_dir, make_manifest(cfg, consts, cache))
    try:
        if kind == "verify-dual":
            status = run_verify_dual(cfg, writer)
        elif kind == "gn-estimate":
            status = run_gn_estimate(cfg, writer, cache)
        else:
            runner = {"landscape": run_landscape, "minimize": run_minimize, "blowup": run_blowup,
                      "mountain-pass": run_mountain_pass, "subadditivity": run_subadditivity,
                      "sweep": run_sweep}[kind]
            status = runner(cfg, writer, consts)
    finally:
        writer.close()
    writer.record("status", {"exit_status": status})
    return status
