"""Mountain-pass solutions on ``S_a`` by string relaxation and continuation in ``theta``.

The path starts on the fiber of the local minimizer, ``gamma_k = (v1)_{t_k}``
with ``t_k`` geometric in ``[1, t*]``, so it already crosses the sphere
``||grad v||^2 = t0``. Each sweep moves every interior node one preconditioned
descent step and then redistributes the nodes at equal weighted arclength.
Arclength is measured in the relative ``H^1`` metric
``||g_{k+1} - g_k|| / mean(||g_k||, ||g_{k+1}||)``, which keeps a geometric
fiber path evenly spaced despite the large spread of scales, and is weighted
by ``1 + E_k^+/max E^+`` to pull nodes toward the barrier.

``theta`` runs from 1/2 to 1 with warm starts. For every ``theta`` the highest
node (highest index on ties) is refined by bordered Newton into a critical
point of ``Phi_theta``; its energy is ``c_theta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError, SolverFailure
from .radial import RadialField, RadialGrid, grad_norm_sq, resample, rms_radius
from .solvers import (
    CriticalPoint,
    OUTSIDE_RANGE,
    _preconditioner,
    descent_direction,
    finalize,
    newton_refine,
    project_to_mass,
)
from .variational import (
    ProblemParams,
    energy,
    energy_parts,
    fiber_energy,
    landscape,
    sobolev_exponent,
    stretch,
    thresholds,
)

log = logging.getLogger(__name__)


@dataclass
class MountainOptions:
    nodes: int = 32
    thetas: tuple = (0.5, 0.625, 0.75, 0.875, 1.0)
    max_sweeps: int = 150
    sweep_tol: float = 1e-4
    # reparametrize once the longest segment exceeds this multiple of the shortest
    uneven: float = 3.0
    newton_tol: float = 1e-6
    max_newton: int = 60
    # grid spacing as a fraction of the rms radius of the most concentrated node
    resolution: float = 1.0 / 24.0
    max_points: int = 1 << 15
    barrier_samples: int = 64
    seed: int = 0
    experimental: bool = False


@dataclass
class MountainPath:
    """``K + 1`` fields on ``S_a`` joining ``v1`` to ``v2``; endpoints are never moved."""

    nodes: list
    a: float

    def __post_init__(self):
        if len(self.nodes) < 3:
            raise ValueError("a path needs at least three nodes")
        g = self.nodes[0].grid
        if any(v.grid != g for v in self.nodes):
            raise ValueError("all path nodes must share one grid")

    @property
    def grid(self) -> RadialGrid:
        return self.nodes[0].grid

    @property
    def v1(self) -> RadialField:
        return self.nodes[0]

    @property
    def v2(self) -> RadialField:
        return self.nodes[-1]

    def energies(self, params: ProblemParams) -> np.ndarray:
        return np.array([energy(params, v) for v in self.nodes])

    def grad_norms(self) -> np.ndarray:
        return np.array([grad_norm_sq(v) for v in self.nodes])

    def argmax(self, params: ProblemParams) -> int:
        e = self.energies(params)
        return int(np.flatnonzero(e == e.max())[-1])

    def crossing(self, t0: float) -> Optional[int]:
        """First ``k`` with ``G_k <= t0 <= G_{k+1}``, ``G = ||grad .||^2``."""
        G = self.grad_norms()
        for k in range(len(G) - 1):
            if G[k] <= t0 <= G[k + 1]:
                return k
        return None


@dataclass
class MountainResult:
    point: CriticalPoint
    path: MountainPath
    c_table: list  # (theta, c_theta, grad_norm_sq, lambda, converged, path_max)
    path_max: float
    barrier_lower: float
    barrier_sampled: float
    crossing_index: Optional[int]
    t_star: float
    checks: dict = field(default_factory=dict)


# --- construction --------------------------------------------------------


def find_t_star(params: ProblemParams, v1: RadialField, e1: float, t0: float, t_max: float = 1e6) -> float:
    """Smallest doubling ``t`` with ``Phi_{1/2}(v_t) < e1`` and ``||grad v_t||^2 > t0``.

    ``Phi_theta <= Phi_{1/2}`` and ``e1 = Phi_1(v1) <= Phi_theta(v1)``, so the
    endpoint works for the whole family.
    """
    half = params.with_(theta=0.5)
    parts = energy_parts(params, v1)
    N = params.dimension
    def ok(t):
        grad_t = t * t * (parts.grad + (t**N - 1.0) * parts.quasi)
        return grad_t > t0 and fiber_energy(half, v1, t, parts) < e1

    t = 2.0
    while t <= t_max:
        if ok(t):
            # the admissible set is an interval [t_min, inf); bisect toward t_min then keep a margin
            lo, hi = t / 2.0, t
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                lo, hi = (lo, mid) if ok(mid) else (mid, hi)
            return 1.1 * hi
        t *= 2.0
    raise SolverFailure("no fiber point below the local minimum; mountain-pass geometry not found")


def path_grid(v1: RadialField, t_star: float, opts: MountainOptions) -> RadialGrid:
    g = v1.grid
    h = rms_radius(v1) / t_star * opts.resolution
    n = int(math.ceil(g.radius / h))
    if n > opts.max_points:
        log.warning("path grid capped at %d points (wanted %d)", opts.max_points, n)
        n = opts.max_points
    return RadialGrid(g.dimension, g.radius, max(n, g.n))


def fiber_path(params: ProblemParams, v1: RadialField, t_star: float, nodes: int) -> MountainPath:
    ts = np.geomspace(1.0, t_star, nodes + 1)
    fields = [v1] + [project_to_mass(stretch(v1, float(t)), params.a) for t in ts[1:]]
    return MountainPath(fields, params.a)


# --- relaxation ----------------------------------------------------------


def _segment_lengths(path_nodes: list) -> np.ndarray:
    norms = [v.h1_norm() for v in path_nodes]
    out = []
    for k in range(len(path_nodes) - 1):
        d = (path_nodes[k + 1] - path_nodes[k]).h1_norm()
        out.append(d / (0.5 * (norms[k] + norms[k + 1])))
    return np.array(out)


def reparametrize(params: ProblemParams, nodes: list, energies: Optional[np.ndarray] = None) -> list:
    """Redistribute interior nodes at equal energy-weighted relative arclength."""
    if energies is None:
        energies = np.array([energy(params, v) for v in nodes])
    pos = np.maximum(energies, 0.0)
    top = pos.max()
    wt = 1.0 + (pos / top if top > 0 else 0.0)
    seg = _segment_lengths(nodes) * 0.5 * (wt[:-1] + wt[1:])
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return list(nodes)
    targets = np.linspace(0.0, s[-1], len(nodes))
    out = [nodes[0]]
    for st in targets[1:-1]:
        k = min(int(np.searchsorted(s, st, side="right")) - 1, len(nodes) - 2)
        lam = (st - s[k]) / (s[k + 1] - s[k]) if s[k + 1] > s[k] else 0.0
        vals = (1.0 - lam) * nodes[k].values + lam * nodes[k + 1].values
        out.append(project_to_mass(RadialField(nodes[k].grid, vals), params.a))
    out.append(nodes[-1])
    return out


def _h1_inner(grid: RadialGrid, x: np.ndarray, y: np.ndarray) -> float:
    return float(x @ (grid.stiffness @ y) + np.dot(grid.weights, x * y))


def _node_step(params: ProblemParams, nodes: list, k: int, energy_k: float, pc, cap: float, hint: float):
    """Descent step for node ``k`` with the path tangent removed and ``||step||_{H^1} <= cap``.

    ``hint`` is the node's last accepted step length; returns ``(field, energy, length)``.
    """
    grid = nodes[k].grid
    d, g = descent_direction(params, nodes[k], pc)
    tau = nodes[k + 1].values - nodes[k - 1].values
    tt = _h1_inner(grid, tau, tau)
    if tt > 0:
        d = d - _h1_inner(grid, d, tau) / tt * tau
    slope = float(np.dot(grid.weights, g * d))
    size = math.sqrt(max(_h1_inner(grid, d, d), 0.0))
    if slope >= 0 or size == 0:
        return None
    step = min(cap, 2.0 * hint) / size
    for _ in range(30):
        vals = nodes[k].values + step * d
        vals[-1] = 0.0
        trial = project_to_mass(RadialField(grid, vals), params.a)
        e = energy(params, trial)
        if e < energy_k + 1e-4 * step * slope:
            return trial, e, step * size
        step *= 0.5
    return None


def relax(params: ProblemParams, path: MountainPath, opts: MountainOptions) -> tuple[MountainPath, list]:
    """String sweeps; a sweep is kept only if the path maximum does not rise.

    Nodes move perpendicular to the path (nudged-string style); a node may
    travel at most ``frac`` of its shorter adjacent segment per sweep, and
    ``frac`` is halved whenever a sweep is rejected. Reparametrization only
    runs when segments become uneven, since interpolating across scales is
    the one step that can raise the maximum.
    """
    pc = _preconditioner(path.grid)
    nodes = list(path.nodes)
    energies = np.array([energy(params, v) for v in nodes])
    history = [float(energies.max())]
    frac = 0.5
    quiet = 0
    hints = np.full(len(nodes), np.inf)
    for _ in range(opts.max_sweeps):
        seg = [(nodes[k + 1] - nodes[k]).h1_norm() for k in range(len(nodes) - 1)]
        moved = list(nodes)
        new_e = energies.copy()
        new_hints = hints.copy()
        for k in range(1, len(nodes) - 1):
            out = _node_step(params, nodes, k, energies[k], pc, frac * min(seg[k - 1], seg[k]), hints[k])
            if out is not None:
                moved[k], new_e[k], new_hints[k] = out
        lengths = _segment_lengths(moved)
        if lengths.max() > opts.uneven * lengths.min():
            moved = reparametrize(params, moved, new_e)
            moved_e = np.array([energy(params, v) for v in moved])
        else:
            moved_e = new_e
        if moved_e.max() <= energies.max():
            gain = (energies.max() - moved_e.max()) / max(1.0, abs(energies.max()))
            nodes, energies, hints = moved, moved_e, new_hints
            history.append(float(energies.max()))
            quiet = quiet + 1 if gain < opts.sweep_tol else 0
            frac = min(1.5 * frac, 0.5)
        else:
            frac *= 0.5
        if quiet >= 5 or frac < 1e-6:
            break
    return MountainPath(nodes, params.a), history


def fiber_peak(params: ProblemParams, v: RadialField) -> tuple[RadialField, float]:
    """Move ``v`` to the maximum of its own fiber, which lies on ``P_theta = 0``."""
    from scipy.optimize import minimize_scalar

    parts = energy_parts(params, v)
    r = minimize_scalar(lambda lt: -fiber_energy(params, v, math.exp(lt), parts), bounds=(-3.0, 3.0),
                        method="bounded", options={"xatol": 1e-10})
    t = math.exp(r.x)
    return project_to_mass(stretch(v, t), params.a), t


def refine_saddle(params: ProblemParams, v: RadialField, opts: MountainOptions):
    """Newton from ``v``; if that fails, Newton from the peak of its fiber."""
    w, lam, _, ok = newton_refine(params, v, tol=opts.newton_tol, max_iters=opts.max_newton)
    if ok and lam < 0:
        return w, ok
    peak, _ = fiber_peak(params, v)
    w2, lam2, _, ok2 = newton_refine(params, peak, tol=opts.newton_tol, max_iters=opts.max_newton)
    if ok2 or not ok:
        return w2, ok2
    return w, ok


# --- barrier -------------------------------------------------------------


def barrier_samples(params: ProblemParams, grid: RadialGrid, t0: float, count: int, seed: int) -> float:
    """Minimum of ``Phi_theta`` over random radial fields pushed onto ``||grad v||^2 = t0``.

    Fields are moved along their fibers; ``||grad v_s||^2`` is increasing in
    ``s`` and the fiber energy is evaluated in closed form, so no resampling
    error enters. The result is an upper estimate of the boundary infimum.
    """
    from scipy.optimize import brentq

    from .gn_estimator import random_smooth_fields

    rng = np.random.default_rng(seed)
    best = math.inf
    N = params.dimension
    for u in random_smooth_fields(grid, count, rng):
        v = project_to_mass(u, params.a)
        parts = energy_parts(params, v)

        def gap(log_s):
            s = math.exp(log_s)
            return s * s * (parts.grad + (s**N - 1.0) * parts.quasi) - t0

        lo, hi = -1.0, 1.0
        while gap(lo) > 0:
            lo -= 1.0
        while gap(hi) < 0:
            hi += 1.0
        s = math.exp(brentq(gap, lo, hi, xtol=1e-14))
        best = min(best, fiber_energy(params, v, s, parts))
    return best


# --- driver --------------------------------------------------------------


def mountain_pass_solve(params: ProblemParams, v1: CriticalPoint, opts: Optional[MountainOptions] = None,
                        t0: Optional[float] = None) -> MountainResult:
    """Second critical point of ``Phi`` on ``S_a`` above the barrier ``||grad v||^2 = t0``."""
    opts = opts or MountainOptions()
    params.require_supercritical()
    N = params.dimension
    if params.q > sobolev_exponent(N) and not opts.experimental:
        raise ConfigurationError(
            f"requires q <= 2^* = {sobolev_exponent(N):g} for the mountain-pass solver (got q={params.q:g});"
            " pass experimental=True to run anyway"
        )
    flags = []
    if params.q > sobolev_exponent(N):
        flags.append("experimental")
    if t0 is None:
        th = thresholds(params)
        t0 = th.t0
        if params.a >= th.a_star:
            flags.append(OUTSIDE_RANGE)
    if v1.kind != "local_min":
        raise ConfigurationError("mountain_pass_solve needs a local minimizer as first endpoint")

    one = params.with_(theta=1.0)
    t_star = find_t_star(one, v1.field, v1.energy, t0)
    grid = path_grid(v1.field, t_star, opts)
    start = project_to_mass(resample(v1.field, grid), params.a) if grid != v1.field.grid else v1.field
    # the endpoint must be a minimizer of the discretization the path lives on
    start, _, _, _ = newton_refine(one, start, tol=opts.newton_tol, max_iters=opts.max_newton)
    K = opts.nodes
    path = None
    c_table = []
    best = None
    for attempt in range(3):
        path = fiber_path(one, start, t_star, K)
        c_table = []
        collapsed = False
        for theta in opts.thetas:
            pt = params.with_(theta=theta)
            path, hist = relax(pt, path, opts)
            log.info("theta=%g: %d sweeps, path max %.8g -> %.8g", theta, len(hist) - 1, hist[0], hist[-1])
            k = path.argmax(pt)
            if k in (0, len(path.nodes) - 1):
                collapsed = True
                break
            v, ok = refine_saddle(pt, path.nodes[k], opts)
            cp = finalize(pt, v, "mountain_pass", flags=flags + ([] if ok else ["approximate"]))
            log.info("theta=%g: newton ok=%s energy %.8g (path max %.8g)", theta, ok, cp.energy, hist[-1])
            c_table.append((theta, cp.energy, cp.grad_norm_sq, cp.lam, ok, hist[-1]))
            best = cp
        if not collapsed:
            break
        K *= 2
        log.info("path collapsed onto an endpoint; retrying with %d nodes", K)
    else:
        raise SolverFailure("string collapsed onto an endpoint at every resolution")

    final = params.with_(theta=1.0)
    e_path = path.energies(final)
    path_max = float(e_path.max())
    if best.lam >= 0:
        raise SolverFailure(f"mountain-pass multiplier lambda = {best.lam:.6g} is not negative", best=best)
    if best.pohozaev_residual > 1e-3:
        best.flags.append("pohozaev above threshold")

    lower = t0 * float(landscape(final, t0))
    sampled = barrier_samples(final, grid, t0, opts.barrier_samples, opts.seed)
    k_cross = path.crossing(t0)
    c_vals = [row[1] for row in c_table]
    tol = [1e-6 * (1 + abs(c)) for c in c_vals]
    checks = {
        "energy_positive": best.energy > 0,
        "ordering": v1.energy < 0 < best.energy,
        "lambda_negative": best.lam < 0,
        "c_theta_below_path_max": all(row[1] <= row[5] * (1 + 1e-6) for row in c_table),
        "c_theta_nonincreasing": all(c_vals[i + 1] <= c_vals[i] + tol[i] for i in range(len(c_vals) - 1)),
        "barrier_positive": lower > 0,
        "path_above_barrier": path_max >= lower,
        "crossing": k_cross is not None,
    }
    return MountainResult(best, path, c_table, path_max, lower, sampled, k_cross, t_star, checks)
