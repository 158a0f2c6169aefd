"""Numerical Gagliardo-Nirenberg constants.

Two scale- and dilation-invariant quotients are maximized over radial fields:

* ``H1``:  ``C^s >= int|u|^s / ((int u^2)^alpha (int|grad u|^2)^beta)`` with
  ``alpha = (2s - N(s-2))/4``, ``beta = N(s-2)/4``;
* ``E``:   ``C^t >= int|u|^{t/2} / ((int|u|)^alpha (int|grad u|^2)^beta)`` with
  ``alpha = (4N - t(N-2))/(2(N+2))``, ``beta = N(t-2)/(2(N+2))``.

Every evaluation of the quotient is a lower bound for the sharp constant.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import DomainError
from .radial import RadialField, RadialGrid, apply_laplacian, dilate, grad_norm_sq, resample
from .variational import GNConstant, sobolev_exponent

log = logging.getLogger(__name__)

CACHE_VERSION = 1


@dataclass(frozen=True)
class QuotientSpec:
    kind: str
    dimension: int
    exponent: float

    def __post_init__(self):
        if self.kind not in ("H1", "E"):
            raise ValueError(f"unknown quotient kind {self.kind!r}")
        upper = sobolev_exponent(self.dimension) * (1 if self.kind == "H1" else 2)
        if not 2.0 < self.exponent < upper:
            raise ValueError(f"exponent {self.exponent} outside (2, {upper}) for kind {self.kind}")

    @property
    def theta_exponents(self) -> tuple[float, float]:
        N, s = self.dimension, self.exponent
        if self.kind == "H1":
            return (2 * s - N * (s - 2)) / 4, N * (s - 2) / 4
        return (4 * N - s * (N - 2)) / (2 * (N + 2)), N * (s - 2) / (2 * (N + 2))

    @property
    def power(self) -> float:
        """Exponent of ``|u|`` in the numerator integral."""
        return self.exponent if self.kind == "H1" else self.exponent / 2

    def key(self) -> str:
        return f"{self.kind}:N={self.dimension}:s={self.exponent!r}"


def _integrals(spec: QuotientSpec, u: RadialField):
    w = u.grid.weights
    a = np.abs(u.values)
    num = float(np.dot(w, a**spec.power))
    low = float(np.dot(w, a * a)) if spec.kind == "H1" else float(np.dot(w, a))
    return num, low, grad_norm_sq(u)


def log_quotient(spec: QuotientSpec, u: RadialField) -> float:
    if u.is_zero():
        raise DomainError("quotient undefined for the zero field")
    num, low, grad = _integrals(spec, u)
    if grad <= 0 or low <= 0:
        raise DomainError("quotient undefined for a field without gradient")
    alpha, beta = spec.theta_exponents
    return (math.log(num) - alpha * math.log(low) - beta * math.log(grad)) / spec.exponent


def quotient(spec: QuotientSpec, u: RadialField) -> float:
    """Lower bound for ``C_{N,s}`` realized by ``u``."""
    return math.exp(log_quotient(spec, u))


def log_quotient_gradient(spec: QuotientSpec, u: RadialField) -> np.ndarray:
    """Riesz representative (quadrature inner product) of ``d log Q``."""
    num, low, grad = _integrals(spec, u)
    alpha, beta = spec.theta_exponents
    x = u.values
    k = spec.power
    d_num = k * np.abs(x) ** (k - 1) * np.sign(x)
    # E-kind iterates are kept >= 0, where the one-sided derivative of |u| is 1
    d_low = 2 * x if spec.kind == "H1" else np.where(x < 0, -1.0, 1.0)
    d_grad = 2 * apply_laplacian(-u).values
    g = (d_num / num - alpha * d_low / low - beta * d_grad / grad) / spec.exponent
    g[-1] = 0.0
    return g


@dataclass
class EstimateOptions:
    max_iters: int = 2000
    tol: float = 1e-9
    window: int = 20
    grid: Optional[RadialGrid] = None
    seed_width: float = 1.0
    min_step: float = 1e-14
    # grid refinement until the maximizer's core is resolved
    min_core_cells: float = 32.0
    max_points: int = 1 << 15


@dataclass
class EstimateResult:
    constant: GNConstant
    field: RadialField
    history: list = field(default_factory=list)
    iterations: int = 0
    core_cells: float = math.nan


def default_grid(dimension: int) -> RadialGrid:
    return RadialGrid(dimension, 12.0, 2048)


def _recentre(u: RadialField) -> RadialField:
    # the quotient is invariant under u -> c u; keep max |u| = 1 for conditioning
    m = np.max(np.abs(u.values))
    return u * (1.0 / m) if m > 0 else u


def _preconditioned(grid: RadialGrid, u: RadialField, g: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Solve ``(-Lap + mu) d = g`` on the free nodes, ``d = 0`` elsewhere.

    ``mu = ||grad u||^2 / ||u||^2`` matches the metric to the field's own length scale.
    """
    mu = grad_norm_sq(u) / max(u.l2_norm_sq(), 1e-300)
    A = (grid.stiffness + mu * sp.diags(grid.weights)).tocsr()[free][:, free]
    d = np.zeros(grid.n)
    d[free] = spsolve(A.tocsc(), grid.weights[free] * g[free])
    return d


def _width(spec: QuotientSpec, u: RadialField) -> float:
    """RMS radius of ``|u|`` (E) or ``u^2`` (H1)."""
    dens = np.abs(u.values) if spec.kind == "E" else u.values**2
    r = np.asarray(u.grid.nodes)
    return math.sqrt(float(np.dot(u.grid.weights, r * r * dens)) / float(np.dot(u.grid.weights, dens)))


def _without_dilation(u: RadialField, d: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Remove the component of ``d`` along the dilation generator ``r u'(r)``.

    The continuum quotient is flat along that direction; the discrete one is
    not, and following it leads to fields the grid cannot resolve.
    """
    r = np.asarray(u.grid.nodes)
    z = r * np.gradient(u.values, u.grid.h)
    z[~free] = 0.0
    w = u.grid.weights
    zz = float(np.dot(w, z * z))
    if zz == 0.0:
        return d
    return d - float(np.dot(w, d * z)) / zz * z


def _line_search(spec, u, d, current, step, min_step):
    """Backtrack until the quotient increases, then expand while it keeps increasing."""

    def trial(t):
        vals = u.values + t * d
        if spec.kind == "E":
            vals = np.maximum(vals, 0.0)
        vals[-1] = 0.0
        cand = RadialField(u.grid, vals)
        if cand.is_zero():
            return None, -math.inf
        return cand, log_quotient(spec, cand)

    while step > min_step:
        cand, val = trial(step)
        if val > current:
            break
        step *= 0.5
    else:
        return None, current, step
    for _ in range(8):
        c2, v2 = trial(2 * step)
        if not v2 > val:
            break
        cand, val, step = c2, v2, 2 * step
    return cand, val, step


def core_cells(spec: QuotientSpec, u: RadialField) -> float:
    """RMS radius of the numerator density ``|u|^power`` in grid cells.

    Near the Sobolev exponent the H1 maximizer has a core far narrower than
    its L2 width; when the core spans only a few cells the discrete quotient
    overshoots the sharp constant.
    """
    d = np.abs(u.values) ** spec.power
    r = np.asarray(u.grid.nodes)
    w = u.grid.weights
    return math.sqrt(float(np.dot(w, r * r * d)) / float(np.dot(w, d))) / u.grid.h


def _ascend(spec: QuotientSpec, u: RadialField, opts: EstimateOptions, width0: float):
    grid = u.grid
    current = best = log_quotient(spec, u)
    history = [math.exp(current)]
    step = 1.0
    converged = False
    it = 0
    prev = None  # (free mask, gradient, preconditioned gradient, direction)
    for it in range(1, opts.max_iters + 1):
        g = log_quotient_gradient(spec, u)
        free = np.ones(grid.n, dtype=bool)
        free[-1] = False
        if spec.kind == "E":
            # nodes pinned at 0 whose gradient points outward stay put
            free &= ~((u.values <= 0.0) & (g <= 0.0))
        pg = _preconditioned(grid, u, g, free)
        d = pg.copy()
        if prev is not None and np.array_equal(prev[0], free):
            # Polak-Ribiere+ in the preconditioned metric
            w = grid.weights
            beta = float(np.dot(w, g * (pg - prev[2]))) / float(np.dot(w, prev[1] * prev[2]))
            if beta > 0:
                d = pg + beta * prev[3]
                if np.dot(w, g * d) <= 0:
                    d = pg
        d = _without_dilation(u, d, free)
        prev = (free, g, pg, d)
        norm = math.sqrt(max(float(np.dot(grid.weights, d * d)), 0.0))
        if norm == 0:
            converged = True
            break
        scale = math.sqrt(u.l2_norm_sq()) / norm
        cand, val, step = _line_search(spec, u, d * scale, current, step, opts.min_step)
        if cand is None:
            if np.array_equal(d, pg):
                converged = True
                break
            prev = None
            step = 1.0
            continue
        u, current = _recentre(cand), val
        if abs(_width(spec, u) / width0 - 1.0) > 0.05:
            # second-order drift toward grid-scale concentration: pull the width back
            u = _recentre(dilate(u, _width(spec, u) / width0))
            current = log_quotient(spec, u)
            prev = None
        best = max(best, current)
        history.append(math.exp(best))
        # judge progress on the best value over a window; single steps can be
        # shrunken by the line search or undone by a width correction
        if len(history) > opts.window and math.log(history[-1] / history[-1 - opts.window]) < opts.tol:
            converged = True
            break
    return u, best, history, it, converged


def estimate_constant(spec: QuotientSpec, opts: Optional[EstimateOptions] = None) -> EstimateResult:
    """Maximize the quotient by preconditioned gradient ascent from ``exp(-r^2)``.

    The ascent direction is the ``H^1``-Riesz representative of ``d log Q``;
    steps are accepted only when the quotient increases, so the history is
    monotone. For the E-kind quotient iterates are kept nonnegative, which
    loses nothing since ``|u|`` has the same quotient as ``u``.

    If the converged maximizer's core spans fewer than ``min_core_cells``
    cells, the grid is doubled and the ascent continued there; the value
    reported is the finest grid's, since coarse grids overshoot.
    """
    opts = opts or EstimateOptions()
    grid = opts.grid or default_grid(spec.dimension)
    if grid.dimension != spec.dimension:
        raise ValueError("grid dimension does not match the quotient")
    u = _recentre(grid.sample(lambda r: np.exp(-((r / opts.seed_width) ** 2))))
    width0 = _width(spec, u)
    total = 0
    while True:
        u, best, history, it, converged = _ascend(spec, u, opts, width0)
        total += it
        cells = core_cells(spec, u)
        if cells >= opts.min_core_cells or 2 * u.grid.n > opts.max_points:
            break
        log.info("GN estimate for %s: core spans %.1f cells at n=%d; refining", spec.key(), cells, u.grid.n)
        fine = u.grid.refined(2)
        if cells >= opts.min_core_cells / 4:
            u = _recentre(resample(u, fine))
        else:
            # a core on a handful of cells is a grid-scale spike the finer grid would inherit
            u = _recentre(fine.sample(lambda r: np.exp(-((r / opts.seed_width) ** 2))))
    if cells < opts.min_core_cells:
        log.warning("GN estimate for %s is under-resolved: core spans %.1f cells at n=%d",
                    spec.key(), cells, u.grid.n)
    const = GNConstant(
        dimension=spec.dimension,
        exponent=spec.exponent,
        value=math.exp(best),
        kind=spec.kind,
        provenance="estimated",
        converged=converged,
        grid_signature=grid.signature,
    )
    if not converged:
        log.warning("GN estimate for %s did not converge in %d iterations", spec.key(), opts.max_iters)
    return EstimateResult(constant=const, field=u, history=history, iterations=total, core_cells=cells)


def verify_inequality(spec: QuotientSpec, constant: float, fields) -> list[int]:
    """Indices of fields whose quotient exceeds ``constant`` (counterexamples)."""
    bad = []
    for i, u in enumerate(fields):
        if quotient(spec, u) > constant:
            bad.append(i)
    return bad


def random_smooth_fields(grid: RadialGrid, count: int, rng: np.random.Generator, modes: int = 4):
    """Random radial fields: sums of Gaussian bumps with random centres, widths and signs."""
    R = grid.radius
    r = np.asarray(grid.nodes)
    out = []
    for _ in range(count):
        vals = np.zeros_like(r)
        for _ in range(rng.integers(1, modes + 1)):
            c = rng.uniform(0, 0.3 * R)
            wdt = rng.uniform(0.3, 0.15 * R)
            amp = rng.uniform(-1.0, 1.0)
            vals += amp * (np.exp(-(((r - c) / wdt) ** 2)) + np.exp(-(((r + c) / wdt) ** 2)))
        vals[-1] = 0.0
        if not np.any(vals):
            vals[0] = 1.0
        out.append(RadialField(grid, vals))
    return out


# --- cache ----------------------------------------------------------------


class ConstantCache:
    """JSON cache of estimated constants keyed by ``(kind, N, s, grid signature)``.

    A lookup with a different grid signature is a miss, never a stale hit.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._data = {"version": CACHE_VERSION, "entries": {}}
        if self.path.exists():
            data = json.loads(self.path.read_text())
            if data.get("version") == CACHE_VERSION:
                self._data = data

    @staticmethod
    def _key(spec: QuotientSpec, grid: RadialGrid) -> str:
        return f"{spec.key()}:grid={grid.dimension},{grid.radius!r},{grid.n}"

    def get(self, spec: QuotientSpec, grid: RadialGrid) -> Optional[GNConstant]:
        entry = self._data["entries"].get(self._key(spec, grid))
        if entry is None:
            return None
        const = GNConstant.from_dict(entry)
        if const.grid_signature != grid.signature:
            return None
        return const

    def put(self, spec: QuotientSpec, grid: RadialGrid, const: GNConstant) -> None:
        self._data["entries"][self._key(spec, grid)] = const.to_dict()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self._data, indent=1, sort_keys=True))

    def signature(self) -> dict:
        return {"version": CACHE_VERSION, "keys": sorted(self._data["entries"])}


def get_or_estimate(spec: QuotientSpec, grid: RadialGrid, cache: Optional[ConstantCache] = None,
                    opts: Optional[EstimateOptions] = None) -> GNConstant:
    if cache is not None:
        hit = cache.get(spec, grid)
        if hit is not None:
            return hit
    opts = opts or EstimateOptions()
    opts.grid = grid
    const = estimate_constant(spec, opts).constant
    if cache is not None:
        cache.put(spec, grid, const)
    return const
