"""Constrained critical points of ``Phi_theta`` on ``S_a = {int f(v)^2 = a}``.

Descent uses the ``H^1``-preconditioned projected gradient: with
``P = (-Lap + mu)^{-1}``, the search direction is ``P g - lambda~ P m`` where
``g`` is the energy gradient, ``m`` the mass gradient and ``lambda~`` makes the
direction tangent to ``S_a``; every trial point is put back on ``S_a`` by
``project_to_mass``. Close to a critical point a bordered Newton iteration
on ``(v, lambda)`` finishes the job; the same Newton step refines saddles.

Residuals reported on every :class:`CriticalPoint`:

* ``grad_residual``: ``||g - lambda m/2||_{H^-1} / max(1, ||v||_{H^1})`` with the
  least-squares multiplier;
* ``pohozaev_residual``: ``|P_theta(v)| / (1 + ||grad v||^2)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from . import dual_transform as dt
from .errors import BoundaryEscapeError, ConfigurationError, ConvergenceError, DomainError, SolverFailure
from .radial import RadialField, RadialGrid, grad_norm_sq, resample
from .variational import (
    ProblemParams,
    energy,
    energy_gradient,
    energy_parts,
    fiber_energy,
    mass,
    mass_gradient,
    pohozaev,
    thresholds,
)

log = logging.getLogger(__name__)

OUTSIDE_RANGE = "outside theorem range"


@dataclass
class SolverOptions:
    tol: float = 1e-6
    max_iters: int = 4000
    newton_switch: float = 1e-3
    max_newton: int = 40
    armijo: float = 1e-4
    energy_floor: float = -1e6
    pohozaev_tol: float = 1e-3
    # enlarge the ball (fixed h) until max |v| on its outer 5% is below this; None disables
    decay_target: Optional[float] = 1e-8
    max_radius: float = 160.0
    # stretch factor at which global descent probes the fiber for unboundedness
    fiber_probe: float = 1e6


@dataclass
class CriticalPoint:
    field: RadialField
    lam: float
    energy: float
    pohozaev_residual: float
    grad_residual: float
    kind: str
    theta: float
    a: float
    mass_error: float
    lam_pairing: float = math.nan
    lam_ls: float = math.nan
    grad_norm_sq: float = math.nan
    iterations: int = 0
    history: list = field(default_factory=list, repr=False)
    flags: list = field(default_factory=list)
    seed: str = ""

    @property
    def converged(self) -> bool:
        return "unconverged" not in self.flags and "approximate" not in self.flags

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "theta": self.theta,
            "a": self.a,
            "energy": self.energy,
            "lambda": self.lam,
            "lambda_pairing": self.lam_pairing,
            "lambda_ls": self.lam_ls,
            "grad_norm_sq": self.grad_norm_sq,
            "mass_error": self.mass_error,
            "grad_residual": self.grad_residual,
            "pohozaev_residual": self.pohozaev_residual,
            "iterations": self.iterations,
            "flags": list(self.flags),
            "seed": self.seed,
            "boundary_decay": self.field.boundary_decay(),
        }


# --- building blocks -----------------------------------------------------


def project_to_mass(v: RadialField, a: float) -> RadialField:
    """Return ``f^{-1}(c f(v))`` with ``c > 0`` such that the mass equals ``a``.

    The mass of ``f^{-1}(c f(v))`` is exactly ``c^2 mass(v)``, so the scalar
    equation has the closed-form root ``c = sqrt(a / mass(v))``.
    """
    if not a > 0:
        raise DomainError("target mass must be positive")
    fv = dt.forward(v.values)
    m = float(np.dot(v.grid.weights, fv * fv))
    if m == 0.0:
        raise DomainError("cannot rescale the zero field to positive mass")
    c = math.sqrt(a / m)
    if c == 1.0:
        return v
    vals = dt.inverse(c * fv)
    vals[-1] = 0.0
    return RadialField(v.grid, vals)


class _Preconditioner:
    """Cached solver for ``(S + mu W) x = W y`` on the interior nodes."""

    def __init__(self, grid: RadialGrid, mu: float = 1.0):
        self.grid = grid
        self.mu = mu
        A = (grid.stiffness + mu * sp.diags(grid.weights)).tocsc()[:-1, :-1]
        self._solve = sp.linalg.factorized(A.tocsc())

    def __call__(self, y: np.ndarray) -> np.ndarray:
        out = np.zeros(self.grid.n)
        out[:-1] = self._solve(self.grid.weights[:-1] * y[:-1])
        return out

    def dual_norm(self, y: np.ndarray) -> float:
        return math.sqrt(max(float(np.dot(self.grid.weights, y * self(y))), 0.0))


_PRECONDITIONERS: dict = {}


def _preconditioner(grid: RadialGrid, mu: float = 1.0) -> _Preconditioner:
    key = (grid.signature, mu)
    pc = _PRECONDITIONERS.get(key)
    if pc is None:
        if len(_PRECONDITIONERS) > 16:
            _PRECONDITIONERS.clear()
        pc = _PRECONDITIONERS[key] = _Preconditioner(grid, mu)
    return pc


def ls_multiplier(params: ProblemParams, v: RadialField) -> float:
    """Least-squares ``lambda`` in ``Phi' = lambda f f'``."""
    g = energy_gradient(params, v)
    m = mass_gradient(v)
    mm = m.inner(m)
    if mm == 0:
        raise DomainError("multiplier undefined for the zero field")
    return 2.0 * g.inner(m) / mm


def pairing_multiplier(params: ProblemParams, v: RadialField) -> float:
    """``lambda`` from testing the equation with ``f(v)/f'(v)``."""
    parts = energy_parts(params, v)
    if parts.mass == 0:
        raise DomainError("multiplier undefined for zero mass")
    th = params.theta
    return (parts.grad + parts.quasi - th * parts.lp - th * parts.lq) / parts.mass


def extract_multiplier(params: ProblemParams, v: RadialField) -> dict:
    """Both multiplier estimates plus the sign identity valid at critical points.

    ``identity_rhs`` is ``-(N-2)/2 int 2f^2/(1+2f^2)|grad v|^2 + theta[N(p-2)/2p - 1] int|f|^p
    + theta[N(q-2)/2q - 1] int|f|^q``, which equals ``lambda * mass`` at a solution.
    """
    parts = energy_parts(params, v)
    if parts.mass == 0:
        raise DomainError("multiplier undefined for zero mass")
    N, p, q, th = params.dimension, params.p, params.q, params.theta
    rhs = (
        -(N - 2) / 2 * parts.quasi
        + th * (N * (p - 2) / (2 * p) - 1) * parts.lp
        + th * (N * (q - 2) / (2 * q) - 1) * parts.lq
    )
    return {
        "pairing": pairing_multiplier(params, v),
        "least_squares": ls_multiplier(params, v),
        "identity_rhs": rhs,
        "mass": parts.mass,
    }


def projected_gradient(params: ProblemParams, v: RadialField):
    """``(r, lambda)`` with ``r = g - lambda m/2`` orthogonal to ``m`` in ``L^2``."""
    g = energy_gradient(params, v)
    m = mass_gradient(v)
    lam = 2.0 * g.inner(m) / m.inner(m)
    return g.values - 0.5 * lam * m.values, lam


def residuals(params: ProblemParams, v: RadialField):
    r, lam = projected_gradient(params, v)
    pc = _preconditioner(v.grid)
    grad_res = pc.dual_norm(r) / max(1.0, v.h1_norm())
    G = grad_norm_sq(v)
    poho = abs(pohozaev(params, v)) / (1.0 + G)
    return grad_res, poho, lam


def finalize(params: ProblemParams, v: RadialField, kind: str, iterations: int = 0, history=None,
             flags=None, seed: str = "") -> CriticalPoint:
    grad_res, poho, lam = residuals(params, v)
    mult = extract_multiplier(params, v)
    return CriticalPoint(
        field=v,
        lam=lam,
        energy=energy(params, v),
        pohozaev_residual=poho,
        grad_residual=grad_res,
        kind=kind,
        theta=params.theta,
        a=params.a,
        mass_error=abs(mass(v) / params.a - 1.0),
        lam_pairing=mult["pairing"],
        lam_ls=mult["least_squares"],
        grad_norm_sq=grad_norm_sq(v),
        iterations=iterations,
        history=list(history or []),
        flags=list(flags or []),
        seed=seed,
    )


# --- descent and Newton --------------------------------------------------


def descent_direction(params: ProblemParams, v: RadialField, pc: _Preconditioner) -> np.ndarray:
    """Preconditioned steepest-descent direction tangent to ``S_a``."""
    g = energy_gradient(params, v).values
    m = mass_gradient(v).values
    Pg, Pm = pc(g), pc(m)
    w = v.grid.weights
    lam = float(np.dot(w, Pg * m)) / float(np.dot(w, Pm * m))
    return -(Pg - lam * Pm), g


def descent_step(params: ProblemParams, v: RadialField, pc: _Preconditioner, step: float,
                 armijo: float = 1e-4, current: Optional[float] = None, min_step: float = 1e-16):
    """One Armijo-backtracked step; returns ``(v, energy, step)`` or ``None`` if no decrease."""
    if current is None:
        current = energy(params, v)
    d, g = descent_direction(params, v, pc)
    slope = float(np.dot(v.grid.weights, g * d))
    if slope >= 0:
        return None
    scale = 1.0
    while step > min_step:
        vals = v.values + step * d
        vals[-1] = 0.0
        trial = project_to_mass(RadialField(v.grid, vals), params.a)
        e = energy(params, trial)
        if e < current + armijo * step * slope and e < current:
            return trial, e, step
        step *= 0.5
    return None


def newton_system(params: ProblemParams, v: RadialField, lam: float):
    """Residual and Jacobian of ``(S v - W n(v) - lam W f f', mass(v) - a)`` on interior nodes."""
    grid = v.grid
    x = v.values
    fv, fp = dt.DEFAULT.evaluate(x)
    af = np.abs(fv)
    p, q, th = params.p, params.q, params.theta
    w = grid.weights
    ff = fv * fp
    nl = th * (af ** (p - 2) + af ** (q - 2)) * ff
    fp2, fp4 = fp * fp, fp**4
    f2 = fv * fv

    def dpow(k):
        return af ** (k - 2) * ((k - 1) * fp2 - 2.0 * f2 * fp4)

    dnl = th * (dpow(p) + dpow(q))
    dff = fp4
    S = grid.stiffness
    F = S @ x - w * nl - lam * w * ff
    J = S - sp.diags(w * (dnl + lam * dff))
    k = grid.n - 1
    col = (-w * ff)[:k].reshape(-1, 1)
    row = (2.0 * w * ff)[:k].reshape(1, -1)
    K = sp.bmat([[J[:k, :k], sp.csr_matrix(col)], [sp.csr_matrix(row), None]], format="csc")
    rhs = np.concatenate([F[:k], [float(np.dot(w, f2)) - params.a]])
    return K, rhs


def newton_refine(params: ProblemParams, v: RadialField, lam: Optional[float] = None, tol: float = 1e-6,
                  max_iters: int = 40, accept=None):
    """Bordered Newton on ``(v, lambda)``; converges to minima and saddles alike.

    ``accept(old, new)`` can veto a step (used to keep descent semantics). A vetoed
    or non-contracting step ends the iteration and returns the last good iterate.
    Returns ``(v, lam, iterations, converged)``.
    """
    if lam is None:
        lam = ls_multiplier(params, v)
    res, _, _ = residuals(params, v)
    it = 0
    for it in range(1, max_iters + 1):
        if res <= tol:
            return v, lam, it - 1, True
        K, rhs = newton_system(params, v, lam)
        try:
            delta = spsolve(K, -rhs)
        except RuntimeError:
            break
        if not np.all(np.isfinite(delta)):
            break
        improved = False
        for damp in (1.0, 0.5, 0.25, 0.125, 0.0625):
            vals = v.values.copy()
            vals[:-1] += damp * delta[:-1]
            try:
                trial = project_to_mass(RadialField(v.grid, vals), params.a)
            except DomainError:
                continue
            new_res, _, new_lam = residuals(params, trial)
            if new_res < res and (accept is None or accept(v, trial)):
                v, res, lam = trial, new_res, lam + damp * delta[-1]
                improved = True
                break
        if not improved:
            break
    return v, lam, it, res <= tol


# --- minimizers ----------------------------------------------------------


def _minimize(params: ProblemParams, seed: RadialField, opts: SolverOptions, t0: Optional[float], kind: str,
              flags: list, seed_label: str) -> CriticalPoint:
    v = project_to_mass(seed, params.a)
    pc = _preconditioner(v.grid)
    e = energy(params, v)
    history = [e]
    step = 1.0
    it = 0
    res = math.inf
    for it in range(1, opts.max_iters + 1):
        res, _, _ = residuals(params, v)
        if res <= opts.newton_switch:
            break
        out = descent_step(params, v, pc, step, opts.armijo, current=e)
        if out is None:
            break
        v, e, step = out
        history.append(e)
        step = min(2.0 * step, 4.0)
        if t0 is not None and grad_norm_sq(v) >= t0:
            raise BoundaryEscapeError(
                f"iterate left the region ||grad v||^2 < t0 = {t0:.6g}; a >= a*_N or GN constants too small",
                best=v,
            )
        if e < opts.energy_floor:
            raise ConfigurationError(
                f"energy below {opts.energy_floor:g}: functional not coercive on S_a (a >= a_bar* or q != 4+4/N)"
            )
        # without the gradient ball, a fiber of the iterate that falls through the
        # floor certifies non-coercivity long before plain descent would get there
        if t0 is None and it % 25 == 0 and fiber_energy(params, v, opts.fiber_probe) < opts.energy_floor:
            raise ConfigurationError(
                f"the fiber through the iterate drops below {opts.energy_floor:g}: functional not coercive "
                "on S_a (a >= a_bar* or q != 4+4/N)"
            )

    def keeps_descent(old, new):
        # Newton near a minimum lowers the energy at second order; allow rounding only
        ok = energy(params, new) <= energy(params, old) + 1e-13 * (1.0 + abs(energy(params, old)))
        if t0 is not None:
            ok = ok and grad_norm_sq(new) < t0
        return ok

    v, lam, nit, ok = newton_refine(params, v, tol=opts.tol, max_iters=opts.max_newton, accept=keeps_descent)
    # Newton may stall on the energy guard before the residual target; fall back to descent
    extra = 0
    while not ok and extra < opts.max_iters:
        out = descent_step(params, v, pc, step, opts.armijo)
        if out is None:
            break
        v, e, step = out
        history.append(e)
        step = min(2.0 * step, 4.0)
        extra += 1
        res, _, _ = residuals(params, v)
        ok = res <= opts.tol
    cp = finalize(params, v, kind, iterations=it + nit + extra, history=history, flags=flags, seed=seed_label)
    if not ok:
        cp.flags.append("unconverged")
        raise ConvergenceError(
            f"{kind} search stopped with projected-gradient residual {cp.grad_residual:.3g} > {opts.tol:g}", best=cp
        )
    if cp.lam >= 0:
        raise SolverFailure(f"converged multiplier lambda = {cp.lam:.6g} is not negative", best=cp)
    if cp.energy >= 0:
        raise SolverFailure(f"converged energy {cp.energy:.6g} is not negative", best=cp)
    if cp.pohozaev_residual > opts.pohozaev_tol:
        cp.flags.append("pohozaev above threshold")
    return cp


def _with_domain(solve, params: ProblemParams, seed: RadialField, opts: SolverOptions, flags: list) -> CriticalPoint:
    """Run ``solve`` and regrow the ball by 1.5x until the solution has decayed at the boundary."""
    cp = solve(seed, list(flags))
    target = opts.decay_target
    while target is not None and cp.field.boundary_decay() > target:
        g = cp.field.grid
        if g.radius * 1.5 > opts.max_radius:
            cp.flags.append("truncation")
            log.warning("boundary decay %.3g above %.3g at R=%g", cp.field.boundary_decay(), target, g.radius)
            break
        grid = RadialGrid(g.dimension, g.radius * 1.5, int(round(g.n * 1.5)))
        cp = solve(project_to_mass(resample(cp.field, grid), params.a), list(flags))
    return cp


def gaussian_seed(grid: RadialGrid, a: float, width: float = 1.0) -> RadialField:
    return project_to_mass(grid.sample(lambda r: np.exp(-((r / width) ** 2))), a)


def shrink_into_region(params: ProblemParams, v: RadialField, t0: Optional[float], max_halvings: int = 30):
    """Halve ``s`` in ``v_s`` until ``||grad v_s||^2 < t0`` and ``Phi_theta(v_s) < 0``.

    Uses the closed-form fiber expressions to choose ``s`` before resampling once.
    """
    parts = energy_parts(params, v)
    N = params.dimension
    s = 1.0
    for _ in range(max_halvings):
        grad_s = s * s * (parts.grad + (s**N - 1.0) * parts.quasi)
        if (t0 is None or grad_s < t0) and fiber_energy(params, v, s, parts) < 0:
            w = project_to_mass(v if s == 1.0 else _stretch(v, s), params.a)
            return w, s
        s *= 0.5
    raise ConfigurationError("no stretch of the seed has negative energy inside the gradient ball")


def _stretch(v, s):
    from .variational import stretch

    return stretch(v, s)


def local_minimize(params: ProblemParams, seed: Optional[RadialField] = None, opts: Optional[SolverOptions] = None,
                   grid: Optional[RadialGrid] = None, t0: Optional[float] = None) -> CriticalPoint:
    """Local minimizer of ``Phi_theta`` on ``S_a`` inside ``||grad v||^2 < t0``.

    ``t0`` defaults to ``t_bar`` at ``a*_N`` computed from the GN constants on
    ``params``. Masses at or above ``a*_N`` are still attempted; the result is
    stamped ``outside theorem range``.
    """
    params.require_supercritical()
    opts = opts or SolverOptions()
    flags = []
    if t0 is None:
        th = thresholds(params)
        t0 = th.t0
        if params.a >= th.a_star:
            flags.append(OUTSIDE_RANGE)
    if seed is None:
        seed = gaussian_seed(grid or RadialGrid(params.dimension, 20.0, 2048), params.a)
    seed, s0 = shrink_into_region(params, project_to_mass(seed, params.a), t0)
    cp = _with_domain(lambda v, fl: _minimize(params, v, opts, t0, "local_min", fl, f"gaussian stretched by s0={s0:g}"),
                      params, seed, opts, flags)
    if not cp.grad_norm_sq < t0:
        raise BoundaryEscapeError("minimizer is not inside the gradient ball", best=cp)
    return cp


def global_minimize(params: ProblemParams, seed: Optional[RadialField] = None, opts: Optional[SolverOptions] = None,
                    grid: Optional[RadialGrid] = None, a_bar: Optional[float] = None) -> CriticalPoint:
    """Minimizer of ``Phi`` on ``S_a`` for the mass-critical exponent ``q = 4 + 4/N``."""
    params.require_mass_critical()
    opts = opts or SolverOptions()
    flags = []
    if a_bar is not None and params.a >= a_bar:
        flags.append(OUTSIDE_RANGE)
    if seed is None:
        seed = gaussian_seed(grid or RadialGrid(params.dimension, 20.0, 2048), params.a)
    seed, s0 = shrink_into_region(params, project_to_mass(seed, params.a), None)
    return _with_domain(lambda v, fl: _minimize(params, v, opts, None, "global_min", fl, f"gaussian stretched by s0={s0:g}"),
                        params, seed, opts, flags)


# --- fiber experiments ---------------------------------------------------


@dataclass
class BlowupResult:
    certified: bool
    t_star: float
    energy: float
    depth: float
    tail: list
    largest_t: float
    floor: float


def blowup_witness(params: ProblemParams, v: RadialField, depth: float, t_max: float = 1e300,
                   tail_points: int = 16) -> BlowupResult:
    """Find ``t*`` with ``Phi(v_{t*}) < -depth`` by doubling ``t``.

    For ``q > 4 + 4/N`` this always succeeds. For ``q = 4 + 4/N`` below the
    coercivity threshold the search must fail; the returned ``floor`` is the
    smallest fiber energy seen.
    """
    if not depth > 0:
        raise DomainError("depth must be positive")
    parts = energy_parts(params, v)
    t = 1.0
    floor = fiber_energy(params, v, t, parts)
    while t <= t_max:
        e = fiber_energy(params, v, t, parts)
        floor = min(floor, e)
        if e < -depth:
            ts = t * np.geomspace(1.0, 64.0, tail_points)
            tail = [fiber_energy(params, v, float(x), parts) for x in ts]
            return BlowupResult(True, t, e, depth, tail, t, floor)
        t *= 2.0
    return BlowupResult(False, math.nan, math.nan, depth, [], t / 2.0, floor)


def fiber_curve(params: ProblemParams, v: RadialField, ts) -> list[tuple[float, float]]:
    parts = energy_parts(params, v)
    return [(float(t), fiber_energy(params, v, float(t), parts)) for t in ts]


@dataclass
class SubadditivityReport:
    a1: float
    a2: float
    values: dict
    margin: float
    tolerance: float
    status: str  # "pass" | "violation" | "inconclusive"
    detail: str = ""


def subadditivity_check(params: ProblemParams, a1: float, a2: float, opts: Optional[SolverOptions] = None,
                        grid: Optional[RadialGrid] = None, t0: Optional[float] = None) -> SubadditivityReport:
    """Margin ``m(a2) + m(a1 - a2) - m(a1)`` (nonnegative by theorem).

    Uses ``global_minimize`` when ``q = 4 + 4/N`` and ``local_minimize``
    otherwise. Failed sub-solves make the report inconclusive.
    """
    if not 0 < a2 < a1:
        raise DomainError("requires 0 < a2 < a1")
    opts = opts or SolverOptions()
    grid = grid or RadialGrid(params.dimension, 20.0, 2048)
    values = {}
    tol = 0.0
    try:
        for a in (a1, a2, a1 - a2):
            pa = params.with_(a=a)
            if params.is_mass_critical:
                cp = global_minimize(pa, opts=opts, grid=grid)
            else:
                cp = local_minimize(pa, opts=opts, grid=grid, t0=t0)
            values[a] = cp.energy
            tol += abs(cp.energy) * 1e-6 + cp.grad_residual * max(1.0, cp.field.h1_norm())
    except (ConvergenceError, ConfigurationError) as exc:
        return SubadditivityReport(a1, a2, values, math.nan, tol, "inconclusive", str(exc))
    margin = values[a2] + values[a1 - a2] - values[a1]
    return SubadditivityReport(a1, a2, values, margin, tol, "pass" if margin >= -tol else "violation")
