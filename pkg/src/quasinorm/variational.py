"""The constrained energy ``Phi_theta``, its fiber map and the landscape bound.

Fields ``v`` are in the dual variable, so ``u = f(v)`` is the physical
amplitude and the mass constraint reads ``int f(v)^2 dx = a``.

Gradient-weighted integrals such as ``int g(v) |grad v|^2`` put ``|grad v|^2``
on grid edges and average the nodal factor ``g(v)`` onto each edge; every
functional below uses the same convention, so ``pohozaev`` is the exact
``t``-derivative of ``fiber_energy`` at ``t = 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq

from . import dual_transform as dt
from .errors import ConfigurationError, DomainError, EvaluationError
from .radial import RadialField, apply_laplacian, grad_norm_sq, integrate

_LOG_MAX = math.log(np.finfo(float).max) - 1.0


def critical_exponent(dimension: int) -> float:
    """``4 + 4/N``, the mass-critical exponent of the quasilinear problem."""
    return 4.0 + 4.0 / dimension


def sobolev_exponent(dimension: int) -> float:
    """``2^* = 2N/(N-2)``; infinite for ``N = 2``."""
    return math.inf if dimension <= 2 else 2.0 * dimension / (dimension - 2)


@dataclass(frozen=True)
class GNConstant:
    """A Gagliardo-Nirenberg constant ``C_{N,s}`` with its provenance.

    ``kind`` is ``"H1"`` for the ``H^1`` inequality (exponent in ``(2, 2^*)``)
    or ``"E"`` for the ``L^1``/gradient variant (exponent in ``(2, 2*2^*)``).
    ``safety_factor`` records any inflation applied to an estimate so that it
    can serve as an upper-bound constant.
    """

    dimension: int
    exponent: float
    value: float
    kind: str = "E"
    provenance: str = "estimated"
    safety_factor: float = 1.0
    converged: bool = True
    grid_signature: Optional[tuple] = None

    def __post_init__(self):
        if not self.value > 0:
            raise ConfigurationError("GN constant must be positive")
        if self.kind not in ("H1", "E"):
            raise ConfigurationError(f"unknown GN kind {self.kind!r}")
        if self.provenance not in ("estimated", "user-supplied"):
            raise ConfigurationError(f"unknown provenance {self.provenance!r}")
        upper = sobolev_exponent(self.dimension) * (1 if self.kind == "H1" else 2)
        if not 2.0 < self.exponent < upper:
            raise ConfigurationError(
                f"{self.kind}-kind exponent {self.exponent} outside (2, {upper})"
            )

    def inflated(self, factor: float) -> "GNConstant":
        """Copy scaled by ``factor``; estimates are lower bounds, bounds need upper ones."""
        return replace(self, value=self.value * factor, safety_factor=self.safety_factor * factor)

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "exponent": self.exponent,
            "value": self.value,
            "kind": self.kind,
            "provenance": self.provenance,
            "safety_factor": self.safety_factor,
            "converged": self.converged,
            "grid_signature": list(self.grid_signature) if self.grid_signature else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GNConstant":
        d = dict(d)
        if d.get("grid_signature") is not None:
            d["grid_signature"] = tuple(d["grid_signature"])
        return cls(**d)


@dataclass(frozen=True)
class ProblemParams:
    """``(N, p, q, a, theta)`` plus the E-kind constants for ``p`` and ``q``."""

    dimension: int
    p: float
    q: float
    a: float
    theta: float = 1.0
    gn_p: Optional[GNConstant] = field(default=None, compare=False)
    gn_q: Optional[GNConstant] = field(default=None, compare=False)

    def __post_init__(self):
        N = self.dimension
        if int(N) != N or N < 2:
            raise ConfigurationError("requires N >= 2")
        if not 2.0 < self.p < 2.0 + 4.0 / N:
            raise ConfigurationError(f"requires 2 < p < 2 + 4/N = {2 + 4 / N:g} (got p={self.p:g})")
        if not self.q > self.p:
            raise ConfigurationError("requires q > p")
        if not self.q < 2.0 * sobolev_exponent(N):
            raise ConfigurationError(f"requires q < 2*2^* = {2 * sobolev_exponent(N):g}")
        if not self.a > 0:
            raise ConfigurationError("requires a > 0")
        if not 0.5 <= self.theta <= 1.0:
            raise ConfigurationError("requires theta in [1/2, 1]")

    def with_(self, **changes) -> "ProblemParams":
        return replace(self, **changes)

    @property
    def is_mass_critical(self) -> bool:
        return abs(self.q - critical_exponent(self.dimension)) <= 1e-12

    @property
    def is_supercritical(self) -> bool:
        return self.q > critical_exponent(self.dimension) + 1e-12

    def require_supercritical(self):
        if not self.is_supercritical:
            raise ConfigurationError(
                f"requires q > 4 + 4/N = {critical_exponent(self.dimension):g} (got q={self.q:g})"
            )

    def require_mass_critical(self):
        if not self.is_mass_critical:
            raise ConfigurationError(
                f"requires q = 4 + 4/N = {critical_exponent(self.dimension):g} (got q={self.q:g})"
            )

    def require_sobolev_range(self):
        crit = sobolev_exponent(self.dimension)
        if not self.q <= crit:
            raise ConfigurationError(f"requires q <= 2^* = 2N/(N-2) = {crit:g} (got q={self.q:g})")

    def require_constants(self):
        if self.gn_p is None or self.gn_q is None:
            raise ConfigurationError("GN constants for p and q are required")
        for c, s in ((self.gn_p, self.p), (self.gn_q, self.q)):
            if c.dimension != self.dimension or abs(c.exponent - s) > 1e-12:
                raise ConfigurationError(f"GN constant for s={s:g} does not match (N={c.dimension}, s={c.exponent:g})")

    def to_dict(self) -> dict:
        return {
            "dimension": self.dimension,
            "p": self.p,
            "q": self.q,
            "a": self.a,
            "theta": self.theta,
            "gn_p": self.gn_p.to_dict() if self.gn_p else None,
            "gn_q": self.gn_q.to_dict() if self.gn_q else None,
        }


# --- pointwise pieces ----------------------------------------------------


def _f_and_fprime(v: RadialField):
    return dt.DEFAULT.evaluate(v.values)


def _power_integral(v: RadialField, fv: np.ndarray, s: float) -> float:
    a = np.abs(fv)
    with np.errstate(divide="ignore"):
        logs = s * np.log(a)
    if np.max(logs, initial=-np.inf) > _LOG_MAX:
        bad = int(np.argmax(logs))
        raise EvaluationError(f"|f(v)|^{s:g} overflows at node index {bad}")
    return float(np.dot(v.grid.weights, a**s))


def edge_average(v: RadialField, nodal: np.ndarray) -> np.ndarray:
    return 0.5 * (nodal[:-1] + nodal[1:])


def weighted_grad_sq(v: RadialField, nodal: np.ndarray) -> float:
    """``int g |grad v|^2 dx`` with the nodal factor ``g`` averaged onto edges."""
    d = v.grid.difference @ v.values
    return float(v.grid.omega * v.grid.h * np.dot(v.grid.edge_weights * edge_average(v, nodal), d * d))


def _quasi_fraction(fv: np.ndarray) -> np.ndarray:
    f2 = fv * fv
    return 2.0 * f2 / (1.0 + 2.0 * f2)


@dataclass(frozen=True)
class EnergyParts:
    """Integrals that every functional is assembled from."""

    grad: float
    quasi: float  # int 2f^2/(1+2f^2) |grad v|^2
    lp: float  # int |f|^p
    lq: float  # int |f|^q
    mass: float

    @property
    def grad_f(self) -> float:
        """``||grad f(v)||^2 = ||grad v||^2 - quasi`` since ``f'^2 = 1/(1+2f^2)``."""
        return self.grad - self.quasi


def energy_parts(params: ProblemParams, v: RadialField) -> EnergyParts:
    fv, _ = _f_and_fprime(v)
    return EnergyParts(
        grad=grad_norm_sq(v),
        quasi=weighted_grad_sq(v, _quasi_fraction(fv)),
        lp=_power_integral(v, fv, params.p),
        lq=_power_integral(v, fv, params.q),
        mass=float(np.dot(v.grid.weights, fv * fv)),
    )


# --- functionals ---------------------------------------------------------


def energy(params: ProblemParams, v: RadialField) -> float:
    """``Phi_theta(v) = 1/2 ||grad v||^2 - theta/p int|f|^p - theta/q int|f|^q``."""
    fv, _ = _f_and_fprime(v)
    th = params.theta
    return (
        0.5 * grad_norm_sq(v)
        - th / params.p * _power_integral(v, fv, params.p)
        - th / params.q * _power_integral(v, fv, params.q)
    )


def mass(v: RadialField) -> float:
    """``int f(v)^2 dx``."""
    fv = dt.forward(v.values)
    return float(np.dot(v.grid.weights, fv * fv))


def nonlinear_density(params: ProblemParams, v: RadialField) -> np.ndarray:
    """``theta (|f|^{p-2} + |f|^{q-2}) f f'`` at the nodes."""
    fv, fp = _f_and_fprime(v)
    a = np.abs(fv)
    return params.theta * (a ** (params.p - 2) + a ** (params.q - 2)) * fv * fp


def energy_gradient(params: ProblemParams, v: RadialField) -> RadialField:
    """Riesz representative of ``Phi_theta'(v)`` in the quadrature inner product."""
    g = apply_laplacian(-v).values - nonlinear_density(params, v)
    g[-1] = 0.0
    return RadialField(v.grid, g)


def mass_gradient(v: RadialField) -> RadialField:
    """``2 f(v) f'(v)``, the Riesz representative of the mass derivative."""
    vals = 2.0 * dt.f_fprime(v.values)
    vals[-1] = 0.0
    return RadialField(v.grid, vals)


def stretch(v: RadialField, t: float) -> RadialField:
    """Mass-preserving fiber map ``v_t(x) = f^{-1}(t^{N/2} f(v(t x)))``."""
    if not t > 0:
        raise DomainError("stretch parameter must be positive")
    if t == 1.0:
        return v
    from .radial import dilate

    w = dilate(v, t)
    N = v.grid.dimension
    vals = dt.inverse(t ** (N / 2) * dt.forward(w.values))
    vals[-1] = 0.0
    return RadialField(v.grid, vals)


def _log_term(log_coeff: float, integral: float) -> float:
    if integral <= 0.0:
        return 0.0
    x = log_coeff + math.log(integral)
    if x > _LOG_MAX:
        return math.inf
    return math.exp(x)


def fiber_energy(params: ProblemParams, v: RadialField, t: float, parts: Optional[EnergyParts] = None) -> float:
    """``Phi_theta(v_t)`` from the closed-form fiber expansion, without building ``v_t``.

    Powers of ``t`` go through logs, so very large ``t`` yields ``-inf`` rather
    than an overflow exception.
    """
    if not t > 0:
        raise DomainError("stretch parameter must be positive")
    if parts is None:
        parts = energy_parts(params, v)
    N, p, q, th = params.dimension, params.p, params.q, params.theta
    lt = math.log(t)
    # (1 + 2 t^N f^2)/(1 + 2 f^2) = 1 + (t^N - 1) * 2f^2/(1+2f^2)
    kinetic = 0.5 * _log_term(2 * lt, parts.grad)
    if t != 1.0:
        growth = math.log(abs(math.expm1(N * lt))) if N * lt < _LOG_MAX else N * lt
        kinetic += 0.5 * math.copysign(1.0, lt) * _log_term(2 * lt + growth, parts.quasi)
    pot_p = th / p * _log_term(N * (p - 2) / 2 * lt, parts.lp)
    pot_q = th / q * _log_term(N * (q - 2) / 2 * lt, parts.lq)
    if math.isinf(kinetic) and math.isinf(pot_q):
        # both diverge; the potential wins since N(q-2)/2 > N + 2 whenever q > 4 + 4/N
        return -math.inf if params.is_supercritical else math.nan
    return kinetic - pot_p - pot_q


def pohozaev(params: ProblemParams, v: RadialField, parts: Optional[EnergyParts] = None) -> float:
    """``P_theta(v)``, the ``t``-derivative of the fiber energy at ``t = 1``."""
    if parts is None:
        parts = energy_parts(params, v)
    N, p, q, th = params.dimension, params.p, params.q, params.theta
    return (
        parts.grad
        + 0.5 * N * parts.quasi
        - N * (p - 2) * th / (2 * p) * parts.lp
        - N * (q - 2) * th / (2 * q) * parts.lq
    )


# --- landscape -----------------------------------------------------------


def _landscape_exponents(N: int, s: float):
    """``(a-exponent, t-exponent)`` of the ``s``-term in ``H_a``."""
    return (4 * N - s * (N - 2)) / (2 * (N + 2)), (N * s - (4 * N + 4)) / (2 * (N + 2))


def landscape_coefficient(N: int, C: float, s: float) -> float:
    """``A_s = C^s / s * 2^{N(s-2)/(2(N+2))}``."""
    return C**s / s * 2.0 ** (N * (s - 2) / (2 * (N + 2)))


def _coefficients(params: ProblemParams):
    params.require_constants()
    N = params.dimension
    return (
        landscape_coefficient(N, params.gn_p.value, params.p),
        landscape_coefficient(N, params.gn_q.value, params.q),
    )


def landscape(params: ProblemParams, t, a: Optional[float] = None):
    """``H_a(t)``; ``a`` defaults to ``params.a``. Vectorized in ``t``."""
    A1, A2 = _coefficients(params)
    a = params.a if a is None else a
    N = params.dimension
    ap, tp = _landscape_exponents(N, params.p)
    aq, tq = _landscape_exponents(N, params.q)
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise DomainError("landscape is defined for t > 0")
    lt = np.log(t_arr)
    with np.errstate(over="ignore"):
        val = 0.5 - np.exp(math.log(A1) + ap * math.log(a) + tp * lt) - np.exp(math.log(A2) + aq * math.log(a) + tq * lt)
    return float(val) if np.ndim(t) == 0 else val


def t_bar(params: ProblemParams, a: Optional[float] = None) -> float:
    """Maximizer of ``H_a`` in closed form."""
    params.require_supercritical()
    A1, A2 = _coefficients(params)
    N, p, q = params.dimension, params.p, params.q
    a = params.a if a is None else a
    ratio = A1 * (4 * N + 4 - N * p) / (A2 * (N * q - 4 * N - 4))
    return ratio ** (2 * (N + 2) / (N * (q - p))) * a ** ((N - 2) / N)


def landscape_max(params: ProblemParams, a: Optional[float] = None) -> float:
    """``max_t H_a(t) = H_a(t_bar_a)``."""
    a = params.a if a is None else a
    return landscape(params, t_bar(params, a), a=a)


def landscape_max_coefficient(params: ProblemParams) -> float:
    """``K`` with ``max_t H_a = 1/2 - K a^{2/N}``."""
    A1, A2 = _coefficients(params)
    N, p, q = params.dimension, params.p, params.q
    rho = A1 * (4 * N + 4 - N * p) / (A2 * (N * q - 4 * N - 4))
    return A1 * rho ** ((N * p - 4 * N - 4) / (N * (q - p))) + A2 * rho ** ((N * q - 4 * N - 4) / (N * (q - p)))


def a_bar_star(dimension: int, gn_critical: GNConstant) -> float:
    """Coercivity threshold ``((N+1)/(N C^{4+4/N}))^{N/2}`` for ``q = 4 + 4/N``."""
    s = critical_exponent(dimension)
    if abs(gn_critical.exponent - s) > 1e-12:
        raise ConfigurationError("a_bar_star needs the E-kind constant at exponent 4 + 4/N")
    return ((dimension + 1) / (dimension * gn_critical.value**s)) ** (dimension / 2)


@dataclass(frozen=True)
class Thresholds:
    t_bar_a: float
    a_star: float
    a_bar_star: Optional[float]
    t0: float
    h_max: float

    def to_dict(self) -> dict:
        return {
            "t_bar_a": self.t_bar_a,
            "a_star": self.a_star,
            "a_bar_star": self.a_bar_star,
            "t0": self.t0,
            "h_max": self.h_max,
        }


def a_star(params: ProblemParams) -> float:
    """Mass at which ``max_t H_a`` crosses zero, by bracketed root finding."""
    params.require_supercritical()

    def g(log_a):
        return landscape_max(params, math.exp(log_a))

    lo, hi = -1.0, 1.0
    for _ in range(400):
        if g(lo) > 0:
            break
        lo -= 2.0
    else:
        raise ConfigurationError("could not bracket a* from below; GN constants inconsistent")
    for _ in range(400):
        if g(hi) < 0:
            break
        hi += 2.0
    else:
        raise ConfigurationError("could not bracket a* from above; GN constants inconsistent")
    return math.exp(brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


def thresholds(params: ProblemParams, gn_critical: Optional[GNConstant] = None) -> Thresholds:
    """``t_bar_a``, ``a*_N``, ``a_bar*_N`` (if the critical constant is given) and ``t0``."""
    astar = a_star(params)
    return Thresholds(
        t_bar_a=t_bar(params),
        a_star=astar,
        a_bar_star=a_bar_star(params.dimension, gn_critical) if gn_critical is not None else None,
        t0=t_bar(params, astar),
        h_max=landscape_max(params),
    )


def landscape_table(params: ProblemParams, masses, gn_critical: Optional[GNConstant] = None) -> list[dict]:
    """Rows ``(a, t_bar, H_max, a_star, a_bar_star)`` for a sweep of masses."""
    astar = a_star(params)
    abar = a_bar_star(params.dimension, gn_critical) if gn_critical is not None else math.nan
    rows = []
    for a in masses:
        rows.append(
            {
                "a": float(a),
                "t_bar": t_bar(params, a),
                "H_max": landscape_max(params, a),
                "a_star": astar,
                "a_bar_star": abar,
            }
        )
    return rows


LANDSCAPE_COLUMNS = ("a", "t_bar", "H_max", "a_star", "a_bar_star")
