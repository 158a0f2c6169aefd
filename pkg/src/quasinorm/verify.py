"""Property suite for the change of variables ``f``.

Each check returns a :class:`Check` with the worst observed value and the
tolerance it was held to. Inequalities are allowed a relative slack of a few
ulps, since both sides are computed in floating point.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import qmc

from .dual_transform import DEFAULT, DualTransform

SLACK = 1e-12
FOURTH_ROOT_2 = 2.0**0.25


@dataclass
class Check:
    name: str
    passed: bool
    worst: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: worst={self.worst:.3e} tol={self.tolerance:.1e} {self.detail}".rstrip()


def sample_points(count: int, bound: float, seed: int) -> np.ndarray:
    """Scrambled Sobol points in ``[-bound, bound]``; ``count`` is rounded up to a power of 2."""
    m = max(1, math.ceil(math.log2(count)))
    pts = qmc.Sobol(d=1, scramble=True, seed=seed).random_base2(m)[:, 0]
    return (2.0 * pts - 1.0) * bound


def _upper(lhs, rhs):
    """Worst violation of ``lhs <= rhs`` relative to ``|rhs|``."""
    excess = (lhs - rhs) / np.maximum(np.abs(rhs), 1e-300)
    return float(np.max(excess, initial=-np.inf))


def ode_oracle(t_max: float = 10.0, count: int = 201) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``f' = (1 + 2f^2)^{-1/2}``, ``f(0) = 0`` independently of the closed form."""
    ts = np.linspace(0.0, t_max, count)
    sol = solve_ivp(lambda t, y: 1.0 / np.sqrt(1.0 + 2.0 * y * y), (0.0, t_max), [0.0], t_eval=ts,
                    method="DOP853", rtol=1e-13, atol=1e-14)
    return ts, sol.y[0]


def run_dual_suite(samples: int = 100_000, bound: float = 1e3, seed: int = 0,
                   transform: DualTransform = DEFAULT) -> list[Check]:
    t = sample_points(samples, bound, seed)
    f = transform.forward(t)
    fp = transform.derivative(t)
    ff = transform.f_fprime(t)
    pos = t[t > 0]
    fpos, fppos = transform.forward(pos), transform.derivative(pos)
    checks = []

    order = np.argsort(t)
    diffs = np.diff(f[order])
    round_trip = np.abs(transform.inverse(f) - t) / (1.0 + np.abs(t))
    checks.append(Check("(1) invertible: strictly increasing and f^-1(f(t)) = t",
                        bool(np.all(diffs > 0) and round_trip.max() <= transform.newton_tol * 10),
                        float(round_trip.max()), transform.newton_tol * 10))

    worst = float(np.max(np.abs(fp)))
    checks.append(Check("(2) |f'(t)| <= 1", worst <= 1.0, worst, 1.0))

    worst = _upper(np.abs(f), np.abs(t))
    checks.append(Check("(3) |f(t)| <= |t|", worst <= SLACK, worst, SLACK))

    small = np.linspace(-1e-2, 1e-2, 2001)
    small = small[small != 0]
    worst = float(np.max(np.abs(transform.forward(small) / small - 1.0)))
    checks.append(Check("(4) |f(t)/t - 1| <= 1e-3 for |t| <= 1e-2", worst <= 1e-3, worst, 1e-3))

    big = np.geomspace(1e6, 1e12, 200)
    worst = float(np.max(np.abs(transform.forward(big) / np.sqrt(big) - FOURTH_ROOT_2)))
    checks.append(Check("(5) |f(t)/sqrt(t) - 2^(1/4)| <= 1e-2 for t >= 1e6", worst <= 1e-2, worst, 1e-2))

    tf = pos * fppos
    worst = max(_upper(fpos / 2, tf), _upper(tf, fpos))
    checks.append(Check("(6) f/2 <= t f' <= f", worst <= SLACK, worst, SLACK))

    tff = pos * fpos * fppos
    worst = max(_upper(fpos**2 / 2, tff), _upper(tff, fpos**2))
    checks.append(Check("(7) f^2/2 <= t f f' <= f^2", worst <= SLACK, worst, SLACK))

    worst = _upper(np.abs(f), FOURTH_ROOT_2 * np.sqrt(np.abs(t)))
    checks.append(Check("(8) |f(t)| <= 2^(1/4) |t|^(1/2)", worst <= SLACK, worst, SLACK))

    # lower bounds with C = f(1): f(t)/t falls on (0, 1] and f(t)/sqrt(t) rises on [1, inf)
    c = transform.forward(1.0)
    inner = np.linspace(1e-6, 1.0, 4001)
    outer = np.geomspace(1.0, bound, 4001)
    r1 = transform.forward(inner) / inner
    r2 = transform.forward(outer) / np.sqrt(outer)
    rise = max(float(np.max(np.diff(r1) / r1[1:])), float(np.max(-np.diff(r2) / r2[1:])))
    low = np.abs(t) <= 1
    bound_gap = min(
        float(np.min(np.abs(f[low]) - c * np.abs(t[low]) * (1 - SLACK), initial=np.inf)),
        float(np.min(np.abs(f[~low]) - c * np.sqrt(np.abs(t[~low])) * (1 - SLACK), initial=np.inf)),
    )
    checks.append(Check("(9) f(t)/t falls on (0,1], f(t)/sqrt(t) rises on [1,inf), so |f| >= f(1) min(|t|, |t|^(1/2))",
                        rise <= SLACK and bound_gap >= 0, rise, SLACK, f"C={c:.10f}"))

    worst = float(np.max(np.abs(ff)))
    checks.append(Check("(10) |f f'| <= 1/sqrt(2)", worst <= 1 / math.sqrt(2), worst, 1 / math.sqrt(2)))

    s = sample_points(samples, 1e3, seed + 1)
    worst = float(np.max(np.abs(transform.forward(transform.inverse(s)) - s) / (1.0 + np.abs(s))))
    checks.append(Check("round trip f(f^-1(s)) for |s| <= 1e3", worst <= 1e-10, worst, 1e-10))

    ts, ys = ode_oracle()
    worst = float(np.max(np.abs(transform.forward(ts) - ys)))
    checks.append(Check("ODE oracle on [0, 10]", worst <= 1e-8, worst, 1e-8))

    odd = max(float(np.max(np.abs(transform.forward(-t) + f))),
              float(np.max(np.abs(transform.inverse(-t) + transform.inverse(t)))),
              float(np.max(np.abs(transform.f_fprime(-t) + ff))))
    even = float(np.max(np.abs(transform.derivative(-t) - fp)))
    checks.append(Check("parity: f, f^-1, f f' odd and f' even", odd == 0 and even == 0, max(odd, even), 0.0))
    return checks


def timed_suite(**kwargs) -> tuple[list[Check], float]:
    start = time.perf_counter()
    out = run_dual_suite(**kwargs)
    return out, time.perf_counter() - start
