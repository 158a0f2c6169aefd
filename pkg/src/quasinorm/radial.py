"""Radial functions on a truncated ball ``B_R`` in ``R^N``.

Grid: nodes ``r_i = i h`` for ``i = 1..n`` with ``h = R/n``; the last node is the
Dirichlet boundary. Integrals use trapezoid weights against ``r^{N-1}``, which
is spectrally accurate for even smooth integrands when ``N`` is odd.

The gradient energy is the quadratic form

    ||grad v||^2 = omega * sum_i c_{i+1/2} ((v_{i+1} - v_i)/h)^2 h,
    c_{i+1/2} = h^{N-1} * 2N/(2i+1) * sum_{j<=i} j^{N-1},

and the Laplacian is minus its Riesz representative with respect to the
quadrature weights. The edge weights are chosen so that the discrete
divergence theorem holds for ``r^2``; this makes the Laplacian exact on
quadratics (so second order at every node, including the one next to the
origin) and gives ``c_{1/2} = 0``, which removes any need for a value at
``r = 0``. Summation by parts is exact by construction.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import PchipInterpolator

from .errors import DomainError, EvaluationError


def sphere_area(dimension: int) -> float:
    """Surface measure of the unit sphere in ``R^N``."""
    return 2.0 * math.pi ** (dimension / 2) / math.gamma(dimension / 2)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    dimension: int
    radius: float
    n: int

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 2:
            raise ValueError("dimension must be an integer >= 2")
        if not self.radius > 0:
            raise ValueError("radius must be positive")
        if self.n < 16:
            raise ValueError("grid needs at least 16 nodes")
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "radius", float(self.radius))
        object.__setattr__(self, "n", int(self.n))

    def __eq__(self, other):
        return isinstance(other, RadialGrid) and self.signature == other.signature

    def __hash__(self):
        return hash(self.signature)

    @property
    def signature(self) -> tuple:
        return (self.dimension, self.radius, self.n)

    @property
    def h(self) -> float:
        return self.radius / self.n

    @property
    def omega(self) -> float:
        return sphere_area(self.dimension)

    @cached_property
    def nodes(self) -> np.ndarray:
        r = self.h * np.arange(1, self.n + 1, dtype=float)
        r.flags.writeable = False
        return r

    @cached_property
    def weights(self) -> np.ndarray:
        w = self.omega * self.h * self.nodes ** (self.dimension - 1)
        w[-1] *= 0.5
        w.flags.writeable = False
        return w

    @cached_property
    def edge_weights(self) -> np.ndarray:
        """``c_{i+1/2}`` for the edges ``(r_i, r_{i+1})``, ``i = 1..n-1``."""
        N = self.dimension
        i = np.arange(1, self.n, dtype=float)
        partial = np.cumsum(i ** (N - 1))
        c = self.h ** (N - 1) * 2.0 * N * partial / (2.0 * i + 1.0)
        c.flags.writeable = False
        return c

    @cached_property
    def difference(self) -> sp.csr_matrix:
        """Forward difference ``(v_{i+1} - v_i)/h`` on every edge, shape ``(n-1, n)``."""
        m = self.n - 1
        rows = np.repeat(np.arange(m), 2)
        cols = np.stack([np.arange(m), np.arange(1, m + 1)], axis=1).ravel()
        vals = np.tile([-1.0, 1.0], m) / self.h
        return sp.csr_matrix((vals, (rows, cols)), shape=(m, self.n))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Matrix ``S`` with ``grad_norm_sq(v) = v^T S v`` (boundary row/column zeroed)."""
        D = self.difference
        C = sp.diags(self.omega * self.edge_weights * self.h)
        S = (D.T @ C @ D).tolil()
        S[-1, :] = 0.0
        S[:, -1] = 0.0
        return S.tocsr()

    def volume(self) -> float:
        """Exact volume of ``B_R``."""
        return self.omega * self.radius**self.dimension / self.dimension

    def field(self, values) -> "RadialField":
        return RadialField(self, values)

    def sample(self, func) -> "RadialField":
        """Field with values ``func(r_i)``; the boundary value is forced to 0."""
        vals = np.array(func(np.asarray(self.nodes)), dtype=float)
        vals[-1] = 0.0
        return RadialField(self, vals)

    def zeros(self) -> "RadialField":
        return RadialField(self, np.zeros(self.n))

    def refined(self, factor: int = 2, radius_factor: float = 1.0) -> "RadialGrid":
        return RadialGrid(self.dimension, self.radius * radius_factor, int(self.n * factor * radius_factor))


@dataclass(frozen=True, eq=False)
class RadialField:
    """Value-semantic snapshot of a radial function on a grid."""

    grid: RadialGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n,):
            raise ValueError(f"expected {self.grid.n} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DomainError("field values must be finite")
        if vals[-1] != 0.0:
            raise DomainError("boundary value must be exactly 0")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    def _check(self, other: "RadialField"):
        if self.grid != other.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other):
        self._check(other)
        return RadialField(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return RadialField(self.grid, self.values - other.values)

    def __mul__(self, scalar):
        return RadialField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return RadialField(self.grid, -self.values)

    def inner(self, other: "RadialField") -> float:
        """``int v w dx`` under the grid quadrature."""
        self._check(other)
        return float(np.dot(self.grid.weights, self.values * other.values))

    def l2_norm_sq(self) -> float:
        return self.inner(self)

    def grad_norm_sq(self) -> float:
        return grad_norm_sq(self)

    def h1_norm(self) -> float:
        return math.sqrt(grad_norm_sq(self) + self.l2_norm_sq())

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def boundary_decay(self, fraction: float = 0.05) -> float:
        """Max ``|v|`` over the outer ``fraction`` of the ball, a truncation diagnostic."""
        k = max(1, int(self.grid.n * fraction))
        return float(np.max(np.abs(self.values[-k:])))


def integrate(v: RadialField, pointwise=None) -> float:
    """Quadrature of ``pointwise(v)`` over the ball (``pointwise`` defaults to identity)."""
    vals = v.values if pointwise is None else np.asarray(pointwise(v.values), dtype=float)
    if vals.shape != v.values.shape:
        vals = np.broadcast_to(vals, v.values.shape)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        raise EvaluationError(f"non-finite integrand at node index {int(bad[0])}")
    return float(np.dot(v.grid.weights, vals))


def rms_radius(v: RadialField) -> float:
    """``sqrt(int r^2 v^2 / int v^2)``, the width of ``v``."""
    w = v.grid.weights * v.values**2
    return math.sqrt(float(np.dot(w, v.grid.nodes**2)) / float(w.sum()))


def grad_norm_sq(v: RadialField) -> float:
    """``int |grad v|^2 dx``; nonnegative, zero only for the zero field."""
    d = v.grid.difference @ v.values
    return float(v.grid.omega * v.grid.h * np.dot(v.grid.edge_weights, d * d))


def apply_laplacian(v: RadialField) -> RadialField:
    """Radial Laplacian with ``int (-Lap v) v dx = int |grad v|^2 dx`` exactly.

    The boundary node carries no degree of freedom; its entry is 0.
    """
    out = -(v.grid.stiffness @ v.values) / v.grid.weights
    out[-1] = 0.0
    return RadialField(v.grid, out)


# even quartic through r_1, r_2, r_3 evaluated at 0
_ORIGIN_STENCIL = np.linalg.solve(
    np.array([[1.0, k**2, k**4] for k in (1.0, 2.0, 3.0)]).T, np.array([1.0, 0.0, 0.0])
)


def _origin_value(v: RadialField) -> float:
    return float(np.dot(_ORIGIN_STENCIL, v.values[:3]))


def _interpolant(v: RadialField):
    r = np.asarray(v.grid.nodes)
    # even extension through the origin pins v'(0) = 0
    x = np.concatenate([-r[::-1], [0.0], r])
    y = np.concatenate([v.values[::-1], [_origin_value(v)], v.values])
    return PchipInterpolator(x, y, extrapolate=False)


def evaluate_at(v: RadialField, radii) -> np.ndarray:
    """Monotone cubic interpolation of ``v`` at arbitrary radii (0 beyond ``R``)."""
    radii = np.asarray(radii, dtype=float)
    # PCHIP's harmonic-mean slopes overflow harmlessly on denormal tails
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out = _interpolant(v)(radii)
    return np.where(radii >= v.grid.radius, 0.0, np.nan_to_num(out, nan=0.0))


def value_at_origin(v: RadialField) -> float:
    """Even extrapolation of ``v`` to ``r = 0`` (fourth order)."""
    return _origin_value(v)


def dilate(v: RadialField, t: float) -> RadialField:
    """Return ``x -> v(t x)`` resampled on the same grid."""
    if not t > 0:
        raise DomainError("dilation factor must be positive")
    if t == 1.0:
        return v
    vals = evaluate_at(v, t * np.asarray(v.grid.nodes))
    vals[-1] = 0.0
    return RadialField(v.grid, vals)


def resample(v: RadialField, grid: RadialGrid) -> RadialField:
    """Move ``v`` onto another grid of the same dimension."""
    if grid.dimension != v.grid.dimension:
        raise ValueError("dimension mismatch")
    vals = evaluate_at(v, np.asarray(grid.nodes))
    vals[-1] = 0.0
    return RadialField(grid, vals)


# --- serialization -------------------------------------------------------

_MAGIC = b"QNRF"
_VERSION = 1
_HEADER = struct.Struct("<4sIIId")


def save_text(v: RadialField, path) -> None:
    """Two-column ``r v`` text; the header comment records the grid."""
    g = v.grid
    header = f"dimension={g.dimension} radius={g.radius!r} n={g.n}\nr v"
    np.savetxt(path, np.column_stack([g.nodes, v.values]), header=header, fmt="%.17g")


def load_text(path) -> RadialField:
    with open(path) as fh:
        meta = fh.readline().lstrip("#").split()
    kv = dict(item.split("=") for item in meta)
    grid = RadialGrid(int(kv["dimension"]), float(kv["radius"]), int(kv["n"]))
    data = np.loadtxt(path, ndmin=2)
    return RadialField(grid, data[:, 1])


def to_bytes(v: RadialField) -> bytes:
    g = v.grid
    head = _HEADER.pack(_MAGIC, _VERSION, g.dimension, g.n, g.radius)
    return head + np.asarray(v.values, dtype="<f8").tobytes()


def from_bytes(blob: bytes) -> RadialField:
    magic, version, dim, n, radius = _HEADER.unpack_from(blob)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError("not a radial field record")
    vals = np.frombuffer(blob, dtype="<f8", count=n, offset=_HEADER.size)
    return RadialField(RadialGrid(dim, radius, n), vals.copy())


def save_binary(v: RadialField, path) -> None:
    Path(path).write_bytes(to_bytes(v))


def load_binary(path) -> RadialField:
    return from_bytes(Path(path).read_bytes())
