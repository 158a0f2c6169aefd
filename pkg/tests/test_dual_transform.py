import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quasinorm.dual_transform import DEFAULT as F, DualTransform
from quasinorm.errors import DomainError
from quasinorm.verify import ode_oracle, run_dual_suite, timed_suite

reals = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False)
positive = st.floats(min_value=1e-8, max_value=1e3)


def test_zero_is_fixed():
    assert F.forward(0.0) == 0.0
    assert F.inverse(0.0) == 0.0
    assert F.derivative(0.0) == 1.0
    assert F.f_fprime(0.0) == 0.0


def test_inverse_at_one_matches_closed_form():
    expected = math.sqrt(3) / 2 + math.asinh(math.sqrt(2)) / (2 * math.sqrt(2))
    assert F.inverse(1.0) == pytest.approx(expected, rel=1e-15)
    assert expected == pytest.approx(1.2712739, abs=1e-7)
    assert F.forward(expected) == pytest.approx(1.0, rel=1e-14)


def test_forward_matches_ode_integration():
    ts, ys = ode_oracle(10.0, 401)
    assert np.max(np.abs(F.forward(ts) - ys)) <= 1e-8


def test_large_argument_asymptote():
    t = np.geomspace(1e8, 1e14, 7)
    assert np.allclose(F.forward(t) / np.sqrt(t), 2**0.25, rtol=1e-3)


def test_scalar_and_array_shapes():
    assert isinstance(F.forward(2.0), float)
    assert F.forward(np.ones((3, 2))).shape == (3, 2)


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_rejected(bad):
    with pytest.raises(DomainError):
        F.forward(bad)


def test_bad_options_rejected():
    with pytest.raises(ValueError):
        DualTransform(newton_tol=0)


@given(reals)
def test_round_trip(t):
    assert abs(F.inverse(F.forward(t)) - t) <= 1e-10 * (1 + abs(t))
    assert abs(F.forward(F.inverse(t)) - t) <= 1e-10 * (1 + abs(t))


@given(reals)
def test_parity(t):
    assert F.forward(-t) == -F.forward(t)
    assert F.inverse(-t) == -F.inverse(t)
    assert F.f_fprime(-t) == -F.f_fprime(t)
    assert F.derivative(-t) == F.derivative(t)


@given(reals, reals)
def test_strictly_increasing(s, t):
    if s < t:
        assert F.forward(s) < F.forward(t) or abs(t - s) < 1e-300


@given(reals)
def test_pointwise_bounds(t):
    f = F.forward(t)
    slack = 1 + 1e-12
    assert 0 < F.derivative(t) <= 1
    assert abs(f) <= abs(t) * slack
    assert abs(f) <= 2**0.25 * math.sqrt(abs(t)) * slack
    assert abs(F.f_fprime(t)) <= 1 / math.sqrt(2)


@given(positive)
def test_two_sided_derivative_bounds(t):
    f, fp = F.forward(t), F.derivative(t)
    tol = 1e-12 * f
    assert f / 2 - tol <= t * fp <= f + tol
    assert f * f / 2 - tol * f <= t * f * fp <= f * f + tol * f


@given(positive)
def test_lower_bound_with_c_equal_f1(t):
    c = F.forward(1.0)
    bound = c * t if t <= 1 else c * math.sqrt(t)
    assert F.forward(t) >= bound * (1 - 1e-12)


@given(st.floats(min_value=-50, max_value=50))
def test_f_fprime_is_half_derivative_of_square(t):
    h = 1e-5
    fd = (F.forward(t + h) ** 2 - F.forward(t - h) ** 2) / (2 * h)
    assert abs(2 * F.f_fprime(t) - fd) <= 1e-6


@given(st.floats(min_value=-50, max_value=50))
def test_derivative_matches_central_difference(t):
    h = 1e-6
    fd = (F.forward(t + h) - F.forward(t - h)) / (2 * h)
    assert abs(F.derivative(t) - fd) <= 1e-7


def test_property_suite_passes_quickly():
    checks, seconds = timed_suite(samples=100_000, bound=1e3, seed=3)
    failed = [c.line() for c in checks if not c.passed]
    assert not failed, failed
    assert seconds < 5.0


def test_property_suite_detects_a_broken_transform():
    class Broken(DualTransform):
        def derivative(self, t):
            return 1.5 * super().derivative(t)

    checks = {c.name.split()[0]: c for c in run_dual_suite(samples=1024, transform=Broken())}
    assert not checks["(2)"].passed
