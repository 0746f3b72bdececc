import math

import numpy as np
import pytest
from scipy.integrate import quad

from variokrig import DomainError, NumericError, bessel_k, bessel_k_scaled, gamma_fn


def test_gamma_identities():
    assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-12)
    assert gamma_fn(5.0) == pytest.approx(24.0, rel=1e-12)
    assert gamma_fn(0.5) ** 2 == pytest.approx(math.pi, rel=1e-12)


def test_gamma_recurrence_on_grid():
    # Gamma(x+1) = x Gamma(x) across the supported range
    for x in np.linspace(0.1, 49.0, 197):
        assert gamma_fn(x + 1.0) == pytest.approx(x * gamma_fn(x), rel=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0, math.nan, math.inf])
def test_gamma_domain(bad):
    with pytest.raises(DomainError):
        gamma_fn(bad)


def test_bessel_half_integer_closed_form():
    # K_{1/2}(x) = sqrt(pi/(2x)) e^{-x}
    for x in [1e-6, 0.03, 0.5, 1.0, 7.0, 50.0, 100.0]:
        expect = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x)
        assert bessel_k(0.5, x) == pytest.approx(expect, rel=1e-10)
    assert bessel_k(0.5, 1.0) == pytest.approx(math.sqrt(math.pi / 2.0) / math.e, rel=1e-12)


def test_bessel_k32_closed_form():
    # K_{3/2}(x) = sqrt(pi/(2x)) e^{-x} (1 + 1/x)
    for x in [0.01, 0.9, 4.0, 60.0]:
        expect = math.sqrt(math.pi / (2.0 * x)) * math.exp(-x) * (1.0 + 1.0 / x)
        assert bessel_k(1.5, x) == pytest.approx(expect, rel=1e-10)


def quadrature_bessel_k(nu: float, x: float) -> float:
    """Integral representation K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt."""
    val, _ = quad(lambda t: math.exp(-x * math.cosh(t)) * math.cosh(nu * t), 0.0, 30.0,
                  limit=200)
    return val


def test_bessel_vs_quadrature_oracle():
    assert bessel_k(1.0, 1.0) == pytest.approx(quadrature_bessel_k(1.0, 1.0), rel=1e-8)
    for nu, x in [(0.0, 0.3), (0.5, 2.0), (2.7, 1.3), (5.0, 8.0), (10.0, 3.0)]:
        assert bessel_k(nu, x) == pytest.approx(quadrature_bessel_k(nu, x), rel=1e-8)


def test_bessel_determinism():
    assert bessel_k(1.7, 2.9) == bessel_k(1.7, 2.9)


def test_bessel_positive_and_decreasing():
    for nu in [0.0, 0.5, 1.0, 3.3, 12.0, 40.0]:
        xs = np.logspace(-6, 2, 60)
        vals = np.array([bessel_k(nu, float(x)) for x in xs])
        assert np.all(vals > 0.0)
        assert np.all(np.diff(vals) < 0.0)


def test_scaled_variant_finite_to_700():
    for x in [1.0, 10.0, 100.0, 400.0, 700.0]:
        v = bessel_k_scaled(2.0, x)
        assert math.isfinite(v) and v > 0.0
    # consistency where both forms are representable
    assert bessel_k_scaled(1.0, 5.0) == pytest.approx(math.exp(5.0) * bessel_k(1.0, 5.0), rel=1e-12)


def test_bessel_domain_errors():
    with pytest.raises(DomainError):
        bessel_k(-0.1, 1.0)
    with pytest.raises(DomainError):
        bessel_k(51.0, 1.0)
    with pytest.raises(DomainError):
        bessel_k(1.0, 0.0)
    with pytest.raises(DomainError):
        bessel_k(1.0, -2.0)


def test_bessel_overflow_signalled():
    # K_40 explodes for tiny arguments; must raise, not return inf
    with pytest.raises(NumericError):
        bessel_k(40.0, 1e-12)
