"""Catalogue of stationary covariance / variogram models.

Each model is written as ``C(h) = nugget * 1{h=0} + sill * rho(h / range)``
with ``rho`` the unit-sill correlation of the family; the variogram is the
complement ``gamma(h) = C(0) - C(h)`` (zero exactly at h = 0, so the nugget
appears as the jump at 0+). The Matern family uses the rescaled argument
``u = h / (range / (2 sqrt(nu)))`` so that ``range`` keeps its practical
meaning across smoothness values, and a two-component nested Matern is
provided for flexible fitting.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import special

from .exceptions import DomainError, FormatError, NumericError
from .specfun import log_bessel_k
from .util import fmt_float_point

KINDS = (
    "exponential",
    "gaussian",
    "spherical",
    "circular",
    "triangle",
    "cubic",
    "penta",
    "power",
    "stable",
    "wave",
    "cauchy",
    "matern",
)

_SHAPE_KINDS = {"power", "stable", "cauchy", "matern"}

# Maximum spatial dimension in which each family stays positive definite.
# Families absent here are valid in every dimension; power is handled by
# its shape constraint.
_DIM_LIMIT = {
    "triangle": 1,
    "circular": 2,
    "spherical": 3,
    "cubic": 3,
    "penta": 3,
}

NU_FIT_MAX = 40.0


def matern_correlation(u, nu: float):
    """Unit-sill Matern correlation  u^nu K_nu(u) / (2^(nu-1) Gamma(nu)).

    Evaluated in log space so the 0 * inf products that plague the naive
    formula for small u / large nu never appear. u <= 0 maps to 1.
    """
    u = np.asarray(u, dtype=float)
    out = np.ones_like(u)
    pos = u > 0.0
    if np.any(pos):
        up = u[pos]
        logrho = (
            nu * np.log(up)
            + log_bessel_k(nu, up)
            - (nu - 1.0) * math.log(2.0)
            - special.gammaln(nu)
        )
        out[pos] = np.minimum(np.exp(logrho), 1.0)
    if not np.all(np.isfinite(out)):
        raise NumericError(f"Matern correlation not finite for nu={nu}")
    return out


def _unit_correlation(kind: str, shape, u):
    """Correlation rho(u) at the scaled lag u = h / range, unit sill."""
    u = np.asarray(u, dtype=float)
    if kind == "exponential":
        return np.exp(-u)
    if kind == "gaussian":
        return np.exp(-(u**2))
    if kind == "stable":
        return np.exp(-(u**shape))
    if kind == "cauchy":
        return (1.0 + u**2) ** (-shape)
    if kind == "wave":
        return np.sinc(u / math.pi)  # sin(u)/u, equal to 1 at u = 0
    if kind == "matern":
        return matern_correlation(2.0 * math.sqrt(shape) * u, shape)
    # compact-support families below vanish for u >= 1
    uc = np.minimum(u, 1.0)
    if kind == "triangle":
        body = 1.0 - uc
    elif kind == "circular":
        body = (2.0 / math.pi) * (np.arccos(uc) - uc * np.sqrt(1.0 - uc**2))
    elif kind == "spherical":
        body = 1.0 - 1.5 * uc + 0.5 * uc**3
    elif kind == "cubic":
        body = 1.0 - 7.0 * uc**2 + 8.75 * uc**3 - 3.5 * uc**5 + 0.75 * uc**7
    elif kind == "penta":
        body = (
            1.0
            - (22.0 / 3.0) * uc**2
            + 33.0 * uc**4
            - 38.5 * uc**5
            + 16.5 * uc**7
            - 5.5 * uc**9
            + (5.0 / 6.0) * uc**11
        )
    elif kind == "power":
        body = (1.0 - uc) ** shape
    else:
        raise DomainError(f"unknown model kind {kind!r}")
    return np.where(u < 1.0, body, 0.0)


@dataclass(frozen=True)
class CovarianceSpec:
    """A parameterized stationary covariance / variogram model.

    Parameters
    ----------
    kind : str
        One of the catalogue families (see KINDS).
    nugget : float
        Discontinuity at the origin, variance units, >= 0.
    sill : float
        Partial sill (variance units), >= 0.
    range_ : float
        Scale parameter, distance units, > 0.
    shape : float, optional
        Family shape parameter: Matern nu, Cauchy exponent, power / stable
        exponent. Must be omitted for families without one.
    """

    kind: str
    nugget: float
    sill: float
    range_: float
    shape: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown model kind {self.kind!r}")
        for name in ("nugget", "sill", "range_"):
            v = getattr(self, name)
            if not math.isfinite(float(v)):
                raise DomainError(f"{name} must be finite, got {v}")
        if self.nugget < 0.0 or self.sill < 0.0:
            raise DomainError("nugget and sill must be >= 0")
        if self.range_ <= 0.0:
            raise DomainError("range must be > 0")
        if self.kind in _SHAPE_KINDS:
            if self.shape is None or not math.isfinite(float(self.shape)):
                raise DomainError(f"{self.kind} model requires a finite shape parameter")
            s = float(self.shape)
            if self.kind == "matern" and not (0.0 < s <= NU_FIT_MAX):
                raise DomainError(f"matern nu must lie in (0, {NU_FIT_MAX}], got {s}")
            if self.kind == "stable" and not (0.0 < s <= 2.0):
                raise DomainError(f"stable exponent must lie in (0, 2], got {s}")
            if self.kind == "cauchy" and s <= 0.0:
                raise DomainError(f"cauchy exponent must be > 0, got {s}")
            if self.kind == "power" and s < 1.0:
                raise DomainError(f"power exponent must be >= 1, got {s}")
        elif self.shape is not None:
            raise DomainError(f"{self.kind} model takes no shape parameter")

    @property
    def valid_dims(self) -> float:
        """Largest spatial dimension where the model is positive definite."""
        if self.kind == "power":
            return math.floor(2.0 * float(self.shape) - 1.0)
        return _DIM_LIMIT.get(self.kind, math.inf)

    def covariance(self, h):
        return covariance_eval(self, h)

    def variogram(self, h):
        return variogram_eval(self, h)

    @property
    def total_sill(self) -> float:
        """C(0) = nugget + sill."""
        return float(self.nugget + self.sill)


@dataclass(frozen=True)
class NestedMaternSpec:
    """Sum of two Matern components plus a nugget.

    All seven parameters strictly positive except the nugget, which may be
    zero. Field order matches the fitting vector
    (nugget, sill1, range1, nu1, sill2, range2, nu2).
    """

    nugget: float
    sill1: float
    range1: float
    nu1: float
    sill2: float
    range2: float
    nu2: float

    def __post_init__(self):
        vals = (self.nugget, self.sill1, self.range1, self.nu1,
                self.sill2, self.range2, self.nu2)
        if not all(math.isfinite(float(v)) for v in vals):
            raise DomainError("nested Matern parameters must be finite")
        if self.nugget < 0.0 or self.sill1 < 0.0 or self.sill2 < 0.0:
            raise DomainError("nugget and sills must be >= 0")
        if min(self.range1, self.nu1, self.range2, self.nu2) <= 0.0:
            raise DomainError("ranges and smoothness must be > 0")

    @classmethod
    def from_vector(cls, vec) -> "NestedMaternSpec":
        vec = [float(v) for v in vec]
        if len(vec) != 7:
            raise DomainError(f"nested Matern expects 7 parameters, got {len(vec)}")
        return cls(*vec)

    def as_vector(self) -> np.ndarray:
        return np.array([self.nugget, self.sill1, self.range1, self.nu1,
                         self.sill2, self.range2, self.nu2])

    @property
    def total_sill(self) -> float:
        """C(0) = nugget + sill1 + sill2."""
        return float(self.nugget + self.sill1 + self.sill2)

    def covariance(self, h):
        return nested_matern_covariance(self, h)

    def variogram(self, h):
        return nested_matern_variogram(self, h)


def _as_lags(h):
    h = np.asarray(h, dtype=float)
    if np.any(h < 0.0) or not np.all(np.isfinite(h)):
        raise DomainError("lag distances must be finite and >= 0")
    return h


def covariance_eval(spec, h):
    """C(h) for a CovarianceSpec or NestedMaternSpec; h scalar or array."""
    if isinstance(spec, NestedMaternSpec):
        return nested_matern_covariance(spec, h)
    h = _as_lags(h)
    rho = _unit_correlation(spec.kind, spec.shape, h / spec.range_)
    out = spec.sill * rho + np.where(h == 0.0, spec.nugget, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def variogram_eval(spec, h):
    """gamma(h) = C(0) - C(h); exactly 0 at h = 0."""
    if isinstance(spec, NestedMaternSpec):
        return nested_matern_variogram(spec, h)
    h = _as_lags(h)
    rho = _unit_correlation(spec.kind, spec.shape, h / spec.range_)
    out = np.where(h == 0.0, 0.0, spec.nugget + spec.sill * (1.0 - rho))
    if out.ndim == 0:
        return float(out)
    return out


def matern_eval(nugget: float, sill: float, range_: float, nu: float, h):
    """Single Matern covariance with the rescaled range convention.

    With a_s = range / (2 sqrt(nu)) and u = h / a_s:
    C(0) = nugget + sill and C(h>0) = sill * u^nu K_nu(u) / (2^(nu-1) Gamma(nu)).
    """
    spec = CovarianceSpec("matern", nugget, sill, range_, nu)
    return covariance_eval(spec, h)


# Lags scaled below this count as the origin; the reference fallback for
# non-finite Bessel products is applied only there.
_NESTED_ORIGIN_EPS = 1e-12


def _nested_correlation_parts(spec: NestedMaternSpec, h):
    h = _as_lags(h)
    u1 = h / (spec.range1 / (2.0 * math.sqrt(spec.nu1)))
    u2 = h / (spec.range2 / (2.0 * math.sqrt(spec.nu2)))
    at_origin = (h == 0.0) | ((u1 < _NESTED_ORIGIN_EPS) & (u2 < _NESTED_ORIGIN_EPS))
    rho1 = matern_correlation(u1, spec.nu1)
    rho2 = matern_correlation(u2, spec.nu2)
    part = spec.sill1 * rho1 + spec.sill2 * rho2
    if not np.all(np.isfinite(np.where(at_origin, 0.0, part))):
        raise NumericError(f"nested Matern evaluation not finite for {spec}")
    return h, at_origin, part


def nested_matern_covariance(spec: NestedMaternSpec, h):
    """C(h) of the two-component Matern; nugget + both sills at the origin."""
    h, at_origin, part = _nested_correlation_parts(spec, h)
    out = np.where(at_origin, spec.total_sill, part)
    if out.ndim == 0:
        return float(out)
    return out


def nested_matern_variogram(spec: NestedMaternSpec, h):
    """gamma(h) of the two-component Matern; 0 at the origin."""
    h, at_origin, part = _nested_correlation_parts(spec, h)
    out = np.where(
        at_origin, 0.0, spec.nugget + spec.sill1 + spec.sill2 - part
    )
    if out.ndim == 0:
        return float(out)
    return out


def matern_spectral_density(phi: float, alpha: float, nu: float, omega):
    """One-dimensional Matern spectral density phi * (alpha^2 + w^2)^(-nu - 1/2)."""
    if phi <= 0.0 or alpha <= 0.0 or nu <= 0.0:
        raise DomainError("matern_spectral_density requires phi, alpha, nu > 0")
    omega = np.asarray(omega, dtype=float)
    out = phi * (alpha**2 + omega**2) ** (-nu - 0.5)
    if out.ndim == 0:
        return float(out)
    return out


def validity_check(spec, dim: int) -> bool:
    """True iff the model is positive definite in the given dimension."""
    if int(dim) < 1:
        raise DomainError(f"dimension must be >= 1, got {dim}")
    if isinstance(spec, NestedMaternSpec):
        return True
    if spec.kind == "power":
        return float(spec.shape) >= (dim + 1) / 2.0
    return dim <= _DIM_LIMIT.get(spec.kind, math.inf)


# -- flat key/value text form ------------------------------------------------

_NESTED_KEYS = ("nugget", "sill1", "range1", "nu1", "sill2", "range2", "nu2")


def spec_to_text(spec) -> str:
    """Serialize a model spec to the flat `key=value` text form."""
    if isinstance(spec, NestedMaternSpec):
        parts = ["kind=nested_matern"]
        parts += [f"{k}={fmt_float_point(getattr(spec, k))}" for k in _NESTED_KEYS]
        return " ".join(parts)
    parts = [
        f"kind={spec.kind}",
        f"nugget={fmt_float_point(spec.nugget)}",
        f"sill={fmt_float_point(spec.sill)}",
        f"range={fmt_float_point(spec.range_)}",
    ]
    if spec.shape is not None:
        parts.append(f"nu={fmt_float_point(spec.shape)}")
    return " ".join(parts)


def _parse_number(key: str, token: str) -> float:
    if "." not in token:
        raise FormatError(f"value for {key!r} must carry a decimal point: {token!r}")
    try:
        return float(token)
    except ValueError:
        raise FormatError(f"cannot parse value for {key!r}: {token!r}") from None


def spec_from_text(text: str):
    """Parse the flat `key=value` form back into a model spec."""
    fields: dict[str, str] = {}
    for token in text.split():
        if "=" not in token:
            raise FormatError(f"malformed token {token!r} in model spec")
        key, _, value = token.partition("=")
        if key in fields:
            raise FormatError(f"duplicate key {key!r} in model spec")
        fields[key] = value
    kind = fields.pop("kind", None)
    if kind is None:
        raise FormatError("model spec is missing the kind= field")
    if kind == "nested_matern":
        try:
            vals = [_parse_number(k, fields.pop(k)) for k in _NESTED_KEYS]
        except KeyError as exc:
            raise FormatError(f"nested_matern spec is missing {exc.args[0]}") from None
        if fields:
            raise FormatError(f"unknown keys in model spec: {sorted(fields)}")
        return NestedMaternSpec(*vals)
    if kind not in KINDS:
        raise FormatError(f"unknown model kind {kind!r}")
    if "shape" in fields and "nu" not in fields:
        fields["nu"] = fields.pop("shape")
    try:
        nugget = _parse_number("nugget", fields.pop("nugget"))
        sill = _parse_number("sill", fields.pop("sill"))
        range_ = _parse_number("range", fields.pop("range"))
    except KeyError as exc:
        raise FormatError(f"model spec is missing {exc.args[0]}") from None
    shape = None
    if "nu" in fields:
        shape = _parse_number("nu", fields.pop("nu"))
    if fields:
        raise FormatError(f"unknown keys in model spec: {sorted(fields)}")
    try:
        return CovarianceSpec(kind, nugget, sill, range_, shape)
    except DomainError as exc:
        raise FormatError(str(exc)) from None


def with_nugget(spec, nugget: float):
    """Copy of a spec with the nugget replaced (used by exactness checks)."""
    return replace(spec, nugget=nugget)
