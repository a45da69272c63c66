"""Drift coefficients of the generalised bridges and the kernels built from them.

Three drift families are supported:

* ``BridgeC``          f(t) = c / (1 - t),                 c > 0
* ``PowerAlpha``       f(t) = (1 - t) ** (-alpha),         alpha > 1
* ``PerturbedBridge``  base drift 1/(1 - t) plus a state-dependent term
  f_pert(t, x) / (1 - t) ** delta (only the samplers can use it).

Every closed form here has an integral-form twin evaluated with
:func:`~genbridge.quadrature.quad_oracle`, so each value can be cross-checked
along an independent route.  All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalFailure
from .quadrature import quad_oracle

BRIDGE_C = "BridgeC"
POWER_ALPHA = "PowerAlpha"
PERTURBED = "PerturbedBridge"

def tanh_perturbation(kappa: float) -> Callable:
    """Builtin perturbation ``f(t, x) = kappa * tanh(x)`` (componentwise).

    Satisfies ``|f(t, x)|^2 <= kappa^2 |x|^2 + kappa^2``.
    """
    def f_pert(t, x):
        return kappa * np.tanh(x)
    f_pert.kappa = kappa
    return f_pert


@dataclass(frozen=True)
class DriftFamily:
    variant: str
    c: float = 1.0
    alpha: float = 2.0
    delta: float = 0.25
    kappa: float = 0.0
    f_pert: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.variant == BRIDGE_C:
            if not self.c > 0:
                raise ConfigurationError(f"BridgeC needs c > 0, got c={self.c!r}")
        elif self.variant == POWER_ALPHA:
            if not self.alpha > 1:
                raise ConfigurationError(f"PowerAlpha needs alpha > 1, got alpha={self.alpha!r}")
        elif self.variant == PERTURBED:
            if not self.c > 0:
                raise ConfigurationError(f"base drift needs c > 0, got c={self.c!r}")
            if not 0 < self.delta < 0.5:
                raise ConfigurationError(f"PerturbedBridge needs 0 < delta < 1/2, got {self.delta!r}")
            if self.kappa < 0 or self.kappa ** 2 > (1 - 2 * self.delta) / 4:
                raise ConfigurationError(
                    f"growth bound kappa^2 <= (1 - 2 delta)/4 violated: "
                    f"kappa={self.kappa!r}, delta={self.delta!r}")
            if self.f_pert is None:
                object.__setattr__(self, "f_pert", tanh_perturbation(self.kappa))
        else:
            raise ConfigurationError(f"unknown drift family {self.variant!r}")

    @classmethod
    def bridge(cls, c: float) -> "DriftFamily":
        return cls(BRIDGE_C, c=float(c))

    @classmethod
    def power(cls, alpha: float) -> "DriftFamily":
        return cls(POWER_ALPHA, alpha=float(alpha))

    @classmethod
    def perturbed(cls, delta: float, kappa: float, f_pert: Optional[Callable] = None,
                  c: float = 1.0) -> "DriftFamily":
        return cls(PERTURBED, c=float(c), delta=float(delta), kappa=float(kappa), f_pert=f_pert)

    def describe(self) -> dict:
        if self.variant == BRIDGE_C:
            return {"family": self.variant, "c": self.c}
        if self.variant == POWER_ALPHA:
            return {"family": self.variant, "alpha": self.alpha}
        return {"family": self.variant, "c": self.c, "delta": self.delta, "kappa": self.kappa}


@dataclass(frozen=True)
class KernelValue:
    value: float
    method: str  # "closed_form" | "quadrature"


def _as_time(t, name="t", allow_one=False):
    arr = np.asarray(t, dtype=float)
    bad = (arr < 0) | ((arr > 1) if allow_one else (arr >= 1)) | ~np.isfinite(arr)
    if np.any(bad):
        bound = "[0, 1]" if allow_one else "[0, 1)"
        raise DomainError(f"{name} must lie in {bound}, got {float(arr[bad].ravel()[0])!r}")
    return arr


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def _explicit(fam: DriftFamily) -> None:
    if fam.variant not in (BRIDGE_C, POWER_ALPHA):
        raise ConfigurationError(
            f"{fam.variant} has a state-dependent drift; use the path samplers instead")


def drift_coefficient(fam: DriftFamily, t):
    """f(t): ``c / (1 - t)`` or ``(1 - t) ** -alpha``."""
    _explicit(fam)
    tau = 1.0 - _as_time(t)
    if fam.variant == BRIDGE_C:
        return _out(fam.c / tau)
    return _out(tau ** -fam.alpha)


def log_phi(fam: DriftFamily, t):
    """Exponent of the integrating factor: the integral of f over [0, t]."""
    _explicit(fam)
    t = _as_time(t)
    if fam.variant == BRIDGE_C:
        return _out(-fam.c * np.log1p(-t))
    a1 = fam.alpha - 1.0
    return _out(np.expm1(-a1 * np.log1p(-t)) / a1)


def log_phi_quad(fam: DriftFamily, t: float, tol: float = 1e-12) -> float:
    """Integral-form twin of :func:`log_phi`."""
    _as_time(t)
    return quad_oracle(lambda s: drift_coefficient(fam, s), 0.0, t, tol=tol, rtol=1e-13)


def aii_kernel(fam: DriftFamily, s, t):
    """Approximation-to-the-identity kernel ``f(s) exp(-int_s^t f)`` for s <= t < 1."""
    s = _as_time(s, "s")
    t = _as_time(t)
    if np.any(s > t):
        raise DomainError("aii_kernel needs s <= t")
    return _out(drift_coefficient(fam, s) * np.exp(log_phi(fam, s) - log_phi(fam, t)))


def aii_mass(fam: DriftFamily, t, t0=None):
    """Mass of the kernel over [0, t0] (t0 defaults to t).

    Full mass is ``1 - exp(-Lambda(t))``; partial mass is
    ``exp(-Lambda(t)) (exp(Lambda(t0)) - 1)`` with Lambda = :func:`log_phi`.
    """
    t = _as_time(t)
    lam_t = log_phi(fam, t)
    if t0 is None:
        return _out(-np.expm1(-lam_t))
    t0 = _as_time(t0, "t0")
    if np.any(t0 > t):
        raise DomainError("aii_mass needs t0 <= t")
    lam_0 = log_phi(fam, t0)
    return _out(np.exp(lam_0 - lam_t) - np.exp(-lam_t))


def smoothing_residual(fam: DriftFamily, sigma: Callable, t: float, rtol: float = 1e-11) -> float:
    """``int_0^t G(s, t) sigma(s) ds - sigma(t) * aii_mass(fam, t)`` by adaptive quadrature.

    Tends to 0 as t -> 1 for continuous ``sigma``.
    """
    t = float(_as_time(t))
    # the kernel decays away from s = t on the scale 1 / f(t); break the
    # range geometrically in that scale so the spike is always resolved
    width = 1.0 / drift_coefficient(fam, t)
    if width < 1e3 * np.finfo(float).eps:
        raise NumericalFailure(f"kernel width {width:.3g} at t={t!r} is below float resolution")
    cuts = [t]
    while cuts[-1] > 0.0:
        cuts.append(max(0.0, t - width * 4.0 ** (len(cuts) - 1)))
    g = lambda s: aii_kernel(fam, np.minimum(s, t), t) * sigma(s)
    total = sum(quad_oracle(g, lo, hi, tol=1e-15, rtol=rtol)
                for hi, lo in zip(cuts, cuts[1:]))
    return float(total - sigma(t) * aii_mass(fam, t))


def _pair(s, t):
    s = _as_time(s, "s")
    t = _as_time(t)
    a, b = np.broadcast_arrays(1.0 - t, 1.0 - s)
    return a, b, np.minimum(a, b), np.maximum(a, b)


def _expm1_over(x: float, log_u):
    """``expm1(x * log_u) / x`` with its x -> 0 limit ``log_u``."""
    if x == 0.0:
        return log_u
    return np.expm1(x * log_u) / x


def _check_c(c):
    if not c > 0:
        raise DomainError(f"c must be positive, got {c!r}")
    return float(c)


def cov_Q(c: float, s, t):
    """Covariance ``Q_c(s, t)`` of the bridge with drift ``-c z / (1 - t)``.

    Equal to ``(1-t)^c (1-s)^c [(1 - s^t)^(1-2c) - 1] / (2c - 1)``; the
    expression is evaluated through ``expm1`` so that c = 1/2 (where it becomes
    ``sqrt((1-s)(1-t)) * -log(1 - s^t)``) and its neighbourhood need no
    special treatment.
    """
    c = _check_c(c)
    a, b, _, _ = _pair(s, t)
    log_hi = np.log1p(-np.minimum(s, t))   # exact for tiny s ^ t
    val = (a * b) ** c * -_expm1_over(1.0 - 2.0 * c, log_hi)
    return _out(val + 0.0)  # no -0.0 on the t = 0 edge


def cov_Q_quad(c: float, s: float, t: float, rtol: float = 1e-13) -> float:
    """Integral form of :func:`cov_Q`: ``int_0^{s^t} (1-t)^c (1-s)^c / (1-r)^{2c} dr``."""
    c = _check_c(c)
    _as_time(s, "s")
    _as_time(t)
    m = min(s, t)
    integral = quad_oracle(lambda r: (1.0 - r) ** (-2.0 * c), 0.0, m, tol=0.0, rtol=rtol)
    return ((1.0 - t) * (1.0 - s)) ** c * integral


def fh_kernel_q(c: float, s, t):
    """Kernel ``q_c`` with ``A^-1 R_c (A*)^-1 = I + (integral operator with kernel q_c)``.

    Closed form (c != 1/2)::

        c(1-c)/(2c-1) * (1 - s v t)^(c-1) / (1 - s ^ t)^c
          + c^2/(1-2c) * (1-t)^(c-1) (1-s)^(c-1)

    rewritten as ``lo^(c-1) hi^(-c) [-c - c^2 expm1((2c-1) log hi)/(2c-1)]``
    with ``lo = 1 - s v t`` and ``hi = 1 - s ^ t``.  At c = 1 the kernel is -1.
    """
    c = _check_c(c)
    _, _, lo, hi = _pair(s, t)
    return _out(fh_kernel_q_tau(c, lo, hi))


def fh_kernel_q_tau(c: float, lo, hi):
    """:func:`fh_kernel_q` in distances to the endpoint, ``lo = 1 - s v t <= hi = 1 - s ^ t``.

    Lets callers that parametrize by ``1 - t`` avoid forming t near 1.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if c == 1.0:
        return np.full(np.broadcast(lo, hi).shape, -1.0)
    bracket = -c - c * c * _expm1_over(2.0 * c - 1.0, np.log(hi))
    return lo ** (c - 1.0) * hi ** -c * bracket


def fh_kernel_q_quad(c: float, s: float, t: float, rtol: float = 1e-13) -> float:
    """Integral form of :func:`fh_kernel_q`.

    ``-c (1-s v t)^(c-1) / (1-s^t)^c + c^2 (1-t)^(c-1) (1-s)^(c-1) int_0^{s^t} (1-r)^(-2c) dr``
    """
    c = _check_c(c)
    _as_time(s, "s")
    _as_time(t)
    lo, hi = 1.0 - max(s, t), 1.0 - min(s, t)
    integral = quad_oracle(lambda r: (1.0 - r) ** (-2.0 * c), 0.0, min(s, t), tol=0.0, rtol=rtol)
    return -c * lo ** (c - 1.0) / hi ** c + c * c * ((1.0 - t) * (1.0 - s)) ** (c - 1.0) * integral


def bb_cov(s, t):
    """Brownian bridge covariance ``s^t - st``, evaluated as ``(s^t)(1 - s v t)``."""
    s = _as_time(s, "s", allow_one=True)
    t = _as_time(t, allow_one=True)
    return _out(np.minimum(s, t) * (1.0 - np.maximum(s, t)))


KERNELS = ("drift", "log-phi", "aii", "mass", "cov-q", "fh-q")


def kernel_value(kernel: str, fam: DriftFamily, s: float, t: float,
                 t0: Optional[float] = None, method: str = "closed_form") -> KernelValue:
    """Evaluate one named kernel by closed form or by its quadrature twin."""
    if method not in ("closed_form", "quadrature"):
        raise ConfigurationError(f"unknown method {method!r}")
    quad = method == "quadrature"
    if kernel == "drift":
        val = drift_coefficient(fam, t)
    elif kernel == "log-phi":
        val = log_phi_quad(fam, t) if quad else log_phi(fam, t)
    elif kernel == "aii":
        if quad:
            lam = quad_oracle(lambda r: drift_coefficient(fam, r), s, t, tol=1e-13, rtol=1e-13)
            val = drift_coefficient(fam, s) * np.exp(-lam)
        else:
            val = aii_kernel(fam, s, t)
    elif kernel == "mass":
        upper = t if t0 is None else t0
        if quad:
            val = quad_oracle(lambda r: aii_kernel(fam, np.minimum(r, t), t), 0.0, upper,
                              tol=1e-13, rtol=1e-12)
        else:
            val = aii_mass(fam, t, t0)
    elif kernel in ("cov-q", "fh-q"):
        if fam.variant != BRIDGE_C:
            raise ConfigurationError(f"{kernel} is defined for the BridgeC family only")
        if kernel == "cov-q":
            val = cov_Q_quad(fam.c, s, t) if quad else cov_Q(fam.c, s, t)
        else:
            val = fh_kernel_q_quad(fam.c, s, t) if quad else fh_kernel_q(fam.c, s, t)
    else:
        raise ConfigurationError(f"unknown kernel {kernel!r}; choose from {KERNELS}")
    if kernel == "drift":
        method = "closed_form"
    return KernelValue(float(val), method)
