"""Discrete Cameron-Martin transforms and (non-)membership diagnostics.

``apply_T`` maps a derivative ``hdot`` to
``k(t) = exp(-Lambda(t)) int_0^t exp(Lambda(s)) hdot(s) ds`` and ``apply_T_inv``
recovers ``hdot = k' + f k``.  The diagnostics integrate a candidate quantity
up to ``1 - eps`` for a decreasing list of ``eps`` and classify the resulting
trend as bounded, divergent or inconclusive.

Verdict rules (shared by all integral trends here):

* bounded       the last two refinements each change the value by < 1 %
* divergent     ``ln I`` against ``ln(1/eps)`` has slope >= 0.1 with R^2 >= 0.99
                (power-law growth), or ``ln I`` against ``ln ln(1/eps)`` has
                slope >= 0.5 with R^2 >= 0.99 (logarithmic growth)
* inconclusive  anything else
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .drift_kernels import BRIDGE_C, DriftFamily, drift_coefficient, log_phi
from .errors import ConfigurationError, DomainError
from .grid import GridFunction, TimeGrid
from .reports import TrendReport, linear_fit

FLAT_CHANGE = 0.01
MIN_SLOPE = 0.1
MIN_R2 = 0.99
MIN_LOG_SLOPE = 0.5

DEFAULT_EPS = tuple(2.0 ** -np.arange(3, 15))


def _require(gf: GridFunction, interpretation: str, what: str) -> None:
    if not isinstance(gf, GridFunction):
        raise ConfigurationError(f"{what} must be a GridFunction")
    if gf.interpretation != interpretation:
        raise ConfigurationError(f"{what} must be tagged {interpretation!r}, got {gf.interpretation!r}")


# -- transforms --------------------------------------------------------------

def apply_T(fam: DriftFamily, hdot: GridFunction, rule: str = "trapezoid") -> GridFunction:
    """``k(t) = exp(-Lambda(t)) int_0^t exp(Lambda(s)) hdot(s) ds`` on the grid of ``hdot``.

    The integral is accumulated interval by interval with the factor
    ``a_j = exp(Lambda(t_j) - Lambda(t_{j+1}))`` so that nothing overflows:

    * ``"trapezoid"`` (default): ``k_{j+1} = a_j k_j + dt_j (a_j hdot_j + hdot_{j+1}) / 2``
    * ``"left"``:                ``k_{j+1} = a_j (k_j + hdot_j dt_j)``
    """
    _require(hdot, "derivative", "hdot")
    if rule not in ("trapezoid", "left"):
        raise ConfigurationError(f"rule must be 'trapezoid' or 'left', got {rule!r}")
    grid = hdot.grid
    lam = log_phi(fam, grid.nodes)
    a = np.exp(lam[:-1] - lam[1:])
    dt = grid.dt
    h = hdot.values
    k = np.zeros_like(h)
    for j in range(grid.n):
        if rule == "left":
            k[j + 1] = a[j] * (k[j] + h[j] * dt[j])
        else:
            k[j + 1] = a[j] * k[j] + 0.5 * dt[j] * (a[j] * h[j] + h[j + 1])
    return GridFunction(grid, k, "function", meta={"transform": "T", "rule": rule})


def apply_T_inv(fam: DriftFamily, k: GridFunction) -> GridFunction:
    """``hdot = k' + f k`` with second-order centred differences (one-sided at the ends)."""
    _require(k, "function", "k")
    nodes = k.grid.nodes
    dk = np.gradient(k.values, nodes, axis=0, edge_order=2)
    f = drift_coefficient(fam, nodes)[:, None]
    return GridFunction(k.grid, dk + f * k.values, "derivative", meta={"transform": "T^-1"})


def l2_norm(gf: GridFunction) -> float:
    """Trapezoid L2 norm over the grid (all coordinates)."""
    sq = np.sum(gf.values ** 2, axis=1)
    return float(np.sqrt(np.sum(0.5 * (sq[:-1] + sq[1:]) * gf.grid.dt)))


def random_smooth_hdot(grid: TimeGrid, rng: np.random.Generator, modes: int = 4) -> GridFunction:
    """``sum_m a_m cos(m pi t + phi_m) / m`` with standard normal ``a_m`` and uniform phases."""
    m = np.arange(1, modes + 1)
    amp = rng.standard_normal(modes) / m
    phase = rng.uniform(0.0, 2.0 * np.pi, modes)
    vals = np.cos(np.pi * np.outer(grid.nodes, m) + phase) @ amp
    return GridFunction(grid, vals[:, None], "derivative")


def roundtrip_error(fam: DriftFamily, hdot: GridFunction) -> float:
    """Relative L2 error of ``apply_T_inv(apply_T(hdot))`` against ``hdot``."""
    back = apply_T_inv(fam, apply_T(fam, hdot))
    diff = GridFunction(hdot.grid, back.values - hdot.values, "derivative")
    return l2_norm(diff) / l2_norm(hdot)


# -- the quotient estimate -----------------------------------------------------

@dataclass(frozen=True)
class Lemma1Result:
    g: GridFunction
    ratio: float
    bound: float
    norm_f: float
    norm_g: float

    @property
    def holds(self) -> bool:
        return self.ratio <= self.bound


def _pow_int(p: float, hi: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """``int_lo^hi tau^(p-1) dtau`` for p > 0."""
    return (hi ** p - lo ** p) / p


def lemma1_g(c: float, f: GridFunction) -> Lemma1Result:
    """``g(x) = (1-x)^(c-1) int_0^x f(y) (1-y)^(-c) dy`` and the ratio ``|g| / |f|``.

    ``f`` is read as piecewise constant (left-node value on each interval, the
    last node's value on ``[t_n, 1)``).  For such f every integral is exact, so
    the ratio is the continuum ratio for that f; the bound is ``2 / (2c - 1)``.
    """
    if not c > 0.5:
        raise DomainError(f"the quotient estimate needs c > 1/2, got c={c!r}")
    grid = f.grid
    fv = f.values
    tau = np.append(grid.tau, 0.0)                      # panel edges in 1 - t
    hi, lo = tau[:-1, None], tau[1:, None]              # panel j spans tau in [lo, hi]
    width = hi - lo
    norm_f_sq = float(np.sum(fv ** 2 * width))
    if not norm_f_sq > 0:
        raise ConfigurationError("f must have a positive L2 norm")
    # F_j = int_0^{t_j} f (1-y)^-c dy at the nodes
    if c == 1.0:
        with np.errstate(divide="ignore"):
            panel = fv[:-1] * np.log(hi[:-1] / lo[:-1])
    else:
        panel = fv[:-1] * (lo[:-1] ** (1 - c) - hi[:-1] ** (1 - c)) / (c - 1)
    F = np.vstack([np.zeros((1, fv.shape[1])), np.cumsum(panel, axis=0)])
    g_nodes = grid.tau[:, None] ** (c - 1) * F
    # on panel j: g(tau) = alpha + beta tau^(c-1)  (or A - f_j ln tau when c = 1)
    if c == 1.0:
        A = F + fv * np.log(hi)
        B = fv

        def prim(x):
            with np.errstate(divide="ignore", invalid="ignore"):
                lx = np.where(x > 0, np.log(np.where(x > 0, x, 1.0)), 0.0)
                return (A * A * x - 2 * A * B * np.where(x > 0, x * lx - x, 0.0)
                        + B * B * np.where(x > 0, x * (lx * lx - 2 * lx + 2), 0.0))

        g_sq = prim(hi) - prim(lo)
    else:
        alpha = fv / (c - 1)
        beta = F - fv * hi ** (1 - c) / (c - 1)
        g_sq = (alpha ** 2 * width + 2 * alpha * beta * _pow_int(c, hi, lo)
                + beta ** 2 * _pow_int(2 * c - 1, hi, lo))
    norm_g = float(np.sqrt(max(float(np.sum(g_sq)), 0.0)))
    norm_f = float(np.sqrt(norm_f_sq))
    g = GridFunction(grid, g_nodes, "function", meta={"transform": "quotient", "c": c})
    return Lemma1Result(g, norm_g / norm_f, 2.0 / (2.0 * c - 1.0), norm_f, norm_g)


# -- integral trends ---------------------------------------------------------

def _check_eps(grid: TimeGrid, eps_list) -> np.ndarray:
    eps = np.asarray(eps_list, dtype=float)
    if eps.ndim != 1 or len(eps) < 3:
        raise ConfigurationError("eps_list needs at least three values")
    if not np.all(np.diff(eps) < 0) or not (eps[0] < 1 and eps[-1] > 0):
        raise ConfigurationError("eps_list must be strictly decreasing inside (0, 1)")
    if eps[-1] < grid.eps_min * (1 - 1e-12):
        raise ConfigurationError(
            f"smallest eps={eps[-1]:g} lies beyond the last grid node (eps_min={grid.eps_min:g})")
    return eps


def integrals_to(grid: TimeGrid, integrand: np.ndarray, eps: np.ndarray) -> np.ndarray:
    """``int_0^{1-eps} integrand dt`` for each eps, by trapezoid in ``u = -ln(1-t)``.

    In u the geometric grids are uniform and power-law tails become
    exponentials, which the trapezoid rule handles with small relative error.
    """
    u = -np.log1p(-grid.nodes)
    y = integrand * grid.tau                       # dt = (1 - t) du
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(u))])
    target = -np.log(eps)
    j = np.clip(np.searchsorted(u, target, side="right") - 1, 0, len(u) - 2)
    frac = (target - u[j]) / (u[j + 1] - u[j])
    y_t = y[j] + frac * (y[j + 1] - y[j])
    return cum[j] + 0.5 * (target - u[j]) * (y[j] + y_t)


def classify_trend(eps: np.ndarray, values: np.ndarray, quantity: str) -> TrendReport:
    """Apply the bounded / divergent / inconclusive rules to ``I(eps)``.

    Both fits use the smaller-eps half of the list (at least three points),
    where the asymptotic regime is reached.
    """
    eps = np.asarray(eps, dtype=float)
    values = np.asarray(values, dtype=float)
    x = np.log(1.0 / eps)
    rel = np.abs(np.diff(values)) / np.maximum(np.abs(values[1:]), np.finfo(float).tiny)
    flat = bool(np.all(rel[-2:] < FLAT_CHANGE))
    w = slice(min(len(x) // 2, len(x) - 3), None)
    if np.all(values[w] > 0):
        p_slope, _, p_r2 = linear_fit(x[w], np.log(values[w]))
        l_slope, _, l_r2 = linear_fit(np.log(x[w]), np.log(values[w]))
    else:
        p_slope = p_r2 = l_slope = l_r2 = 0.0
    power = p_slope >= MIN_SLOPE and p_r2 >= MIN_R2
    logarithmic = l_slope >= MIN_LOG_SLOPE and l_r2 >= MIN_R2
    if flat:
        verdict, rule = "bounded", "flat"
    elif power or logarithmic:
        verdict, rule = "divergent", "power" if power else "logarithmic"
    else:
        verdict, rule = "inconclusive", "none"
    extra = {
        "rule": rule,
        "fit_window": int(len(x) - w.indices(len(x))[0]),
        "log_slope": l_slope, "log_r2": l_r2,
        "relative_changes": rel.tolist(),
        "doubling_ratios": (values[1:] / values[:-1]).tolist() if np.all(values > 0) else [],
    }
    return TrendReport(eps, np.maximum(values, 0.0), p_slope, p_r2, verdict,
                       quantity=quantity, abscissa_name="eps", extra=extra)


def tail_quotient_check(h: GridFunction, eps_list: Sequence[float] = DEFAULT_EPS) -> TrendReport:
    """Trend of ``int_0^{1-eps} ((h(1) - h(u)) / (1 - u))^2 du``, h(1) taken at the last node."""
    _require(h, "function", "h")
    eps = _check_eps(h.grid, eps_list)
    diff = h.values[-1][None, :] - h.values
    integrand = np.sum(diff ** 2, axis=1) / h.grid.tau ** 2
    return classify_trend(eps, integrals_to(h.grid, integrand, eps), "tail quotient L2")


def membership_diagnostic(fam: DriftFamily, k: GridFunction,
                          eps_list: Sequence[float] = DEFAULT_EPS) -> TrendReport:
    """Trend of ``int_0^{1-eps} (f(t) k(t))^2 dt``: is ``f k`` square integrable?"""
    _require(k, "function", "k")
    eps = _check_eps(k.grid, eps_list)
    f = drift_coefficient(fam, k.grid.nodes)
    integrand = f ** 2 * np.sum(k.values ** 2, axis=1)
    rep = classify_trend(eps, integrals_to(k.grid, integrand, eps), "(f k) L2")
    rep.extra["family"] = fam.describe()
    return rep


def subhalf_diagnostic(c: float, hdot: GridFunction,
                       eps_list: Sequence[float] = DEFAULT_EPS) -> TrendReport:
    """Trend of ``J(eps) = int_0^{1-eps} (1-t)^(2c-2) |int_0^t hdot(s) (1-s)^(-c) ds|^2 dt``.

    The inner integral treats ``hdot`` as piecewise constant and is exact for it.
    """
    if not 0 < c <= 0.5:
        raise DomainError(f"subhalf_diagnostic needs 0 < c <= 1/2, got c={c!r} "
                          f"(use membership_diagnostic for c > 1/2)")
    _require(hdot, "derivative", "hdot")
    grid = hdot.grid
    eps = _check_eps(grid, eps_list)
    tau = grid.tau
    w = (tau[:-1] ** (1 - c) - tau[1:] ** (1 - c)) / (1 - c)
    inner = np.vstack([np.zeros((1, hdot.dim)), np.cumsum(hdot.values[:-1] * w[:, None], axis=0)])
    integrand = tau ** (2 * c - 2) * np.sum(inner ** 2, axis=1)
    rep = classify_trend(eps, integrals_to(grid, integrand, eps), "sub-half energy")
    rep.extra["c"] = c
    return rep


# -- the H_{0,0} test battery ---------------------------------------------------

def h00_battery() -> list[tuple[str, Callable]]:
    """50 smooth functions vanishing at t = 0 and t = 1.

    25 products ``t^p (1-t)^q`` and 25 sinusoids ``sin(m pi t)`` and
    ``sin(m pi t^2)``.
    """
    out = []
    for p in (1, 2, 3, 4, 5):
        for q in (1, 1.5, 2, 3, 4):
            out.append((f"t^{p}(1-t)^{q}", lambda t, p=p, q=q: t ** p * (1 - t) ** q))
    for m in range(1, 16):
        out.append((f"sin({m}pi t)", lambda t, m=m: np.sin(m * np.pi * t)))
    for m in range(1, 11):
        out.append((f"sin({m}pi t^2)", lambda t, m=m: np.sin(m * np.pi * t * t)))
    return out


def battery_report(fam: DriftFamily, grid: TimeGrid,
                   eps_list: Sequence[float] = DEFAULT_EPS) -> list[tuple[str, TrendReport]]:
    if fam.variant != BRIDGE_C:
        raise ConfigurationError("the battery check is defined for BridgeC families")
    return [(name, membership_diagnostic(fam, GridFunction.from_callable(grid, fn), eps_list))
            for name, fn in h00_battery()]
