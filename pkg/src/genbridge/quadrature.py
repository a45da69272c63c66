"""Adaptive Gauss-Kronrod quadrature used as the independent verification oracle.

Panels are bisected (never re-weighted) until the summed G7/K15 error
estimate falls below ``max(tol, rtol * |I|)``.  Every panel carries its depth;
a panel that would need bisecting past ``MAX_DEPTH`` aborts with
:class:`~genbridge.errors.OracleFailure` instead of returning a degraded value.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import ConfigurationError, OracleFailure

MAX_DEPTH = 60
MAX_PANELS = 200_000

# 15-point Kronrod abscissae on [-1, 1] (non-negative half), with the embedded
# 7-point Gauss rule living on the odd-indexed abscissae.
_XK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

_NODES = np.concatenate([-_XK[:-1], _XK[::-1]])          # 15 nodes, ascending
_W_KRONROD = np.concatenate([_WK[:-1], _WK[::-1]])
_W_GAUSS = np.zeros(15)
_W_GAUSS[1:7:2] = _WG[:3]
_W_GAUSS[7] = _WG[3]
_W_GAUSS[9:14:2] = _WG[2::-1]


def _vectorize(integrand: Callable, a: float, b: float) -> Callable[[np.ndarray], np.ndarray]:
    """Return an array -> array version of ``integrand``.

    Integrands written with numpy are called on whole arrays; plain scalar
    callables are mapped element by element.
    """
    probe = np.array([a + 0.25 * (b - a), a + 0.5 * (b - a)])
    try:
        out = np.asarray(integrand(probe), dtype=float)
        if out.shape == probe.shape:
            return lambda x: np.asarray(integrand(x), dtype=float)
    except Exception:
        pass
    return lambda x: np.fromiter((integrand(float(v)) for v in x), dtype=float, count=len(x))


def _panels(f, lo: np.ndarray, hi: np.ndarray):
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    x = mid[:, None] + half[:, None] * _NODES[None, :]
    y = f(x.ravel()).reshape(x.shape)
    if not np.all(np.isfinite(y)):
        bad = x[~np.isfinite(y)][0]
        raise OracleFailure(f"integrand is not finite at x={bad!r}")
    kron = half * (y @ _W_KRONROD)
    gauss = half * (y @ _W_GAUSS)
    return kron, np.abs(kron - gauss)


def quad_with_error(integrand: Callable, a: float, b: float, tol: float = 1e-10,
                    rtol: float = 0.0) -> tuple[float, float]:
    """Integrate ``integrand`` over ``[a, b]``; return ``(value, error_estimate)``."""
    a, b = float(a), float(b)
    if a > b:
        raise ConfigurationError(f"need a <= b, got a={a}, b={b}")
    if a == b:
        return 0.0, 0.0
    f = _vectorize(integrand, a, b)
    lo = np.array([a])
    hi = np.array([b])
    depth = np.zeros(1, dtype=int)
    val, err = _panels(f, lo, hi)
    width = b - a
    while True:
        total = float(np.sum(val))
        total_err = float(np.sum(err))
        target = max(tol, rtol * abs(total))
        if total_err <= target:
            return total, total_err
        share = target * (hi - lo) / width
        split = err > share
        split[int(np.argmax(err))] = True
        if np.any(depth[split] >= MAX_DEPTH):
            raise OracleFailure(
                f"quadrature on [{a}, {b}] hit depth cap {MAX_DEPTH} "
                f"with error {total_err:.3e} > {target:.3e}")
        if len(lo) + int(split.sum()) > MAX_PANELS:
            raise OracleFailure(f"quadrature on [{a}, {b}] exceeded {MAX_PANELS} panels")
        s_lo, s_hi, s_depth = lo[split], hi[split], depth[split] + 1
        s_mid = 0.5 * (s_lo + s_hi)
        new_lo = np.concatenate([s_lo, s_mid])
        new_hi = np.concatenate([s_mid, s_hi])
        new_val, new_err = _panels(f, new_lo, new_hi)
        keep = ~split
        lo = np.concatenate([lo[keep], new_lo])
        hi = np.concatenate([hi[keep], new_hi])
        depth = np.concatenate([depth[keep], s_depth, s_depth])
        val = np.concatenate([val[keep], new_val])
        err = np.concatenate([err[keep], new_err])


def quad_oracle(integrand: Callable, a: float, b: float, tol: float = 1e-10,
                rtol: float = 0.0) -> float:
    """Adaptive quadrature estimate of the integral of ``integrand`` over [a, b].

    The estimate satisfies ``error <= max(tol, rtol * |value|)`` according to
    the Gauss-Kronrod error estimate, or :class:`OracleFailure` is raised.
    Deterministic for fixed inputs.
    """
    return quad_with_error(integrand, a, b, tol=tol, rtol=rtol)[0]
