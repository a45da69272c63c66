"""Path ensembles of the generalised bridges.

Samplers
--------
``sample_exact``      exact Gaussian transitions of ``dz = dB - f(t) z dt``
``sample_em``         Euler-Maruyama with sub-stepping whenever ``f * dt > 1``
``sample_bb_rep``     the Brownian bridge as ``B_t - t B_1``
``sample_perturbed``  Euler-Maruyama for ``dx = dB - x/(1-t) dt + f(t,x)/(1-t)^delta dt``
                      plus the Girsanov log-density increments along the base bridge

All samplers start at 0, stop at the last grid node ``1 - eps_min`` (the value
at t = 1 is 0 by the bridge property) and draw their normals from per-path
Philox substreams, so ``path_offset`` lets a large ensemble be produced in
chunks that are bitwise slices of the one-shot result.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from . import rng
from .drift_kernels import (BRIDGE_C, PERTURBED, POWER_ALPHA, DriftFamily,
                            drift_coefficient)
from .errors import ConfigurationError, ContractViolation
from .grid import GridFunction, TimeGrid, make_grid
from .quadrature import quad_oracle

__all__ = [
    "PathEnsemble", "TimeGrid", "make_grid", "transition_coefficients", "substep_counts",
    "sample_exact", "sample_em", "sample_bb_rep", "sample_perturbed", "sup_norm_stats",
    "write_csv", "write_binary", "read_binary",
]


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    grid: TimeGrid
    values: np.ndarray          # (n_paths, len(grid), dim)
    seed: int
    family: object              # DriftFamily, or None for the B_t - t B_1 representation
    method: str
    path_offset: int = 0

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    def at(self, t: float) -> np.ndarray:
        """Values at node ``t``, shape ``(n_paths, dim)``."""
        return self.values[:, self.grid.index_of(t), :]


def _check_sizes(dim, n_paths, path_offset=0):
    if int(dim) != dim or dim < 1:
        raise ConfigurationError(f"dim must be a positive integer, got {dim!r}")
    if int(n_paths) != n_paths or n_paths < 1:
        raise ConfigurationError(f"n_paths must be a positive integer, got {n_paths!r}")
    if int(path_offset) != path_offset or path_offset < 0:
        raise ConfigurationError(f"path_offset must be a non-negative integer, got {path_offset!r}")
    return int(dim), int(n_paths), int(path_offset)


def _lambda_gap(fam: DriftFamily, tau, w):
    """``Lambda(t) - Lambda(t - w)`` for ``tau = 1 - t``, without forming t.

    Subtracting two large values of Lambda near t = 1 would lose most digits.
    """
    log_ratio = np.log1p(w / tau)
    if fam.variant == BRIDGE_C:
        return fam.c * log_ratio
    a1 = fam.alpha - 1.0
    return tau ** -a1 * -np.expm1(-a1 * log_ratio) / a1


def transition_coefficients(fam: DriftFamily, grid: TimeGrid):
    """Per-interval ``(a_k, var_k)`` with ``z(t_{k+1}) = a_k z(t_k) + sqrt(var_k) xi``.

    ``a = exp(Lambda(t) - Lambda(t'))`` and
    ``var = int_t^t' exp(-2 (Lambda(t') - Lambda(s))) ds``, the latter by
    quadrature in the lag ``t' - s`` unless a closed form exists.
    """
    if fam.variant not in (BRIDGE_C, POWER_ALPHA):
        raise ConfigurationError(f"no explicit solution for {fam.variant}; use sample_em")
    t0, t1 = grid.nodes[:-1], grid.nodes[1:]
    tau1, dt = 1.0 - t1, t1 - t0
    a = np.exp(-_lambda_gap(fam, tau1, dt))
    if fam.variant == BRIDGE_C and fam.c != 0.5:
        c = fam.c
        log_ratio = np.log1p(-t1) - np.log1p(-t0)
        var = tau1 * -np.expm1((2 * c - 1) * log_ratio) / (2 * c - 1)
    else:
        var = np.empty(len(t0))
        for k, (tau, w) in enumerate(zip(tau1, dt)):
            var[k] = quad_oracle(lambda u, tau=tau: np.exp(-2.0 * _lambda_gap(fam, tau, u)),
                                 0.0, w, tol=0.0, rtol=1e-12)
    return a, var


def sample_exact(fam: DriftFamily, grid: TimeGrid, dim: int, n_paths: int, seed: int,
                 path_offset: int = 0, threads=None) -> PathEnsemble:
    """Sample by exact Markov Gaussian transitions between grid nodes."""
    dim, n_paths, path_offset = _check_sizes(dim, n_paths, path_offset)
    a, var = transition_coefficients(fam, grid)
    sd = np.sqrt(var)
    xi = rng.path_normals(seed, range(path_offset, path_offset + n_paths), grid.n * dim,
                          threads=threads).reshape(n_paths, grid.n, dim)
    z = np.zeros((n_paths, len(grid), dim))
    for k in range(grid.n):
        z[:, k + 1] = a[k] * z[:, k] + sd[k] * xi[:, k]
    return PathEnsemble(grid, z, seed, fam, "exact", path_offset)


DriftLike = Union[DriftFamily, Callable]


def _drift_fn(fam: DriftLike) -> Callable:
    if isinstance(fam, DriftFamily):
        if fam.variant == PERTURBED:
            c = fam.c
            return lambda t: c / (1.0 - np.asarray(t, dtype=float))
        return lambda t: drift_coefficient(fam, t)
    if callable(fam):
        return lambda t: np.asarray(fam(np.asarray(t, dtype=float)), dtype=float)
    raise ConfigurationError(f"expected a DriftFamily or a callable drift, got {fam!r}")


def substep_counts(fam: DriftLike, grid: TimeGrid) -> np.ndarray:
    """Sub-steps per interval so that ``f(s) * ds <= 1`` at every sub-step start."""
    f = _drift_fn(fam)
    dt = grid.dt
    counts = np.ones(grid.n, dtype=int)
    for k in range(grid.n):
        m = max(1, math.ceil(float(f(grid.nodes[k])) * dt[k]))
        while True:
            d = dt[k] / m
            starts = grid.nodes[k] + d * np.arange(m)
            if np.all(np.asarray(f(starts)) * d <= 1.0):
                break
            m += 1
        counts[k] = m
    return counts


def _brownian_increments(seed, grid, dim, n_paths, path_offset, counts, threads):
    """Per-interval increments and, for sub-stepped intervals, their conditional fill.

    Returns ``(dB, fills)`` where ``dB`` has shape ``(n_paths, n, dim)`` and
    ``fills[k]`` (only for ``counts[k] > 1``) has shape ``(n_paths, counts[k], dim)``
    and sums to ``dB[:, k]``.
    """
    paths = range(path_offset, path_offset + n_paths)
    dt = grid.dt
    dB = rng.path_normals(seed, paths, grid.n * dim, threads=threads).reshape(n_paths, grid.n, dim)
    dB *= np.sqrt(dt)[None, :, None]
    fills = {}
    split = counts > 1
    extra = int(np.sum(counts[split]))
    if extra:
        w = rng.path_normals(seed, paths, extra * dim, stream=rng.SUBSTEPS,
                             threads=threads).reshape(n_paths, extra, dim)
        pos = 0
        for k in np.flatnonzero(split):
            m = int(counts[k])
            # free draws w_i ~ N(0, dt/m); w_i + (dB - sum w)/m has the
            # conditional law of the sub-increments given their sum dB.
            free = w[:, pos:pos + m] * math.sqrt(dt[k] / m)
            fills[k] = free + (dB[:, k] - free.sum(axis=1))[:, None, :] / m
            pos += m
    return dB, fills


def sample_em(fam: DriftLike, grid: TimeGrid, dim: int, n_paths: int, seed: int,
              path_offset: int = 0, threads=None) -> PathEnsemble:
    """Euler-Maruyama ``z_{k+1} = z_k + dB_k - f(t_k) z_k dt_k`` with sub-stepping.

    ``fam`` may also be a plain callable ``f(t)`` (e.g. ``f = 0`` for testing).
    """
    dim, n_paths, path_offset = _check_sizes(dim, n_paths, path_offset)
    f = _drift_fn(fam)
    counts = substep_counts(fam, grid)
    dB, fills = _brownian_increments(seed, grid, dim, n_paths, path_offset, counts, threads)
    dt = grid.dt
    z = np.zeros((n_paths, len(grid), dim))
    cur = z[:, 0].copy()
    for k in range(grid.n):
        m = int(counts[k])
        if m == 1:
            cur = cur + dB[:, k] - float(f(grid.nodes[k])) * dt[k] * cur
        else:
            d = dt[k] / m
            for i in range(m):
                cur = cur + fills[k][:, i] - float(f(grid.nodes[k] + i * d)) * d * cur
        z[:, k + 1] = cur
    family = fam if isinstance(fam, DriftFamily) else None
    return PathEnsemble(grid, z, seed, family, "em", path_offset)


def sample_bb_rep(grid: TimeGrid, dim: int, n_paths: int, seed: int, path_offset: int = 0,
                  threads=None) -> PathEnsemble:
    """Brownian bridge as ``B_t - t B_1``, with B simulated on the nodes and at t = 1."""
    dim, n_paths, path_offset = _check_sizes(dim, n_paths, path_offset)
    times = grid.with_endpoint()
    steps = np.diff(times)
    xi = rng.path_normals(seed, range(path_offset, path_offset + n_paths), len(steps) * dim,
                          threads=threads).reshape(n_paths, len(steps), dim)
    B = np.zeros((n_paths, len(times), dim))
    B[:, 1:] = np.cumsum(xi * np.sqrt(steps)[None, :, None], axis=1)
    z = B[:, :-1] - times[:-1][None, :, None] * B[:, -1:, :]
    z[:, 0] = 0.0
    return PathEnsemble(grid, z, seed, None, "bb_rep", path_offset)


def _check_growth(f_pert, kappa, t, x, fx):
    lhs = np.sum(fx * fx, axis=-1)
    rhs = kappa * kappa * (np.sum(x * x, axis=-1) + 1.0)
    bad = lhs > rhs * (1.0 + 1e-12)
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        raise ContractViolation(
            f"growth bound |f(t,x)|^2 <= kappa^2 (|x|^2 + 1) violated at t={t!r}, "
            f"x={x[i].tolist()!r}")


def sample_perturbed(fam: DriftFamily, grid: TimeGrid, dim: int, n_paths: int, seed: int,
                     path_offset: int = 0, threads=None):
    """Euler-Maruyama for the perturbed bridge, sharing increments with the base bridge.

    Returns ``(ensemble, log_increments)``.  ``ensemble`` holds the perturbed
    paths x.  ``log_increments`` is a :class:`GridFunction` whose column p holds,
    for path p, the increments over each interval of
    ``<f(t, z)/(1-t)^delta, dB> - |f(t, z)|^2 / (2 (1-t)^(2 delta)) dt``
    evaluated along the base bridge z driven by the same dB (row 0 is 0).
    """
    if not isinstance(fam, DriftFamily) or fam.variant != PERTURBED:
        raise ConfigurationError("sample_perturbed needs a PerturbedBridge family")
    dim, n_paths, path_offset = _check_sizes(dim, n_paths, path_offset)
    f_pert, kappa, delta, c = fam.f_pert, fam.kappa, fam.delta, fam.c
    counts = substep_counts(fam, grid)
    dB, fills = _brownian_increments(seed, grid, dim, n_paths, path_offset, counts, threads)
    dt = grid.dt
    x = np.zeros((n_paths, len(grid), dim))
    log_inc = np.zeros((len(grid), n_paths))
    xc = np.zeros((n_paths, dim))
    zc = np.zeros((n_paths, dim))
    for k in range(grid.n):
        m = int(counts[k])
        d = dt[k] / m
        acc = np.zeros(n_paths)
        for i in range(m):
            s = grid.nodes[k] + i * d
            db = dB[:, k] if m == 1 else fills[k][:, i]
            tau = 1.0 - s
            fx = np.asarray(f_pert(s, xc), dtype=float)
            fz = np.asarray(f_pert(s, zc), dtype=float)
            _check_growth(f_pert, kappa, s, xc, fx)
            _check_growth(f_pert, kappa, s, zc, fz)
            scale = tau ** -delta
            acc += scale * np.sum(fz * db, axis=1) - 0.5 * scale * scale * np.sum(fz * fz, axis=1) * d
            xc = xc + db - c * xc / tau * d + scale * fx * d
            zc = zc + db - c * zc / tau * d
        x[:, k + 1] = xc
        log_inc[k + 1] = acc
    ens = PathEnsemble(grid, x, seed, fam, "perturbed_em", path_offset)
    incs = GridFunction(grid, log_inc, "function",
                        meta={"content": "log-density increments, one column per path"})
    return ens, incs


BGK_BETA = 0.5825971579390106   # -zeta(1/2) / sqrt(2 pi)


def sup_norm_stats(ens: PathEnsemble, a: float, continuity_correction: bool = False) -> dict:
    """Monte Carlo mean of ``sup_t |z_t|`` and of ``exp(a sup_t |z_t|^2)`` over grid nodes.

    Node maxima underestimate the continuous supremum by about
    ``BGK_BETA * sqrt(dt)``; with ``continuity_correction`` each path's maximum
    is shifted by that amount, using the step length at its arg-max node.
    """
    sq = np.sum(ens.values ** 2, axis=2)
    arg = np.argmax(sq, axis=1)
    sup = np.sqrt(sq[np.arange(len(arg)), arg])
    if continuity_correction:
        dt = ens.grid.dt
        sup = sup + BGK_BETA * np.sqrt(dt[np.minimum(arg, len(dt) - 1)])
    n = len(sup)
    moment = np.exp(a * sup * sup)
    return {
        "mean_sup": float(np.mean(sup)),
        "se_sup": float(np.std(sup, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        "exp_moment": float(np.mean(moment)),
        "se": float(np.std(moment, ddof=1) / math.sqrt(n)) if n > 1 else float("nan"),
        "a": float(a),
        "warning": "a >= 1/8: exponential moment may diverge" if a >= 0.125 else None,
    }


# -- serialization ---------------------------------------------------------

MAGIC = b"GBRIDGE\0"
VERSION = 1
_HEADER = struct.Struct("<8sIIQQ")


def write_csv(ens: PathEnsemble, fh) -> None:
    """Write ``path_id,t,x0,...`` rows (path ids include ``path_offset``)."""
    cols = ",".join(f"x{j}" for j in range(ens.dim))
    fh.write(f"path_id,t,{cols}\n")
    t = ens.grid.nodes
    for p in range(ens.n_paths):
        pid = p + ens.path_offset
        for k in range(len(t)):
            vals = ",".join(format(v, ".17g") for v in ens.values[p, k])
            fh.write(f"{pid},{t[k]:.17g},{vals}\n")


def write_binary(ens: PathEnsemble, fh) -> None:
    """Header ``magic, version, dim, n_paths, n_nodes`` then node times, then values.

    All numbers little-endian; floats are 64-bit, values row-major in
    ``(path, node, coordinate)`` order.
    """
    fh.write(_HEADER.pack(MAGIC, VERSION, ens.dim, ens.n_paths, len(ens.grid)))
    fh.write(np.ascontiguousarray(ens.grid.nodes, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(ens.values, dtype="<f8").tobytes())


def read_binary(fh):
    """Inverse of :func:`write_binary`; returns ``(nodes, values)``."""
    magic, version, dim, n_paths, n_nodes = _HEADER.unpack(fh.read(_HEADER.size))
    if magic != MAGIC or version != VERSION:
        raise ConfigurationError("not a genbridge ensemble file (bad magic or version)")
    nodes = np.frombuffer(fh.read(8 * n_nodes), dtype="<f8")
    values = np.frombuffer(fh.read(8 * n_paths * n_nodes * dim), dtype="<f8")
    return nodes.copy(), values.reshape(n_paths, n_nodes, dim).copy()
