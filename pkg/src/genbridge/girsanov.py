"""Exponential-martingale densities along Brownian bridge paths.

For the c-bridge against the Brownian bridge (c = 1) the drift difference is
``(1 - c) z / (1 - t)``, so with

    X_t = sum <z_k / (1 - t_k), dB_k>        Y_t = sum |z_k|^2 / (1 - t_k)^2 dt_k

the log-density is ``log M_t = (1 - c) X_t - (1 - c)^2 Y_t / 2``.  The
increments ``dB_k = dz_k + z_k dt_k / (1 - t_k)`` are reconstructed from the
sampled path (left-point rule), so exact and Euler ensembles share one code
path, and every ``c_target`` comes from the same pair (X, Y).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .drift_kernels import BRIDGE_C, PERTURBED, DriftFamily
from .errors import ConfigurationError, ContractViolation, DomainError
from .grid import GridFunction, TimeGrid
from .path_sampler import PathEnsemble, sample_exact, sample_perturbed
from .reports import DiagnosticsReport

COLLAPSE_MEDIAN = 0.01
FLOOR_MEDIAN = 0.1
DEFAULT_CHUNK = 5000


@dataclass(frozen=True, eq=False)
class MartingaleTrace:
    """Per-path ``log M`` at selected grid nodes (always including t = 0)."""

    grid: TimeGrid
    times: np.ndarray
    log_m: np.ndarray                 # (n_paths, len(times))
    label: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        log_m = np.asarray(self.log_m, dtype=float)
        if log_m.ndim != 2 or log_m.shape[1] != len(self.times):
            raise ConfigurationError("log_m must have one column per time")
        if self.times[0] != 0.0 or np.any(log_m[:, 0] != 0.0):
            raise ContractViolation("log M_0 must be 0 on every path")
        if not np.all(np.isfinite(log_m)):
            raise ContractViolation("log M has non-finite entries")
        object.__setattr__(self, "log_m", log_m)
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))

    @property
    def n_paths(self) -> int:
        return self.log_m.shape[0]

    def column(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[j] - t) > 1e-12 * max(1.0, abs(t)):
            raise ConfigurationError(f"t={t!r} is not a recorded time of this trace")
        return self.log_m[:, j]

    def stats(self, t: float) -> dict:
        """Mean (with standard error), median and 5 % / 95 % quantiles of ``M_t``."""
        m = np.exp(self.column(t))
        n = len(m)
        q05, med, q95 = np.quantile(m, [0.05, 0.5, 0.95])
        return {
            "t": float(t),
            "mean": float(np.mean(m)),
            "se": float(np.std(m, ddof=1) / math.sqrt(n)) if n > 1 else 0.0,
            "median": float(med),
            "q05": float(q05),
            "q95": float(q95),
        }

    def terminal_stats(self) -> dict:
        return self.stats(self.times[-1])

    def l2_norm(self, t: float) -> float:
        """Monte Carlo ``sqrt(E[(N_t - <N>_t / 2)^2])``, the L2 norm of ``log M_t``."""
        return float(np.sqrt(np.mean(self.column(t) ** 2)))


def _node_indices(grid: TimeGrid, t_list: Optional[Iterable[float]]) -> np.ndarray:
    if t_list is None:
        return np.arange(len(grid))
    idx = sorted({0, *(grid.index_of(float(t)) for t in t_list)})
    return np.asarray(idx)


def _check_reference(ens: PathEnsemble) -> None:
    fam = ens.family
    if ens.method == "bb_rep":
        return
    if not (isinstance(fam, DriftFamily) and fam.variant == BRIDGE_C and fam.c == 1.0):
        raise ContractViolation("densities need an ensemble of the c = 1 bridge "
                                f"(got family {getattr(fam, 'describe', lambda: fam)()})")


def bridge_functionals(ens: PathEnsemble) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative ``X`` and ``Y`` (see module docstring), shape ``(n_paths, n_nodes)``."""
    _check_reference(ens)
    z = ens.values
    grid = ens.grid
    dt = grid.dt[None, :, None]
    tau = grid.tau[:-1][None, :, None]
    zk = z[:, :-1]
    dB = np.diff(z, axis=1) + zk / tau * dt
    x_inc = np.sum(zk / tau * dB, axis=2)
    y_inc = np.sum(zk * zk / (tau * tau) * dt, axis=2)
    pad = np.zeros((z.shape[0], 1))
    return (np.concatenate([pad, np.cumsum(x_inc, axis=1)], axis=1),
            np.concatenate([pad, np.cumsum(y_inc, axis=1)], axis=1))


def _check_c_target(c_target) -> float:
    c = float(c_target)
    if not c > 0:
        raise DomainError(f"c_target must be positive, got {c_target!r}")
    return c


def _log_m(c: float, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    b = 1.0 - c
    if b == 0.0:
        return np.zeros_like(X)
    return b * X - 0.5 * b * b * Y


def log_rn_bridge(ens: PathEnsemble, c_target: float,
                  t_list: Optional[Sequence[float]] = None) -> MartingaleTrace:
    """``log dnu^(c) / dnu^(1)`` on ``[0, t]`` along the paths of a c = 1 ensemble."""
    c = _check_c_target(c_target)
    X, Y = bridge_functionals(ens)
    idx = _node_indices(ens.grid, t_list)
    return MartingaleTrace(ens.grid, ens.grid.nodes[idx], _log_m(c, X[:, idx], Y[:, idx]),
                           label=f"c_target={c:g}", meta={"c_target": c})


def _chunks(n_paths: int, chunk: int):
    if chunk < 1:
        raise ConfigurationError("chunk must be positive")
    for lo in range(0, n_paths, chunk):
        yield lo, min(chunk, n_paths - lo)


def log_rn_bridge_streamed(c_targets: Sequence[float], grid: TimeGrid, n_paths: int, seed: int,
                           t_list: Sequence[float], dim: int = 1, chunk: int = DEFAULT_CHUNK,
                           threads=None) -> dict:
    """:func:`log_rn_bridge` for many paths without holding the ensemble in memory.

    Paths are drawn in fixed chunks of the exact c = 1 sampler (bitwise the
    same paths as one large call) and only the columns at ``t_list`` are kept.
    Returns ``{c_target: MartingaleTrace}``.
    """
    cs = [_check_c_target(c) for c in c_targets]
    bridge = DriftFamily.bridge(1.0)
    idx = _node_indices(grid, t_list)
    Xs, Ys = [], []
    for lo, size in _chunks(int(n_paths), int(chunk)):
        ens = sample_exact(bridge, grid, dim, size, seed, path_offset=lo, threads=threads)
        X, Y = bridge_functionals(ens)
        Xs.append(X[:, idx])
        Ys.append(Y[:, idx])
    X, Y = np.vstack(Xs), np.vstack(Ys)
    times = grid.nodes[idx]
    return {c: MartingaleTrace(grid, times, _log_m(c, X, Y), label=f"c_target={c:g}",
                               meta={"c_target": c, "seed": seed}) for c in cs}


def perturbed_rn(ens: PathEnsemble, log_increments: GridFunction,
                 t_list: Optional[Sequence[float]] = None) -> MartingaleTrace:
    """Density of the perturbed bridge against the c = 1 bridge from sampler increments."""
    fam = ens.family
    if not (isinstance(fam, DriftFamily) and fam.variant == PERTURBED):
        raise ContractViolation("perturbed_rn needs an ensemble from sample_perturbed")
    if not log_increments.grid.same_as(ens.grid):
        raise ConfigurationError("log increments live on a different grid")
    if log_increments.values.shape != (len(ens.grid), ens.n_paths):
        raise ConfigurationError("log increments must have one column per path")
    cum = np.cumsum(log_increments.values, axis=0).T
    idx = _node_indices(ens.grid, t_list)
    return MartingaleTrace(ens.grid, ens.grid.nodes[idx], cum[:, idx],
                           label="perturbed", meta=fam.describe())


def perturbed_rn_streamed(fam: DriftFamily, grid: TimeGrid, n_paths: int, seed: int,
                          t_list: Sequence[float], dim: int = 1, chunk: int = DEFAULT_CHUNK,
                          threads=None) -> MartingaleTrace:
    idx = _node_indices(grid, t_list)
    parts = []
    for lo, size in _chunks(int(n_paths), int(chunk)):
        ens, inc = sample_perturbed(fam, grid, dim, size, seed, path_offset=lo, threads=threads)
        parts.append(np.cumsum(inc.values, axis=0).T[:, idx])
    return MartingaleTrace(grid, grid.nodes[idx], np.vstack(parts), label="perturbed",
                           meta={**fam.describe(), "seed": seed})


def l2_profile(trace: MartingaleTrace, t_list: Sequence[float]) -> dict:
    """L2 norms of ``log M_t`` along ``t_list``; bounded when successive ratios stay <= 1.2."""
    norms = [trace.l2_norm(t) for t in t_list]
    ratios = [b / a if a > 0 else math.inf for a, b in zip(norms, norms[1:])]
    return {
        "t": [float(t) for t in t_list],
        "l2": norms,
        "ratios": ratios,
        "non_decreasing": bool(all(b >= a for a, b in zip(norms, norms[1:]))),
        "bounded": bool(all(r <= 1.2 for r in ratios)),
    }


def novikov_bound(delta: float, kappa: float, sup_sq: float) -> float:
    """``exp((1 + sup_sq) kappa^2 / (2 (1 - 2 delta)))``.

    Per-path ceiling of ``exp(<N>_t / 2)`` for a perturbation with
    ``|f(t, x)|^2 <= kappa^2 (1 + |x|^2)`` and ``sup_sq >= sup |z_t|^2``.
    """
    if not 0 < delta < 0.5:
        raise DomainError(f"delta must lie in (0, 1/2), got {delta!r}")
    if kappa < 0 or sup_sq < 0:
        raise DomainError("kappa and sup_sq must be non-negative")
    return math.exp((1.0 + sup_sq) * kappa * kappa / (2.0 * (1.0 - 2.0 * delta)))


def mass_collapse(stats: dict) -> bool:
    """Median below 0.01 while the mean is still within 3 SE of 1."""
    return stats["median"] < COLLAPSE_MEDIAN and abs(stats["mean"] - 1.0) <= 3.0 * stats["se"]


def martingale_summary(trace: MartingaleTrace,
                       t_list: Optional[Sequence[float]] = None) -> DiagnosticsReport:
    """Per-t statistics of ``M_t`` with the ``mass-collapse`` flag."""
    ts = list(trace.times[1:]) if t_list is None else [float(t) for t in t_list]
    cols = ["t", "mean", "se", "median", "q05", "q95", "flags"]
    rows = []
    for t in ts:
        st = trace.stats(t)
        flags = []
        if mass_collapse(st):
            flags.append("mass-collapse")
        if abs(st["mean"] - 1.0) > 3.0 * st["se"]:
            flags.append("mean-off")
        rows.append([st[k] for k in cols[:-1]] + [";".join(flags)])
    last = trace.stats(ts[-1])
    summary = {
        "label": trace.label,
        "n_paths": trace.n_paths,
        "terminal_t": float(ts[-1]),
        "mass_collapse": mass_collapse(last),
        "median_decreasing": bool(all(b < a for a, b in zip(
            [r[3] for r in rows], [r[3] for r in rows][1:]))),
        **{k: v for k, v in trace.meta.items() if k not in ("label",)},
    }
    return DiagnosticsReport("martingale", cols, rows, summary)
