"""Command-line front end: one subcommand per experiment, one report per run.

Exit codes: 0 success, 2 configuration error, 3 numerical failure or I/O error.
Every resolved option (defaults included) is echoed into the report header, so
re-running the echoed configuration reproduces the output byte for byte.
"""

from __future__ import annotations

import argparse
import io
import math
import sys
from typing import Optional, Sequence

import numpy as np

from . import cameron_martin as cm
from . import feldman_hajek as fh
from . import girsanov as gv
from .drift_kernels import (KERNELS, POWER_ALPHA, DriftFamily, aii_mass, kernel_value,
                            smoothing_residual)
from .errors import ConfigurationError, GenbridgeError, NumericalFailure
from .grid import GRID_KINDS, GridFunction, make_grid
from .path_sampler import (PathEnsemble, sample_bb_rep, sample_em, sample_exact,
                           sample_perturbed, write_binary, write_csv)
from .reports import DiagnosticsReport, comment_block, dumps_json, render_report, run_header

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3

FAMILIES = {"bridge": "BridgeC", "power": "PowerAlpha", "perturbed": "PerturbedBridge"}
CM_TESTS = ("membership", "battery", "subhalf", "roundtrip", "lemma", "endpoint")
K_PRESETS = {
    "t(1-t)^0.6": lambda t: t * (1 - t) ** 0.6,
    "t(1-t)": lambda t: t * (1 - t),
    "sqrt(1-t)": lambda t: np.sqrt(1 - t),
    **dict(cm.h00_battery()),
}
HDOT_PRESETS = {
    "one": lambda t: np.ones_like(t),
    "cos(pi t)": lambda t: np.cos(np.pi * t),
    # zero-mean against (1-s)^(-1/2): int_0^1 (1 - 3/2 sqrt(1-s)) (1-s)^(-1/2) ds = 0
    "1-1.5sqrt(1-t)": lambda t: 1.0 - 1.5 * np.sqrt(1.0 - t),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


# -- parser ---------------------------------------------------------------------

def _family_args(p, families=tuple(FAMILIES)):
    g = p.add_argument_group("drift family")
    g.add_argument("--family", choices=families, default=families[0])
    g.add_argument("--c", type=float, help="bridge constant c (bridge, perturbed base)")
    g.add_argument("--alpha", type=float, help="exponent alpha > 1 (power)")
    g.add_argument("--delta", type=float, help="perturbation exponent in (0, 1/2)")
    g.add_argument("--kappa", type=float, help="perturbation growth bound")


def _grid_args(p, n=None, eps_min=None):
    g = p.add_argument_group("time grid")
    g.add_argument("--grid", choices=GRID_KINDS, default="geometric")
    g.add_argument("--n", type=int, default=n, help="number of intervals")
    g.add_argument("--eps-min", type=float, default=eps_min, help="last node is 1 - eps_min")


def _mc_args(p, paths):
    p.add_argument("--paths", type=int, default=paths)
    p.add_argument("--seed", type=int, default=0)


def _out_args(p, formats=("json", "csv")):
    p.add_argument("--out", default="-", help="output path, '-' for stdout")
    p.add_argument("--format", choices=formats, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="genbridge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    p = sub.add_parser("sample", help="simulate a path ensemble")
    _family_args(p)
    _grid_args(p, 512, 1e-4)
    _mc_args(p, 1000)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--method", choices=("exact", "em", "bb-rep"), default=None)
    _out_args(p, ("csv", "json", "binary"))

    p = sub.add_parser("kernel-eval", help="evaluate a kernel by closed form and quadrature")
    _family_args(p, ("bridge", "power"))
    p.add_argument("--kernel", choices=KERNELS, required=True)
    p.add_argument("--s", type=float, default=0.0)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--t0", type=float, default=None, help="upper limit of a partial mass")
    p.add_argument("--method", choices=("closed_form", "quadrature", "both"), default="both")
    _out_args(p)

    p = sub.add_parser("aii-check", help="approximation-to-the-identity limits along t = 1 - 2^-k")
    _family_args(p, ("bridge", "power"))
    p.add_argument("--k-max", type=int, default=20)
    p.add_argument("--t0", type=float, default=0.5)
    _out_args(p)

    p = sub.add_parser("cm-check", help="Cameron-Martin transforms and membership diagnostics")
    _family_args(p, ("bridge", "power"))
    p.add_argument("--test", choices=CM_TESTS, default="membership")
    _grid_args(p)
    p.add_argument("--k", choices=sorted(K_PRESETS), default="t(1-t)^0.6", metavar="NAME",
                   help="k for the membership test: t(1-t), t(1-t)^0.6, sqrt(1-t) "
                        "or a battery name such as t^2(1-t)^1.5 or sin(3pi t^2)")
    p.add_argument("--hdot", choices=sorted(HDOT_PRESETS), default="one",
                   help="hdot for the subhalf and endpoint tests")
    p.add_argument("--eps-list", type=_floats, default=None)
    p.add_argument("--samples", type=int, default=100, help="random draws (roundtrip, lemma)")
    p.add_argument("--seed", type=int, default=0)
    _out_args(p)

    p = sub.add_parser("fh-diagnose", help="whitened covariance trend over grid refinement")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--n-list", type=_ints, default=list(fh.HS_N_LIST))
    _out_args(p)

    p = sub.add_parser("qc-trend", help="L2 norm of the equivalence kernel near the corner")
    p.add_argument("--c", type=float, required=True)
    p.add_argument("--eps-list", type=_floats, default=list(fh.QC_EPS))
    _out_args(p)

    p = sub.add_parser("girsanov", help="density of the c-bridge against the Brownian bridge")
    p.add_argument("--c-target", type=float, required=True)
    _grid_args(p, 1024, 1e-4)
    _mc_args(p, 10000)
    p.add_argument("--t-list", type=_floats, default=None)
    p.add_argument("--chunk", type=int, default=gv.DEFAULT_CHUNK)
    _out_args(p)

    p = sub.add_parser("perturbed", help="density of the perturbed bridge against the Brownian bridge")
    p.add_argument("--c", type=float, default=1.0, help="base bridge constant")
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--kappa", type=float, default=0.35)
    _grid_args(p, 1024, 1e-4)
    _mc_args(p, 10000)
    p.add_argument("--t-list", type=_floats, default=None)
    p.add_argument("--chunk", type=int, default=gv.DEFAULT_CHUNK)
    _out_args(p)
    return parser


# -- validation -----------------------------------------------------------------

def _resolve_family(args) -> DriftFamily:
    """Fill family defaults and reject parameters that do not belong to the family."""
    fam = args.family
    allowed = {"bridge": {"c"}, "power": {"alpha"}, "perturbed": {"c", "delta", "kappa"}}[fam]
    for name in ("c", "alpha", "delta", "kappa"):
        if getattr(args, name) is not None and name not in allowed:
            raise ConfigurationError(f"--{name} does not apply to family {fam!r}")
    if fam == "bridge":
        args.c = 1.0 if args.c is None else args.c
        return DriftFamily.bridge(args.c)
    if fam == "power":
        args.alpha = 2.0 if args.alpha is None else args.alpha
        return DriftFamily.power(args.alpha)
    args.c = 1.0 if args.c is None else args.c
    args.delta = 0.25 if args.delta is None else args.delta
    args.kappa = 0.35 if args.kappa is None else args.kappa
    return DriftFamily.perturbed(args.delta, args.kappa, c=args.c)


def _resolve_grid(args):
    return make_grid(args.grid, args.n, args.eps_min)


def _check_mc(args) -> None:
    if args.paths < 1:
        raise ConfigurationError(f"--paths must be positive, got {args.paths}")
    if args.seed < 0:
        raise ConfigurationError(f"--seed must be non-negative, got {args.seed}")


def _default_t_list(grid) -> list[float]:
    """Nodes of the form 1 - 10^-j present on the grid, plus the last node."""
    out = []
    for j in range(1, 17):
        t = 1.0 - 10.0 ** -j
        if t > grid.nodes[-1] * (1 + 1e-15):
            break
        try:
            out.append(float(grid.nodes[grid.index_of(t, tol=1e-9)]))
        except ConfigurationError:
            pass
    last = float(grid.nodes[-1])
    if not out or out[-1] != last:
        out.append(last)
    return out


def _snap_t_list(grid, t_list):
    return [float(grid.nodes[grid.index_of(t, tol=1e-9)]) for t in t_list]


# -- subcommands ------------------------------------------------------------------

class _EnsembleReport:
    """Wraps a path ensemble so it serializes like any other report."""

    def __init__(self, ens: PathEnsemble):
        self.ens = ens

    def to_dict(self) -> dict:
        return {"method": self.ens.method, "n_paths": self.ens.n_paths, "dim": self.ens.dim,
                "nodes": self.ens.grid.nodes, "values": self.ens.values}


def _run_sample(args):
    fam = _resolve_family(args)
    grid = _resolve_grid(args)
    _check_mc(args)
    args.format = args.format or "csv"
    if args.format == "binary" and args.out == "-":
        raise ConfigurationError("binary output needs --out FILE")
    if args.family == "perturbed":
        args.method = args.method or "em"
        if args.method != "em":
            raise ConfigurationError("the perturbed family is sampled with --method em only")
        ens, _ = sample_perturbed(fam, grid, args.dim, args.paths, args.seed)
        return _EnsembleReport(ens)
    args.method = args.method or "exact"
    if args.method == "bb-rep":
        if args.family != "bridge" or args.c != 1.0:
            raise ConfigurationError("--method bb-rep samples the c = 1 bridge only")
        ens = sample_bb_rep(grid, args.dim, args.paths, args.seed)
    elif args.method == "em":
        ens = sample_em(fam, grid, args.dim, args.paths, args.seed)
    else:
        ens = sample_exact(fam, grid, args.dim, args.paths, args.seed)
    return _EnsembleReport(ens)


def _run_kernel_eval(args):
    fam = _resolve_family(args)
    methods = ("closed_form", "quadrature") if args.method == "both" else (args.method,)
    rows = []
    for m in methods:
        kv = kernel_value(args.kernel, fam, args.s, args.t, args.t0, method=m)
        rows.append([args.kernel, kv.method, kv.value])
    summary = {"family": fam.describe(), "s": args.s, "t": args.t, "t0": args.t0}
    if len(rows) == 2:
        a, b = rows[0][2], rows[1][2]
        summary["relative_difference"] = abs(a - b) / max(abs(a), abs(b), 1e-300)
    return DiagnosticsReport("kernel", ["kernel", "method", "value"], rows, summary)


def _run_aii_check(args):
    fam = _resolve_family(args)
    if not 1 <= args.k_max <= 52:
        raise ConfigurationError(f"--k-max must lie in [1, 52], got {args.k_max}")
    if not 0.0 < args.t0 < 1.0:
        raise ConfigurationError(f"--t0 must lie in (0, 1), got {args.t0}")
    sigmas = {"residual_s": lambda s: s, "residual_cos": lambda s: np.cos(np.pi * s)}
    rows = []
    for k in range(1, args.k_max + 1):
        t = 1.0 - 2.0 ** -k
        partial = aii_mass(fam, t, args.t0) if t >= args.t0 else math.nan
        rows.append([k, t, aii_mass(fam, t), partial]
                    + [smoothing_residual(fam, sg, t) for sg in sigmas.values()])
    mass = [r[2] for r in rows]
    partial = [r[3] for r in rows if not math.isnan(r[3])]
    summary = {
        "family": fam.describe(),
        "mass_increasing": bool(all(b > a for a, b in zip(mass, mass[1:]))),
        "final_mass_gap": 1.0 - mass[-1],
        "partial_decreasing": bool(all(b < a for a, b in zip(partial, partial[1:]))),
        "final_partial_mass": partial[-1] if partial else None,
        "final_residuals": rows[-1][4:],
    }
    cols = ["k", "t", "mass", "partial_mass"] + list(sigmas)
    return DiagnosticsReport("aii", cols, rows, summary)


def _cm_grid(args):
    n, eps = (4096, 1e-2) if args.test in ("roundtrip", "lemma") else (4096, 1e-6)
    args.n = n if args.n is None else args.n
    args.eps_min = eps if args.eps_min is None else args.eps_min
    return _resolve_grid(args)


def _run_cm_check(args):
    if args.test == "subhalf":
        if args.family != "bridge":
            raise ConfigurationError("the subhalf test uses the bridge family")
        if args.c is None or not 0 < args.c <= 0.5:
            raise ConfigurationError("the subhalf test needs --c in (0, 1/2]")
        grid = _cm_grid(args)
        eps = cm.DEFAULT_EPS if args.eps_list is None else args.eps_list
        args.eps_list = list(eps)
        hdot = GridFunction.from_callable(grid, HDOT_PRESETS[args.hdot], "derivative")
        return cm.subhalf_diagnostic(args.c, hdot, eps)
    fam = _resolve_family(args)
    grid = _cm_grid(args)
    if args.test in ("membership", "battery", "endpoint"):
        eps = cm.DEFAULT_EPS if args.eps_list is None else args.eps_list
        args.eps_list = list(eps)
    if args.test == "membership":
        k = GridFunction.from_callable(grid, K_PRESETS[args.k])
        return cm.membership_diagnostic(fam, k, eps)
    if args.test == "battery":
        reps = cm.battery_report(fam, grid, eps)
        rows = [[name, r.verdict, r.ordinates[-1], r.extra["rule"]] for name, r in reps]
        verdicts = [r[1] for r in rows]
        return DiagnosticsReport("battery", ["function", "verdict", "last_value", "rule"], rows,
                                 {"family": fam.describe(), "all_bounded": verdicts.count("bounded") == len(rows)})
    if args.test == "endpoint":
        # |k(last node)| for grids ending at each eps (n intervals each)
        rows = []
        for e in eps:
            g = make_grid(args.grid, args.n, e)
            k = cm.apply_T(fam, GridFunction.from_callable(g, HDOT_PRESETS[args.hdot], "derivative"))
            rows.append([e, float(np.abs(k.values[-1]).max())])
        vals = [r[1] for r in rows]
        return DiagnosticsReport("endpoint", ["eps_min", "abs_k_last"], rows,
                                 {"family": fam.describe(),
                                  "decreasing": bool(all(b < a for a, b in zip(vals, vals[1:])))})
    if args.samples < 1:
        raise ConfigurationError("--samples must be positive")
    rng = np.random.default_rng(args.seed)
    if args.test == "roundtrip":
        rows = [[i, cm.roundtrip_error(fam, cm.random_smooth_hdot(grid, rng))]
                for i in range(args.samples)]
        return DiagnosticsReport("roundtrip", ["sample", "relative_error"], rows,
                                 {"family": fam.describe(), "max_error": max(r[1] for r in rows)})
    # lemma: piecewise-constant random f, quotient |g| / |f|
    if args.family != "bridge":
        raise ConfigurationError("the lemma test uses the bridge family")
    rows = []
    for i in range(args.samples):
        f = GridFunction(grid, rng.standard_normal((len(grid), 1)), "function")
        res = cm.lemma1_g(args.c, f)
        rows.append([i, res.ratio, res.bound, res.holds])
    return DiagnosticsReport("lemma", ["sample", "ratio", "bound", "holds"], rows,
                             {"c": args.c, "max_ratio": max(r[1] for r in rows),
                              "all_hold": all(r[3] for r in rows)})


def _run_fh_diagnose(args):
    bad = [n for n in args.n_list if not 2 <= n <= fh.MAX_N]
    if bad:
        raise ConfigurationError(f"--n-list entries must lie in [2, {fh.MAX_N}], got {bad}")
    return fh.hs_trend(args.c, args.n_list)


def _run_qc_trend(args):
    return fh.qc_l2_trend(args.c, args.eps_list)


def _mc_grid_and_times(args):
    _check_mc(args)
    grid = _resolve_grid(args)
    args.t_list = _default_t_list(grid) if args.t_list is None else _snap_t_list(grid, args.t_list)
    return grid


def _run_girsanov(args):
    if not args.c_target > 0:
        raise ConfigurationError(f"--c-target must be positive, got {args.c_target}")
    grid = _mc_grid_and_times(args)
    trace = gv.log_rn_bridge_streamed([args.c_target], grid, args.paths, args.seed, args.t_list,
                                      chunk=args.chunk)[args.c_target]
    return gv.martingale_summary(trace, args.t_list)


def _run_perturbed(args):
    fam = DriftFamily.perturbed(args.delta, args.kappa, c=args.c)
    grid = _mc_grid_and_times(args)
    trace = gv.perturbed_rn_streamed(fam, grid, args.paths, args.seed, args.t_list,
                                     chunk=args.chunk)
    rep = gv.martingale_summary(trace, args.t_list)
    rep.summary["l2_profile"] = gv.l2_profile(trace, args.t_list)
    return rep


COMMANDS = {
    "sample": _run_sample,
    "kernel-eval": _run_kernel_eval,
    "aii-check": _run_aii_check,
    "cm-check": _run_cm_check,
    "fh-diagnose": _run_fh_diagnose,
    "qc-trend": _run_qc_trend,
    "girsanov": _run_girsanov,
    "perturbed": _run_perturbed,
}


# -- output -----------------------------------------------------------------------

def _render(report, args, config) -> bytes:
    if isinstance(report, _EnsembleReport):
        if args.format == "binary":
            buf = io.BytesIO()
            write_binary(report.ens, buf)
            return buf.getvalue()
        if args.format == "json":
            return dumps_json({**run_header(config), "report": report.to_dict()}).encode()
        buf = io.StringIO()
        buf.write(comment_block(run_header(config)))
        write_csv(report.ens, buf)
        return buf.getvalue().encode()
    return render_report(report, args.format, config).encode()


def _emit(data: bytes, path: str) -> None:
    if path == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
        return
    with open(path, "wb") as fh_out:
        fh_out.write(data)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse ``argv``, run one experiment, write its report; returns the exit code."""
    try:
        args = build_parser().parse_args(argv)
        report = COMMANDS[args.subcommand](args)
        args.format = args.format or "json"
        config = {k: v for k, v in vars(args).items()}
        data = _render(report, args, config)
        _emit(data, args.out)
    except ConfigurationError as exc:
        print(f"genbridge: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalFailure, OSError) as exc:
        print(f"genbridge: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GenbridgeError as exc:
        print(f"genbridge: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def main() -> None:
    sys.exit(run())
