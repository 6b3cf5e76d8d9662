import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field, replace
import numpy as np

from errors import CDTError, DomainError, ResourceError, exit_code_for
from geometry import Params
from transfer import (lambda_pure, eigen_residuals, spectral_report_pure, free_energy_pure, trace_ratio,
                      hilbert_schmidt_sum, row_sum_closed, build_truncated_U, z_n_truncated, z_n_enumerated,
                      matrix_T, t_eigenvalues, matrix_M, cm_params, build_Q_family, q_spectrum, lambda_condition,
                      lambda_closed_forms, trace_KKT_closed, trace_KKT_printed, xi_n_truncated,
                      trace_KKT_direct, principal_eigenvalue_K, xi_lower_bound, xi_upper_bound,
                      build_coupled_operator)
from region import (beta_grid, bound_lines, region_classify, curve_crossings, write_curves_csv, CURVE_IDS,
                    CSV_COLUMNS)
from sampler import ChainConfig, run_chain
from utils import VERSION, fmt, get_writer

OUTPUT_ENV = "CDT_OUTPUT_DIR"
FORMATS = ("csv", "json")
LN2 = math.log(2.0)


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    output_path: str = ""
    format: str = "json"

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise DomainError(f"unknown command {self.command!r}")
        if self.format not in FORMATS:
            raise DomainError(f"format must be one of {FORMATS}, got {self.format!r}")

    @classmethod
    def from_args(cls, args):
        common = {"command", "config", "result_dir", "output", "format", "log_dir", "quiet", "run_name"}
        params = {k: v for k, v in sorted(vars(args).items()) if k not in common}
        out_format = args.format or DEFAULT_FORMATS[args.command]
        output = args.output or os.path.join(args.result_dir, f"{args.command}.{out_format}")
        return cls(command=args.command, params=params, output_path=output, format=out_format)


def _builtin(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialize {type(x).__name__}")


def _finite_or_none(x):
    return x if math.isfinite(x) else None


def make_report(cfg, outputs, diagnostics):
    return {"inputs": dict(cfg.params, command=cfg.command),
            "outputs": outputs,
            "diagnostics": diagnostics,
            "version": VERSION}


def _flatten(prefix, value, rows):
    if isinstance(value, dict):
        for k in sorted(value):
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], rows)
    elif isinstance(value, (list, tuple, np.ndarray)):
        for i, v in enumerate(value):
            _flatten(f"{prefix}.{i}", v, rows)
    elif isinstance(value, (float, np.floating)):
        rows.append((prefix, fmt(value)))
    else:
        rows.append((prefix, "" if value is None else str(value)))


def write_report(report, cfg):
    directory = os.path.dirname(cfg.output_path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    if cfg.format == "json":
        with open(cfg.output_path, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True, default=_builtin)
            f.write("\n")
    else:
        rows = []
        _flatten("", report, rows)
        with open(cfg.output_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["key", "value"])
            w.writerows(rows)
    print(f"Report written to {cfg.output_path}")


def cmd_spectrum(cfg, args, writer=None):
    g = args.g
    if not 0 < g <= 0.5:
        raise DomainError(f"spectrum requires 0 < g < 1/2 (g = 1/2 is the boundary case), got g={g}")
    p = Params.from_fugacity(g)
    lam = lambda_pure(p)
    print(f"g: {g} Lambda: {lam:.12g}")
    if g == 0.5:
        print("Warning: g = 1/2 is the boundary, Lambda = 1 and the eigenvectors are not square-summable")
        return make_report(cfg, {"lambda": lam}, {"warning": "boundary g = 1/2", "boundary": True})
    residuals = {}
    for n_max in args.nmax:
        right, left = eigen_residuals(p, n_max)
        residuals[str(n_max)] = {"right": right, "left": left}
        print(f"n_max: {n_max} Residual: {right:.3e} Dual Residual: {left:.3e}")
    n_max = max(args.nmax)
    report = spectral_report_pure(p, n_max, writer=writer)
    free_energies = free_energy_pure(args.N, p, n_max)
    for N, f in zip(args.N, free_energies):
        print(f"N: {N} Free Energy: {f:.12g} Gap to log Lambda: {abs(f - math.log(lam)):.3e}")
    U = build_truncated_U(p, n_max).entries
    row_sums = {str(n): {"closed": row_sum_closed(n, p), "truncated": float(U[n - 1].sum())} for n in range(1, 6)}
    outputs = {"lambda": lam,
               "log_lambda": math.log(lam),
               "residuals": residuals,
               "power_iteration": report.as_dict(),
               "free_energy": {str(N): f for N, f in zip(args.N, free_energies)},
               "trace_ratio": {str(N): trace_ratio(N, p, n_max) for N in args.N},
               "row_sums": row_sums}
    diagnostics = {"hilbert_schmidt_sum": hilbert_schmidt_sum(p, n_max),
                   "lambda_vs_power_iteration": abs(report.principal_eigenvalue - lam),
                   "boundary": False}
    return make_report(cfg, outputs, diagnostics)


def cmd_ising_gap(cfg, args, writer=None):
    p = Params(beta=args.beta, mu=args.mu)
    lp, lm = t_eigenvalues(p)
    region = region_classify(p)
    print(f"beta: {p.beta} mu: {p.mu} lambda_+: {lp:.12g} lambda_-: {lm:.12g} Region: {region}")
    outputs = {"T": matrix_T(p).entries, "t_eigenvalues": [lp, lm], "region": region}
    diagnostics = {}
    if region == "divergent_T":
        outputs["spectral_radius_Q"] = None
        diagnostics["status"] = "divergent_T"
        return make_report(cfg, outputs, diagnostics)
    cm = cm_params(p)
    rho, status = lambda_condition(p)
    closed = lambda_closed_forms(p)
    rel_errors = {name: abs(vals[0] - rho) / rho for name, vals in closed.items()}
    matching = [name for name, err in rel_errors.items() if err <= 1e-8]
    print(f"c: {cm.c:.12g} m: {cm.m:.12g} Spectral Radius of Q: {rho:.12g} Matching Closed Form: {matching}")
    fam = build_Q_family(p)
    outputs.update({"c": cm.c, "m": cm.m, "M": matrix_M(p).entries, "Q": fam.Q.entries,
                    "q_spectrum": q_spectrum(p), "spectral_radius_Q": rho,
                    "closed_forms": closed})
    diagnostics.update({"status": status, "closed_form_relative_error": rel_errors, "matching_closed_forms": matching,
                        "M_series_vs_closed": float(np.abs(matrix_M(p, "series").entries
                                                           - matrix_M(p).entries).max())})
    return make_report(cfg, outputs, diagnostics)


def cmd_critical_line(cfg, args, writer=None):
    betas = beta_grid(args.beta_min, args.beta_max, args.beta_step)
    curves = bound_lines(betas, tol=args.tol, progress=not args.quiet, writer=writer)
    by_id = {c.id: c for c in curves}
    crossings = curve_crossings(by_id["lambda_Q_eq_1"], by_id["sufficient_bound"])
    print(f"Grid Points: {len(betas)} mu*(0): {by_id['lambda_Q_eq_1'].mus[0]:.12g} "
          f"Crossings with Sufficient Bound: {crossings}")
    if cfg.format == "csv":
        directory = os.path.dirname(cfg.output_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        write_curves_csv(curves, cfg.output_path)
        print(f"Curves written to {cfg.output_path}")
        return None
    outputs = {"beta": betas, **{CSV_COLUMNS[cid]: by_id[cid].mus for cid in CURVE_IDS}}
    return make_report(cfg, outputs, {"crossings_lambdaQ_sufficient": crossings})


def cmd_trace_check(cfg, args, writer=None):
    p = Params(beta=args.beta, mu=args.mu)
    region = region_classify(p)
    closed = trace_KKT_closed(p) if region == "Q_convergent" else None
    direct = {}
    for s_max in range(4, args.smax_cap + 1):
        direct[str(s_max)] = trace_KKT_direct(p, s_max)
    values = list(direct.values())
    gaps = {k: abs(v - closed) / closed for k, v in direct.items()} if closed is not None else None
    print(f"beta: {p.beta} mu: {p.mu} Region: {region} Closed Form: {closed}")
    for k, v in direct.items():
        gap = f" Relative Gap: {gaps[k]:.3e}" if gaps else ""
        print(f"s_max: {k} Direct: {v:.12g}{gap}")
    outputs = {"region": region, "closed_form": closed, "direct": direct, "relative_gap": gaps}
    diagnostics = {"monotone_direct": bool(all(a < b for a, b in zip(values, values[1:]))),
                   "printed_form": _finite_or_none(trace_KKT_printed(p)) if region == "Q_convergent" else None}
    return make_report(cfg, outputs, diagnostics)


def cmd_brute(cfg, args, writer=None):
    p = Params(beta=args.beta, mu=args.mu)
    xi = xi_n_truncated(args.N, p, args.smax)
    report = principal_eigenvalue_K(p, args.smax, writer=writer)
    free_energy = math.log(xi) / args.N
    print(f"N: {args.N} s_max: {args.smax} Xi_N: {xi:.12g} Lambda_0: {report.principal_eigenvalue:.12g} "
          f"(1/N) log Xi_N: {free_energy:.12g}")
    outputs = {"xi_n": xi, "free_energy": free_energy, "power_iteration": report.as_dict()}
    diagnostics = {"log_lambda_0": math.log(report.principal_eigenvalue)}
    shifted = p.mu - 1.5 * p.beta
    if shifted > LN2:
        outputs["bounds"] = {"lower": xi_lower_bound(args.N, p, args.smax),
                             "upper": xi_upper_bound(args.N, p, args.smax)}
    if p.beta == 0 and p.mu > LN2:
        pure = z_n_enumerated(args.N, p.shifted(-LN2), args.smax - 1, strip_cap=args.smax)
        outputs["pure_value"] = pure
        diagnostics["pure_relative_difference"] = abs(xi - pure) / pure
        diagnostics["boundary_truncated_pure_value"] = z_n_truncated(args.N, p.shifted(-LN2), args.smax - 1)
        print(f"Pure Value at mu - ln 2: {pure:.12g} Relative Difference: {abs(xi - pure) / pure:.3e}")
    if args.dump:
        build_coupled_operator(p, args.smax).save(args.dump)
        diagnostics["dump"] = args.dump
        print(f"Operator snapshot written to {args.dump}")
    return make_report(cfg, outputs, diagnostics)


def cmd_sample(cfg, args, writer=None):
    chain_cfg = ChainConfig(g=args.g, steps=args.steps, burn_in=args.burn_in, seed=args.seed, n_cap=args.n_cap)
    summary = run_chain(chain_cfg, writer=writer, progress=not args.quiet)
    print(f"Steps: {chain_cfg.steps} Seed: {chain_cfg.seed} TV Distance: {summary.tv_distance:.3e} "
          f"Mean Width: {summary.empirical_mean_width:.6f} Expected: {summary.expected_mean_width:.6f}")
    if cfg.format == "csv":
        directory = os.path.dirname(cfg.output_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        summary.write_histogram_csv(cfg.output_path)
        print(f"Histogram written to {cfg.output_path}")
        # seed, version and diagnostics go next to the histogram
        cfg = replace(cfg, output_path=os.path.splitext(cfg.output_path)[0] + ".json", format="json")
        write_report(summary.report(), cfg)
        return None
    return summary.report()


COMMANDS = {"spectrum": cmd_spectrum,
            "ising-gap": cmd_ising_gap,
            "critical-line": cmd_critical_line,
            "trace-check": cmd_trace_check,
            "brute": cmd_brute,
            "sample": cmd_sample}

DEFAULT_FORMATS = {"spectrum": "json", "ising-gap": "json", "critical-line": "csv",
                   "trace-check": "json", "brute": "json", "sample": "json"}
REQUIRED_OPTIONS = {"spectrum": ("g",), "ising-gap": ("beta", "mu"), "critical-line": (),
                    "trace-check": ("beta", "mu"), "brute": ("beta", "mu"), "sample": ("g",)}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="JSON file with option defaults", default=None)
    common.add_argument("--result_dir", type=str, help="path to results directory",
                        default=os.environ.get(OUTPUT_ENV, "results"))
    common.add_argument("--output", type=str, help="output file (defaults to result_dir/<command>.<format>)")
    common.add_argument("--format", type=str, choices=FORMATS, help="output format")
    common.add_argument("--log_dir", type=str, help="TensorBoard log directory (off when omitted)", default=None)
    common.add_argument("--run_name", type=str, help="TensorBoard run name", default="default")
    common.add_argument("--quiet", help="disable progress bars", action="store_true")

    parser = argparse.ArgumentParser(description="Transfer-matrix numerics for pure and Ising-coupled CDT")
    subparsers = parser.add_subparsers(dest="command", required=True)

    p = subparsers.add_parser("spectrum", parents=[common], help="pure CDT spectrum")
    p.add_argument("--g", type=float, help="fugacity exp(-mu)")
    p.add_argument("--nmax", type=int, nargs="+", help="truncation sizes", default=[200])
    p.add_argument("--N", type=int, nargs="+", help="strip counts for the free energy",
                   default=[1, 2, 4, 8, 16, 32])

    p = subparsers.add_parser("ising-gap", parents=[common], help="T, M, Q and the spectral radius of Q")
    p.add_argument("--beta", type=float, help="inverse temperature")
    p.add_argument("--mu", type=float, help="cosmological constant")

    p = subparsers.add_parser("critical-line", parents=[common], help="boundary curves on a beta grid")
    p.add_argument("--beta_min", type=float, help="first grid beta", default=0.0)
    p.add_argument("--beta_max", type=float, help="last grid beta", default=2.0)
    p.add_argument("--beta_step", type=float, help="grid step", default=0.02)
    p.add_argument("--tol", type=float, help="tolerance on |rho(Q) - 1|", default=1e-12)

    p = subparsers.add_parser("trace-check", parents=[common], help="closed form against direct trace of K K^T")
    p.add_argument("--beta", type=float, help="inverse temperature")
    p.add_argument("--mu", type=float, help="cosmological constant")
    p.add_argument("--smax_cap", type=int, help="largest strip size for the direct sums", default=6)

    p = subparsers.add_parser("brute", parents=[common], help="truncated coupled partition function")
    p.add_argument("--beta", type=float, help="inverse temperature")
    p.add_argument("--mu", type=float, help="cosmological constant")
    p.add_argument("--N", type=int, help="number of strips", default=3)
    p.add_argument("--smax", type=int, help="largest strip size", default=5)
    p.add_argument("--dump", type=str, help="write the dense operator snapshot (.npz) here", default=None)

    p = subparsers.add_parser("sample", parents=[common], help="limiting Markov chain over strip widths")
    p.add_argument("--g", type=float, help="fugacity exp(-mu)")
    p.add_argument("--steps", type=int, help="number of chain steps", default=1_000_000)
    p.add_argument("--burn_in", type=int, help="steps discarded before counting", default=10_000)
    p.add_argument("--seed", type=int, help="random seed", default=0)
    p.add_argument("--n_cap", type=int, help="tabulated widths per transition row", default=10_000)
    return parser, subparsers


def parse_args(argv=None):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        with open(args.config) as f:
            try:
                overrides = json.load(f)
            except json.JSONDecodeError as exc:
                raise DomainError(f"config file {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(overrides, dict):
            raise DomainError(f"config file {args.config} must hold a JSON object of option defaults")
        unknown = sorted(set(overrides) - set(vars(args)))
        if unknown:
            raise DomainError(f"unknown options in {args.config}: {unknown}")
        subparsers.choices[args.command].set_defaults(**overrides)
        args = parser.parse_args(argv)
    missing = [f"--{name}" for name in REQUIRED_OPTIONS[args.command] if getattr(args, name) is None]
    if missing:
        raise DomainError(f"{args.command} needs {', '.join(missing)}")
    return args


def main(argv=None):
    writer = None
    try:
        args = parse_args(argv)
        cfg = RunConfig.from_args(args)
        if args.command == "brute" and args.dump and args.smax > 6:
            raise ResourceError(f"operator snapshots are limited to smax <= 6, got {args.smax}")
        writer = get_writer(args.log_dir, args.command, args.run_name)
        report = COMMANDS[args.command](cfg, args, writer=writer)
        if report is not None:
            write_report(report, cfg)
    except (CDTError, OSError) as exc:
        print(f"Error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    finally:
        if writer is not None:
            writer.close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
