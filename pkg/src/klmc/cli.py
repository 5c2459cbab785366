"""Command-line front end.

Every subcommand is deterministic given its arguments; random draws come
from ``--seed`` (default ``$KLMC_SEED`` if set, else 0x5EED).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import oracle, theory, verify
from .errors import ConditionViolation, KlmcError
from .integrator import Kernel, RngStream, run_chains
from .model import ConvexityProfile, KlmcParams, LogCoshPotential, PhaseState, QuadraticPotential

DEFAULT_SEED = 0x5EED

EXIT_OK, EXIT_USAGE, EXIT_CONDITION, EXIT_VERIFY = 0, 1, 2, 3

SCHEMAS = """\
output schemas:
  contract  curves.csv      zeta,r,c_minus                     (1024 points on (0, 1.2 r_max] per zeta)
            contraction.json condition_general_ok,condition_linear_ok,c_exact,c_linear,
                            r_lo,r_hi,r_max,r_lin,argmin_r,reason
  bias      bias.csv        gamma,h,zeta,e_pos,e_mom,crossing  (crossing=1 on the row with zeta = zeta_critical)
  plan      plan.json       {"plan": {epsilon,h_star,n_star,w0,...}, "bias_check": {...}}
  sample    trajectory.csv  chain,step,x_0..x_{d-1},v_0..v_{d-1}
            summary.json    params, per-chain mean/covariance; exact_bias and stationary covariance for quadratics
  verify    sweep.csv       suite,h,gamma,eta,lambda_or_alpha,beta,c_exact,rho_sq,e_pos,e_mom,exact_bias,pass_flags
            report.json     per-suite summaries and failures
  limit     limit.csv       gamma,h,zeta,c_linear,c_linear_limit,e_pos,e_pos_limit,e_mom,condition_linear_ok

exit codes: 0 success, 1 usage error, 2 condition violation, 3 verification failure
"""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _finite(text: str) -> float:
    try:
        val = float(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from exc
    if not math.isfinite(val):
        raise argparse.ArgumentTypeError(f"must be finite: {text!r}")
    return val


def _positive(text: str) -> float:
    val = _finite(text)
    if val <= 0.0:
        raise argparse.ArgumentTypeError(f"must be > 0: {text!r}")
    return val


def _count(text: str) -> int:
    try:
        val = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if val < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return val


def _seed(text: str) -> int:
    try:
        val = int(text, 0)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from exc
    if not 0 <= val < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return val


def default_seed() -> int:
    env = os.environ.get("KLMC_SEED")
    if env is None or env == "":
        return DEFAULT_SEED
    try:
        return _seed(env)
    except argparse.ArgumentTypeError as exc:
        raise UsageError(f"KLMC_SEED: {exc}") from exc


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue())


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n"


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serialisable: {type(o)}")


def _emit_json(args, name: str, obj) -> None:
    text = _dump_json(obj)
    if args.out_dir is not None:
        _out_dir(args).joinpath(name).write_text(text)
    sys.stdout.write(text)


def _out_dir(args) -> Path:
    path = args.out_dir if args.out_dir is not None else Path(".")
    path.mkdir(parents=True, exist_ok=True)
    return path


def _profile(args) -> ConvexityProfile:
    return ConvexityProfile(args.alpha, args.beta)


# --------------------------------------------------------------------------
# subcommands


def cmd_contract(args) -> int:
    out = _out_dir(args)
    rows = []
    for z in args.zetas:
        rm = theory.r_max(z)
        rs = np.linspace(1.2 * rm / 1024, 1.2 * rm, 1024)
        for r, c in zip(rs, theory.c_minus(rs, z)):
            rows.append((z, r, c))
    _write_csv(out / "curves.csv", ("zeta", "r", "c_minus"), rows)
    if args.h is None and args.zeta is None:
        return EXIT_OK
    if args.alpha is None or args.beta is None:
        raise UsageError("contract: --alpha and --beta are required with --h/--zeta")
    if args.zeta is not None:
        params = KlmcParams.from_zeta(args.zeta, args.gamma, args.eta)
    else:
        params = KlmcParams(args.h, args.gamma, args.eta)
    rep = theory.contraction_exact(params, _profile(args))
    args.out_dir = out
    _emit_json(args, "contraction.json", rep.to_dict())
    return EXIT_OK if rep.condition_general_ok else EXIT_CONDITION


def cmd_bias(args) -> int:
    out = _out_dir(args)
    profile = ConvexityProfile(1.0, args.kappa)
    zc = theory.critical_zeta()
    rows = []
    for g in args.gammas:
        hs = np.geomspace(args.h_min, args.h_max, args.n_h)
        h_cross = zc / g
        hs = np.unique(np.append(hs, h_cross)) if args.h_min <= h_cross <= args.h_max else hs
        for h in hs:
            p = KlmcParams(float(h), g, args.eta)
            e_pos, e_mom = theory.bias_terms(p, profile, args.d)
            rows.append((g, float(h), p.zeta, e_pos, e_mom, int(h == h_cross)))
    _write_csv(out / "bias.csv", ("gamma", "h", "zeta", "e_pos", "e_mom", "crossing"), rows)
    return EXIT_OK


def _resolve_gamma_eta(args):
    if args.choice is not None:
        return theory.standard_choices(args.beta)[args.choice]
    if args.gamma is None or args.eta is None:
        raise UsageError("plan: give --gamma and --eta, or --choice")
    return args.gamma, args.eta


def _plan(args):
    profile = _profile(args)
    gamma, eta = _resolve_gamma_eta(args)
    h0 = args.h0
    if h0 is None:
        # largest step the linear-rate condition admits, backed off slightly, capped at 1
        h0 = min(1.0, 0.99 * theory.step_size_limit(gamma, eta, profile, "linear"))
    return theory.complexity_plan(profile, args.d, args.epsilon, gamma, eta, h0, args.w0)


def cmd_plan(args) -> int:
    plan = _plan(args)
    _emit_json(args, "plan.json", {"plan": plan.to_dict(), "bias_check": theory.plan_bias_check(plan)})
    return EXIT_OK


def _potential(args):
    if args.spectrum is not None:
        lams = np.array(args.spectrum, dtype=float)
    else:
        lams = np.full(args.d, args.beta if args.alpha is None else args.alpha)
        if args.alpha is not None and args.d > 1:
            lams = np.linspace(args.alpha, args.beta, args.d)
    if args.potential == "logcosh":
        return LogCoshPotential(lams, s=args.s)
    return QuadraticPotential(lams)


def cmd_sample(args) -> int:
    pot = _potential(args)
    n_steps = args.steps
    plan_info = None
    if args.epsilon is not None:
        args.alpha, args.beta, args.d = pot.profile.alpha, pot.profile.beta, pot.dim
        plan = _plan(args)
        params = KlmcParams(plan.h_star, plan.gamma, plan.eta)
        n_steps = n_steps or plan.n_star
        plan_info = plan.to_dict()
    else:
        if args.h is None or args.gamma is None or args.eta is None:
            raise UsageError("sample: give --h --gamma --eta, or --epsilon (with --w0) to plan them")
        params = KlmcParams(args.h, args.gamma, args.eta)
    if n_steps is None:
        raise UsageError("sample: --steps is required without --epsilon")
    kernel = Kernel.build(params, pot)
    inits = [PhaseState.zeros(pot.dim) for _ in range(args.chains)]
    results = run_chains(
        kernel, inits, n_steps, args.seed, workers=args.workers, burn_in=args.burn_in, thin=args.thin
    )
    out = _out_dir(args)
    d = pot.dim
    header = ["chain", "step"] + [f"x_{i}" for i in range(d)] + [f"v_{i}" for i in range(d)]
    rows = []
    for c, res in enumerate(results):
        for row in res.trajectory:
            rows.append([c, int(row[0])] + [float(v) for v in row[1:]])
    _write_csv(out / "trajectory.csv", header, rows)
    summary = {
        "params": {"h": params.h, "gamma": params.gamma, "eta": params.eta, "zeta": params.zeta},
        "n_steps": n_steps,
        "burn_in": results[0].burn_in,
        "seed": args.seed,
        "chains": [
            {"mean": r.mean, "covariance": r.covariance(), "final_x": r.final.x, "final_v": r.final.v}
            for r in results
        ],
    }
    if plan_info is not None:
        summary["plan"] = plan_info
    if isinstance(pot, QuadraticPotential):
        try:
            summary["exact_bias"] = oracle.exact_bias(params, pot.spectrum)
            summary["stationary_covariance"] = {
                repr(float(l)): oracle.lyapunov_stationary(params, float(l)) for l in np.unique(pot.spectrum)
            }
        except KlmcError as exc:
            summary["exact_bias_error"] = str(exc)
    (out / "summary.json").write_text(_dump_json(summary))
    return EXIT_OK


def cmd_verify(args) -> int:
    results = verify.run_all(args.n, args.seed, workers=args.workers, coupling_steps=args.coupling_steps)
    report = {"seed": args.seed, "n": args.n, "ok": all(r.ok for r in results), "suites": [r.summary() for r in results]}
    if args.out_dir is not None:
        out = _out_dir(args)
        rows = []
        for r in results:
            for row in r.rows:
                rows.append([r.name] + [row[k] for k in oracle.SWEEP_COLUMNS])
        _write_csv(out / "sweep.csv", ("suite",) + oracle.SWEEP_COLUMNS, rows)
    _emit_json(args, "report.json", report)
    return EXIT_OK if report["ok"] else EXIT_VERIFY


def cmd_limit(args) -> int:
    out = _out_dir(args)
    profile = _profile(args)
    h_lmc = args.h_lmc if args.h_lmc is not None else 1.0 / (2.0 * profile.beta)
    rows = []
    for g in np.geomspace(args.gamma_min, args.gamma_max, args.n_gamma):
        p = KlmcParams(h_lmc * g, float(g), 1.0)
        e_pos, e_mom = theory.bias_terms(p, profile, args.d)
        rows.append(
            (
                float(g),
                p.h,
                p.zeta,
                theory.linear_rate(p, profile),
                h_lmc * profile.alpha,
                e_pos,
                math.sqrt(args.d / 2.0 * h_lmc) * profile.kappa,
                e_mom,
                int(theory.check_condition_linear(p, profile)),
            )
        )
    header = ("gamma", "h", "zeta", "c_linear", "c_linear_limit", "e_pos", "e_pos_limit", "e_mom", "condition_linear_ok")
    _write_csv(out / "limit.csv", header, rows)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help="RNG seed (default $KLMC_SEED or 0x5EED)")
    common.add_argument("--workers", type=_count, default=1, help="worker processes for chains and sweeps")
    common.add_argument("--out-dir", type=Path, default=None, help="directory for output files")

    parser = _Parser(
        prog="klmc",
        description="Kinetic Langevin Monte Carlo: calculators, sampler and verification sweeps.",
        epilog=SCHEMAS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, help_text):
        return sub.add_parser(
            name, parents=[common], help=help_text, epilog=SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter
        )

    p = add("contract", "contraction curves and report")
    p.add_argument("--zetas", type=_positive, nargs="+", default=[0.5, 1.0, 2.0])
    p.add_argument("--alpha", type=_positive)
    p.add_argument("--beta", type=_positive)
    p.add_argument("--gamma", type=_positive, default=1.0)
    p.add_argument("--eta", type=_positive, default=1.0)
    grp = p.add_mutually_exclusive_group()
    grp.add_argument("--h", type=_positive)
    grp.add_argument("--zeta", type=_positive)
    p.set_defaults(func=cmd_contract)

    p = add("bias", "bias bounds along a step-size grid")
    p.add_argument("--kappa", type=_positive, default=1.0)
    p.add_argument("--eta", type=_positive, default=1.0)
    p.add_argument("--d", type=_count, default=1)
    p.add_argument("--gammas", type=_positive, nargs="+", default=[0.2, 1.0, 5.0])
    p.add_argument("--h-min", type=_positive, default=1e-4)
    p.add_argument("--h-max", type=_positive, default=1e2)
    p.add_argument("--n-h", type=_count, default=200)
    p.set_defaults(func=cmd_bias)

    p = add("plan", "step size and iteration count for a target accuracy")
    p.add_argument("--alpha", type=_positive, required=True)
    p.add_argument("--beta", type=_positive, required=True)
    _plan_args(p, required=True)
    p.set_defaults(func=cmd_plan)

    p = add("sample", "run chains and write trajectories")
    p.add_argument("--potential", choices=("quadratic", "logcosh"), default="quadratic")
    p.add_argument("--spectrum", type=_positive, nargs="+")
    p.add_argument("--alpha", type=_positive)
    p.add_argument("--beta", type=_positive, default=1.0)
    p.add_argument("--s", type=_finite, default=1.0, help="log-cosh strength")
    p.add_argument("--h", type=_positive)
    p.add_argument("--steps", type=_count)
    p.add_argument("--burn-in", type=int, default=None)
    p.add_argument("--thin", type=_count, default=1)
    p.add_argument("--chains", type=_count, default=1)
    _plan_args(p, required=False)
    p.set_defaults(func=cmd_sample)

    p = add("verify", "randomised oracle sweeps; exit 3 on any failure")
    p.add_argument("--n", type=_count, default=1000, help="instances per sweep")
    p.add_argument("--coupling-steps", type=_count, default=10_000)
    p.set_defaults(func=cmd_verify)

    p = add("limit", "large-friction sweep at fixed overdamped step")
    p.add_argument("--alpha", type=_positive, default=0.1)
    p.add_argument("--beta", type=_positive, default=1.0)
    p.add_argument("--d", type=_count, default=1)
    p.add_argument("--h-lmc", type=_positive, default=None, help="overdamped step (default 1/(2 beta))")
    p.add_argument("--gamma-min", type=_positive, default=1.0)
    p.add_argument("--gamma-max", type=_positive, default=1e6)
    p.add_argument("--n-gamma", type=_count, default=25)
    p.set_defaults(func=cmd_limit)
    return parser


def _plan_args(p, required: bool) -> None:
    p.add_argument("--d", type=_count, default=1)
    p.add_argument("--epsilon", type=_positive, required=required)
    p.add_argument("--gamma", type=_positive)
    p.add_argument("--eta", type=_positive)
    p.add_argument("--choice", choices=("strong_friction", "scaled_mass"))
    p.add_argument("--h0", type=_positive, default=None, help="step-size cap (default: just inside the admissible range)")
    p.add_argument("--w0", type=_positive, default=1.0, help="upper bound on the initial weighted W2 distance")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.seed is None:
            args.seed = default_seed()
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConditionViolation as exc:
        print(f"condition violated ({exc.reason}): {exc}", file=sys.stderr)
        return EXIT_CONDITION
    except KlmcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
